#pragma once

// Configuration, dataset, state and result formats. Datasets and results are
// JSON lines; configs and states are single JSON documents. Doubles are
// written with 17 significant digits and observation times are echoed with
// the exact text they were read with.

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "measure_filter/base_measure.hpp"
#include "measure_filter/dw_filter.hpp"
#include "measure_filter/errors.hpp"
#include "measure_filter/fv_filter.hpp"
#include "measure_filter/parametric.hpp"
#include "measure_filter/random_measures.hpp"
#include "measure_filter/simulation.hpp"

namespace measure_filter {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

// Writing.

inline std::string format_double(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Serialises with doubles at 17 significant digits. Strings marked by
/// raw_number() are emitted without quotes.
inline void write_json(std::string& out, const OrderedJson& value);

inline constexpr const char* kRawPrefix = "\x01raw:";

/// A number emitted exactly as `text` (used to echo input times).
inline OrderedJson raw_number(const std::string& text) { return OrderedJson(std::string(kRawPrefix) + text); }

inline void write_json(std::string& out, const OrderedJson& value) {
  switch (value.type()) {
    case OrderedJson::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = value.begin(); it != value.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += OrderedJson(it.key()).dump();
        out += ':';
        write_json(out, it.value());
      }
      out += '}';
      break;
    }
    case OrderedJson::value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& item : value) {
        if (!first) out += ',';
        first = false;
        write_json(out, item);
      }
      out += ']';
      break;
    }
    case OrderedJson::value_t::number_float: out += format_double(value.get<double>()); break;
    case OrderedJson::value_t::string: {
      const auto& s = value.get_ref<const std::string&>();
      if (s.rfind(kRawPrefix, 0) == 0) {
        out += s.substr(std::char_traits<char>::length(kRawPrefix));
      } else {
        out += value.dump();
      }
      break;
    }
    default: out += value.dump(); break;
  }
}

inline std::string to_json_text(const OrderedJson& value) {
  std::string out;
  write_json(out, value);
  return out;
}

// Reading.

namespace detail {

/// DOM builder that also records the source text of every number that is the
/// direct value of a "t" key, in document order.
class TimeCapturingSax : public nlohmann::detail::json_sax_dom_parser<Json> {
  using Base = nlohmann::detail::json_sax_dom_parser<Json>;

 public:
  TimeCapturingSax(Json& root, std::vector<std::string>& times) : Base(root, true), times_(times) {}

  bool null() { return clear(Base::null()); }
  bool boolean(bool v) { return clear(Base::boolean(v)); }
  bool number_integer(number_integer_t v) {
    if (at_time_) times_.push_back(std::to_string(v));
    return clear(Base::number_integer(v));
  }
  bool number_unsigned(number_unsigned_t v) {
    if (at_time_) times_.push_back(std::to_string(v));
    return clear(Base::number_unsigned(v));
  }
  bool number_float(number_float_t v, const string_t& s) {
    if (at_time_) times_.push_back(s);
    return clear(Base::number_float(v, s));
  }
  bool string(string_t& v) { return clear(Base::string(v)); }
  bool binary(binary_t& v) { return clear(Base::binary(v)); }
  bool start_object(std::size_t n) { return clear(Base::start_object(n)); }
  bool start_array(std::size_t n) { return clear(Base::start_array(n)); }
  bool key(string_t& k) {
    at_time_ = k == "t";
    return Base::key(k);
  }

 private:
  bool clear(bool r) {
    at_time_ = false;
    return r;
  }
  std::vector<std::string>& times_;
  bool at_time_ = false;
};

}  // namespace detail

struct ParsedJson {
  Json value;
  std::vector<std::string> time_text;
};

inline ParsedJson parse_json_text(const std::string& text, const std::string& what) {
  ParsedJson out;
  detail::TimeCapturingSax sax(out.value, out.time_text);
  try {
    Json::sax_parse(text, &sax);
  } catch (const Json::exception& e) {
    throw ConfigError(what, std::string("invalid JSON: ") + e.what());
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path, "cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace detail {

inline void reject_unknown(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where, "expected a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError(where.empty() ? it.key() : where + "." + it.key(), "unknown key");
    }
  }
}

inline double get_number(const Json& obj, const std::string& key, const std::string& field) {
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(field, "expected a number");
  return v.get<double>();
}

inline double number_or(const Json& obj, const std::string& key, double fallback, const std::string& field) {
  return obj.contains(key) ? get_number(obj, key, field) : fallback;
}

inline std::uint64_t get_count(const Json& v, const std::string& field) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0.0 && d == std::floor(d) && d < 9.0e15) return static_cast<std::uint64_t>(d);
  }
  throw ConfigError(field, "expected a nonnegative integer");
}

}  // namespace detail

inline CenteringDistribution parse_p0(const Json& j) {
  if (!j.is_object() || !j.contains("family") || !j.at("family").is_string()) {
    throw ConfigError("p0", "expected {\"family\": \"uniform\"|\"gaussian\", ...}");
  }
  const auto family = j.at("family").get<std::string>();
  if (family == "uniform") {
    detail::reject_unknown(j, {"family", "a", "b"}, "p0");
    if (!j.contains("a") || !j.contains("b")) throw ConfigError("p0", "uniform p0 needs a and b");
    return UniformP0{detail::get_number(j, "a", "p0.a"), detail::get_number(j, "b", "p0.b")};
  }
  if (family == "gaussian") {
    detail::reject_unknown(j, {"family", "mu", "var"}, "p0");
    if (!j.contains("mu") || !j.contains("var")) throw ConfigError("p0", "gaussian p0 needs mu and var");
    return GaussianP0{detail::get_number(j, "mu", "p0.mu"), detail::get_number(j, "var", "p0.var")};
  }
  throw ConfigError("p0.family", "unknown family '" + family + "'");
}

inline OrderedJson p0_to_json(const CenteringDistribution& p0) {
  OrderedJson j;
  if (const auto* u = std::get_if<UniformP0>(&p0)) {
    j["family"] = "uniform";
    j["a"] = u->a;
    j["b"] = u->b;
  } else {
    const auto& g = std::get<GaussianP0>(p0);
    j["family"] = "gaussian";
    j["mu"] = g.mu;
    j["var"] = g.var;
  }
  return j;
}

inline ModelKind parse_model(const Json& j) {
  if (!j.is_string()) throw ConfigError("model", "expected one of fv, dw, wf, cir");
  const auto s = j.get<std::string>();
  if (s == "fv") return ModelKind::fv;
  if (s == "dw") return ModelKind::dw;
  if (s == "wf") return ModelKind::wf;
  if (s == "cir") return ModelKind::cir;
  throw ConfigError("model", "expected one of fv, dw, wf, cir, got '" + s + "'");
}

/// Settings shared by `simulate` and `filter`. One file can drive both; the
/// schedule is only needed for simulation.
struct RunConfig {
  SimConfig sim;
  double prune_eps = 1e-8;
  DwWeightMode dw_weight_mode = DwWeightMode::full_marginal;
  BinomialConvention dw_binomial_convention = BinomialConvention::survivor;
  bool has_schedule = false;
  std::vector<std::string> schedule_time_text;

  ModelKind model() const { return sim.model; }
};

inline RunConfig parse_run_config(const ParsedJson& parsed) {
  const Json& j = parsed.value;
  detail::reject_unknown(j, {"model", "theta", "p0", "alpha", "beta", "sigma_speed", "prune_eps", "dw_weight_mode",
                             "dw_binomial_convention", "seed", "schedule"},
                         "");
  if (!j.contains("model")) throw ConfigError("model", "missing");
  RunConfig cfg;
  auto& sim = cfg.sim;
  sim.model = parse_model(j.at("model"));
  const bool measure = sim.model == ModelKind::fv || sim.model == ModelKind::dw;
  if (measure) {
    if (!j.contains("theta")) throw ConfigError("theta", "missing");
    if (!j.contains("p0")) throw ConfigError("p0", "missing");
    if (j.contains("alpha")) throw ConfigError("alpha", "not used by the fv/dw models; give theta and p0");
    sim.base.theta = detail::get_number(j, "theta", "theta");
    sim.base.p0 = parse_p0(j.at("p0"));
  } else {
    if (j.contains("theta")) throw ConfigError("theta", "the wf/cir models take alpha; theta is its sum");
    if (j.contains("p0")) throw ConfigError("p0", "not used by the wf/cir models");
    if (!j.contains("alpha")) throw ConfigError("alpha", "missing");
    const auto& a = j.at("alpha");
    if (a.is_number()) {
      sim.alpha = {a.get<double>()};
    } else if (a.is_array()) {
      for (const auto& v : a) {
        if (!v.is_number()) throw ConfigError("alpha", "expected numbers");
        sim.alpha.push_back(v.get<double>());
      }
    } else {
      throw ConfigError("alpha", "expected a number or a list of numbers");
    }
  }
  const bool gamma = sim.model == ModelKind::dw || sim.model == ModelKind::cir;
  if (gamma) {
    if (!j.contains("beta")) throw ConfigError("beta", "missing");
    sim.beta = detail::get_number(j, "beta", "beta");
  } else if (j.contains("beta")) {
    throw ConfigError("beta", "only the dw/cir models take beta");
  }
  sim.sigma_speed = detail::number_or(j, "sigma_speed", 1.0, "sigma_speed");
  cfg.prune_eps = detail::number_or(j, "prune_eps", 1e-8, "prune_eps");
  if (!(cfg.prune_eps >= 0.0 && cfg.prune_eps < 1.0)) throw ConfigError("prune_eps", "must lie in [0, 1)");
  if (j.contains("dw_weight_mode")) {
    const auto& v = j.at("dw_weight_mode");
    const std::string s = v.is_string() ? v.get<std::string>() : "";
    if (s == "full_marginal") {
      cfg.dw_weight_mode = DwWeightMode::full_marginal;
    } else if (s == "paper_literal") {
      cfg.dw_weight_mode = DwWeightMode::paper_literal;
    } else {
      throw ConfigError("dw_weight_mode", "expected full_marginal or paper_literal");
    }
  }
  if (j.contains("dw_binomial_convention")) {
    const auto& v = j.at("dw_binomial_convention");
    const std::string s = v.is_string() ? v.get<std::string>() : "";
    if (s == "survivor") {
      cfg.dw_binomial_convention = BinomialConvention::survivor;
    } else if (s == "paper_literal") {
      cfg.dw_binomial_convention = BinomialConvention::paper_literal;
    } else {
      throw ConfigError("dw_binomial_convention", "expected survivor or paper_literal");
    }
  }
  if (j.contains("seed")) sim.seed = detail::get_count(j.at("seed"), "seed");
  if (j.contains("schedule")) {
    cfg.has_schedule = true;
    const auto& sched = j.at("schedule");
    if (!sched.is_array()) throw ConfigError("schedule", "expected a list of {\"t\", \"n\"} entries");
    for (std::size_t k = 0; k < sched.size(); ++k) {
      const auto& e = sched[k];
      const std::string where = "schedule[" + std::to_string(k) + "]";
      detail::reject_unknown(e, {"t", "n"}, where);
      if (!e.contains("t")) throw ConfigError(where + ".t", "missing");
      ScheduleEntry entry{detail::get_number(e, "t", where + ".t"), 0};
      if (sim.model == ModelKind::dw) {
        if (e.contains("n")) throw ConfigError(where + ".n", "dw point counts are Poisson in the latent mass; omit n");
      } else {
        if (!e.contains("n")) throw ConfigError(where + ".n", "missing");
        entry.n = detail::get_count(e.at("n"), where + ".n");
      }
      sim.schedule.push_back(entry);
    }
    // Every "t" in a config belongs to the schedule.
    cfg.schedule_time_text = parsed.time_text;
  }
  sim.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  return parse_run_config(parse_json_text(read_file(path), path));
}

inline std::string time_text(const std::vector<std::string>& texts, std::size_t j, double t) {
  return j < texts.size() ? texts[j] : format_double(t);
}

inline OrderedJson run_config_to_json(const RunConfig& cfg) {
  const auto& sim = cfg.sim;
  OrderedJson j;
  j["model"] = model_name(sim.model);
  if (sim.model == ModelKind::fv || sim.model == ModelKind::dw) {
    j["theta"] = sim.base.theta;
    j["p0"] = p0_to_json(sim.base.p0);
  } else {
    j["alpha"] = sim.alpha;
  }
  if (sim.model == ModelKind::dw || sim.model == ModelKind::cir) j["beta"] = sim.beta;
  j["sigma_speed"] = sim.sigma_speed;
  j["prune_eps"] = cfg.prune_eps;
  if (sim.model == ModelKind::dw) {
    j["dw_weight_mode"] = cfg.dw_weight_mode == DwWeightMode::full_marginal ? "full_marginal" : "paper_literal";
    j["dw_binomial_convention"] =
        cfg.dw_binomial_convention == BinomialConvention::survivor ? "survivor" : "paper_literal";
  }
  j["seed"] = sim.seed;
  if (cfg.has_schedule) {
    OrderedJson sched = OrderedJson::array();
    for (std::size_t k = 0; k < sim.schedule.size(); ++k) {
      OrderedJson e;
      e["t"] = raw_number(time_text(cfg.schedule_time_text, k, sim.schedule[k].t));
      if (sim.model != ModelKind::dw) e["n"] = sim.schedule[k].n;
      sched.push_back(e);
    }
    j["schedule"] = sched;
  }
  return j;
}

// Datasets.

struct LoadedDataset {
  Dataset dataset;
  std::vector<std::string> time_text;
};

inline LoadedDataset parse_dataset(const std::string& text, ModelKind model, std::size_t categories = 0) {
  LoadedDataset out;
  out.dataset.model = model;
  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(lineno);
    auto parsed = parse_json_text(line, where);
    const Json& j = parsed.value;
    detail::reject_unknown(j, {"t", "obs", "latent"}, where);
    if (!j.contains("t") || !j.at("t").is_number()) throw ConfigError(where + ".t", "missing or not a number");
    if (!j.contains("obs") || !j.at("obs").is_array()) throw ConfigError(where + ".obs", "missing or not a list");
    Batch batch{j.at("t").get<double>(), {}};
    for (const auto& v : j.at("obs")) {
      if (!v.is_number()) throw ConfigError(where + ".obs", "expected numbers");
      if (model == ModelKind::wf || model == ModelKind::cir) {
        const auto c = detail::get_count(v, where + ".obs");
        if (model == ModelKind::wf && c >= categories) {
          throw ConfigError(where + ".obs", "category index " + std::to_string(c) + " outside 0.." +
                                                std::to_string(categories == 0 ? 0 : categories - 1));
        }
        batch.obs.push_back(static_cast<double>(c));
      } else {
        const double y = v.get<double>();
        if (!std::isfinite(y)) throw ConfigError(where + ".obs", "observations must be finite");
        batch.obs.push_back(y);
      }
    }
    if (j.contains("latent")) {
      const auto& lat = j.at("latent");
      if (!lat.is_array()) throw ConfigError(where + ".latent", "expected a list of numbers");
      std::vector<double> latent;
      for (const auto& v : lat) {
        if (!v.is_number()) throw ConfigError(where + ".latent", "expected numbers");
        latent.push_back(v.get<double>());
      }
      out.dataset.latent.push_back(std::move(latent));
    }
    out.dataset.batches.push_back(std::move(batch));
    out.time_text.push_back(parsed.time_text.empty() ? format_double(out.dataset.batches.back().t)
                                                     : parsed.time_text.front());
  }
  return out;
}

inline std::string dataset_to_jsonl(const Dataset& data, const std::vector<std::string>& time_texts) {
  std::string out;
  for (std::size_t j = 0; j < data.batches.size(); ++j) {
    OrderedJson line;
    line["t"] = raw_number(time_text(time_texts, j, data.batches[j].t));
    OrderedJson obs = OrderedJson::array();
    const bool counts = data.model == ModelKind::wf || data.model == ModelKind::cir;
    for (double y : data.batches[j].obs) {
      if (counts) {
        obs.push_back(static_cast<std::uint64_t>(y));
      } else {
        obs.push_back(y);
      }
    }
    line["obs"] = obs;
    if (j < data.latent.size()) line["latent"] = data.latent[j];
    write_json(out, line);
    out += '\n';
  }
  return out;
}

// States.

inline OrderedJson components_to_json(const ComponentMap& components) {
  OrderedJson arr = OrderedJson::array();
  for (const auto& [m, w] : components) {
    OrderedJson counts = OrderedJson::object();
    for (const auto& [idx, c] : m.entries()) counts[std::to_string(idx)] = c;
    OrderedJson comp;
    comp["counts"] = counts;
    comp["w"] = w;
    arr.push_back(comp);
  }
  return arr;
}

inline OrderedJson components_to_json(const DenseComponents& components) {
  ComponentMap sparse;
  for (const auto& [m, w] : components) sparse.emplace(to_sparse(m), w);
  return components_to_json(sparse);
}

inline OrderedJson state_to_json(const FvFilterState& state, const DwFilterState* dw = nullptr) {
  OrderedJson j;
  j["theta"] = state.base.theta;
  j["p0"] = p0_to_json(state.base.p0);
  if (dw) {
    j["beta"] = dw->beta;
    j["s"] = dw->s;
  }
  j["sigma_speed"] = state.sigma_speed;
  j["atoms"] = state.registry.atoms();
  j["components"] = components_to_json(state.components);
  return j;
}

inline OrderedJson state_to_json(const DwFilterState& state) {
  return state_to_json(static_cast<const FvFilterState&>(state), &state);
}

inline ComponentMap parse_components(const Json& arr) {
  if (!arr.is_array()) throw ConfigError("components", "expected a list");
  ComponentMap out;
  for (const auto& c : arr) {
    detail::reject_unknown(c, {"counts", "w"}, "components[]");
    if (!c.contains("counts") || !c.contains("w")) throw ConfigError("components[]", "needs counts and w");
    MultiplicityVector m;
    for (auto it = c.at("counts").begin(); it != c.at("counts").end(); ++it) {
      std::size_t pos = 0;
      unsigned long idx = 0;
      try {
        idx = std::stoul(it.key(), &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != it.key().size()) throw ConfigError("components[].counts", "keys must be atom indices");
      const auto count = detail::get_count(it.value(), "components[].counts");
      if (count == 0) throw ConfigError("components[].counts", "stored counts must be positive");
      m.add(static_cast<AtomIndex>(idx), static_cast<Count>(count));
    }
    if (!out.emplace(m, detail::get_number(c, "w", "components[].w")).second) {
      throw ConfigError("components", "duplicate component " + m.to_string());
    }
  }
  return out;
}

namespace detail {

inline void parse_state_common(const Json& j, FvFilterState& state) {
  if (!j.contains("theta") || !j.contains("p0") || !j.contains("atoms") || !j.contains("components")) {
    throw ConfigError("state", "needs theta, p0, atoms and components");
  }
  state.base.theta = get_number(j, "theta", "theta");
  state.base.p0 = parse_p0(j.at("p0"));
  state.sigma_speed = number_or(j, "sigma_speed", 1.0, "sigma_speed");
  std::vector<double> atoms;
  for (const auto& v : j.at("atoms")) {
    if (!v.is_number()) throw ConfigError("atoms", "expected numbers");
    atoms.push_back(v.get<double>());
  }
  try {
    state.registry = AtomRegistry::from_values(atoms);
  } catch (const PreconditionError& e) {
    throw ConfigError("atoms", e.what());
  }
  state.components = parse_components(j.at("components"));
}

}  // namespace detail

inline FvFilterState parse_fv_state(const std::string& text) {
  const Json j = parse_json_text(text, "state").value;
  detail::reject_unknown(j, {"theta", "p0", "sigma_speed", "atoms", "components"}, "");
  FvFilterState state;
  detail::parse_state_common(j, state);
  try {
    check_invariants(state);
  } catch (const PreconditionError& e) {
    throw ConfigError("state", e.what());
  }
  return state;
}

inline DwFilterState parse_dw_state(const std::string& text) {
  const Json j = parse_json_text(text, "state").value;
  detail::reject_unknown(j, {"theta", "p0", "beta", "s", "sigma_speed", "atoms", "components"}, "");
  DwFilterState state;
  detail::parse_state_common(j, state);
  if (!j.contains("beta") || !j.contains("s")) throw ConfigError("state", "dw states need beta and s");
  state.beta = detail::get_number(j, "beta", "beta");
  state.s = detail::get_number(j, "s", "s");
  try {
    check_invariants(state);
  } catch (const PreconditionError& e) {
    throw ConfigError("state", e.what());
  }
  return state;
}

}  // namespace measure_filter
