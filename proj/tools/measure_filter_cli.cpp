// measure-filter: simulate datasets, run filters and validation suites.
//
// Exit codes: 0 ok, 1 validation failed or internal error, 2 invalid
// configuration or data, 3 resource cap reached, 4 non-monotone times.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "measure_filter/io.hpp"
#include "measure_filter/measure_filter.hpp"
#include "measure_filter/validation.hpp"

namespace mf = measure_filter;

namespace {

enum ExitCode { kOk = 0, kValidationFailed = 1, kConfigError = 2, kResourceCap = 3, kNonMonotone = 4 };

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw mf::ConfigError(path, "cannot open for writing");
  out << text;
  if (!out) throw mf::ConfigError(path, "write failed");
}

int cmd_simulate(const std::string& config_path, const std::string& out_path) {
  const mf::RunConfig cfg = mf::load_run_config(config_path);
  if (!cfg.has_schedule) throw mf::ConfigError("schedule", "simulation needs a schedule");
  const mf::Dataset data = mf::simulate(cfg.sim);
  write_file(out_path, mf::dataset_to_jsonl(data, cfg.schedule_time_text));
  mf::OrderedJson prov;
  prov["command"] = "simulate";
  prov["config"] = mf::run_config_to_json(cfg);
  prov["records"] = data.batches.size();
  write_file(out_path + ".provenance.json", mf::to_json_text(prov) + "\n");
  return kOk;
}

template <typename Record>
mf::OrderedJson step_line(const std::string& t_text, const Record& rec) {
  mf::OrderedJson line;
  line["t"] = mf::raw_number(t_text);
  line["logml_increment"] = rec.log_ml_increment;
  line["n_components"] = rec.components_after_prune;
  return line;
}

int cmd_filter(const std::string& config_path, const std::string& data_path, const std::string& out_path,
               unsigned threads) {
  const mf::RunConfig cfg = mf::load_run_config(config_path);
  const auto& sim = cfg.sim;
  const auto loaded = mf::parse_dataset(mf::read_file(data_path), sim.model, sim.alpha.size());
  const auto& batches = loaded.dataset.batches;
  const mf::ExecutionOptions exec{threads, {}};
  std::string out;
  mf::OrderedJson summary;

  auto finish_line = [&](mf::OrderedJson& line, double pruned, const mf::OrderedJson& comps, double full, double prior) {
    line["pruned_mass"] = pruned;
    line["components"] = comps;
    line["weight_fullinfo"] = full;
    line["weight_prior"] = prior;
    mf::write_json(out, line);
    out += '\n';
  };

  switch (sim.model) {
    case mf::ModelKind::fv: {
      const auto prior = mf::new_fv_prior(sim.base, sim.sigma_speed);
      const auto result = mf::fv_filter(prior, batches, cfg.prune_eps, exec);
      for (std::size_t j = 0; j < result.steps.size(); ++j) {
        const auto& rec = result.steps[j];
        auto line = step_line(loaded.time_text[j], rec);
        finish_line(line, rec.pruned_mass, mf::components_to_json(rec.state->components), rec.weight_fullinfo,
                    rec.weight_prior);
      }
      const auto& final_state = result.steps.empty() ? prior : *result.steps.back().state;
      summary["total_logml"] = result.total_log_ml;
      summary["steps"] = result.steps.size();
      summary["atoms"] = final_state.registry.atoms();
      summary["final_components"] = mf::components_to_json(final_state.components);
      break;
    }
    case mf::ModelKind::dw: {
      const auto prior = mf::new_dw_prior(sim.base, sim.beta, sim.sigma_speed);
      mf::DwFilterOptions options{cfg.prune_eps, cfg.dw_weight_mode, cfg.dw_binomial_convention, exec};
      const auto result = mf::dw_filter(prior, batches, options);
      for (std::size_t j = 0; j < result.steps.size(); ++j) {
        const auto& rec = result.steps[j];
        auto line = step_line(loaded.time_text[j], rec);
        line["s"] = rec.state->s;
        finish_line(line, rec.pruned_mass, mf::components_to_json(rec.state->components), rec.weight_fullinfo,
                    rec.weight_prior);
      }
      const auto& final_state = result.steps.empty() ? prior : *result.steps.back().state;
      summary["total_logml"] = result.total_log_ml;
      summary["steps"] = result.steps.size();
      summary["s"] = final_state.s;
      summary["atoms"] = final_state.registry.atoms();
      summary["final_components"] = mf::components_to_json(final_state.components);
      break;
    }
    case mf::ModelKind::wf: {
      std::vector<mf::CategoryBatch> data;
      for (const auto& b : batches) {
        mf::CategoryBatch cb{b.t, mf::CountVector(sim.alpha.size(), 0)};
        for (double y : b.obs) ++cb.counts[static_cast<std::size_t>(y)];
        data.push_back(std::move(cb));
      }
      const auto prior = mf::DirichletMixture::prior(sim.alpha);
      const auto result = mf::wf_filter(prior, data, sim.sigma_speed, cfg.prune_eps);
      for (std::size_t j = 0; j < result.records.size(); ++j) {
        const auto& rec = result.records[j];
        auto line = step_line(loaded.time_text[j], rec);
        finish_line(line, rec.pruned_mass, mf::components_to_json(result.posteriors[j].components),
                    rec.weight_fullinfo, rec.weight_prior);
      }
      const auto& final_state = result.posteriors.empty() ? prior : result.posteriors.back();
      summary["total_logml"] = result.total_log_ml;
      summary["steps"] = result.records.size();
      summary["posterior_mean"] = mf::wf_mean(final_state);
      summary["final_components"] = mf::components_to_json(final_state.components);
      break;
    }
    case mf::ModelKind::cir: {
      std::vector<mf::PoissonBatch> data;
      for (const auto& b : batches) {
        mf::PoissonBatch pb{b.t, {}};
        for (double y : b.obs) pb.values.push_back(static_cast<mf::Count>(y));
        data.push_back(std::move(pb));
      }
      const auto prior = mf::GammaMixture::prior(sim.alpha, sim.beta);
      const auto result = mf::cir_filter(prior, data, sim.sigma_speed, cfg.prune_eps);
      for (std::size_t j = 0; j < result.records.size(); ++j) {
        const auto& rec = result.records[j];
        auto line = step_line(loaded.time_text[j], rec);
        line["s"] = result.posteriors[j].s;
        const auto mv = mf::gamma_mean_variance(result.posteriors[j]);
        line["posterior_mean"] = mv.mean;
        line["posterior_variance"] = mv.variance;
        finish_line(line, rec.pruned_mass, mf::components_to_json(result.posteriors[j].components),
                    rec.weight_fullinfo, rec.weight_prior);
      }
      const auto& final_state = result.posteriors.empty() ? prior : result.posteriors.back();
      summary["total_logml"] = result.total_log_ml;
      summary["steps"] = result.records.size();
      summary["s"] = final_state.s;
      summary["final_components"] = mf::components_to_json(final_state.components);
      break;
    }
  }
  mf::OrderedJson last;
  last["summary"] = summary;
  mf::write_json(out, last);
  out += '\n';
  write_file(out_path, out);
  return kOk;
}

int cmd_validate(const std::string& suite, std::uint64_t seed, const std::string& report_path, unsigned threads) {
  mf::SuiteOptions opt{seed, threads};
  const auto results = mf::run_suite(suite, opt);
  bool all = true;
  for (const auto& r : results) {
    std::cout << mf::format_check_line(r) << '\n';
    all = all && r.passed;
  }
  if (!report_path.empty()) write_file(report_path, mf::to_json_text(mf::report_to_json(suite, opt, results)) + "\n");
  return all ? kOk : kValidationFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact filtering for Fleming-Viot and Dawson-Watanabe signals"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "worker threads (default: $MEASURE_FILTER_THREADS or 1)");

  std::string config, out, data, suite, report;
  std::uint64_t seed = 1;

  auto* simulate = app.add_subcommand("simulate", "simulate a dataset from a config schedule");
  simulate->add_option("--config", config, "config JSON")->required();
  simulate->add_option("--out", out, "output JSONL")->required();

  auto* filter = app.add_subcommand("filter", "run the filter over a dataset");
  filter->add_option("--config", config, "config JSON")->required();
  filter->add_option("--data", data, "dataset JSONL")->required();
  filter->add_option("--out", out, "results JSONL")->required();

  auto* validate = app.add_subcommand("validate", "run a validation suite");
  validate->add_option("--suite", suite, "duality | projection | oracle | stability")
      ->required()
      ->check(CLI::IsMember({"duality", "projection", "oracle", "stability"}));
  validate->add_option("--seed", seed, "seed for random cases");
  validate->add_option("--report", report, "write a JSON report here");

  for (auto* sub : {simulate, filter, validate}) {
    sub->add_option("--threads", threads, "worker threads (default: $MEASURE_FILTER_THREADS or 1)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  const unsigned workers = mf::resolve_threads(threads);
  try {
    if (*simulate) return cmd_simulate(config, out);
    if (*filter) return cmd_filter(config, data, out, workers);
    if (*validate) return cmd_validate(suite, seed, report, workers);
  } catch (const mf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const mf::PreconditionError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kConfigError;
  } catch (const mf::ResourceCapError& e) {
    std::cerr << "resource cap: " << e.what() << "\nraise prune_eps or shorten the enumeration\n";
    return kResourceCap;
  } catch (const mf::NonMonotoneTimesError& e) {
    std::cerr << "non-monotone times: " << e.what() << '\n';
    return kNonMonotone;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidationFailed;
  }
  return kOk;
}
