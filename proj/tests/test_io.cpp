#include <gtest/gtest.h>

#include <string>

#include "measure_filter/io.hpp"

namespace mf = measure_filter;

namespace {

std::string field_of(const std::string& text) {
  try {
    mf::parse_run_config(mf::parse_json_text(text, "config"));
  } catch (const mf::ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

}  // namespace

TEST(Numbers, SeventeenSignificantDigits) {
  EXPECT_EQ(mf::format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(mf::format_double(1.0), "1");
  EXPECT_EQ(mf::format_double(std::nan("")), "null");
  mf::OrderedJson j;
  j["x"] = 1.0 / 3.0;
  j["t"] = mf::raw_number("1e-3");
  EXPECT_EQ(mf::to_json_text(j), R"({"x":0.33333333333333331,"t":1e-3})");
}

TEST(Config, ValidFvConfig) {
  const auto cfg = mf::parse_run_config(mf::parse_json_text(
      R"({"model":"fv","theta":1.5,"p0":{"family":"gaussian","mu":0,"var":2},"seed":7,
          "schedule":[{"t":0,"n":5},{"t":0.50,"n":3}]})",
      "config"));
  EXPECT_EQ(cfg.sim.model, mf::ModelKind::fv);
  EXPECT_EQ(cfg.sim.base.theta, 1.5);
  EXPECT_EQ(cfg.sim.seed, 7u);
  EXPECT_EQ(cfg.prune_eps, 1e-8);
  ASSERT_EQ(cfg.sim.schedule.size(), 2u);
  EXPECT_EQ(cfg.schedule_time_text, (std::vector<std::string>{"0", "0.50"}));
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_EQ(field_of(R"({"model":"fv","theta":0,"p0":{"family":"uniform","a":0,"b":1}})"), "theta");
  EXPECT_EQ(field_of(R"({"model":"fv","theta":-2,"p0":{"family":"uniform","a":0,"b":1}})"), "theta");
  EXPECT_EQ(field_of(R"({"model":"fv","theta":1,"p0":{"family":"uniform","a":1,"b":0}})"), "p0");
  EXPECT_EQ(field_of(R"({"model":"fv","theta":1,"p0":{"family":"cauchy"}})"), "p0.family");
  EXPECT_EQ(field_of(R"({"model":"fv","theta":1})"), "p0");
  EXPECT_EQ(field_of(R"({"model":"dw","theta":1,"p0":{"family":"uniform","a":0,"b":1}})"), "beta");
  EXPECT_EQ(field_of(R"({"model":"cir","alpha":[1,2],"beta":1})"), "alpha");
  EXPECT_EQ(field_of(R"({"model":"wf","alpha":[1,0]})"), "alpha");
  EXPECT_EQ(field_of(R"({"model":"wf","alpha":[1,1],"beta":1})"), "beta");
  EXPECT_EQ(field_of(R"({"model":"xx"})"), "model");
  EXPECT_EQ(field_of(R"({"model":"wf","alpha":[1,1],"prune_eps":1})"), "prune_eps");
  EXPECT_EQ(field_of(R"({"model":"wf","alpha":[1,1],"sigma_speed":0})"), "sigma_speed");
  EXPECT_EQ(field_of(R"({"model":"wf","alpha":[1,1],"schedule":[{"t":1,"n":2},{"t":1,"n":2}]})"), "schedule");
  EXPECT_EQ(field_of(R"({"model":"wf","alpha":[1,1],"schedule":[{"t":1,"n":-2}]})"), "schedule[0].n");
  EXPECT_EQ(field_of(R"({"model":"dw","theta":1,"beta":1,"p0":{"family":"uniform","a":0,"b":1},
                        "schedule":[{"t":1,"n":2}]})"),
            "schedule[0].n");
  EXPECT_EQ(field_of(R"({"model":"dw","theta":1,"beta":1,"p0":{"family":"uniform","a":0,"b":1},
                        "dw_weight_mode":"other"})"),
            "dw_weight_mode");
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_EQ(field_of(R"({"model":"wf","alpha":[1,1],"thetta":2})"), "thetta");
  EXPECT_EQ(field_of(R"({"model":"fv","theta":1,"p0":{"family":"uniform","a":0,"b":1,"c":2}})"), "p0.c");
  EXPECT_EQ(field_of(R"({"model":"wf","alpha":[1,1],"schedule":[{"t":1,"n":2,"k":1}]})"), "schedule[0].k");
}

TEST(Config, MalformedJsonIsAConfigError) {
  EXPECT_THROW(mf::parse_json_text("{\"model\":", "config"), mf::ConfigError);
}

TEST(Config, RoundTripIsByteIdentical) {
  const auto cfg = mf::parse_run_config(mf::parse_json_text(
      R"({"model":"dw","theta":0.1,"beta":3,"p0":{"family":"uniform","a":-1,"b":1},"seed":3,
          "dw_binomial_convention":"paper_literal","schedule":[{"t":0.0},{"t":1e-1},{"t":2.5}]})",
      "config"));
  const auto text = mf::to_json_text(mf::run_config_to_json(cfg));
  const auto again = mf::parse_run_config(mf::parse_json_text(text, "config"));
  EXPECT_EQ(mf::to_json_text(mf::run_config_to_json(again)), text);
  EXPECT_NE(text.find(R"("t":1e-1)"), std::string::npos);
  EXPECT_EQ(again.dw_binomial_convention, mf::BinomialConvention::paper_literal);
}

TEST(Dataset, ParsesAndEchoesTimesVerbatim) {
  const std::string text = "{\"t\": 0.10, \"obs\": [0.5, 0.25]}\n\n{\"t\":2e0,\"obs\":[]}\n";
  const auto d = mf::parse_dataset(text, mf::ModelKind::dw);
  ASSERT_EQ(d.dataset.batches.size(), 2u);
  EXPECT_EQ(d.time_text, (std::vector<std::string>{"0.10", "2e0"}));
  EXPECT_TRUE(d.dataset.batches[1].obs.empty());
  EXPECT_EQ(mf::dataset_to_jsonl(d.dataset, d.time_text),
            "{\"t\":0.10,\"obs\":[0.5,0.25]}\n{\"t\":2e0,\"obs\":[]}\n");
}

TEST(Dataset, RejectsBadRecords) {
  EXPECT_THROW(mf::parse_dataset("{\"t\":0,\"obs\":[3]}\n", mf::ModelKind::wf, 3), mf::ConfigError);
  EXPECT_THROW(mf::parse_dataset("{\"t\":0,\"obs\":[1.5]}\n", mf::ModelKind::cir), mf::ConfigError);
  EXPECT_THROW(mf::parse_dataset("{\"t\":0,\"obs\":[-1]}\n", mf::ModelKind::cir), mf::ConfigError);
  EXPECT_THROW(mf::parse_dataset("{\"t\":0}\n", mf::ModelKind::fv), mf::ConfigError);
  EXPECT_THROW(mf::parse_dataset("{\"t\":0,\"obs\":[],\"w\":1}\n", mf::ModelKind::fv), mf::ConfigError);
  EXPECT_THROW(mf::parse_dataset("{\"t\":0,\"obs\":[],\"latent\":3}\n", mf::ModelKind::fv), mf::ConfigError);
  EXPECT_THROW(mf::parse_dataset("not json\n", mf::ModelKind::fv), mf::ConfigError);
}

TEST(Dataset, SimulatedDataRoundTrips) {
  mf::SimConfig cfg;
  cfg.model = mf::ModelKind::fv;
  cfg.base = {1.0, mf::GaussianP0{0.0, 1.0}};
  cfg.schedule = {{0.0, 4}, {0.7, 4}};
  cfg.seed = 5;
  const auto data = mf::simulate(cfg);
  const auto text = mf::dataset_to_jsonl(data, {});
  const auto back = mf::parse_dataset(text, mf::ModelKind::fv);
  for (std::size_t j = 0; j < data.batches.size(); ++j) EXPECT_EQ(back.dataset.batches[j].obs, data.batches[j].obs);
  EXPECT_EQ(mf::dataset_to_jsonl(back.dataset, back.time_text), text);
}
