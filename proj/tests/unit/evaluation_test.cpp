#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "vpat/evaluation.hpp"

namespace ev = vpat::evaluation;

TEST(ScoreMetric, LinearMapWithClamp) {
  ev::MetricSpec m{"min_ttc", "safety", "min_ttc", 0.0, 6.5, 1.0};
  EXPECT_DOUBLE_EQ(ev::score_metric(6.5, m), 100.0);
  EXPECT_DOUBLE_EQ(ev::score_metric(0.0, m), 0.0);
  EXPECT_DOUBLE_EQ(ev::score_metric(3.25, m), 50.0);
  EXPECT_DOUBLE_EQ(ev::score_metric(9.0, m), 100.0);
  EXPECT_DOUBLE_EQ(ev::score_metric(-1.0, m), 0.0);
  ev::MetricSpec inverted{"max_decel", "comfort", "max_decel", 8.0, 0.0, 1.0};
  EXPECT_DOUBLE_EQ(ev::score_metric(2.0, inverted), 75.0);
}

TEST(Pet, Definition) {
  const auto r = ev::pet(ev::Occupancy{8.0, 10.0}, ev::Occupancy{11.2, 12.0});
  EXPECT_NEAR(r.value, 1.2, 1e-12);
  EXPECT_FALSE(r.overlap);
  const auto o = ev::pet(ev::Occupancy{8.0, 10.0}, ev::Occupancy{9.0, 12.0});
  EXPECT_EQ(o.value, 0.0);
  EXPECT_TRUE(o.overlap);
}

TEST(Pet, OnlyOneVehicleCrossingIsNotApplicable) {
  const auto log = fixture::profile_log();
  vpat::world::ConflictPoint cp{"cp", "l0", 400.0, "l1", 400.0, 2.5, "", false};
  try {
    ev::pet(log, cp, "vut", "lead");
    FAIL();
  } catch (const vpat::Error& e) {
    EXPECT_EQ(e.code(), vpat::ErrorCode::kNotApplicable);
  }
}

TEST(Scheme, ParseNormalizesWeightsAndRejectsGaps) {
  auto j = ev::scheme_to_json(ev::default_scheme());
  const auto s = ev::parse_scheme(j);
  std::map<std::string, double> sums;
  for (const auto& m : s.metrics) sums[m.dimension] += m.weight;
  for (const auto& [d, w] : sums) EXPECT_NEAR(w, 1.0, 1e-12) << d;

  auto missing = j;
  nlohmann::json kept = nlohmann::json::array();
  for (const auto& m : j["metrics"]) {
    if (m["dimension"] != "comfort") kept.push_back(m);
  }
  missing["metrics"] = kept;
  try {
    ev::parse_scheme(missing);
    FAIL();
  } catch (const vpat::Error& e) {
    EXPECT_EQ(e.code(), vpat::ErrorCode::kScheme);
  }
  auto equal_anchors = j;
  equal_anchors["metrics"][0]["best"] = equal_anchors["metrics"][0]["worst"];
  EXPECT_THROW(ev::parse_scheme(equal_anchors), vpat::Error);
}

TEST(Scheme, FileMatchesBuiltInDefault) {
  EXPECT_EQ(ev::scheme_to_json(ev::load_scheme(fixture::data_path("eval/default_scheme.json"))),
            ev::scheme_to_json(ev::default_scheme()));
}

TEST(Evaluate, ProfileFromConstructedLog) {
  const auto r = ev::evaluate(fixture::profile_log(), ev::default_scheme());
  EXPECT_EQ(r.vut, "vut");
  EXPECT_EQ(r.scenario_id, "profile");
  EXPECT_GT(*r.dimension_scores.at("compliance"), 80.0);
  EXPECT_GT(*r.dimension_scores.at("comfort"), 80.0);
  EXPECT_LT(*r.dimension_scores.at("safety"), 60.0);
  EXPECT_LT(*r.dimension_scores.at("efficiency"), 60.0);
  EXPECT_LT(*r.dimension_scores.at("coordination"), 60.0);
  EXPECT_NEAR(*r.raw("avg_speed_ratio"), 4.0 / 15.0, 1e-12);
  EXPECT_NEAR(*r.raw("induced_decel"), 5.0, 1e-12);
  EXPECT_FALSE(r.raw("task_time").has_value());
  EXPECT_EQ(*r.raw("collision"), 0.0);
}

TEST(Evaluate, RenormalizationInvariance) {
  const auto log = fixture::profile_log();
  const auto base = ev::evaluate(log, ev::default_scheme());
  auto j = ev::scheme_to_json(ev::default_scheme());
  vpat::Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    auto scaled = j;
    const double k = rng.uniform(0.1, 20.0);
    for (auto& m : scaled["metrics"]) m["weight"] = m["weight"].get<double>() * k;
    const auto r = ev::evaluate(log, ev::parse_scheme(scaled));
    for (const auto& [d, s] : base.dimension_scores) {
      ASSERT_EQ(s.has_value(), r.dimension_scores.at(d).has_value());
      if (s) EXPECT_NEAR(*s, *r.dimension_scores.at(d), 1e-9) << d;
    }
    EXPECT_NEAR(r.overall, base.overall, 1e-9);
    auto dim = j;
    for (const auto& d : ev::kDimensions) dim["dimension_weights"][d] = k;
    EXPECT_NEAR(ev::evaluate(log, ev::parse_scheme(dim)).overall, base.overall, 1e-9);
  }
}

TEST(Evaluate, RedLightEntryPenalizesCompliance) {
  auto doc = fixture::straight_map_doc();
  doc["signals"] = {{{"signal", "sig"}, {"lane", "l0"}, {"s", 60.0}, {"approach", 0}}};
  vpat::runlog::Writer w;
  w.header({{"scenario_id", "red"}, {"vuts", {"vut"}}, {"dt", 0.1}, {"map", doc}});
  for (int k = 0; k < 30; ++k) {
    vpat::runlog::TickRecord r;
    r.tick = k;
    r.t = 0.1 * k;
    auto e = fixture::vehicle("vut", 50.0 + k, 0, 0, 10.0, vpat::world::EntityKind::kPhysicalCav);
    e.lane = "l0";
    e.s = 50.0 + k;
    r.entities["vut"] = e;
    r.signals["sig"] = {vpat::world::Phase::kRed};
    w.tick(r);
  }
  const auto r = ev::evaluate(w.finish(), ev::default_scheme());
  EXPECT_EQ(*r.raw("red_light_entries"), 1.0);
  EXPECT_LT(*r.dimension_scores.at("compliance"), 100.0);
  EXPECT_EQ(*r.metric_score("red_light_entries"), 0.0);
}

TEST(Compare, RanksAndGroupingRules) {
  const auto a = ev::evaluate(fixture::profile_log(), ev::default_scheme());
  auto b = a;
  b.algorithm_id = "other";
  const auto t = ev::compare({a, b}, ev::Axis::kHorizontal);
  ASSERT_EQ(t.rows.size(), 2u);
  for (const auto& c : t.columns) EXPECT_EQ(t.rows[0].rank.at(c), t.rows[1].rank.at(c));
  auto c = a;
  c.scenario_id = "elsewhere";
  try {
    ev::compare({a, c}, ev::Axis::kHorizontal);
    FAIL();
  } catch (const vpat::Error& e) {
    EXPECT_EQ(e.code(), vpat::ErrorCode::kGrouping);
  }
}

TEST(Compare, VerticalTableFlagsExtremes) {
  std::vector<ev::EvaluationReport> reports;
  for (int i = 0; i < 3; ++i) {
    auto r = ev::evaluate(fixture::profile_log(), ev::default_scheme());
    r.scenario_id = "s" + std::to_string(i);
    r.dimension_scores["safety"] = 10.0 * (i + 1);
    reports.push_back(r);
  }
  const auto t = ev::compare(reports, ev::Axis::kVertical);
  EXPECT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.best.at("safety"), "s2");
  EXPECT_EQ(t.worst.at("safety"), "s0");
  EXPECT_FALSE(ev::render_table(t).empty());
}

TEST(Diagnose, PerfectScoresGiveNoFindings) {
  std::map<std::string, std::optional<double>> raw;
  for (const auto& m : ev::default_scheme().metrics) {
    raw[m.name] = m.best;
  }
  const auto r = ev::aggregate(ev::default_scheme(), raw);
  for (const auto& [d, s] : r.dimension_scores) EXPECT_DOUBLE_EQ(*s, 100.0) << d;
  EXPECT_TRUE(ev::diagnose(r, ev::default_rulebase()).empty());
}

TEST(Diagnose, LowTtcFiresGapAcceptanceRule) {
  std::map<std::string, std::optional<double>> raw;
  for (const auto& m : ev::default_scheme().metrics) raw[m.name] = m.best;
  raw["min_ttc"] = 1.9;
  raw["min_pet"] = 0.5;
  auto r = ev::aggregate(ev::default_scheme(), raw);
  ASSERT_LT(*r.dimension_scores.at("safety"), 60.0);
  const auto f = ev::diagnose(r, ev::default_rulebase());
  ASSERT_FALSE(f.empty());
  EXPECT_EQ(f[0].rule_id, "SAF-01");
  EXPECT_NE(f[0].suggestion.find("gap acceptance"), std::string::npos);
}

TEST(Diagnose, RulebaseFileMatchesDefault) {
  EXPECT_EQ(ev::load_rulebase(fixture::data_path("eval/rulebase.json")).size(), ev::default_rulebase().size());
}
