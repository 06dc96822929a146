#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vpat/runlog.hpp"
#include "vpat/world.hpp"

namespace vpat::evaluation {

inline const std::vector<std::string> kDimensions = {"safety", "efficiency", "comfort", "compliance",
                                                     "coordination"};

struct MetricSpec {
  std::string name;
  std::string dimension;
  std::string extractor;  // registry key; defaults to name
  double worst = 0.0;
  double best = 1.0;
  double weight = 1.0;
};

struct Scheme {
  std::string name = "default";
  std::vector<std::string> dimensions = kDimensions;
  std::map<std::string, double> dimension_weights;  // empty means equal weights
  std::vector<MetricSpec> metrics;

  /// Checks anchors and coverage and rescales weights to sum to 1 per dimension.
  void normalize();
};

Scheme parse_scheme(const nlohmann::json& j);
Scheme load_scheme(const std::string& path);
nlohmann::json scheme_to_json(const Scheme& s);
Scheme default_scheme();

/// Linear map of raw from [worst, best] onto [0, 100], clamped.
double score_metric(double raw, const MetricSpec& spec);

struct PetResult {
  double value = 0.0;
  bool overlap = false;  // both vehicles were inside the area at once
};

struct Occupancy {
  double enter = 0.0;
  double exit = 0.0;
};

/// Time from the first vehicle leaving the area to the second entering.
PetResult pet(const Occupancy& first, const Occupancy& second);
/// First traversal of the conflict area by `id`, if any.
std::optional<Occupancy> occupancy(const runlog::RunLog& log, const world::ConflictPoint& cp, const std::string& id);
PetResult pet(const runlog::RunLog& log, const world::ConflictPoint& cp, const std::string& a, const std::string& b);
/// Smallest PET between `vut` and anyone else at this conflict point.
PetResult pet(const runlog::RunLog& log, const world::ConflictPoint& cp, const std::string& vut);

struct ExtractContext {
  const runlog::RunLog& log;
  const world::ScenarioMap& map;
  std::string vut;
};

using Extractor = std::function<std::optional<double>(const ExtractContext&)>;

/// Named extractors; nullopt from an extractor means "not applicable".
std::map<std::string, Extractor>& registry();

struct MetricResult {
  std::string name;
  std::string dimension;
  std::optional<double> raw;
  std::optional<double> score;
  double weight = 0.0;
};

struct EvaluationReport {
  std::string scenario_id;
  std::string algorithm_id;
  std::string algorithm_version;
  std::string vut;
  std::map<std::string, std::optional<double>> dimension_scores;
  std::vector<MetricResult> metrics;
  double overall = 0.0;
  std::map<std::string, double> dimension_weights;

  std::optional<double> raw(const std::string& metric) const;
  std::optional<double> metric_score(const std::string& metric) const;
};

/// Scores metrics from their parts; exposed so reports can be rebuilt.
EvaluationReport aggregate(const Scheme& scheme, const std::map<std::string, std::optional<double>>& raw);

EvaluationReport evaluate(const runlog::RunLog& log, const Scheme& scheme, const std::string& vut = "");

nlohmann::json report_to_json(const EvaluationReport& r);
std::string render_report(const EvaluationReport& r);

enum class Axis { kHorizontal, kVertical };

struct RankingRow {
  std::string label;  // algorithm for horizontal, scenario for vertical
  std::map<std::string, std::optional<double>> scores;  // dimensions plus "overall"
  std::map<std::string, int> rank;
  std::map<std::string, double> delta_to_best;
};

struct RankingTable {
  Axis axis = Axis::kHorizontal;
  std::vector<std::string> columns;  // dimensions then "overall"
  std::vector<RankingRow> rows;
  std::map<std::string, std::string> best;   // column -> label of the max
  std::map<std::string, std::string> worst;  // column -> label of the min
};

/// Competition ranking (ties share a rank) per dimension and overall.
RankingTable compare(const std::vector<EvaluationReport>& reports, Axis axis);
std::string render_table(const RankingTable& t);

struct Condition {
  std::string field;  // score.<dim> | raw.<metric> | metric_score.<metric> | overall
  std::string op;     // < <= > >= == !=
  double value = 0.0;
};

struct Rule {
  std::string id;
  std::string dimension;
  std::string metric;
  std::string severity;
  std::vector<Condition> when;  // all must hold
  std::string suggestion;
};

struct Finding {
  std::string dimension;
  std::string metric;
  std::string severity;
  std::string rule_id;
  std::string suggestion;
};

std::vector<Rule> parse_rulebase(const nlohmann::json& j);
std::vector<Rule> load_rulebase(const std::string& path);
std::vector<Rule> default_rulebase();

/// Value of a rule field in a report; nullopt when absent or not applicable.
std::optional<double> field_value(const EvaluationReport& r, const std::string& field);
bool holds(const Condition& c, const EvaluationReport& r);

std::vector<Finding> diagnose(const EvaluationReport& report, const std::vector<Rule>& rulebase);
nlohmann::json findings_to_json(const std::vector<Finding>& f);
std::string render_findings(const std::vector<Finding>& f);

}  // namespace vpat::evaluation
