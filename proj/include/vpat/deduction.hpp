#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"
#include "vpat/aut.hpp"
#include "vpat/runlog.hpp"
#include "vpat/scenario.hpp"
#include "vpat/sim.hpp"

namespace vpat::harness {

inline constexpr double kStallSpeed = 0.1;
inline constexpr double kRegressionTtc = 2.5;

enum class Outcome { kCapable, kIncapable, kInconclusive };
std::string to_string(Outcome o);

struct Evidence {
  bool collision = false;
  bool task_completed = false;
  bool stalled = false;
  double min_ttc = 10.0;  // capped at the TTC horizon
  double max_decel = 0.0;
  std::uint64_t timeouts = 0;  // late or malformed AUT replies
};

struct DeductionVerdict {
  Outcome outcome = Outcome::kInconclusive;
  TakeoverEvent event;
  Evidence evidence;
  std::string termination;
  runlog::RunLog branch_log;
};

/// Rules: a collision of the vehicle -> incapable; any AUT fault ->
/// inconclusive; route completed -> capable; stopped through the second
/// half of the branch -> incapable; otherwise inconclusive.
DeductionVerdict judge(const runlog::RunLog& branch, const std::string& vehicle);

/// The vehicle's scenario controller: its AUT endpoint, or the in-process
/// baseline for internally driven vehicles.
std::unique_ptr<aut::Adapter> original_controller(const ScenarioSpec& spec, const std::string& vehicle);

/// Advances the branch from the takeover snapshot with `controller` in
/// charge of the vehicle.
DeductionVerdict run_deduction(const ScenarioSpec& spec, const DeductionRequest& req,
                               std::unique_ptr<aut::Adapter> controller, double horizon, RunOptions opts = {});

struct OutcomeMetrics {
  std::optional<double> task_time;  // from the origin to route completion
  double min_ttc = 10.0;
  double max_decel = 0.0;
  double max_jerk = 0.0;
};

struct Comparison {
  std::int64_t origin = 0;
  OutcomeMetrics manual;
  OutcomeMetrics branch;
  std::optional<double> d_task_time;  // branch - manual
  double d_min_ttc = 0.0;
  double d_max_decel = 0.0;
  double d_max_jerk = 0.0;
  bool safety_regression = false;
  bool efficiency_gain = false;
};

/// Both logs must cover the branch origin tick.
Comparison compare_outcomes(const runlog::RunLog& manual, const runlog::RunLog& branch, const std::string& vehicle);

nlohmann::json verdict_to_json(const DeductionVerdict& v);
nlohmann::json comparison_to_json(const Comparison& c);

}  // namespace vpat::harness
