#include "vpat/deduction.hpp"

#include <algorithm>
#include <cmath>

#include "vpat/adversary.hpp"

namespace vpat::harness {

using nlohmann::json;

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::kCapable: return "capable";
    case Outcome::kIncapable: return "incapable";
    case Outcome::kInconclusive: return "inconclusive";
  }
  return "?";
}

namespace {

std::int64_t origin_of(const runlog::RunLog& log) {
  if (log.header.contains("branch")) return log.header["branch"].at("origin_tick").get<std::int64_t>();
  if (log.ticks.empty()) throw Error(ErrorCode::kAlignment, "log has no ticks");
  return log.ticks.front().tick;
}

OutcomeMetrics metrics(const runlog::RunLog& log, const std::string& vehicle, std::int64_t from, std::int64_t to) {
  OutcomeMetrics m;
  const double dt = log.dt();
  std::optional<double> prev_accel;
  for (const auto& t : log.ticks) {
    if (t.tick < from) continue;
    auto it = t.entities.find(vehicle);
    if (it == t.entities.end()) continue;
    if (!m.task_time && it->second.route_complete) m.task_time = static_cast<double>(t.tick - from) * dt;
    if (t.tick > to) continue;
    if (auto ttc = adversary::min_ttc(t.entities, vehicle)) m.min_ttc = std::min(m.min_ttc, *ttc);
    m.max_decel = std::max(m.max_decel, -it->second.accel);
    if (prev_accel) m.max_jerk = std::max(m.max_jerk, std::abs(it->second.accel - *prev_accel) / dt);
    prev_accel = it->second.accel;
  }
  return m;
}

}  // namespace

DeductionVerdict judge(const runlog::RunLog& branch, const std::string& vehicle) {
  DeductionVerdict v;
  Evidence& ev = v.evidence;
  for (const auto& c : branch.events_of("collision")) {
    if (c.data.value("a", "") == vehicle || c.data.value("b", "") == vehicle) ev.collision = true;
  }
  // A malformed reply is replaced by the held control just like a late one.
  for (const char* fault : {"aut_timeout", "aut_malformed"}) {
    for (const auto& t : branch.events_of(fault)) {
      if (t.data.value("vehicle", "") == vehicle) ++ev.timeouts;
    }
  }
  const std::int64_t origin = origin_of(branch);
  const std::int64_t last = branch.ticks.empty() ? origin : branch.ticks.back().tick;
  const OutcomeMetrics m = metrics(branch, vehicle, origin, last);
  ev.task_completed = m.task_time.has_value();
  ev.min_ttc = m.min_ttc;
  ev.max_decel = m.max_decel;

  const std::int64_t half = origin + (last - origin) / 2;
  bool any = false;
  ev.stalled = !ev.task_completed && last > origin;
  for (const auto& t : branch.ticks) {
    if (t.tick < half) continue;
    auto it = t.entities.find(vehicle);
    if (it == t.entities.end()) continue;
    any = true;
    if (it->second.speed >= kStallSpeed) ev.stalled = false;
  }
  ev.stalled = ev.stalled && any;

  if (ev.collision) {
    v.outcome = Outcome::kIncapable;
  } else if (ev.timeouts > 0) {
    v.outcome = Outcome::kInconclusive;
  } else if (ev.task_completed) {
    v.outcome = Outcome::kCapable;
  } else if (ev.stalled) {
    v.outcome = Outcome::kIncapable;
  } else {
    v.outcome = Outcome::kInconclusive;
  }
  if (branch.footer.is_object()) v.termination = branch.footer.value("reason", "");
  v.branch_log = branch;
  return v;
}

std::unique_ptr<aut::Adapter> original_controller(const ScenarioSpec& spec, const std::string& vehicle) {
  const RosterEntry& r = spec.entry(vehicle);
  if (r.control == ControlSource::kAutEndpoint) return make_adapter(spec.adapter(r.adapter), vehicle);
  return std::make_unique<aut::InprocAdapter>(aut::make_stub("baseline"));
}

DeductionVerdict run_deduction(const ScenarioSpec& spec, const DeductionRequest& req,
                               std::unique_ptr<aut::Adapter> controller, double horizon, RunOptions opts) {
  auto sim = Simulation::branch(spec, req.snapshot, req.event.vehicle, std::move(controller), horizon, std::move(opts));
  const runlog::RunLog log = sim->run();
  DeductionVerdict v = judge(log, req.event.vehicle);
  v.event = req.event;
  return v;
}

Comparison compare_outcomes(const runlog::RunLog& manual, const runlog::RunLog& branch, const std::string& vehicle) {
  Comparison c;
  c.origin = origin_of(branch);
  if (branch.ticks.empty() || branch.ticks.front().tick != c.origin) {
    throw Error(ErrorCode::kAlignment, "branch log does not start at its origin tick");
  }
  if (manual.header.contains("branch") && origin_of(manual) != c.origin) {
    throw Error(ErrorCode::kAlignment, "logs fork from different ticks");
  }
  const bool covered = std::any_of(manual.ticks.begin(), manual.ticks.end(),
                                   [&](const runlog::TickRecord& t) { return t.tick == c.origin; });
  if (!covered) {
    throw Error(ErrorCode::kAlignment, "manual log has no tick " + std::to_string(c.origin));
  }
  const std::int64_t end = std::min(manual.ticks.back().tick, branch.ticks.back().tick);
  c.manual = metrics(manual, vehicle, c.origin, end);
  c.branch = metrics(branch, vehicle, c.origin, end);
  if (c.manual.task_time && c.branch.task_time) c.d_task_time = *c.branch.task_time - *c.manual.task_time;
  c.d_min_ttc = c.branch.min_ttc - c.manual.min_ttc;
  c.d_max_decel = c.branch.max_decel - c.manual.max_decel;
  c.d_max_jerk = c.branch.max_jerk - c.manual.max_jerk;
  c.safety_regression = c.branch.min_ttc < kRegressionTtc && c.branch.min_ttc < c.manual.min_ttc;
  c.efficiency_gain = c.d_task_time && *c.d_task_time < 0.0;
  return c;
}

json verdict_to_json(const DeductionVerdict& v) {
  return {{"vehicle", v.event.vehicle},
          {"tick", v.event.tick},
          {"initiator", to_string(v.event.initiator)},
          {"reason", v.event.reason},
          {"outcome", to_string(v.outcome)},
          {"termination", v.termination},
          {"evidence",
           {{"collision", v.evidence.collision},
            {"task_completed", v.evidence.task_completed},
            {"stalled", v.evidence.stalled},
            {"min_ttc", v.evidence.min_ttc},
            {"max_decel", v.evidence.max_decel},
            {"timeouts", v.evidence.timeouts}}}};
}

namespace {

json metrics_json(const OutcomeMetrics& m) {
  return {{"task_time", m.task_time ? json(*m.task_time) : json(nullptr)},
          {"min_ttc", m.min_ttc},
          {"max_decel", m.max_decel},
          {"max_jerk", m.max_jerk}};
}

}  // namespace

json comparison_to_json(const Comparison& c) {
  return {{"origin_tick", c.origin},
          {"manual", metrics_json(c.manual)},
          {"branch", metrics_json(c.branch)},
          {"delta",
           {{"task_time", c.d_task_time ? json(*c.d_task_time) : json(nullptr)},
            {"min_ttc", c.d_min_ttc},
            {"max_decel", c.d_max_decel},
            {"max_jerk", c.d_max_jerk}}},
          {"safety_regression", c.safety_regression},
          {"efficiency_gain", c.efficiency_gain}};
}

}  // namespace vpat::harness
