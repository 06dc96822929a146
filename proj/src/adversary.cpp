#include "vpat/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vpat/risk.hpp"

namespace vpat::adversary {

using nlohmann::json;
using world::EntityState;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::optional<double> ttc_2d(const EntityState& a, const EntityState& b, double horizon, double d_col) {
  if (!(horizon > 0.0) || !(d_col > 0.0)) throw Error(ErrorCode::kConfig, "ttc horizon and d_col must be positive");
  const world::Vec2 va = a.velocity(), vb = b.velocity();
  const double px = a.pose.x - b.pose.x, py = a.pose.y - b.pose.y;
  const double wx = va.x - vb.x, wy = va.y - vb.y;
  const double c = px * px + py * py - d_col * d_col;
  if (c <= 0.0) return 0.0;
  const double qa = wx * wx + wy * wy;
  if (qa == 0.0) return std::nullopt;
  const double qb = px * wx + py * wy;  // half of the linear coefficient
  if (qb >= 0.0) return std::nullopt;   // separating
  const double disc = qb * qb - qa * c;
  if (disc < 0.0) return std::nullopt;
  // Root written to avoid cancellation: t = c / (-qb + sqrt(disc)).
  const double t = c / (-qb + std::sqrt(disc));
  if (t > horizon) return std::nullopt;
  return t;
}

std::optional<double> min_ttc(const std::map<std::string, EntityState>& entities, const std::string& ego,
                              double horizon, double d_col) {
  auto it = entities.find(ego);
  if (it == entities.end()) return std::nullopt;
  std::optional<double> best;
  for (const auto& [id, e] : entities) {
    if (id == ego || e.kind == world::EntityKind::kRsu) continue;
    if (auto t = ttc_2d(it->second, e, horizon, d_col); t && (!best || *t < *best)) best = t;
  }
  return best;
}

double hazard_fraction(const std::vector<std::optional<double>>& tick_min_ttc, double threshold) {
  if (tick_min_ttc.empty()) throw Error(ErrorCode::kNoData, "no ticks to evaluate");
  std::size_t hazardous = 0;
  for (const auto& t : tick_min_ttc) {
    if (t && *t < threshold) ++hazardous;
  }
  return static_cast<double>(hazardous) / static_cast<double>(tick_min_ttc.size());
}

namespace {
constexpr std::pair<ManeuverKind, const char*> kKinds[] = {
    {ManeuverKind::kAggressiveOvertake, "aggressive_overtake"},
    {ManeuverKind::kLaneStraddle, "lane_straddle"},
    {ManeuverKind::kContinuousLaneChange, "continuous_lane_change"},
    {ManeuverKind::kEmergencyBrake, "emergency_brake"},
    {ManeuverKind::kRushConflict, "rush_conflict"},
    {ManeuverKind::kMergeSqueeze, "merge_squeeze"},
};
constexpr std::pair<ScenarioClass, const char*> kClasses[] = {
    {ScenarioClass::kStraight, "straight"},
    {ScenarioClass::kMerge, "merge"},
    {ScenarioClass::kIntersection, "intersection"},
};
}  // namespace

std::string to_string(ManeuverKind k) {
  for (const auto& [v, n] : kKinds) {
    if (v == k) return n;
  }
  return "?";
}

ManeuverKind maneuver_from_string(const std::string& s) {
  for (const auto& [v, n] : kKinds) {
    if (s == n) return v;
  }
  throw Error(ErrorCode::kSchema, "unknown maneuver '" + s + "'");
}

std::string to_string(ScenarioClass c) {
  for (const auto& [v, n] : kClasses) {
    if (v == c) return n;
  }
  return "?";
}

ScenarioClass scenario_class_from_string(const std::string& s) {
  for (const auto& [v, n] : kClasses) {
    if (s == n) return v;
  }
  throw Error(ErrorCode::kSchema, "unknown scenario class '" + s + "'");
}

AdversarialState update_intensity(const AdversarialState& s, double ttc_min_window, const Thresholds& th) {
  AdversarialState out = s;
  if (ttc_min_window > th.t_safe) {
    out.intensity += th.step_up;
  } else if (ttc_min_window < th.t_crit) {
    out.intensity -= th.step_down;
  }
  out.intensity = std::clamp(out.intensity, 0.0, 1.0);
  return out;
}

std::vector<std::pair<ManeuverKind, double>> maneuver_weights(ScenarioClass cls, double i) {
  i = std::clamp(i, 0.0, 1.0);
  switch (cls) {
    case ScenarioClass::kStraight:
      return {{ManeuverKind::kAggressiveOvertake, 1.0},
              {ManeuverKind::kLaneStraddle, 0.5 + 0.5 * i},
              {ManeuverKind::kContinuousLaneChange, 0.3 + 0.5 * i},
              {ManeuverKind::kEmergencyBrake, i}};
    case ScenarioClass::kMerge:
      return {{ManeuverKind::kAggressiveOvertake, 1.0 - i},
              {ManeuverKind::kLaneStraddle, 0.5 * (1.0 - i)},
              {ManeuverKind::kEmergencyBrake, 0.5 * i * (1.0 - i)},
              {ManeuverKind::kMergeSqueeze, i}};
    case ScenarioClass::kIntersection:
      return {{ManeuverKind::kRushConflict, 0.3 + 0.7 * i}, {ManeuverKind::kEmergencyBrake, 0.6 * i}};
  }
  return {};
}

Maneuver make_maneuver(ManeuverKind kind, double i, const EntityState& target, double now) {
  i = std::clamp(i, 0.0, 1.0);
  Maneuver m;
  m.kind = kind;
  m.started = now;
  switch (kind) {
    case ManeuverKind::kEmergencyBrake:
      m.duration = 8.0;
      m.params = {{"decel", 3.0 + 5.0 * i}, {"brake_time", 1.5 + 1.5 * i}, {"braking_since", -1.0}};
      break;
    case ManeuverKind::kAggressiveOvertake:
      m.duration = 10.0;
      m.params = {{"cut_gap", 12.0 - 8.0 * i}, {"speed_factor", 1.2 + 0.3 * i}};
      break;
    case ManeuverKind::kLaneStraddle:
      m.duration = 6.0;
      m.params = {{"offset_fraction", 0.3 + 0.3 * i}};
      break;
    case ManeuverKind::kContinuousLaneChange:
      m.duration = 12.0;
      m.params = {{"interval", 5.0 - 1.5 * i}, {"last_change", -1e9}};
      break;
    case ManeuverKind::kRushConflict:
      m.duration = 10.0;
      m.params = {{"target_speed", std::max(target.speed, 2.5) * (1.0 + i / 3.0)}, {"accel", 1.0 + i}};
      break;
    case ManeuverKind::kMergeSqueeze:
      m.duration = 8.0;
      m.params = {{"accel", std::min(1.0 + 2.0 * i, 3.0)}, {"cut_gap", 6.0 - 4.0 * i}};
      break;
  }
  return m;
}

std::optional<Selection> select_maneuver(double intensity, const SelectionContext& ctx, Rng& rng) {
  const EntityState& vut = ctx.world.entity(ctx.vut);
  std::vector<std::string> eligible;
  for (const auto& [id, e] : ctx.world.entities) {
    if (id == ctx.vut || e.kind != world::EntityKind::kBackground || !e.adversarial_eligible) continue;
    if (e.mode != world::ControlMode::kAuto) continue;
    if (std::hypot(e.pose.x - vut.pose.x, e.pose.y - vut.pose.y) > ctx.range) continue;
    eligible.push_back(id);
  }
  if (eligible.empty()) return std::nullopt;

  const risk::RiskField field = risk::risk_field(ctx.world, ctx.map, ctx.vut);
  std::string target;
  double best = -1.0;
  for (const auto& id : eligible) {  // ids arrive sorted, so ties keep the smaller id
    const double c = field.contribution.at(id);
    if (c > best) {
      best = c;
      target = id;
    }
  }

  const auto weights = maneuver_weights(ctx.cls, intensity);
  double total = 0.0;
  for (const auto& [k, w] : weights) total += w;
  double u = rng.uniform() * total;
  ManeuverKind kind = weights.front().first;
  for (const auto& [k, w] : weights) {
    if (w <= 0.0) continue;
    kind = k;
    if (u < w) break;
    u -= w;
  }
  return Selection{target, make_maneuver(kind, intensity, ctx.world.entity(target), ctx.world.sim_time())};
}

namespace {

world::LaneIntent side_toward(const world::ScenarioMap& map, const EntityState& self, const std::string& lane) {
  if (self.lane.empty() || lane.empty()) return world::LaneIntent::kKeep;
  const world::Lane& own = map.lane(self.lane);
  if (own.left == lane) return world::LaneIntent::kLeft;
  if (own.right == lane) return world::LaneIntent::kRight;
  return world::LaneIntent::kKeep;
}

// Distance of `self` ahead of `vut` along the VUT's heading.
double ahead_of(const EntityState& self, const EntityState& vut) {
  return (self.pose.x - vut.pose.x) * std::cos(vut.pose.heading) +
         (self.pose.y - vut.pose.y) * std::sin(vut.pose.heading);
}

}  // namespace

world::Control execute(Maneuver& m, const EntityState& self, const EntityState& vut, const traffic::Surroundings& env,
                       double intensity, double now) {
  (void)intensity;
  world::Control c;
  if (self.lane.empty()) return c;
  traffic::DriverConfig cfg;
  cfg.allow_lane_change = false;
  const double dl = ahead_of(self, vut);
  const world::LaneIntent toward = side_toward(env.map, self, vut.lane);

  switch (m.kind) {
    case ManeuverKind::kEmergencyBrake: {
      double& since = m.params["braking_since"];
      if (since < 0.0 && self.lane == vut.lane && dl > 0.0 && dl < 40.0) since = now;
      if (since >= 0.0 && now - since < m.params["brake_time"]) {
        c.accel = -m.params["decel"];
      } else {
        c.accel = traffic::drive_accel(self, env, cfg);
      }
      break;
    }
    case ManeuverKind::kAggressiveOvertake: {
      cfg.idm.v0 = traffic::kFreeRoad;  // let speed_factor set the pace
      cfg.speed_factor = m.params["speed_factor"];
      cfg.idm.T = 0.8;
      c.accel = traffic::drive_accel(self, env, cfg);
      if (toward != world::LaneIntent::kKeep && !self.changing_lane() && dl > self.length + m.params["cut_gap"]) {
        c.intent = toward;
      }
      break;
    }
    case ManeuverKind::kLaneStraddle: {
      c.accel = traffic::drive_accel(self, env, cfg);
      if (toward != world::LaneIntent::kKeep && !self.changing_lane()) {
        const double w = env.map.lane(self.lane).width;
        c.straddle = (toward == world::LaneIntent::kLeft ? 1.0 : -1.0) * m.params["offset_fraction"] * w;
      }
      break;
    }
    case ManeuverKind::kContinuousLaneChange: {
      c.accel = traffic::drive_accel(self, env, cfg);
      double& last = m.params["last_change"];
      if (!self.changing_lane() && now - last >= m.params["interval"]) {
        world::LaneIntent pick = toward;
        if (pick == world::LaneIntent::kKeep) {
          const world::Lane& own = env.map.lane(self.lane);
          auto usable = [&](const std::string& id) { return !id.empty() && !env.map.lane(id).dead_end; };
          if (usable(own.left)) {
            pick = world::LaneIntent::kLeft;
          } else if (usable(own.right)) {
            pick = world::LaneIntent::kRight;
          }
        }
        if (pick != world::LaneIntent::kKeep) {
          c.intent = pick;
          last = now;
        }
      }
      break;
    }
    case ManeuverKind::kRushConflict: {
      cfg.ignore_conflicts = true;
      cfg.speed_cap = m.params["target_speed"];
      cfg.idm.v0 = m.params["target_speed"];
      cfg.idm.a_max = m.params["accel"];
      c.accel = traffic::drive_accel(self, env, cfg);
      break;
    }
    case ManeuverKind::kMergeSqueeze: {
      cfg.idm.a_max = m.params["accel"];
      cfg.idm.v0 = traffic::kFreeRoad;
      cfg.speed_factor = 1.3;
      cfg.speed_cap = vut.speed + 3.0;
      c.accel = traffic::drive_accel(self, env, cfg);
      if (toward != world::LaneIntent::kKeep && !self.changing_lane() &&
          dl > 0.5 * (self.length + vut.length) + m.params["cut_gap"]) {
        c.intent = toward;
      }
      break;
    }
  }
  return c;
}

void to_json(json& j, const AdversaryConfig& c) {
  j = json{{"enabled", c.enabled},
           {"class", to_string(c.cls)},
           {"t_safe", c.thresholds.t_safe},
           {"t_crit", c.thresholds.t_crit},
           {"window", c.thresholds.window},
           {"step_up", c.thresholds.step_up},
           {"step_down", c.thresholds.step_down},
           {"initial_intensity", c.initial_intensity},
           {"max_active", c.max_active},
           {"select_interval", c.select_interval},
           {"range", c.range},
           {"ttc_horizon", c.ttc_horizon},
           {"d_col", c.d_col}};
}

void from_json(const json& j, AdversaryConfig& c) {
  const AdversaryConfig d;
  c.enabled = j.value("enabled", d.enabled);
  c.cls = scenario_class_from_string(j.value("class", to_string(d.cls)));
  c.thresholds.t_safe = j.value("t_safe", d.thresholds.t_safe);
  c.thresholds.t_crit = j.value("t_crit", d.thresholds.t_crit);
  c.thresholds.window = j.value("window", d.thresholds.window);
  c.thresholds.step_up = j.value("step_up", d.thresholds.step_up);
  c.thresholds.step_down = j.value("step_down", d.thresholds.step_down);
  c.initial_intensity = j.value("initial_intensity", d.initial_intensity);
  c.max_active = j.value("max_active", d.max_active);
  c.select_interval = j.value("select_interval", d.select_interval);
  c.range = j.value("range", d.range);
  c.ttc_horizon = j.value("ttc_horizon", d.ttc_horizon);
  c.d_col = j.value("d_col", d.d_col);
  if (!(c.initial_intensity >= 0.0 && c.initial_intensity <= 1.0)) {
    throw Error(ErrorCode::kConfig, "initial_intensity must be in [0, 1]");
  }
  if (c.thresholds.window == 0) throw Error(ErrorCode::kConfig, "adversary window must be >= 1 tick");
}

Adversary::Adversary(AdversaryConfig cfg, std::string vut) : cfg_(std::move(cfg)), vut_(std::move(vut)) {
  state_.intensity = cfg_.initial_intensity;
}

void Adversary::set_intensity(double v) { state_.intensity = std::clamp(v, 0.0, 1.0); }

world::Controls Adversary::step(world::WorldState& world, const world::ScenarioMap& map,
                                const traffic::LaneIndex& index, Rng& rng) {
  world::Controls out;
  if (!cfg_.enabled || !world.has(vut_)) return out;
  const double now = world.sim_time();

  state_.window.push_back(min_ttc(world.entities, vut_, cfg_.ttc_horizon, cfg_.d_col).value_or(kInf));
  if (state_.window.size() >= cfg_.thresholds.window) {
    const double lowest = *std::min_element(state_.window.begin(), state_.window.end());
    state_ = update_intensity(state_, lowest, cfg_.thresholds);
    state_.window.clear();
  }

  for (auto it = state_.active.begin(); it != state_.active.end();) {
    const bool gone = !world.has(it->first);
    if (gone || now - it->second.started >= it->second.duration) {
      if (!gone) world.entity(it->first).mode = world::ControlMode::kAuto;
      it = state_.active.erase(it);
    } else {
      ++it;
    }
  }

  if (state_.active.size() < cfg_.max_active && now - last_selection_ >= cfg_.select_interval) {
    last_selection_ = now;
    const SelectionContext ctx{world, map, vut_, cfg_.cls, cfg_.range};
    if (auto sel = select_maneuver(state_.intensity, ctx, rng)) {
      world.entity(sel->target).mode = world::ControlMode::kAdversarial;
      state_.active[sel->target] = sel->maneuver;
    }
  }

  const traffic::Surroundings env{map, index, world.signal_state};
  const EntityState& vut = world.entity(vut_);
  for (auto& [id, m] : state_.active) {
    out[id] = execute(m, world.entity(id), vut, env, state_.intensity, now);
  }
  return out;
}

json Adversary::to_json() const {
  json window = json::array();
  for (double v : state_.window) window.push_back(std::isfinite(v) ? json(v) : json(nullptr));
  json active = json::object();
  for (const auto& [id, m] : state_.active) {
    active[id] = {{"kind", adversary::to_string(m.kind)},
                  {"duration", m.duration},
                  {"started", m.started},
                  {"params", m.params}};
  }
  return {{"intensity", state_.intensity}, {"window", window}, {"active", active},
          {"last_selection", last_selection_}};
}

void Adversary::restore(const json& j) {
  state_.intensity = j.at("intensity").get<double>();
  state_.window.clear();
  for (const auto& v : j.at("window")) state_.window.push_back(v.is_null() ? kInf : v.get<double>());
  state_.active.clear();
  for (const auto& [id, mj] : j.at("active").items()) {
    Maneuver m;
    m.kind = maneuver_from_string(mj.at("kind").get<std::string>());
    m.duration = mj.at("duration").get<double>();
    m.started = mj.at("started").get<double>();
    m.params = mj.at("params").get<std::map<std::string, double>>();
    state_.active[id] = m;
  }
  last_selection_ = j.at("last_selection").get<double>();
}

}  // namespace vpat::adversary
