#include "vpat/world.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

namespace vpat::world {

using nlohmann::json;

double normalize_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

namespace {

template <typename E, std::size_t N>
E enum_from(std::string_view s, const std::array<std::pair<E, const char*>, N>& table,
            const char* what) {
  for (const auto& [value, name] : table) {
    if (s == name) return value;
  }
  throw Error(ErrorCode::kSchema, std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <typename E, std::size_t N>
std::string enum_name(E e, const std::array<std::pair<E, const char*>, N>& table) {
  for (const auto& [value, name] : table) {
    if (value == e) return name;
  }
  return "?";
}

constexpr std::array<std::pair<EntityKind, const char*>, 8> kKinds{{
    {EntityKind::kPhysicalCav, "physical_cav"},
    {EntityKind::kCloudControlled, "cloud_controlled"},
    {EntityKind::kHdvTwin, "hdv_twin"},
    {EntityKind::kPedestrian, "pedestrian"},
    {EntityKind::kRsu, "rsu"},
    {EntityKind::kVirtualCav, "virtual_cav"},
    {EntityKind::kRemoteHdv, "remote_hdv"},
    {EntityKind::kBackground, "background"},
}};

constexpr std::array<std::pair<ControlMode, const char*>, 4> kModes{{
    {ControlMode::kAuto, "auto"},
    {ControlMode::kManual, "manual"},
    {ControlMode::kAdversarial, "adversarial"},
    {ControlMode::kScripted, "scripted"},
}};

constexpr std::array<std::pair<LaneIntent, const char*>, 3> kIntents{{
    {LaneIntent::kKeep, "keep"},
    {LaneIntent::kLeft, "left"},
    {LaneIntent::kRight, "right"},
}};

constexpr std::array<std::pair<Phase, const char*>, 3> kPhases{{
    {Phase::kGreen, "green"},
    {Phase::kYellow, "yellow"},
    {Phase::kRed, "red"},
}};

constexpr std::array<std::pair<ClockMode, const char*>, 3> kClockModes{{
    {ClockMode::kNtp, "ntp"},
    {ClockMode::kPtp, "ptp"},
    {ClockMode::kGnss, "gnss"},
}};

}  // namespace

std::string to_string(EntityKind kind) { return enum_name(kind, kKinds); }
std::string to_string(ControlMode mode) { return enum_name(mode, kModes); }
std::string to_string(LaneIntent intent) { return enum_name(intent, kIntents); }
std::string to_string(Phase phase) { return enum_name(phase, kPhases); }
std::string to_string(ClockMode mode) { return enum_name(mode, kClockModes); }
EntityKind kind_from_string(std::string_view s) { return enum_from(s, kKinds, "entity kind"); }
ControlMode mode_from_string(std::string_view s) { return enum_from(s, kModes, "control mode"); }
LaneIntent intent_from_string(std::string_view s) { return enum_from(s, kIntents, "lane intent"); }
Phase phase_from_string(std::string_view s) { return enum_from(s, kPhases, "phase"); }
ClockMode clock_mode_from_string(std::string_view s) {
  return enum_from(s, kClockModes, "clock mode");
}

bool is_physical(EntityKind kind) {
  switch (kind) {
    case EntityKind::kPhysicalCav:
    case EntityKind::kCloudControlled:
    case EntityKind::kHdvTwin:
    case EntityKind::kPedestrian:
    case EntityKind::kRsu:
      return true;
    default:
      return false;
  }
}

bool has_obu(EntityKind kind) {
  return kind == EntityKind::kPhysicalCav || kind == EntityKind::kCloudControlled ||
         kind == EntityKind::kVirtualCav || kind == EntityKind::kRsu;
}

bool is_vehicle(EntityKind kind) {
  return kind != EntityKind::kPedestrian && kind != EntityKind::kRsu;
}

Vec2 EntityState::velocity() const {
  return {speed * std::cos(pose.heading), speed * std::sin(pose.heading)};
}

// ---------------------------------------------------------------------------
// Lane geometry

void Lane::finalize() {
  cumulative_.assign(points.size(), 0.0);
  for (std::size_t i = 1; i < points.size(); ++i) {
    cumulative_[i] = cumulative_[i - 1] + std::hypot(points[i].x - points[i - 1].x,
                                                     points[i].y - points[i - 1].y);
  }
}

std::size_t Lane::segment_for(double s) const {
  // Index of the segment [i, i+1] holding s; the first and last segments
  // extend to infinity so positions off either end extrapolate linearly.
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t i = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  return std::min(i, points.size() - 2);
}

Vec2 Lane::point_at(double s) const {
  const std::size_t i = segment_for(s);
  const double seg = cumulative_[i + 1] - cumulative_[i];
  const double t = seg > 0.0 ? (s - cumulative_[i]) / seg : 0.0;
  return {points[i].x + t * (points[i + 1].x - points[i].x),
          points[i].y + t * (points[i + 1].y - points[i].y)};
}

double Lane::heading_at(double s) const {
  const std::size_t i = segment_for(s);
  return std::atan2(points[i + 1].y - points[i].y, points[i + 1].x - points[i].x);
}

Pose Lane::pose_at(double s, double offset) const {
  const Vec2 c = point_at(s);
  const double h = heading_at(s);
  return {c.x - offset * std::sin(h), c.y + offset * std::cos(h), normalize_angle(h)};
}

Lane::Projection Lane::project(Vec2 p) const {
  Projection best;
  double best_d2 = INFINITY;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const double dx = points[i + 1].x - points[i].x;
    const double dy = points[i + 1].y - points[i].y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((p.x - points[i].x) * dx + (p.y - points[i].y) * dy) / len2 : 0.0;
    if (i > 0) t = std::max(t, 0.0);
    if (i + 2 < points.size()) t = std::min(t, 1.0);
    const double qx = points[i].x + t * dx;
    const double qy = points[i].y + t * dy;
    const double d2 = (p.x - qx) * (p.x - qx) + (p.y - qy) * (p.y - qy);
    if (d2 < best_d2) {
      best_d2 = d2;
      const double len = std::sqrt(len2);
      best.s = cumulative_[i] + t * len;
      const double cross = len > 0.0 ? (dx * (p.y - points[i].y) - dy * (p.x - points[i].x)) / len : 0.0;
      best.lateral = cross;
    }
  }
  return best;
}

const Lane& ScenarioMap::lane(const std::string& id) const {
  auto it = lanes.find(id);
  if (it == lanes.end()) throw Error(ErrorCode::kDanglingReference, "lane '" + id + "'");
  return it->second;
}

// ---------------------------------------------------------------------------
// Map document

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw Error(ErrorCode::kSchema, where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, where + "." + key + ": " + e.what());
  }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return field<T>(j, key, where);
}

}  // namespace

ScenarioMap parse_map(const json& doc) {
  ScenarioMap m;
  m.version = field<int>(doc, "version", "map");
  if (m.version != 1) throw Error(ErrorCode::kSchema, "map: unsupported version");
  m.name = field_or<std::string>(doc, "name", "", "map");
  const json lanes = field<json>(doc, "lanes", "map");
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const std::string where = "map.lanes[" + std::to_string(i) + "]";
    const json& lj = lanes[i];
    Lane lane;
    lane.id = field<std::string>(lj, "id", where);
    for (const auto& p : field<json>(lj, "points", where)) {
      if (!p.is_array() || p.size() != 2) throw Error(ErrorCode::kSchema, where + ".points: expected [x, y]");
      lane.points.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    if (lane.points.size() < 2) throw Error(ErrorCode::kSchema, where + ": lane needs at least 2 points");
    lane.width = field_or<double>(lj, "width", 3.5, where);
    lane.speed_limit = field<double>(lj, "speed_limit", where);
    if (!(lane.speed_limit > 0.0)) throw Error(ErrorCode::kSchema, where + ".speed_limit must be > 0");
    if (!(lane.width > 0.0)) throw Error(ErrorCode::kSchema, where + ".width must be > 0");
    lane.left = field_or<std::string>(lj, "left", "", where);
    lane.right = field_or<std::string>(lj, "right", "", where);
    lane.next = field_or<std::vector<std::string>>(lj, "next", {}, where);
    lane.dead_end = field_or<bool>(lj, "dead_end", false, where);
    lane.finalize();
    if (!m.lanes.emplace(lane.id, lane).second) {
      throw Error(ErrorCode::kSchema, where + ": duplicate lane id '" + lane.id + "'");
    }
  }
  auto check = [&](const std::string& ref, const std::string& where) {
    if (!ref.empty() && !m.has_lane(ref)) {
      throw Error(ErrorCode::kDanglingReference, where + " references missing lane '" + ref + "'");
    }
  };
  for (const auto& [id, lane] : m.lanes) {
    check(lane.left, "lane " + id + ".left");
    check(lane.right, "lane " + id + ".right");
    for (const auto& n : lane.next) check(n, "lane " + id + ".next");
  }
  const json cps = field_or<json>(doc, "conflict_points", json::array(), "map");
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const std::string where = "map.conflict_points[" + std::to_string(i) + "]";
    ConflictPoint cp;
    cp.id = field<std::string>(cps[i], "id", where);
    cp.lane_a = field<std::string>(cps[i], "lane_a", where);
    cp.s_a = field<double>(cps[i], "s_a", where);
    cp.lane_b = field<std::string>(cps[i], "lane_b", where);
    cp.s_b = field<double>(cps[i], "s_b", where);
    cp.radius = field_or<double>(cps[i], "radius", 2.5, where);
    cp.priority = field_or<std::string>(cps[i], "priority", "", where);
    cp.occluded = field_or<bool>(cps[i], "occluded", false, where);
    if (!cp.priority.empty() && cp.priority != "a" && cp.priority != "b") {
      throw Error(ErrorCode::kSchema, where + ".priority must be \"a\", \"b\" or absent");
    }
    check(cp.lane_a, where + ".lane_a");
    check(cp.lane_b, where + ".lane_b");
    m.conflict_points.push_back(cp);
  }
  const json sigs = field_or<json>(doc, "signals", json::array(), "map");
  for (std::size_t i = 0; i < sigs.size(); ++i) {
    const std::string where = "map.signals[" + std::to_string(i) + "]";
    SignalHead h;
    h.signal = field<std::string>(sigs[i], "signal", where);
    h.lane = field<std::string>(sigs[i], "lane", where);
    h.s = field<double>(sigs[i], "s", where);
    h.approach = field_or<std::size_t>(sigs[i], "approach", 0, where);
    check(h.lane, where + ".lane");
    m.signals.push_back(h);
  }
  return m;
}

ScenarioMap load_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open map file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSchema, path + ": " + e.what());
  }
  return parse_map(doc);
}

json map_to_json(const ScenarioMap& m) {
  json lanes = json::array();
  for (const auto& [id, l] : m.lanes) {
    json pts = json::array();
    for (const auto& p : l.points) pts.push_back({p.x, p.y});
    json lj{{"id", id}, {"points", pts}, {"width", l.width}, {"speed_limit", l.speed_limit},
            {"next", l.next}};
    if (!l.left.empty()) lj["left"] = l.left;
    if (!l.right.empty()) lj["right"] = l.right;
    if (l.dead_end) lj["dead_end"] = true;
    lanes.push_back(lj);
  }
  json cps = json::array();
  for (const auto& c : m.conflict_points) {
    json cj{{"id", c.id}, {"lane_a", c.lane_a}, {"s_a", c.s_a}, {"lane_b", c.lane_b},
            {"s_b", c.s_b}, {"radius", c.radius}, {"occluded", c.occluded}};
    if (!c.priority.empty()) cj["priority"] = c.priority;
    cps.push_back(cj);
  }
  json sigs = json::array();
  for (const auto& s : m.signals) {
    sigs.push_back({{"signal", s.signal}, {"lane", s.lane}, {"s", s.s}, {"approach", s.approach}});
  }
  return {{"version", m.version}, {"name", m.name}, {"lanes", lanes},
          {"conflict_points", cps}, {"signals", sigs}};
}

// ---------------------------------------------------------------------------
// Clocks

ClockModel ClockModel::for_mode(ClockMode mode) {
  switch (mode) {
    case ClockMode::kNtp: return {mode, 1e-2, 0.0};
    case ClockMode::kPtp: return {mode, 5e-8, 0.0};
    case ClockMode::kGnss: return {mode, 1e-8, 0.0};
  }
  return {};
}

double sample_clock_offset(ClockModel& model, Rng& rng) {
  model.node_offset = model.offset_bound * (2.0 * rng.uniform() - 1.0);
  return model.node_offset;
}

// ---------------------------------------------------------------------------
// World

const EntityState& WorldState::entity(const std::string& id) const {
  auto it = entities.find(id);
  if (it == entities.end()) throw Error(ErrorCode::kRejectedControl, "unknown entity '" + id + "'");
  return it->second;
}

EntityState& WorldState::entity(const std::string& id) {
  auto it = entities.find(id);
  if (it == entities.end()) throw Error(ErrorCode::kRejectedControl, "unknown entity '" + id + "'");
  return it->second;
}

void place(EntityState& e, const ScenarioMap& map) {
  if (e.lane.empty()) {
    e.pose.heading = normalize_angle(e.pose.heading);
    return;
  }
  if (e.route.empty()) e.route.push_back(e.lane);
  const Lane& lane = map.lane(e.lane);
  e.pose = lane.pose_at(e.s, e.offset);
}

namespace {

void move_along_route(EntityState& e, const ScenarioMap& map) {
  while (!e.route_complete) {
    const Lane& lane = map.lane(e.lane);
    if (e.s <= lane.length()) break;
    if (e.route_index + 1 >= e.route.size() || lane.dead_end) {
      e.route_complete = !lane.dead_end;
      break;
    }
    std::string nxt = e.route[e.route_index + 1];
    if (!lane.next.empty() && std::find(lane.next.begin(), lane.next.end(), nxt) == lane.next.end()) {
      // A lane change moved us off the planned lane; follow the physical successor.
      nxt = lane.next.front();
      e.route[e.route_index + 1] = nxt;
    }
    e.s -= lane.length();
    e.lane = nxt;
    ++e.route_index;
  }
}

void begin_lane_change(EntityState& e, const ScenarioMap& map, LaneIntent intent) {
  if (e.lane.empty() || intent == LaneIntent::kKeep || e.changing_lane()) return;
  const Lane& lane = map.lane(e.lane);
  const std::string& target = intent == LaneIntent::kLeft ? lane.left : lane.right;
  if (target.empty()) return;
  const Lane& to = map.lane(target);
  const auto proj = to.project({e.pose.x, e.pose.y});
  e.lane = target;
  e.s = proj.s;
  e.offset = proj.lateral;
  e.straddle = 0.0;
  e.lc_rate = std::abs(e.offset) / kLaneChangeDuration;
  if (e.route_index < e.route.size()) e.route[e.route_index] = target;
}

void blend_lateral(EntityState& e, double dt) {
  constexpr double kStraddleRate = 1.0;  // m/s toward the held offset
  if (e.straddle != 0.0) {
    const double step = kStraddleRate * dt;
    const double diff = e.straddle - e.offset;
    e.offset = std::abs(diff) <= step ? e.straddle : e.offset + std::copysign(step, diff);
    return;
  }
  if (e.lc_rate == 0.0 && e.offset != 0.0) e.lc_rate = std::abs(e.offset) / kLaneChangeDuration;
  if (e.lc_rate > 0.0) {
    const double step = e.lc_rate * dt;
    if (std::abs(e.offset) <= step + 1e-12) {
      e.offset = 0.0;
      e.lc_rate = 0.0;
    } else {
      e.offset -= std::copysign(step, e.offset);
    }
  }
}

}  // namespace

WorldState advance_tick(const WorldState& world, const ScenarioMap& map, const Controls& controls,
                        double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::kConfig, "dt must be positive");
  for (const auto& [id, c] : controls) {
    if (!world.has(id)) throw Error(ErrorCode::kRejectedControl, "control for unknown entity '" + id + "'");
  }
  WorldState next = world;
  for (auto& [id, e] : next.entities) {
    LaneIntent intent = LaneIntent::kKeep;
    if (auto it = controls.find(id); it != controls.end()) {
      e.accel = it->second.accel;
      intent = it->second.intent;
      if (it->second.straddle != e.straddle) {
        e.straddle = it->second.straddle;
        if (e.straddle != 0.0) e.lc_rate = 0.0;
      }
    }
    begin_lane_change(e, map, intent);

    const double v0 = e.speed;
    const double a = e.accel;
    double ds;
    if (v0 + a * dt < 0.0) {
      const double t_stop = a < 0.0 ? v0 / -a : 0.0;
      ds = v0 * t_stop + 0.5 * a * t_stop * t_stop;
      e.speed = 0.0;
    } else {
      ds = v0 * dt + 0.5 * a * dt * dt;
      e.speed = v0 + a * dt;
    }

    if (e.lane.empty()) {
      e.pose.x += ds * std::cos(e.pose.heading);
      e.pose.y += ds * std::sin(e.pose.heading);
    } else {
      e.s += ds;
      blend_lateral(e, dt);
      move_along_route(e, map);
      e.pose = map.lane(e.lane).pose_at(e.s, e.offset);
    }
  }
  ++next.tick;
  next.dt = dt;
  return next;
}

bool overlaps(const EntityState& a, const EntityState& b) {
  const double ax = std::cos(a.pose.heading), ay = std::sin(a.pose.heading);
  const double bx = std::cos(b.pose.heading), by = std::sin(b.pose.heading);
  const std::array<Vec2, 4> axes{{{ax, ay}, {-ay, ax}, {bx, by}, {-by, bx}}};
  const double dx = b.pose.x - a.pose.x, dy = b.pose.y - a.pose.y;
  auto radius = [](const EntityState& e, double ux, double uy, Vec2 axis) {
    const double along = std::abs(ux * axis.x + uy * axis.y);
    const double across = std::abs(-uy * axis.x + ux * axis.y);
    return 0.5 * e.length * along + 0.5 * e.width * across;
  };
  for (const auto& axis : axes) {
    const double dist = std::abs(dx * axis.x + dy * axis.y);
    if (dist > radius(a, ax, ay, axis) + radius(b, bx, by, axis)) return false;
  }
  return true;
}

EntityState twin_update(const Observation& obs, const WorldState& registry, Rng& rng,
                        double noise_bound) {
  auto it = registry.entities.find(obs.id);
  if (it == registry.entities.end()) throw Error(ErrorCode::kTwinMiss, "'" + obs.id + "' is not registered");
  if (it->second.kind != EntityKind::kHdvTwin) {
    throw Error(ErrorCode::kTwinMiss, "'" + obs.id + "' is a " + to_string(it->second.kind) + ", not hdv_twin");
  }
  EntityState twin = it->second;
  const double r = noise_bound * std::sqrt(rng.uniform());
  const double theta = 2.0 * std::numbers::pi * rng.uniform();
  twin.pose = obs.pose;
  twin.pose.x += r * std::cos(theta);
  twin.pose.y += r * std::sin(theta);
  twin.speed = obs.speed;
  return twin;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const Pose& p) { j = json{{"x", p.x}, {"y", p.y}, {"heading", p.heading}}; }

void from_json(const json& j, Pose& p) {
  p.x = j.at("x").get<double>();
  p.y = j.at("y").get<double>();
  p.heading = j.at("heading").get<double>();
}

void to_json(json& j, const EntityState& e) {
  j = json{{"id", e.id},
           {"kind", to_string(e.kind)},
           {"x", e.pose.x},
           {"y", e.pose.y},
           {"heading", e.pose.heading},
           {"speed", e.speed},
           {"accel", e.accel},
           {"lane", e.lane},
           {"s", e.s},
           {"offset", e.offset},
           {"lc_rate", e.lc_rate},
           {"straddle", e.straddle},
           {"mode", to_string(e.mode)},
           {"length", e.length},
           {"width", e.width},
           {"route", e.route},
           {"route_index", e.route_index},
           {"route_complete", e.route_complete},
           {"eligible", e.adversarial_eligible}};
}

void from_json(const json& j, EntityState& e) {
  e.id = j.at("id").get<std::string>();
  e.kind = kind_from_string(j.at("kind").get<std::string>());
  e.pose = {j.at("x").get<double>(), j.at("y").get<double>(), j.at("heading").get<double>()};
  e.speed = j.at("speed").get<double>();
  e.accel = j.at("accel").get<double>();
  e.lane = j.at("lane").get<std::string>();
  e.s = j.at("s").get<double>();
  e.offset = j.at("offset").get<double>();
  e.lc_rate = j.value("lc_rate", 0.0);
  e.straddle = j.value("straddle", 0.0);
  e.mode = mode_from_string(j.at("mode").get<std::string>());
  e.length = j.at("length").get<double>();
  e.width = j.at("width").get<double>();
  e.route = j.value("route", std::vector<std::string>{});
  e.route_index = j.value("route_index", std::size_t{0});
  e.route_complete = j.value("route_complete", false);
  e.adversarial_eligible = j.value("eligible", false);
}

json world_to_json(const WorldState& w) {
  json ents = json::array();
  for (const auto& [id, e] : w.entities) ents.push_back(e);
  json sig = json::object();
  for (const auto& [id, phases] : w.signal_state) {
    json arr = json::array();
    for (auto p : phases) arr.push_back(to_string(p));
    sig[id] = arr;
  }
  return {{"tick", w.tick}, {"dt", w.dt}, {"entities", ents}, {"signals", sig},
          {"rng", w.rng.state()}};
}

WorldState world_from_json(const json& j) {
  WorldState w;
  w.tick = j.at("tick").get<std::int64_t>();
  w.dt = j.at("dt").get<double>();
  for (const auto& ej : j.at("entities")) {
    EntityState e = ej.get<EntityState>();
    w.entities.emplace(e.id, e);
  }
  for (const auto& [id, arr] : j.at("signals").items()) {
    std::vector<Phase> phases;
    for (const auto& p : arr) phases.push_back(phase_from_string(p.get<std::string>()));
    w.signal_state[id] = phases;
  }
  w.rng.restore(j.at("rng").get<std::string>());
  return w;
}

}  // namespace vpat::world
