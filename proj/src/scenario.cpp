#include "vpat/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "vpat/runlog.hpp"

namespace vpat::harness {

using nlohmann::json;

std::string to_string(ControlSource c) {
  switch (c) {
    case ControlSource::kInternalBaseline: return "internal-baseline";
    case ControlSource::kAutEndpoint: return "aut-endpoint";
    case ControlSource::kConsole: return "console";
    case ControlSource::kScripted: return "scripted";
  }
  return "?";
}

ControlSource control_source_from_string(const std::string& s) {
  if (s == "internal-baseline") return ControlSource::kInternalBaseline;
  if (s == "aut-endpoint") return ControlSource::kAutEndpoint;
  if (s == "console") return ControlSource::kConsole;
  if (s == "scripted") return ControlSource::kScripted;
  throw Error(ErrorCode::kSchema, "unknown control source '" + s + "'");
}

std::string to_string(EventType t) {
  switch (t) {
    case EventType::kTakeover: return "takeover";
    case EventType::kRelease: return "release";
    case EventType::kSetIntensity: return "set_intensity";
    case EventType::kSignal: return "signal";
  }
  return "?";
}

EventType event_type_from_string(const std::string& s) {
  if (s == "takeover") return EventType::kTakeover;
  if (s == "release") return EventType::kRelease;
  if (s == "set_intensity") return EventType::kSetIntensity;
  if (s == "signal") return EventType::kSignal;
  throw Error(ErrorCode::kSchema, "unknown event type '" + s + "'");
}

std::vector<std::string> ScenarioSpec::vuts() const {
  std::vector<std::string> out;
  for (const auto& r : roster) {
    if (r.vut) out.push_back(r.initial.id);
  }
  return out;
}

const RosterEntry* ScenarioSpec::find(const std::string& id) const {
  for (const auto& r : roster) {
    if (r.initial.id == id) return &r;
  }
  return nullptr;
}

const RosterEntry& ScenarioSpec::entry(const std::string& id) const {
  const RosterEntry* r = find(id);
  if (!r) throw Error(ErrorCode::kDanglingReference, "no roster entry '" + id + "'");
  return *r;
}

const AdapterSpec& ScenarioSpec::adapter(const std::string& id) const {
  for (const auto& a : adapters) {
    if (a.id == id) return a;
  }
  throw Error(ErrorCode::kDanglingReference, "no adapter '" + id + "'");
}

std::int64_t ScenarioSpec::tick_of(double t) const { return std::llround(t / dt); }
std::int64_t ScenarioSpec::duration_ticks() const { return tick_of(duration); }

namespace {

// --- field access with paths -------------------------------------------------

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::kSchema, path + ": " + what);
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      fail(path + "." + k, "unknown field");
    }
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) fail(path + "." + key, "missing required field");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(path + "." + key, "wrong type");
  }
}

template <class T>
T opt(const json& j, const char* key, const T& def, const std::string& path) {
  if (!j.contains(key)) return def;
  return get<T>(j, key, path);
}

// Runs a sub-parser and prefixes its errors with the field path.
template <class F>
auto scoped(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kDanglingReference || e.code() == ErrorCode::kSchema) throw;
    fail(path, e.what());
  } catch (const json::exception& e) {
    fail(path, e.what());
  }
}

std::string idx(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

// --- driver config -----------------------------------------------------------

json driver_to_json(const traffic::DriverConfig& c) {
  json j{{"idm", c.idm},
         {"politeness", c.politeness},
         {"lc_threshold", c.lc_threshold},
         {"safe_decel", c.safe_decel},
         {"lookahead", c.lookahead},
         {"speed_factor", c.speed_factor},
         {"allow_lane_change", c.allow_lane_change},
         {"yield_all_conflicts", c.yield_all_conflicts},
         {"ignore_conflicts", c.ignore_conflicts}};
  if (std::isfinite(c.speed_cap)) j["speed_cap"] = c.speed_cap;
  return j;
}

traffic::DriverConfig driver_from_json(const json& j, traffic::DriverConfig d, const std::string& path) {
  check_keys(j, path, {"idm", "politeness", "lc_threshold", "safe_decel", "lookahead", "speed_factor", "speed_cap",
                       "allow_lane_change", "yield_all_conflicts", "ignore_conflicts"});
  if (j.contains("idm")) {
    d.idm = scoped(path + ".idm", [&] { return j["idm"].get<traffic::IdmParams>(); });
    scoped(path + ".idm", [&] { d.idm.validate(); return 0; });
  }
  d.politeness = opt(j, "politeness", d.politeness, path);
  d.lc_threshold = opt(j, "lc_threshold", d.lc_threshold, path);
  d.safe_decel = opt(j, "safe_decel", d.safe_decel, path);
  d.lookahead = opt(j, "lookahead", d.lookahead, path);
  d.speed_factor = opt(j, "speed_factor", d.speed_factor, path);
  d.speed_cap = opt(j, "speed_cap", d.speed_cap, path);
  d.allow_lane_change = opt(j, "allow_lane_change", d.allow_lane_change, path);
  d.yield_all_conflicts = opt(j, "yield_all_conflicts", d.yield_all_conflicts, path);
  d.ignore_conflicts = opt(j, "ignore_conflicts", d.ignore_conflicts, path);
  if (!(d.speed_factor > 0.0)) fail(path + ".speed_factor", "must be positive");
  return d;
}

traffic::DriverConfig manual_default() {
  traffic::DriverConfig d;
  d.speed_factor = 0.8;
  d.allow_lane_change = false;
  d.yield_all_conflicts = true;
  return d;
}

// --- roster ------------------------------------------------------------------

RosterEntry parse_entry(const json& j, const std::string& path, const world::ScenarioMap& map) {
  check_keys(j, path, {"id", "kind", "lane", "s", "offset", "pose", "speed", "accel", "length", "width", "route",
                       "eligible", "control", "adapter", "vut", "driver", "manual", "script", "v2v", "session",
                       "range"});
  RosterEntry r;
  world::EntityState& e = r.initial;
  e.id = get<std::string>(j, "id", path);
  if (e.id.empty()) fail(path + ".id", "must not be empty");
  if (std::regex_match(e.id, std::regex("bg[0-9]+_.*"))) fail(path + ".id", "ids of the form bg<N>_ are reserved for flows");
  e.kind = scoped(path + ".kind", [&] { return world::kind_from_string(get<std::string>(j, "kind", path)); });
  if (e.kind == world::EntityKind::kBackground) fail(path + ".kind", "background vehicles come from flows");
  e.speed = opt(j, "speed", 0.0, path);
  e.accel = opt(j, "accel", 0.0, path);
  if (!(e.speed >= 0.0) || !std::isfinite(e.speed)) fail(path + ".speed", "must be finite and >= 0");
  const bool vehicle = world::is_vehicle(e.kind);
  e.length = opt(j, "length", vehicle ? 4.8 : (e.kind == world::EntityKind::kPedestrian ? 0.5 : 1.0), path);
  e.width = opt(j, "width", vehicle ? 1.9 : (e.kind == world::EntityKind::kPedestrian ? 0.5 : 1.0), path);
  if (!(e.length > 0.0 && e.width > 0.0)) fail(path, "length and width must be positive");
  e.adversarial_eligible = opt(j, "eligible", false, path);

  if (j.contains("lane")) {
    e.lane = get<std::string>(j, "lane", path);
    if (!map.has_lane(e.lane)) {
      throw Error(ErrorCode::kDanglingReference, path + ".lane: map has no lane '" + e.lane + "'");
    }
    e.s = opt(j, "s", 0.0, path);
    e.offset = opt(j, "offset", 0.0, path);
    e.route = opt(j, "route", std::vector<std::string>{e.lane}, path);
    if (e.route.empty() || e.route.front() != e.lane) fail(path + ".route", "must start with the entry lane");
    for (std::size_t i = 0; i < e.route.size(); ++i) {
      if (!map.has_lane(e.route[i])) {
        throw Error(ErrorCode::kDanglingReference, idx(path + ".route", i) + ": map has no lane '" + e.route[i] + "'");
      }
    }
    if (j.contains("pose")) fail(path + ".pose", "give either a lane or a free pose");
  } else {
    if (vehicle) fail(path + ".lane", "vehicles need a lane");
    e.pose = scoped(path + ".pose", [&] { return get<world::Pose>(j, "pose", path); });
    e.pose.heading = world::normalize_angle(e.pose.heading);
  }
  world::place(e, map);

  r.control = scoped(path + ".control", [&] {
    return control_source_from_string(opt<std::string>(j, "control", vehicle ? "internal-baseline" : "scripted", path));
  });
  if (r.control == ControlSource::kAutEndpoint) {
    r.adapter = get<std::string>(j, "adapter", path);
  } else if (j.contains("adapter")) {
    fail(path + ".adapter", "only aut-endpoint entries name an adapter");
  }
  switch (r.control) {
    case ControlSource::kConsole: e.mode = world::ControlMode::kManual; break;
    case ControlSource::kScripted: e.mode = world::ControlMode::kScripted; break;
    default: e.mode = world::ControlMode::kAuto; break;
  }
  if (!vehicle && r.control != ControlSource::kScripted) {
    fail(path + ".control", "pedestrians and roadside units are scripted");
  }
  r.vut = opt(j, "vut", false, path);
  if (r.vut && !vehicle) fail(path + ".vut", "only vehicles can be under test");
  if (j.contains("driver")) r.driver = driver_from_json(j["driver"], {}, path + ".driver");
  r.manual = j.contains("manual") ? driver_from_json(j["manual"], manual_default(), path + ".manual")
                                  : manual_default();
  if (j.contains("script")) {
    const json& sj = j["script"];
    if (!sj.is_array()) fail(path + ".script", "expected an array");
    for (std::size_t i = 0; i < sj.size(); ++i) {
      const std::string sp = idx(path + ".script", i);
      check_keys(sj[i], sp, {"at", "accel"});
      ScriptStep st{get<double>(sj[i], "at", sp), get<double>(sj[i], "accel", sp)};
      if (!r.script.empty() && !(st.at > r.script.back().at)) fail(sp + ".at", "script times must increase");
      r.script.push_back(st);
    }
  }
  r.v2v = opt(j, "v2v", false, path);
  if (r.v2v && !world::has_obu(e.kind)) fail(path + ".v2v", "entity has no on-board unit");
  r.session = opt<std::string>(j, "session", "", path);
  r.range = opt(j, "range", 1000.0, path);
  return r;
}

json entry_to_json(const RosterEntry& r) {
  const world::EntityState& e = r.initial;
  json j{{"id", e.id}, {"kind", world::to_string(e.kind)}, {"speed", e.speed}, {"accel", e.accel},
         {"length", e.length}, {"width", e.width}, {"control", to_string(r.control)}};
  if (e.lane.empty()) {
    j["pose"] = e.pose;
  } else {
    j["lane"] = e.lane;
    j["s"] = e.s;
    j["offset"] = e.offset;
    j["route"] = e.route;
  }
  if (e.adversarial_eligible) j["eligible"] = true;
  if (!r.adapter.empty()) j["adapter"] = r.adapter;
  if (r.vut) j["vut"] = true;
  if (world::is_vehicle(e.kind)) {
    j["driver"] = driver_to_json(r.driver);
    j["manual"] = driver_to_json(r.manual);
  }
  if (!r.script.empty()) {
    json s = json::array();
    for (const auto& st : r.script) s.push_back({{"at", st.at}, {"accel", st.accel}});
    j["script"] = s;
  }
  if (r.v2v) j["v2v"] = true;
  if (!r.session.empty()) j["session"] = r.session;
  if (e.kind == world::EntityKind::kRsu) j["range"] = r.range;
  return j;
}

AdapterSpec parse_adapter(const json& j, const std::string& path) {
  check_keys(j, path, {"id", "transport", "stub", "host", "port", "deadline_ms"});
  AdapterSpec a;
  a.id = get<std::string>(j, "id", path);
  a.transport = opt<std::string>(j, "transport", a.transport, path);
  if (a.transport == "inproc") {
    a.stub = opt<std::string>(j, "stub", a.stub, path);
  } else if (a.transport == "tcp") {
    a.host = opt<std::string>(j, "host", a.host, path);
    a.port = get<int>(j, "port", path);
    if (a.port <= 0 || a.port > 65535) fail(path + ".port", "out of range");
  } else {
    fail(path + ".transport", "expected inproc or tcp");
  }
  a.deadline_ms = opt(j, "deadline_ms", a.deadline_ms, path);
  if (a.deadline_ms <= 0) fail(path + ".deadline_ms", "must be positive");
  return a;
}

json adapter_to_json(const AdapterSpec& a) {
  json j{{"id", a.id}, {"transport", a.transport}, {"deadline_ms", a.deadline_ms}};
  if (a.transport == "inproc") {
    j["stub"] = a.stub;
  } else {
    j["host"] = a.host;
    j["port"] = a.port;
  }
  return j;
}

ScriptedEvent parse_event(const json& j, const std::string& path) {
  check_keys(j, path, {"at", "type", "vehicle", "reason", "value", "signal", "phases", "duration"});
  ScriptedEvent ev;
  ev.at = get<double>(j, "at", path);
  if (!(ev.at >= 0.0)) fail(path + ".at", "must be >= 0");
  ev.type = scoped(path + ".type", [&] { return event_type_from_string(get<std::string>(j, "type", path)); });
  switch (ev.type) {
    case EventType::kTakeover:
    case EventType::kRelease:
      ev.vehicle = get<std::string>(j, "vehicle", path);
      ev.reason = opt<std::string>(j, "reason", "", path);
      break;
    case EventType::kSetIntensity:
      ev.value = get<double>(j, "value", path);
      if (!(ev.value >= 0.0 && ev.value <= 1.0)) fail(path + ".value", "intensity must be in [0, 1]");
      break;
    case EventType::kSignal:
      ev.signal = get<std::string>(j, "signal", path);
      for (const auto& p : get<std::vector<std::string>>(j, "phases", path)) {
        ev.phases.push_back(scoped(path + ".phases", [&] { return world::phase_from_string(p); }));
      }
      ev.duration = get<double>(j, "duration", path);
      if (!(ev.duration > 0.0)) fail(path + ".duration", "must be positive");
      break;
  }
  return ev;
}

json event_to_json(const ScriptedEvent& ev) {
  json j{{"at", ev.at}, {"type", to_string(ev.type)}};
  switch (ev.type) {
    case EventType::kTakeover:
    case EventType::kRelease:
      j["vehicle"] = ev.vehicle;
      j["reason"] = ev.reason;
      break;
    case EventType::kSetIntensity: j["value"] = ev.value; break;
    case EventType::kSignal: {
      json ph = json::array();
      for (auto p : ev.phases) ph.push_back(world::to_string(p));
      j["signal"] = ev.signal;
      j["phases"] = ph;
      j["duration"] = ev.duration;
      break;
    }
  }
  return j;
}

void check_lane(const world::ScenarioMap& map, const std::string& lane, const std::string& path) {
  if (!map.has_lane(lane)) throw Error(ErrorCode::kDanglingReference, path + ": map has no lane '" + lane + "'");
}

std::vector<bus::ChannelConfig> default_channels() {
  auto p = bus::platform_default();
  auto r = bus::rsu_default();
  auto v = bus::v2v_default();
  p.name = "platform";
  r.name = "rsu";
  v.name = "v2v";
  return {p, r, v};
}

json emit(const ScenarioSpec& s, const json& map_field) {
  json roster = json::array();
  for (const auto& r : s.roster) roster.push_back(entry_to_json(r));
  json adapters = json::array();
  for (const auto& a : s.adapters) adapters.push_back(adapter_to_json(a));
  json events = json::array();
  for (const auto& e : s.events) events.push_back(event_to_json(e));
  json adv = s.adversary;
  if (!s.adversary_vut.empty()) adv["vut"] = s.adversary_vut;
  json j{{"version", s.version},
         {"id", s.id},
         {"map", map_field},
         {"dt", s.dt},
         {"duration", s.duration},
         {"seed", s.seed},
         {"clock", world::to_string(s.clock)},
         {"halt_on_collision", s.halt_on_collision},
         {"algorithm", {{"id", s.algorithm}, {"version", s.algorithm_version}}},
         {"roster", roster},
         {"adapters", adapters},
         {"flows", s.flows},
         {"channels", s.channels},
         {"adversary", adv},
         {"signals", s.signals},
         {"zones", s.zones},
         {"sessions", s.sessions},
         {"events", events},
         {"deduction_horizon", s.deduction_horizon},
         {"twin_noise", s.twin_noise},
         {"rsu_interval", s.rsu_interval}};
  if (s.allocation) j["allocation"] = {{"budget", s.allocation->budget}, {"candidates", s.allocation->candidates}};
  return j;
}

}  // namespace

ScenarioSpec parse_scenario(const json& doc, const std::string& base_dir) {
  const std::string root = "spec";
  check_keys(doc, root, {"version", "id", "map", "dt", "duration", "seed", "clock", "halt_on_collision", "algorithm",
                         "roster", "adapters", "flows", "channels", "adversary", "signals", "zones", "sessions",
                         "events", "allocation", "deduction_horizon", "twin_noise", "rsu_interval"});
  ScenarioSpec s;
  s.version = get<int>(doc, "version", root);
  if (s.version != kSpecVersion) throw Error(ErrorCode::kVersion, "spec.version: unsupported version " + std::to_string(s.version));
  s.id = get<std::string>(doc, "id", root);

  if (!doc.contains("map")) fail("spec.map", "missing required field");
  if (doc["map"].is_string()) {
    s.map_ref = doc["map"].get<std::string>();
    const std::filesystem::path p = std::filesystem::path(base_dir) / s.map_ref;
    std::ifstream in(p);
    if (!in) throw Error(ErrorCode::kIo, "spec.map: cannot open '" + p.string() + "'");
    s.map_doc = scoped("spec.map", [&] { return json::parse(in); });
  } else {
    s.map_doc = doc["map"];
  }
  s.map = scoped("spec.map", [&] { return world::parse_map(s.map_doc); });
  s.map_doc = world::map_to_json(s.map);

  s.dt = opt(doc, "dt", world::kDefaultDt, root);
  if (!(s.dt > 0.0)) fail("spec.dt", "must be positive");
  s.duration = get<double>(doc, "duration", root);
  if (!(s.duration > 0.0)) fail("spec.duration", "must be positive");
  s.seed = get<std::uint64_t>(doc, "seed", root);
  s.clock = scoped("spec.clock", [&] { return world::clock_mode_from_string(opt<std::string>(doc, "clock", "ntp", root)); });
  s.halt_on_collision = opt(doc, "halt_on_collision", true, root);
  if (doc.contains("algorithm")) {
    const json& a = doc["algorithm"];
    check_keys(a, "spec.algorithm", {"id", "version"});
    s.algorithm = get<std::string>(a, "id", "spec.algorithm");
    s.algorithm_version = opt<std::string>(a, "version", s.algorithm_version, "spec.algorithm");
  }
  s.deduction_horizon = opt(doc, "deduction_horizon", s.deduction_horizon, root);
  if (!(s.deduction_horizon > 0.0)) fail("spec.deduction_horizon", "must be positive");
  s.twin_noise = opt(doc, "twin_noise", s.twin_noise, root);
  if (!(s.twin_noise >= 0.0)) fail("spec.twin_noise", "must be >= 0");
  s.rsu_interval = opt(doc, "rsu_interval", s.rsu_interval, root);
  if (!(s.rsu_interval >= s.dt)) fail("spec.rsu_interval", "must be at least one tick");

  if (doc.contains("adapters")) {
    const json& aj = doc["adapters"];
    if (!aj.is_array()) fail("spec.adapters", "expected an array");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < aj.size(); ++i) {
      s.adapters.push_back(parse_adapter(aj[i], idx("spec.adapters", i)));
      if (!ids.insert(s.adapters.back().id).second) fail(idx("spec.adapters", i) + ".id", "duplicate adapter id");
    }
  }

  const json roster = get<json>(doc, "roster", root);
  if (!roster.is_array()) fail("spec.roster", "expected an array");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < roster.size(); ++i) {
    const std::string path = idx("spec.roster", i);
    RosterEntry r = parse_entry(roster[i], path, s.map);
    if (!ids.insert(r.initial.id).second) fail(path + ".id", "duplicate id '" + r.initial.id + "'");
    if (r.control == ControlSource::kAutEndpoint &&
        std::none_of(s.adapters.begin(), s.adapters.end(), [&](const AdapterSpec& a) { return a.id == r.adapter; })) {
      throw Error(ErrorCode::kDanglingReference, path + ".adapter: no adapter '" + r.adapter + "'");
    }
    s.roster.push_back(std::move(r));
  }
  if (s.vuts().empty()) fail("spec.roster", "at least one entry must be marked vut");

  if (doc.contains("flows")) {
    const json& fj = doc["flows"];
    if (!fj.is_array()) fail("spec.flows", "expected an array");
    for (std::size_t i = 0; i < fj.size(); ++i) {
      const std::string path = idx("spec.flows", i);
      traffic::FlowSpec f = scoped(path, [&] { return fj[i].get<traffic::FlowSpec>(); });
      if (f.route.empty()) f.route = {f.entry_lane};
      check_lane(s.map, f.entry_lane, path + ".entry_lane");
      for (std::size_t k = 0; k < f.route.size(); ++k) check_lane(s.map, f.route[k], idx(path + ".route", k));
      scoped(path, [&] { f.validate(); return 0; });
      s.flows.push_back(f);
    }
  }

  if (doc.contains("channels")) {
    const json& cj = doc["channels"];
    if (!cj.is_array()) fail("spec.channels", "expected an array");
    std::set<std::string> names;
    for (std::size_t i = 0; i < cj.size(); ++i) {
      const std::string path = idx("spec.channels", i);
      auto c = scoped(path, [&] { return cj[i].get<bus::ChannelConfig>(); });
      scoped(path, [&] { c.validate(); return 0; });
      if (!names.insert(c.name).second) fail(path + ".name", "duplicate channel");
      s.channels.push_back(c);
    }
  } else {
    s.channels = default_channels();
  }
  auto has_channel = [&](const std::string& n) {
    return std::any_of(s.channels.begin(), s.channels.end(), [&](const auto& c) { return c.name == n; });
  };
  if (!has_channel("platform")) fail("spec.channels", "a 'platform' channel is required");

  if (doc.contains("adversary")) {
    json aj = doc["adversary"];
    if (aj.contains("vut")) {
      s.adversary_vut = get<std::string>(aj, "vut", "spec.adversary");
      aj.erase("vut");
    }
    s.adversary = scoped("spec.adversary", [&] { return aj.get<adversary::AdversaryConfig>(); });
  }
  if (!s.adversary_vut.empty()) {
    const RosterEntry* r = s.find(s.adversary_vut);
    if (!r || !r->vut) throw Error(ErrorCode::kDanglingReference, "spec.adversary.vut: '" + s.adversary_vut + "' is not a vut");
  }

  std::set<std::string> planned;
  if (doc.contains("signals")) {
    const json& sj = doc["signals"];
    for (std::size_t i = 0; i < sj.size(); ++i) {
      const std::string path = idx("spec.signals", i);
      auto p = scoped(path, [&] { return sj[i].get<cooperation::SignalPlan>(); });
      if (std::none_of(s.map.signals.begin(), s.map.signals.end(), [&](const auto& h) { return h.signal == p.signal; })) {
        throw Error(ErrorCode::kDanglingReference, path + ".signal: map has no signal '" + p.signal + "'");
      }
      if (!planned.insert(p.signal).second) fail(path + ".signal", "duplicate plan");
      s.signals.push_back(p);
    }
  }
  for (const auto& h : s.map.signals) {
    if (!planned.count(h.signal)) fail("spec.signals", "no plan for map signal '" + h.signal + "'");
  }
  for (const auto& p : s.signals) {
    for (const auto& h : s.map.signals) {
      if (h.signal == p.signal && h.approach >= p.cycle.front().phases.size()) {
        fail("spec.signals", "plan '" + p.signal + "' has no phase for approach " + std::to_string(h.approach));
      }
    }
  }

  if (doc.contains("zones")) {
    const json& zj = doc["zones"];
    for (std::size_t i = 0; i < zj.size(); ++i) {
      const std::string path = idx("spec.zones", i);
      auto z = scoped(path, [&] { return zj[i].get<cooperation::Zone>(); });
      check_lane(s.map, z.lane, path + ".lane");
      s.zones.push_back(z);
    }
  }

  if (doc.contains("sessions")) {
    const json& sj = doc["sessions"];
    std::set<std::string> sids;
    for (std::size_t i = 0; i < sj.size(); ++i) {
      const std::string path = idx("spec.sessions", i);
      auto cs = scoped(path, [&] { return sj[i].get<cooperation::CdaSession>(); });
      for (const auto& p : cs.participants) {
        if (!s.find(p)) throw Error(ErrorCode::kDanglingReference, path + ".participants: no roster entry '" + p + "'");
      }
      if (!sids.insert(cs.id).second) fail(path + ".id", "duplicate session");
      s.sessions.push_back(cs);
    }
  }
  for (std::size_t i = 0; i < s.roster.size(); ++i) {
    const auto& r = s.roster[i];
    if (!r.session.empty() &&
        std::none_of(s.sessions.begin(), s.sessions.end(), [&](const auto& cs) { return cs.id == r.session; })) {
      throw Error(ErrorCode::kDanglingReference, idx("spec.roster", i) + ".session: no session '" + r.session + "'");
    }
    if (r.v2v && !has_channel("v2v")) fail(idx("spec.roster", i) + ".v2v", "no 'v2v' channel declared");
  }

  if (doc.contains("events")) {
    const json& ej = doc["events"];
    for (std::size_t i = 0; i < ej.size(); ++i) {
      const std::string path = idx("spec.events", i);
      ScriptedEvent ev = parse_event(ej[i], path);
      if (!ev.vehicle.empty()) {
        const RosterEntry* r = s.find(ev.vehicle);
        if (!r) throw Error(ErrorCode::kDanglingReference, path + ".vehicle: no roster entry '" + ev.vehicle + "'");
        if (!world::is_vehicle(r->initial.kind)) fail(path + ".vehicle", "not a vehicle");
      }
      if (ev.type == EventType::kSignal && !planned.count(ev.signal)) {
        throw Error(ErrorCode::kDanglingReference, path + ".signal: no plan for '" + ev.signal + "'");
      }
      s.events.push_back(ev);
    }
    std::stable_sort(s.events.begin(), s.events.end(),
                     [](const ScriptedEvent& a, const ScriptedEvent& b) { return a.at < b.at; });
  }

  if (doc.contains("allocation")) {
    const json& aj = doc["allocation"];
    check_keys(aj, "spec.allocation", {"budget", "candidates"});
    Allocation a;
    a.budget = get<std::size_t>(aj, "budget", "spec.allocation");
    a.candidates = get<std::vector<std::string>>(aj, "candidates", "spec.allocation");
    for (const auto& c : a.candidates) {
      const RosterEntry* r = s.find(c);
      if (!r) throw Error(ErrorCode::kDanglingReference, "spec.allocation.candidates: no roster entry '" + c + "'");
      if (r->initial.kind != world::EntityKind::kHdvTwin && r->initial.kind != world::EntityKind::kRemoteHdv) {
        fail("spec.allocation.candidates", "'" + c + "' must be hdv_twin or remote_hdv");
      }
    }
    s.allocation = a;
  }
  return s;
}

ScenarioSpec parse_scenario_text(const std::string& text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSchema, std::string("spec: ") + e.what());
  }
  return parse_scenario(doc, base_dir);
}

ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open spec '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string dir = std::filesystem::path(path).parent_path().string();
  return parse_scenario_text(ss.str(), dir.empty() ? "." : dir);
}

json emit_scenario(const ScenarioSpec& spec) {
  return emit(spec, spec.map_ref.empty() ? spec.map_doc : json(spec.map_ref));
}

json canonical_scenario(const ScenarioSpec& spec) { return emit(spec, spec.map_doc); }

std::string spec_hash(const ScenarioSpec& spec) { return runlog::fnv1a_hex(canonical_scenario(spec).dump()); }

}  // namespace vpat::harness
