#include "vpat/sim.hpp"

#include <algorithm>
#include <cmath>

#include "vpat/cooperation.hpp"
#include "vpat/risk.hpp"

namespace vpat::harness {

using nlohmann::json;
using world::ControlMode;
using world::EntityKind;
using world::EntityState;

namespace {

constexpr double kNeighborRadius = 150.0;
constexpr double kGlosaRange = 300.0;
constexpr double kGlosaMinSpeed = 2.0;

json control_to_json(const world::Control& c) {
  return {{"accel", c.accel}, {"intent", world::to_string(c.intent)}, {"straddle", c.straddle}};
}

world::Control control_from_json(const json& j) {
  return {j.at("accel").get<double>(), world::intent_from_string(j.at("intent").get<std::string>()),
          j.at("straddle").get<double>()};
}

std::string vut_of(const ScenarioSpec& spec) {
  return spec.adversary_vut.empty() ? spec.vuts().front() : spec.adversary_vut;
}

}  // namespace

std::string to_string(Initiator i) { return i == Initiator::kOperator ? "operator" : "scripted"; }

std::string to_string(CommandKind k) {
  switch (k) {
    case CommandKind::kTakeover: return "takeover";
    case CommandKind::kRelease: return "release";
    case CommandKind::kSetIntensity: return "set_intensity";
    case CommandKind::kPause: return "pause";
    case CommandKind::kResume: return "resume";
  }
  return "?";
}

CommandKind command_kind_from_string(const std::string& s) {
  if (s == "takeover") return CommandKind::kTakeover;
  if (s == "release") return CommandKind::kRelease;
  if (s == "set_intensity") return CommandKind::kSetIntensity;
  if (s == "pause") return CommandKind::kPause;
  if (s == "resume") return CommandKind::kResume;
  throw Error(ErrorCode::kProtocol, "unknown command '" + s + "'");
}

// ---------------------------------------------------------------------------
// Snapshots

json snapshot_to_json(const Snapshot& s) {
  const SimState& st = s.state;
  json view = json::array();
  for (const auto& [id, e] : st.view) view.push_back(e);
  json held = json::object();
  for (const auto& [id, c] : st.held) held[id] = control_to_json(c);
  json inbox = json::object();
  for (const auto& [id, msgs] : st.inbox) inbox[id] = msgs;
  json overrides = json::object();
  for (const auto& [sig, o] : st.overrides) {
    json ph = json::array();
    for (auto p : o.phases) ph.push_back(world::to_string(p));
    overrides[sig] = {{"until", o.until}, {"phases", ph}};
  }
  json contacts = json::array();
  for (const auto& [a, b] : st.contacts) contacts.push_back({a, b});
  return {{"tick", s.tick},
          {"world", world::world_to_json(st.world)},
          {"bus", st.bus.to_json()},
          {"flow", st.flow.state_to_json()},
          {"adversary", st.adversary.to_json()},
          {"view", view},
          {"held", held},
          {"clock_offsets", st.clock_offsets},
          {"inbox", inbox},
          {"overrides", overrides},
          {"contacts", contacts},
          {"halt", st.halt},
          {"aut_faults", st.aut_faults}};
}

Snapshot snapshot_from_json(const json& j, const ScenarioSpec& spec) {
  Snapshot s;
  s.tick = j.at("tick").get<std::int64_t>();
  SimState& st = s.state;
  st.world = world::world_from_json(j.at("world"));
  st.bus = bus::MessageBus::from_json(j.at("bus"));
  st.flow = traffic::FlowModel(spec.flows);
  st.flow.restore_state(j.at("flow"));
  st.adversary = adversary::Adversary(spec.adversary, vut_of(spec));
  st.adversary.restore(j.at("adversary"));
  for (const auto& e : j.at("view")) {
    auto es = e.get<EntityState>();
    st.view.emplace(es.id, es);
  }
  for (const auto& [id, c] : j.at("held").items()) st.held[id] = control_from_json(c);
  st.clock_offsets = j.at("clock_offsets").get<std::map<std::string, double>>();
  for (const auto& [id, msgs] : j.at("inbox").items()) {
    st.inbox[id] = msgs.get<std::vector<bus::MessageEnvelope>>();
  }
  for (const auto& [sig, o] : j.at("overrides").items()) {
    SignalOverride ov;
    ov.until = o.at("until").get<double>();
    for (const auto& p : o.at("phases")) ov.phases.push_back(world::phase_from_string(p.get<std::string>()));
    st.overrides[sig] = ov;
  }
  for (const auto& c : j.at("contacts")) st.contacts.emplace(c.at(0).get<std::string>(), c.at(1).get<std::string>());
  st.halt = j.at("halt").get<bool>();
  st.aut_faults = j.at("aut_faults").get<std::uint64_t>();
  if (st.world.tick != s.tick) throw Error(ErrorCode::kMismatch, "snapshot tick disagrees with its world");
  return s;
}

std::unique_ptr<aut::Adapter> make_adapter(const AdapterSpec& spec, const std::string&) {
  if (spec.transport == "tcp") return std::make_unique<aut::TcpAdapter>(spec.host, spec.port);
  return std::make_unique<aut::InprocAdapter>(aut::make_stub(spec.stub));
}

// ---------------------------------------------------------------------------
// Construction

Simulation::Simulation(ScenarioSpec spec, RunOptions opts) : Simulation(std::move(spec), std::move(opts), nullptr) {}

Simulation::Simulation(ScenarioSpec spec, RunOptions opts, const Snapshot* snap)
    : spec_(std::move(spec)), opts_(std::move(opts)) {
  if (!opts_.factory) opts_.factory = make_adapter;
  seed_ = opts_.seed.value_or(spec_.seed);
  halt_on_collision_ = opts_.halt_on_collision.value_or(spec_.halt_on_collision);
  if (snap) {
    state_ = snap->state;
    return;
  }

  world::WorldState& w = state_.world;
  w.dt = spec_.dt;
  w.rng = Rng(seed_);
  for (const auto& r : spec_.roster) w.entities.emplace(r.initial.id, r.initial);

  if (spec_.allocation) {
    const auto field = risk::risk_field(w, spec_.map, spec_.vuts().front());
    std::map<std::string, double> contributions;
    for (const auto& id : spec_.allocation->candidates) {
      auto it = field.contribution.find(id);
      contributions[id] = it == field.contribution.end() ? 0.0 : it->second;
    }
    const auto placement = risk::allocate_elements(spec_.allocation->candidates, contributions, spec_.allocation->budget);
    json assigned = json::object();
    for (const auto& [id, p] : placement) {
      w.entity(id).kind = p == risk::Placement::kPhysical ? EntityKind::kHdvTwin : EntityKind::kRemoteHdv;
      assigned[id] = {{"placement", p == risk::Placement::kPhysical ? "physical" : "virtual"},
                      {"contribution", contributions[id]}};
    }
    pending_.push_back({0, 0.0, "allocation", assigned});
  }

  for (const auto& [id, e] : w.entities) {
    if (!world::is_physical(e.kind)) continue;
    world::ClockModel m = world::ClockModel::for_mode(spec_.clock);
    state_.clock_offsets[id] = world::sample_clock_offset(m, w.rng);
  }
  for (const auto& c : spec_.channels) state_.bus.add_channel(c);
  state_.flow = traffic::FlowModel(spec_.flows);
  for (const auto& [id, e] : w.entities) {
    if (e.kind != EntityKind::kRsu) state_.flow.map_external(id);
  }
  state_.adversary = adversary::Adversary(spec_.adversary, vut_of(spec_));
  state_.view = w.entities;
  connect_adapters();
}

std::unique_ptr<Simulation> Simulation::resume(ScenarioSpec spec, const Snapshot& snap, RunOptions opts) {
  std::unique_ptr<Simulation> sim(new Simulation(std::move(spec), std::move(opts), &snap));
  sim->resumed_from_ = snap.tick;
  sim->connect_adapters();
  return sim;
}

std::unique_ptr<Simulation> Simulation::branch(ScenarioSpec spec, const Snapshot& snap, const std::string& vehicle,
                                               std::unique_ptr<aut::Adapter> controller, double horizon,
                                               RunOptions opts) {
  if (!snap.state.world.has(vehicle)) throw Error(ErrorCode::kDanglingReference, "branch vehicle '" + vehicle + "'");
  if (!(horizon > 0.0)) throw Error(ErrorCode::kConfig, "deduction horizon must be positive");
  const std::string slot = "branch:" + vehicle;
  for (auto& r : spec.roster) {
    if (r.initial.id == vehicle) {
      r.control = ControlSource::kAutEndpoint;
      r.adapter = slot;
    }
  }
  std::erase_if(spec.adapters, [&](const AdapterSpec& a) { return a.id == slot; });
  spec.adapters.push_back({slot, "inproc", "external", "127.0.0.1", 0, static_cast<int>(aut::kDefaultDeadline.count())});
  std::erase_if(spec.events, [&](const ScriptedEvent& e) {
    return (e.type == EventType::kTakeover || e.type == EventType::kRelease) && e.vehicle == vehicle;
  });
  opts.halt_on_collision = true;
  std::unique_ptr<Simulation> sim(new Simulation(std::move(spec), std::move(opts), &snap));
  auto& ent = sim->state_.world.entity(vehicle);
  if (ent.mode != ControlMode::kAuto) {
    throw Error(ErrorCode::kRejected, "branch vehicle '" + vehicle + "' is not in auto mode at the snapshot");
  }
  const auto ack = controller->hello(aut::hello_message(vehicle, sim->spec_.map_doc, sim->spec_.dt));
  sim->acks_[vehicle] = ack;
  sim->adapters_[vehicle] = std::move(controller);
  sim->branch_ = BranchInfo{vehicle, snap.tick, snap.tick + std::llround(horizon / sim->spec_.dt), ack.algorithm};
  sim->connect_adapters();
  return sim;
}

Simulation::~Simulation() {
  for (auto& [id, a] : adapters_) {
    try {
      a->goodbye(done_ ? reason_ : "aborted");
    } catch (const std::exception&) {
      // Closing a dead connection.
    }
  }
}

void Simulation::connect_adapters() {
  for (const auto& r : spec_.roster) {
    if (r.control != ControlSource::kAutEndpoint || adapters_.count(r.initial.id)) continue;
    auto a = opts_.factory(spec_.adapter(r.adapter), r.initial.id);
    acks_[r.initial.id] = a->hello(aut::hello_message(r.initial.id, spec_.map_doc, spec_.dt));
    adapters_[r.initial.id] = std::move(a);
  }
}

void Simulation::write_header() {
  json auts = json::object();
  for (const auto& [id, ack] : acks_) auts[id] = {{"algorithm", ack.algorithm}, {"version", ack.algorithm_version}};
  json h{{"scenario_id", spec_.id},
         {"algorithm", spec_.algorithm},
         {"algorithm_version", spec_.algorithm_version},
         {"vuts", spec_.vuts()},
         {"map", spec_.map_doc},
         {"dt", spec_.dt},
         {"seed", seed_},
         {"halt_on_collision", halt_on_collision_},
         {"spec", canonical_scenario(spec_)},
         {"hash", spec_hash(spec_)},
         {"clock_offsets", state_.clock_offsets},
         {"auts", auts}};
  if (branch_) {
    h["branch"] = {{"vehicle", branch_->vehicle},
                   {"origin_tick", branch_->origin},
                   {"end_tick", branch_->end},
                   {"controller", branch_->controller}};
  }
  if (resumed_from_) h["resumed_from"] = *resumed_from_;
  writer_.header(h);
  header_written_ = true;
  for (auto& e : pending_) writer_.event(e);
  pending_.clear();
}

void Simulation::event(std::int64_t tick, const std::string& type, json data) {
  runlog::EventRecord r{tick, static_cast<double>(tick) * spec_.dt, type, std::move(data)};
  writer_.event(r);
  recent_.push_back(std::move(r));
}

void Simulation::submit(Command c) {
  std::lock_guard<std::mutex> lock(queue_mu_);
  queue_.push_back(std::move(c));
}

// ---------------------------------------------------------------------------
// Tick loop

std::optional<std::string> Simulation::termination() const {
  const auto& w = state_.world;
  if (state_.halt) return "collision";
  const auto vuts = spec_.vuts();
  if (std::all_of(vuts.begin(), vuts.end(), [&](const std::string& id) { return w.has(id) && w.entity(id).route_complete; })) {
    return "complete";
  }
  if (branch_ && w.tick >= branch_->end) return "horizon";
  if (w.tick >= spec_.duration_ticks()) return "duration";
  return std::nullopt;
}

bool Simulation::step() {
  if (done_) return false;
  if (!header_written_) write_header();
  recent_.clear();
  const double now = state_.world.sim_time();

  if (auto why = termination()) {
    update_signals(now);
    finish(*why);
    return false;
  }
  apply_inputs();
  if (paused_) return true;

  update_signals(now);
  deliver(now);
  publish(now);
  const world::Controls ctl = controls(now);

  runlog::TickRecord rec{state_.world.tick, now, state_.world.entities, state_.world.signal_state,
                         state_.adversary.state().intensity};
  writer_.tick(rec);

  state_.world = world::advance_tick(state_.world, spec_.map, ctl, spec_.dt);
  post_advance();
  return true;
}

runlog::RunLog Simulation::run() {
  while (step()) {
  }
  return log();
}

void Simulation::finish(const std::string& reason) {
  runlog::TickRecord rec{state_.world.tick, state_.world.sim_time(), state_.world.entities, state_.world.signal_state,
                         state_.adversary.state().intensity};
  writer_.tick(rec);
  reason_ = reason;
  writer_.footer({{"reason", reason},
                  {"final_tick", state_.world.tick},
                  {"aut_faults", state_.aut_faults},
                  {"takeovers", deductions_.size()}});
  done_ = true;
}

void Simulation::apply_inputs() {
  const std::int64_t tick = state_.world.tick;
  std::vector<Command> cmds;
  {
    std::lock_guard<std::mutex> lock(queue_mu_);
    cmds.swap(queue_);
  }
  std::vector<const ScriptedEvent*> evs;
  if (inputs_tick_ != tick) {
    for (const auto& e : spec_.events) {
      if (spec_.tick_of(e.at) == tick) evs.push_back(&e);
    }
    inputs_tick_ = tick;
  }
  const bool any_takeover =
      std::any_of(evs.begin(), evs.end(), [](const ScriptedEvent* e) { return e->type == EventType::kTakeover; }) ||
      std::any_of(cmds.begin(), cmds.end(), [](const Command& c) { return c.kind == CommandKind::kTakeover; });
  std::optional<Snapshot> pre;
  if (any_takeover) pre = snapshot();

  const double now = state_.world.sim_time();
  for (const ScriptedEvent* e : evs) {
    std::string why;
    switch (e->type) {
      case EventType::kTakeover:
        if (!takeover(e->vehicle, Initiator::kScripted, e->reason, &*pre, why)) {
          event(tick, "takeover_rejected", {{"vehicle", e->vehicle}, {"why", why}});
        }
        break;
      case EventType::kRelease:
        if (!release(e->vehicle, why)) event(tick, "release_rejected", {{"vehicle", e->vehicle}, {"why", why}});
        break;
      case EventType::kSetIntensity:
        state_.adversary.set_intensity(e->value);
        event(tick, "set_intensity", {{"value", e->value}, {"initiator", "scripted"}});
        break;
      case EventType::kSignal: {
        state_.overrides[e->signal] = {now + e->duration, e->phases};
        json ph = json::array();
        for (auto p : e->phases) ph.push_back(world::to_string(p));
        event(tick, "signal_override", {{"signal", e->signal}, {"phases", ph}, {"until", now + e->duration}});
        break;
      }
    }
  }

  for (auto& c : cmds) {
    std::string why;
    bool ok = true;
    switch (c.kind) {
      case CommandKind::kTakeover: ok = takeover(c.vehicle, Initiator::kOperator, c.reason, &*pre, why); break;
      case CommandKind::kRelease: ok = release(c.vehicle, why); break;
      case CommandKind::kSetIntensity:
        if (!(c.value >= 0.0 && c.value <= 1.0)) {
          ok = false;
          why = "intensity must be in [0, 1]";
        } else {
          state_.adversary.set_intensity(c.value);
          event(tick, "set_intensity", {{"value", c.value}, {"initiator", "operator"}});
        }
        break;
      case CommandKind::kPause:
        if (paused_) {
          ok = false;
          why = "already paused";
        } else {
          paused_ = true;
          event(tick, "pause", json::object());
        }
        break;
      case CommandKind::kResume:
        if (!paused_) {
          ok = false;
          why = "not paused";
        } else {
          paused_ = false;
          event(tick, "resume", json::object());
        }
        break;
    }
    if (c.reply) {
      json r{{"type", ok ? "ack" : "nack"}, {"id", c.id}, {"cmd", to_string(c.kind)}, {"tick", tick}};
      if (!ok) r["reason"] = why;
      c.reply(r);
    }
  }
}

bool Simulation::takeover(const std::string& vehicle, Initiator who, const std::string& reason, const Snapshot* pre,
                          std::string& why) {
  const RosterEntry* r = spec_.find(vehicle);
  if (!r || !state_.world.has(vehicle) || !world::is_vehicle(r->initial.kind)) {
    why = "unknown vehicle '" + vehicle + "'";
    return false;
  }
  EntityState& e = state_.world.entity(vehicle);
  if (e.mode != ControlMode::kAuto) {
    why = "'" + vehicle + "' is in " + world::to_string(e.mode) + " mode";
    return false;
  }
  e.mode = ControlMode::kManual;
  const TakeoverEvent ev{vehicle, state_.world.tick, who, reason};
  deductions_.push_back({ev, *pre});
  event(ev.tick, "takeover", {{"vehicle", vehicle}, {"initiator", to_string(who)}, {"reason", reason}});
  return true;
}

bool Simulation::release(const std::string& vehicle, std::string& why) {
  const RosterEntry* r = spec_.find(vehicle);
  if (!r || !state_.world.has(vehicle)) {
    why = "unknown vehicle '" + vehicle + "'";
    return false;
  }
  EntityState& e = state_.world.entity(vehicle);
  if (e.mode != ControlMode::kManual || r->control == ControlSource::kConsole) {
    why = "'" + vehicle + "' is not taken over";
    return false;
  }
  e.mode = ControlMode::kAuto;
  event(state_.world.tick, "release", {{"vehicle", vehicle}});
  return true;
}

void Simulation::update_signals(double now) {
  auto& sig = state_.world.signal_state;
  sig.clear();
  for (auto it = state_.overrides.begin(); it != state_.overrides.end();) {
    if (now >= it->second.until) {
      it = state_.overrides.erase(it);
    } else {
      ++it;
    }
  }
  for (const auto& plan : spec_.signals) {
    auto ov = state_.overrides.find(plan.signal);
    sig[plan.signal] = ov != state_.overrides.end() ? ov->second.phases : cooperation::spat_at(plan, now).phase;
  }
}

void Simulation::deliver(double now) {
  for (auto& env : state_.bus.deliver_due(now)) {
    const auto& cfg = state_.bus.channel(env.channel);
    const auto rec = bus::receivers(env, cfg, state_.world);
    for (const auto& r : rec) {
      if (r == "platform") {
        if (env.type == bus::PayloadType::kStateShare && env.body.contains("entity")) {
          auto e = env.body["entity"].get<EntityState>();
          if (state_.world.has(e.id)) state_.view[e.id] = e;
        }
      } else if (adapters_.count(r)) {
        state_.inbox[r].push_back(env);
      }
    }
    writer_.message({state_.world.tick, env, rec});
  }
}

void Simulation::publish(double now) {
  auto& w = state_.world;
  auto offset = [&](const std::string& id) {
    auto it = state_.clock_offsets.find(id);
    return it == state_.clock_offsets.end() ? 0.0 : it->second;
  };
  auto send = [&](const std::string& channel, const EntityState& from, bus::PayloadType type, json body) {
    if (!state_.bus.has_channel(channel)) return;
    bus::MessageEnvelope env;
    env.channel = channel;
    env.sender = from.id;
    env.type = type;
    env.body = std::move(body);
    state_.bus.publish(std::move(env), now, from.pose, w.rng, offset(from.id));
  };

  for (const auto& [id, e] : w.entities) {
    switch (e.kind) {
      case EntityKind::kPhysicalCav:
      case EntityKind::kCloudControlled:
      case EntityKind::kPedestrian:
        send("platform", e, bus::PayloadType::kStateShare, {{"entity", e}});
        break;
      case EntityKind::kHdvTwin: {
        const EntityState twin = world::twin_update({id, e.pose, e.speed}, w, w.rng, spec_.twin_noise);
        send("platform", e, bus::PayloadType::kStateShare, {{"entity", twin}, {"twin", true}});
        break;
      }
      case EntityKind::kRsu:
        break;
      default:
        state_.view[id] = e;
        break;
    }
    const RosterEntry* r = spec_.find(id);
    if (r && r->v2v) {
      json body{{"id", id}, {"x", e.pose.x}, {"y", e.pose.y}, {"heading", e.pose.heading}, {"speed", e.speed}};
      if (!r->session.empty()) body["session"] = r->session;
      send("v2v", e, bus::PayloadType::kStateShare, body);
    }
  }
  const std::int64_t every = std::max<std::int64_t>(1, std::llround(spec_.rsu_interval / spec_.dt));
  if (w.tick % every == 0) publish_rsu(now);
}

void Simulation::publish_rsu(double now) {
  auto& w = state_.world;
  if (!state_.bus.has_channel("rsu")) return;
  for (const auto& [rid, rsu_e] : w.entities) {
    if (rsu_e.kind != EntityKind::kRsu) continue;
    const RosterEntry* re = spec_.find(rid);
    const cooperation::Rsu rsu{rid, {rsu_e.pose.x, rsu_e.pose.y}, re ? re->range : 1000.0};
    const double offset = state_.clock_offsets.count(rid) ? state_.clock_offsets.at(rid) : 0.0;
    auto send = [&](bus::PayloadType type, json body) {
      bus::MessageEnvelope env;
      env.channel = "rsu";
      env.sender = rid;
      env.type = type;
      env.body = std::move(body);
      state_.bus.publish(std::move(env), now, rsu_e.pose, w.rng, offset);
    };
    std::map<std::string, cooperation::Spat> spats;
    for (const auto& plan : spec_.signals) {
      spats[plan.signal] = cooperation::spat_at(plan, now);
      json body = cooperation::spat_to_json(spats[plan.signal]);
      if (state_.overrides.count(plan.signal)) body["overridden"] = true;
      send(bus::PayloadType::kSpat, body);
    }
    for (const auto& [id, e] : w.entities) {
      if (!world::has_obu(e.kind) || !world::is_vehicle(e.kind)) continue;
      for (const auto& wn : cooperation::mec_warnings(state_.view, e, spec_.map, rsu, spec_.zones)) {
        send(bus::PayloadType::kWarning, cooperation::warning_to_json(wn));
      }
      // Green-wave advice toward the next stop line on the current lane.
      const double dx = e.pose.x - rsu.position.x, dy = e.pose.y - rsu.position.y;
      if (e.lane.empty() || std::hypot(dx, dy) > rsu.range) continue;
      for (const auto& head : spec_.map.signals) {
        if (head.lane != e.lane || head.s <= e.s || head.s - e.s > kGlosaRange || state_.overrides.count(head.signal)) {
          continue;
        }
        const double v_max = spec_.map.lane(e.lane).speed_limit;
        const auto adv = cooperation::glosa_advice(head.s - e.s, spats.at(head.signal), kGlosaMinSpeed, v_max, head.approach);
        cooperation::Warning wn;
        wn.kind = cooperation::WarningKind::kGreenWave;
        wn.target = id;
        wn.position = spec_.map.lane(e.lane).point_at(head.s);
        wn.advisory = adv.stop ? "stop" : "speed";
        wn.value = adv.stop ? 0.0 : adv.speed;
        send(bus::PayloadType::kWarning, cooperation::warning_to_json(wn));
      }
    }
  }
}

json Simulation::observation(const std::string& id, double now) {
  const EntityState& ego = state_.world.entity(id);
  json neighbors = json::array();
  for (const auto& [nid, n] : state_.view) {
    if (nid == id || n.kind == EntityKind::kRsu || !state_.world.has(nid)) continue;
    if (std::hypot(n.pose.x - ego.pose.x, n.pose.y - ego.pose.y) <= kNeighborRadius) neighbors.push_back(n);
  }
  json sig = json::object();
  for (const auto& [sid, phases] : state_.world.signal_state) {
    json arr = json::array();
    for (auto p : phases) arr.push_back(world::to_string(p));
    sig[sid] = arr;
  }
  json msgs = json::array();
  auto& box = state_.inbox[id];
  for (const auto& m : box) msgs.push_back(m);
  box.clear();
  return {{"type", "observation"}, {"version", aut::kProtocolVersion},
          {"tick", state_.world.tick}, {"t", now},
          {"vehicle", id},          {"ego", ego},
          {"neighbors", neighbors}, {"messages", msgs},
          {"route", ego.route},     {"signals", sig}};
}

world::Control Simulation::query_aut(const std::string& id, double now) {
  auto& a = *adapters_.at(id);
  const RosterEntry& r = spec_.entry(id);
  const int deadline_ms = spec_.adapter(r.adapter).deadline_ms;
  json obs = observation(id, now);
  obs["deadline_ms"] = deadline_ms;
  const aut::StepResult res = a.step(obs, std::chrono::milliseconds(deadline_ms));
  const std::int64_t tick = state_.world.tick;
  if (res.status != aut::StepStatus::kOk) {
    ++state_.aut_faults;
    event(tick, res.status == aut::StepStatus::kTimeout ? "aut_timeout" : "aut_malformed",
          {{"vehicle", id}, {"detail", res.detail}});
    auto h = state_.held.find(id);
    if (h != state_.held.end()) return h->second;
    return {state_.world.entity(id).accel, world::LaneIntent::kKeep, state_.world.entity(id).straddle};
  }
  const world::Control c{res.reply.accel, res.reply.intent, res.reply.straddle};
  state_.held[id] = c;
  const EntityState& self = state_.world.entity(id);
  for (const auto& em : res.reply.emit) {
    if (!state_.bus.has_channel(em.channel) || state_.bus.channel(em.channel).cls != bus::ChannelClass::kBroadcast) {
      ++state_.aut_faults;
      event(tick, "aut_bad_emission", {{"vehicle", id}, {"channel", em.channel}});
      continue;
    }
    bus::MessageEnvelope env;
    env.channel = em.channel;
    env.sender = id;
    env.type = em.type;
    env.body = em.body;
    const double offset = state_.clock_offsets.count(id) ? state_.clock_offsets.at(id) : 0.0;
    state_.bus.publish(std::move(env), now, self.pose, state_.world.rng, offset);
  }
  return c;
}

world::Controls Simulation::controls(double now) {
  auto& w = state_.world;
  world::Controls out = state_.flow.control(w, state_.view, spec_.map);
  const traffic::LaneIndex adv_index = state_.flow.perception_index(w, state_.view, spec_.map);
  for (auto& [id, c] : state_.adversary.step(w, spec_.map, adv_index, w.rng)) out[id] = c;

  std::vector<const EntityState*> all;
  for (const auto& [id, e] : w.entities) all.push_back(&e);
  const traffic::LaneIndex truth(spec_.map, all);
  const traffic::Surroundings env{spec_.map, truth, w.signal_state};

  for (const auto& [id, e] : w.entities) {
    const RosterEntry* r = spec_.find(id);
    if (!r || e.kind == EntityKind::kRsu) continue;
    switch (e.mode) {
      case ControlMode::kManual:
        out[id] = traffic::drive(e, env, r->manual);
        break;
      case ControlMode::kScripted: {
        const ScriptStep* cur = nullptr;
        for (const auto& st : r->script) {
          if (st.at <= now + 1e-9) cur = &st;
        }
        if (cur) out[id] = {cur->accel, world::LaneIntent::kKeep, 0.0};
        break;
      }
      case ControlMode::kAuto:
        if (adapters_.count(id)) {
          out[id] = query_aut(id, now);
        } else if (r->control == ControlSource::kInternalBaseline) {
          out[id] = traffic::drive(e, env, r->driver);
        }
        break;
      case ControlMode::kAdversarial:
        break;
    }
  }
  return out;
}

void Simulation::post_advance() {
  auto& w = state_.world;
  const std::int64_t tick = w.tick;
  std::vector<std::string> gone;
  for (const auto& [id, e] : w.entities) {
    if (e.kind == EntityKind::kBackground && e.route_complete) gone.push_back(id);
  }
  for (const auto& id : gone) {
    w.entities.erase(id);
    state_.view.erase(id);
    state_.flow.note_despawn();
    event(tick, "despawn", {{"id", id}});
  }

  std::vector<const EntityState*> all;
  for (const auto& [id, e] : w.entities) all.push_back(&e);
  const traffic::LaneIndex index(spec_.map, all);
  for (auto& e : state_.flow.spawn(w.sim_time(), w.rng, index)) {
    world::place(e, spec_.map);
    event(tick, "spawn", {{"id", e.id}, {"lane", e.lane}, {"eligible", e.adversarial_eligible}});
    state_.view[e.id] = e;
    w.entities.emplace(e.id, std::move(e));
  }

  std::set<std::pair<std::string, std::string>> now_touching;
  std::vector<const EntityState*> bodies;
  for (const auto& [id, e] : w.entities) {
    if (e.kind != EntityKind::kRsu) bodies.push_back(&e);
  }
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    for (std::size_t k = i + 1; k < bodies.size(); ++k) {
      const EntityState& a = *bodies[i];
      const EntityState& b = *bodies[k];
      const double reach = 0.5 * (std::hypot(a.length, a.width) + std::hypot(b.length, b.width));
      if (std::hypot(a.pose.x - b.pose.x, a.pose.y - b.pose.y) > reach || !world::overlaps(a, b)) continue;
      const auto key = std::make_pair(a.id, b.id);
      now_touching.insert(key);
      if (state_.contacts.count(key)) continue;
      event(tick, "collision", {{"a", a.id}, {"b", b.id}});
      const bool involves_roster = spec_.find(a.id) || spec_.find(b.id);
      if (halt_on_collision_ && involves_roster) state_.halt = true;
    }
  }
  state_.contacts = std::move(now_touching);
}

json Simulation::state_frame() const {
  const auto& w = state_.world;
  json ents = json::array();
  for (const auto& [id, e] : w.entities) {
    ents.push_back({{"id", id},
                    {"kind", world::to_string(e.kind)},
                    {"pose", e.pose},
                    {"speed", e.speed},
                    {"control_mode", world::to_string(e.mode)}});
  }
  json sig = json::object();
  for (const auto& [sid, phases] : w.signal_state) {
    json arr = json::array();
    for (auto p : phases) arr.push_back(world::to_string(p));
    sig[sid] = arr;
  }
  json events = json::array();
  for (const auto& e : recent_) events.push_back({{"tick", e.tick}, {"type", e.type}, {"data", e.data}});
  return {{"type", "state"},  {"tick", w.tick},        {"t", w.sim_time()},
          {"entities", ents}, {"signals", sig},        {"intensity", state_.adversary.state().intensity},
          {"events", events}, {"paused", paused_},     {"done", done_}};
}

// ---------------------------------------------------------------------------

runlog::RunLog run(const ScenarioSpec& spec, RunOptions opts) {
  Simulation sim(spec, std::move(opts));
  return sim.run();
}

ReplayResult replay(const std::string& log_text, RunOptions opts) {
  ReplayResult out;
  const runlog::RunLog log = runlog::parse(log_text);
  if (log.header.contains("branch") || log.header.contains("resumed_from")) {
    out.detail = "only complete runs can be replayed";
    return out;
  }
  const ScenarioSpec spec = parse_scenario(log.header.at("spec"));
  out.hash_ok = spec_hash(spec) == log.header.value("hash", "");
  opts.seed = log.header.at("seed").get<std::uint64_t>();
  opts.halt_on_collision = log.header.at("halt_on_collision").get<bool>();
  const std::string again = run(spec, std::move(opts)).text;
  out.equal = out.hash_ok && again == log_text;
  if (!out.hash_ok) out.detail = "header hash does not match its spec";
  if (again != log_text) {
    std::int64_t line = 1;
    std::size_t i = 0;
    const std::size_t n = std::min(again.size(), log_text.size());
    while (i < n && again[i] == log_text[i]) {
      if (again[i] == '\n') ++line;
      ++i;
    }
    out.first_divergent_line = line;
    if (out.detail.empty()) out.detail = "re-simulation diverges at line " + std::to_string(line);
  }
  return out;
}

}  // namespace vpat::harness
