#include "vpat/traffic.hpp"

#include <algorithm>
#include <cmath>

namespace vpat::traffic {

using nlohmann::json;
using world::EntityState;
using world::Lane;
using world::ScenarioMap;

void IdmParams::validate() const {
  if (!(v0 > 0 && T > 0 && a_max > 0 && b_comf > 0 && s0 > 0 && b_hard > 0)) {
    throw Error(ErrorCode::kConfig, "IDM parameters must be positive");
  }
  if (!(delta >= 1.0)) throw Error(ErrorCode::kConfig, "IDM delta must be >= 1");
}

double idm_accel(double gap, double v, double v_lead, const IdmParams& p) {
  if (!(gap > 0.0)) throw Error(ErrorCode::kOverlap, "non-positive gap: vehicles overlap");
  const double free_term = std::pow(v / p.v0, p.delta);
  double interaction = 0.0;
  if (std::isfinite(gap)) {
    const double dv = v - v_lead;
    const double s_star = p.s0 + v * p.T + v * dv / (2.0 * std::sqrt(p.a_max * p.b_comf));
    interaction = (s_star / gap) * (s_star / gap);
    // s* below zero means the leader pulls away faster than we close in;
    // the interaction term then vanishes instead of pushing us forward.
    if (s_star < 0.0) interaction = 0.0;
  }
  const double a = p.a_max * (1.0 - free_term - interaction);
  return std::clamp(a, -p.b_hard, p.a_max);
}

namespace {

double follow_accel(const Vehicle1D& f, const std::optional<Vehicle1D>& l, const IdmParams& p) {
  if (!l) return idm_accel(kFreeRoad, f.v, 0.0, p);
  const double gap = l->s - f.s - 0.5 * (l->length + f.length);
  if (gap <= 0.0) return -p.b_hard;
  return idm_accel(gap, f.v, l->v, p);
}

double gap_between(const Vehicle1D& follower, const Vehicle1D& leader) {
  return leader.s - follower.s - 0.5 * (leader.length + follower.length);
}

}  // namespace

LaneDecision mobil_decide(const MobilInput& in) {
  const IdmParams& p = in.params;
  const double a_old = in.ego_current_accel.value_or(follow_accel(in.ego, in.leader, p));
  double a_of_gain = 0.0;
  if (in.follower) {
    a_of_gain = follow_accel(*in.follower, in.leader, p) - follow_accel(*in.follower, in.ego, p);
  }

  auto incentive = [&](const LaneSide& side) -> std::optional<double> {
    if (side.leader && gap_between(in.ego, *side.leader) <= 0.0) return std::nullopt;
    if (side.follower && gap_between(*side.follower, in.ego) <= 0.0) return std::nullopt;
    const double a_new = follow_accel(in.ego, side.leader, p);
    double a_nf_gain = 0.0;
    if (side.follower) {
      const double nf_after = follow_accel(*side.follower, in.ego, p);
      if (nf_after < -in.safe_decel) return std::nullopt;
      a_nf_gain = nf_after - follow_accel(*side.follower, side.leader, p);
    }
    const double value = a_new - a_old + in.politeness * (a_nf_gain + a_of_gain) + side.bias;
    if (value > in.threshold) return value;
    return std::nullopt;
  };

  std::optional<double> left = in.left ? incentive(*in.left) : std::nullopt;
  std::optional<double> right = in.right ? incentive(*in.right) : std::nullopt;
  if (left && (!right || *left >= *right)) return LaneDecision::kChangeLeft;
  if (right) return LaneDecision::kChangeRight;
  return LaneDecision::kKeep;
}

void FlowSpec::validate() const {
  if (entry_lane.empty()) throw Error(ErrorCode::kConfig, "flow without entry lane");
  if (!(rate_vph >= 0.0)) throw Error(ErrorCode::kConfig, "flow rate must be >= 0");
  if (!(mix >= 0.0 && mix <= 1.0)) throw Error(ErrorCode::kConfig, "flow mix must be in [0, 1]");
  params.validate();
}

std::vector<EntityState> spawn_flow(const FlowSpec& spec, FlowState& state, std::size_t flow_index,
                                    double now, Rng& rng, double gap) {
  if (!(spec.rate_vph > 0.0)) return {};
  const double rate = spec.rate_vph / 3600.0;
  if (!state.started) {
    state.next_arrival = now + rng.exponential(rate);
    state.started = true;
  }
  while (state.next_arrival <= now) {
    ++state.backlog;
    state.next_arrival += rng.exponential(rate);
  }
  if (state.backlog == 0) return {};
  if (gap < spec.params.s0 + spec.speed_init * spec.params.T) return {};

  --state.backlog;
  EntityState e;
  e.id = "bg" + std::to_string(flow_index) + "_" + std::to_string(state.spawned++);
  e.kind = world::EntityKind::kBackground;
  e.lane = spec.entry_lane;
  e.s = 0.0;
  e.speed = spec.speed_init;
  e.route = spec.route.empty() ? std::vector<std::string>{spec.entry_lane} : spec.route;
  e.length = spec.length;
  e.width = spec.width;
  e.adversarial_eligible = rng.uniform() < spec.mix;
  return {e};
}

// ---------------------------------------------------------------------------
// Lane index

LaneIndex::LaneIndex(const ScenarioMap& map, const std::vector<const EntityState*>& entities) {
  for (const EntityState* e : entities) {
    if (e->kind == world::EntityKind::kRsu) continue;
    if (!e->lane.empty()) {
      const Lane& own = map.lane(e->lane);
      lanes_[e->lane].push_back({e->s, e->speed, e->length, e->id});
      // A body pushed past a quarter lane also blocks the neighbour.
      if (e->offset > 0.25 * own.width && !own.left.empty()) {
        lanes_[own.left].push_back({e->s, e->speed, e->length, e->id});
      } else if (e->offset < -0.25 * own.width && !own.right.empty()) {
        lanes_[own.right].push_back({e->s, e->speed, e->length, e->id});
      }
      continue;
    }
    // Free movers (pedestrians) block any lane they stand in.
    for (const auto& [id, lane] : map.lanes) {
      const auto proj = lane.project({e->pose.x, e->pose.y});
      if (proj.s < -e->length || proj.s > lane.length() + e->length) continue;
      if (std::abs(proj.lateral) <= 0.5 * (lane.width + e->width)) {
        // Obstacles in the lane move across it, so they count as stopped.
        lanes_[id].push_back({proj.s, 0.0, std::max(e->length, e->width), e->id});
      }
    }
  }
  for (auto& [id, occ] : lanes_) {
    std::sort(occ.begin(), occ.end(), [](const Occupant& a, const Occupant& b) {
      return a.s != b.s ? a.s < b.s : a.id < b.id;
    });
  }
}

const std::vector<LaneIndex::Occupant>& LaneIndex::on(const std::string& lane) const {
  static const std::vector<Occupant> kEmpty;
  auto it = lanes_.find(lane);
  return it == lanes_.end() ? kEmpty : it->second;
}

std::optional<LaneIndex::Occupant> LaneIndex::ahead(const std::string& lane, double s,
                                                    const std::string& self) const {
  for (const auto& o : on(lane)) {
    if (o.id != self && (o.s > s || (o.s == s && o.id > self))) return o;
  }
  return std::nullopt;
}

std::optional<LaneIndex::Occupant> LaneIndex::behind(const std::string& lane, double s,
                                                     const std::string& self) const {
  const auto& occ = on(lane);
  for (auto it = occ.rbegin(); it != occ.rend(); ++it) {
    if (it->id != self && (it->s < s || (it->s == s && it->id < self))) return *it;
  }
  return std::nullopt;
}

double entry_gap(const LaneIndex& index, const std::string& lane, double s, double length) {
  double best = kFreeRoad;
  for (const auto& o : index.on(lane)) {
    const double half = 0.5 * (o.length + length);
    if (o.s <= s - half) continue;
    best = std::min(best, o.s - s - half);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Driver

namespace {

struct ChainLane {
  const Lane* lane;
  double base;  // distance from the entity to s = 0 of this lane
};

std::vector<ChainLane> lane_chain(const ScenarioMap& map, const EntityState& self, double lookahead) {
  std::vector<ChainLane> out;
  const Lane* lane = &map.lane(self.lane);
  double base = -self.s;
  std::size_t idx = self.route_index;
  out.push_back({lane, base});
  while (base + lane->length() < lookahead && !lane->dead_end) {
    if (idx + 1 >= self.route.size()) break;
    std::string nxt = self.route[idx + 1];
    if (!lane->next.empty() && std::find(lane->next.begin(), lane->next.end(), nxt) == lane->next.end()) {
      nxt = lane->next.front();
    }
    base += lane->length();
    lane = &map.lane(nxt);
    ++idx;
    out.push_back({lane, base});
  }
  return out;
}

struct Obstacle {
  double gap;
  double v;
};

IdmParams desired(const EntityState& self, const ScenarioMap& map, const DriverConfig& cfg) {
  IdmParams p = cfg.idm;
  p.v0 = std::min({p.v0, map.lane(self.lane).speed_limit * cfg.speed_factor, cfg.speed_cap});
  p.v0 = std::max(p.v0, 0.1);
  return p;
}

}  // namespace

double drive_accel(const EntityState& self, const Surroundings& env, const DriverConfig& cfg) {
  if (self.lane.empty()) return 0.0;
  const IdmParams p = desired(self, env.map, cfg);
  const double half = 0.5 * self.length;
  const auto chain = lane_chain(env.map, self, cfg.lookahead);
  std::vector<Obstacle> obstacles;

  // Leader along the chain.
  for (std::size_t k = 0; k < chain.size(); ++k) {
    std::optional<Obstacle> found;
    for (const auto& o : env.index.on(chain[k].lane->id)) {
      if (o.id == self.id) continue;
      const double d = chain[k].base + o.s;
      if (k == 0 && !(o.s > self.s || (o.s == self.s && o.id > self.id))) continue;
      found = Obstacle{d - 0.5 * (o.length + self.length), o.v};
      break;
    }
    if (found) {
      obstacles.push_back(*found);
      break;
    }
  }

  for (const auto& cl : chain) {
    if (cl.lane->dead_end) obstacles.push_back({cl.base + cl.lane->length() - half, 0.0});

    for (const auto& head : env.map.signals) {
      if (head.lane != cl.lane->id) continue;
      const double d_stop = cl.base + head.s - half;
      if (d_stop < 0.0) continue;
      world::Phase phase = world::Phase::kGreen;
      if (auto it = env.signals.find(head.signal); it != env.signals.end() && head.approach < it->second.size()) {
        phase = it->second[head.approach];
      }
      const bool must_stop = phase == world::Phase::kRed ||
                             (phase == world::Phase::kYellow && d_stop > self.speed * self.speed / (2.0 * p.b_comf));
      if (must_stop) obstacles.push_back({d_stop, 0.0});
    }
  }

  for (const auto& cp : env.map.conflict_points) {
    const ChainLane* mine = nullptr;
    bool side_a = false;
    for (const auto& cl : chain) {
      if (cl.lane->id == cp.lane_a) { mine = &cl; side_a = true; break; }
      if (cl.lane->id == cp.lane_b) { mine = &cl; side_a = false; break; }
    }
    if (!mine) continue;
    const std::string& other_lane = side_a ? cp.lane_b : cp.lane_a;
    const double other_cp_s = side_a ? cp.s_b : cp.s_a;
    const bool my_priority = cp.priority == (side_a ? "a" : "b");
    const bool other_priority = cp.priority == (side_a ? "b" : "a");
    const double d_self = mine->base + (side_a ? cp.s_a : cp.s_b);
    const double ext_self = cp.radius + half;
    if (d_self < -ext_self || d_self > cfg.lookahead) continue;
    if (std::abs(d_self) <= ext_self) continue;  // already inside: clear it
    const double tta_self = (d_self - ext_self) / std::max(self.speed, 1.0);

    auto consider = [&](const LaneIndex::Occupant& o, double d_o) {
      if (o.id == self.id) return;
      const double ext_o = cp.radius + 0.5 * o.length;
      if (d_o < -ext_o || d_o > cfg.lookahead) return;
      const bool in_area = std::abs(d_o) <= ext_o;
      const double tta_o = in_area ? 0.0 : (d_o - ext_o) / std::max(o.v, 1.0);
      bool yield;
      if (in_area) {
        yield = true;
      } else if (cfg.ignore_conflicts || tta_o > 10.0) {
        yield = false;
      } else if (cfg.yield_all_conflicts) {
        yield = tta_o < tta_self + 4.0;
      } else if (my_priority) {
        yield = false;
      } else if (other_priority) {
        yield = true;
      } else {
        yield = tta_o < tta_self || (tta_o == tta_self && o.id < self.id);
      }
      if (!yield) return;
      if (d_o <= 0.0) {
        // Past the shared point: follow its projection on our lane.
        obstacles.push_back({d_self - d_o - 0.5 * (o.length + self.length), o.v});
        return;
      }
      const double stop_gap = d_self - ext_self - 1.0;
      const double braking = self.speed * self.speed / (2.0 * p.b_hard);
      if (stop_gap < braking && !in_area) return;  // cannot stop any more: commit
      obstacles.push_back({stop_gap, 0.0});
    };

    for (const auto& o : env.index.on(other_lane)) consider(o, other_cp_s - o.s);
    for (const auto& [pid, pred] : env.map.lanes) {
      if (std::find(pred.next.begin(), pred.next.end(), other_lane) == pred.next.end()) continue;
      for (const auto& o : env.index.on(pid)) consider(o, other_cp_s + pred.length() - o.s);
    }
  }

  double accel = idm_accel(kFreeRoad, self.speed, 0.0, p);
  for (const auto& ob : obstacles) {
    accel = std::min(accel, idm_accel(std::max(ob.gap, 0.1), self.speed, ob.v, p));
  }
  return accel;
}

world::Control drive(const EntityState& self, const Surroundings& env, const DriverConfig& cfg) {
  world::Control c;
  if (self.lane.empty()) return c;
  c.accel = drive_accel(self, env, cfg);
  if (!cfg.allow_lane_change || self.changing_lane() || self.straddle != 0.0 ||
      std::abs(self.offset) > 0.01) {
    return c;
  }
  const Lane& lane = env.map.lane(self.lane);
  auto usable = [&](const std::string& nb) {
    if (nb.empty()) return false;
    const Lane& to = env.map.lane(nb);
    if (to.dead_end) return false;
    if (self.route_index + 1 >= self.route.size()) return true;
    const std::string& upcoming = self.route[self.route_index + 1];
    return std::find(to.next.begin(), to.next.end(), upcoming) != to.next.end();
  };
  const bool left_ok = usable(lane.left);
  const bool right_ok = usable(lane.right);
  if (!left_ok && !right_ok) return c;

  auto as1d = [](const std::optional<LaneIndex::Occupant>& o) -> std::optional<Vehicle1D> {
    if (!o) return std::nullopt;
    return Vehicle1D{o->s, o->v, o->length};
  };
  MobilInput in;
  in.ego = {self.s, self.speed, self.length};
  in.params = desired(self, env.map, cfg);
  in.leader = as1d(env.index.ahead(self.lane, self.s, self.id));
  in.follower = as1d(env.index.behind(self.lane, self.s, self.id));
  in.ego_current_accel = c.accel;
  in.politeness = cfg.politeness;
  in.threshold = cfg.lc_threshold;
  in.safe_decel = cfg.safe_decel;
  double bias = 0.0;
  if (lane.dead_end) {
    const double remaining = lane.length() - self.s;
    bias = 0.3 + 1.5 * std::max(0.0, 1.0 - remaining / 150.0);
  }
  auto side = [&](const std::string& nb) {
    LaneSide s;
    s.leader = as1d(env.index.ahead(nb, self.s, self.id));
    s.follower = as1d(env.index.behind(nb, self.s, self.id));
    s.bias = bias;
    return s;
  };
  if (left_ok) in.left = side(lane.left);
  if (right_ok) in.right = side(lane.right);
  switch (mobil_decide(in)) {
    case LaneDecision::kChangeLeft: c.intent = world::LaneIntent::kLeft; break;
    case LaneDecision::kChangeRight: c.intent = world::LaneIntent::kRight; break;
    case LaneDecision::kKeep: break;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Flow model

FlowModel::FlowModel(std::vector<FlowSpec> flows) : flows_(std::move(flows)), states_(flows_.size()) {
  for (const auto& f : flows_) f.validate();
}

void FlowModel::map_external(const std::string& id) {
  if (!mapped_.insert(id).second) {
    throw Error(ErrorCode::kDuplicateMapping, "'" + id + "' is already mapped into the flow");
  }
}

void FlowModel::unmap_external(const std::string& id) { mapped_.erase(id); }

std::uint64_t FlowModel::spawned() const {
  std::uint64_t n = 0;
  for (const auto& s : states_) n += s.spawned;
  return n;
}

std::vector<EntityState> FlowModel::spawn(double now, Rng& rng, const LaneIndex& index) {
  std::vector<EntityState> out;
  for (std::size_t i = 0; i < flows_.size(); ++i) {
    const FlowSpec& f = flows_[i];
    double gap = entry_gap(index, f.entry_lane, 0.0, f.length);
    for (const auto& e : out) {
      if (e.lane == f.entry_lane) gap = std::min(gap, e.s - 0.5 * (e.length + f.length));
    }
    auto born = spawn_flow(f, states_[i], i, now, rng, gap);
    out.insert(out.end(), born.begin(), born.end());
  }
  return out;
}

LaneIndex FlowModel::perception_index(const world::WorldState& world,
                                      const std::map<std::string, EntityState>& view,
                                      const ScenarioMap& map) const {
  std::vector<const EntityState*> seen;
  for (const auto& [id, e] : world.entities) {
    if (e.kind == world::EntityKind::kBackground) {
      seen.push_back(&e);
    } else if (mapped_.count(id)) {
      auto it = view.find(id);
      seen.push_back(it != view.end() ? &it->second : &e);
    }
  }
  return LaneIndex(map, seen);
}

world::Controls FlowModel::control(const world::WorldState& world, const std::map<std::string, EntityState>& view,
                                   const ScenarioMap& map) const {
  const LaneIndex index = perception_index(world, view, map);
  const Surroundings env{map, index, world.signal_state};
  world::Controls out;
  for (const auto& [id, e] : world.entities) {
    if (e.kind != world::EntityKind::kBackground || e.lane.empty()) continue;
    DriverConfig cfg;
    const std::size_t us = id.find('_');
    if (id.rfind("bg", 0) == 0 && us != std::string::npos) {
      const std::size_t flow = std::stoul(id.substr(2, us - 2));
      if (flow < flows_.size()) cfg.idm = flows_[flow].params;
    }
    out[id] = drive(e, env, cfg);
  }
  return out;
}

json FlowModel::state_to_json() const {
  json st = json::array();
  for (const auto& s : states_) {
    st.push_back({{"next_arrival", s.next_arrival}, {"started", s.started}, {"backlog", s.backlog},
                  {"spawned", s.spawned}});
  }
  return {{"flows", st}, {"mapped", mapped_}, {"despawned", despawned_}};
}

void FlowModel::restore_state(const json& j) {
  const auto& st = j.at("flows");
  if (st.size() != states_.size()) throw Error(ErrorCode::kMismatch, "flow state does not match flow specs");
  for (std::size_t i = 0; i < states_.size(); ++i) {
    states_[i].next_arrival = st[i].at("next_arrival").get<double>();
    states_[i].started = st[i].at("started").get<bool>();
    states_[i].backlog = st[i].at("backlog").get<std::uint64_t>();
    states_[i].spawned = st[i].at("spawned").get<std::uint64_t>();
  }
  mapped_ = j.at("mapped").get<std::set<std::string>>();
  despawned_ = j.at("despawned").get<std::uint64_t>();
}

void to_json(json& j, const IdmParams& p) {
  j = json{{"v0", p.v0}, {"T", p.T}, {"a_max", p.a_max}, {"b_comf", p.b_comf},
           {"s0", p.s0}, {"delta", p.delta}, {"b_hard", p.b_hard}};
}

void from_json(const json& j, IdmParams& p) {
  IdmParams d;
  p.v0 = j.value("v0", d.v0);
  p.T = j.value("T", d.T);
  p.a_max = j.value("a_max", d.a_max);
  p.b_comf = j.value("b_comf", d.b_comf);
  p.s0 = j.value("s0", d.s0);
  p.delta = j.value("delta", d.delta);
  p.b_hard = j.value("b_hard", d.b_hard);
}

void to_json(json& j, const FlowSpec& f) {
  j = json{{"entry_lane", f.entry_lane}, {"route", f.route},   {"rate_vph", f.rate_vph},
           {"speed_init", f.speed_init}, {"params", f.params}, {"mix", f.mix},
           {"length", f.length},         {"width", f.width}};
}

void from_json(const json& j, FlowSpec& f) {
  f.entry_lane = j.at("entry_lane").get<std::string>();
  f.route = j.value("route", std::vector<std::string>{});
  f.rate_vph = j.at("rate_vph").get<double>();
  f.speed_init = j.value("speed_init", 10.0);
  f.params = j.contains("params") ? j["params"].get<IdmParams>() : IdmParams{};
  f.mix = j.value("mix", 0.0);
  f.length = j.value("length", 4.8);
  f.width = j.value("width", 1.9);
}

}  // namespace vpat::traffic
