#include "vpat/cooperation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <set>

#include "vpat/adversary.hpp"

namespace vpat::cooperation {

using nlohmann::json;
using bus::MessageEnvelope;
using bus::PayloadType;

namespace {
constexpr std::pair<CdaLevel, const char*> kLevels[] = {
    {CdaLevel::kStateSharing, "state_sharing"},
    {CdaLevel::kIntentSharing, "intent_sharing"},
    {CdaLevel::kCoopDecision, "coop_decision"},
    {CdaLevel::kCoopControl, "coop_control"},
};
constexpr std::pair<WarningKind, const char*> kWarnings[] = {
    {WarningKind::kConstruction, "construction"}, {WarningKind::kVruAlert, "vru_alert"},
    {WarningKind::kNlosHazard, "nlos_hazard"},    {WarningKind::kCongestion, "congestion"},
    {WarningKind::kGreenWave, "green_wave"},
};
constexpr double kBoundaryEps = 1e-9;
}  // namespace

std::string to_string(CdaLevel l) {
  for (const auto& [v, n] : kLevels) {
    if (v == l) return n;
  }
  return "?";
}

CdaLevel cda_level_from_string(const std::string& s) {
  for (const auto& [v, n] : kLevels) {
    if (s == n) return v;
  }
  throw Error(ErrorCode::kSchema, "unknown CDA level '" + s + "'");
}

std::string to_string(WarningKind k) {
  for (const auto& [v, n] : kWarnings) {
    if (v == k) return n;
  }
  return "?";
}

WarningKind warning_kind_from_string(const std::string& s) {
  for (const auto& [v, n] : kWarnings) {
    if (s == n) return v;
  }
  throw Error(ErrorCode::kSchema, "unknown warning kind '" + s + "'");
}

void CdaSession::validate() const {
  if (id.empty()) throw Error(ErrorCode::kConfig, "session without id");
  if (participants.empty()) throw Error(ErrorCode::kConfig, "session '" + id + "' has no participants");
  if (!(end > start)) throw Error(ErrorCode::kConfig, "session '" + id + "' needs end > start");
  if (!(state_rate_hz > 0.0) || !(latency_bound > 0.0)) {
    throw Error(ErrorCode::kConfig, "session '" + id + "' rate and latency bound must be positive");
  }
}

// ---------------------------------------------------------------------------
// Consensus

Consensus consensus_check(const std::vector<DecisionProposal>& proposals) {
  std::map<std::string, std::set<std::string>> succ;
  std::map<std::string, int> indeg;
  for (const auto& p : proposals) {
    for (const auto& id : p.order) {
      succ[id];
      indeg.try_emplace(id, 0);
    }
    for (std::size_t i = 0; i + 1 < p.order.size(); ++i) {
      const auto& a = p.order[i];
      const auto& b = p.order[i + 1];
      if (a == b) continue;
      if (succ[a].insert(b).second) ++indeg[b];
    }
  }
  Consensus out;
  std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
  std::map<std::string, int> remaining = indeg;
  for (const auto& [id, d] : remaining) {
    if (d == 0) ready.push(id);
  }
  while (!ready.empty()) {
    const std::string id = ready.top();
    ready.pop();
    out.order.push_back(id);
    for (const auto& n : succ[id]) {
      if (--remaining[n] == 0) ready.push(n);
    }
  }
  if (out.order.size() == indeg.size()) {
    out.agreed = true;
    return out;
  }

  // Shortest cycle among the nodes Kahn could not release.
  std::set<std::string> stuck;
  for (const auto& [id, d] : remaining) {
    if (d > 0) stuck.insert(id);
  }
  std::vector<std::string> best;
  for (const auto& src : stuck) {
    std::map<std::string, std::string> parent;
    std::deque<std::string> q{src};
    parent[src] = "";
    std::optional<std::string> closing;
    while (!q.empty() && !closing) {
      const std::string u = q.front();
      q.pop_front();
      for (const auto& v : succ[u]) {
        if (!stuck.count(v)) continue;
        if (v == src) {
          closing = u;
          break;
        }
        if (!parent.count(v)) {
          parent[v] = u;
          q.push_back(v);
        }
      }
    }
    if (!closing) continue;
    std::vector<std::string> cyc;
    for (std::string at = *closing; !at.empty(); at = parent[at]) cyc.push_back(at);
    std::sort(cyc.begin(), cyc.end());
    if (best.empty() || cyc.size() < best.size() || (cyc.size() == best.size() && cyc < best)) best = cyc;
  }
  out.order.clear();
  out.conflict = best;
  return out;
}

// ---------------------------------------------------------------------------
// Session validation

namespace {

bool in_session(const MessageEnvelope& e, const std::string& id) {
  return e.body.is_object() && e.body.contains("session") && e.body["session"] == id;
}

void check_state_sharing(const std::vector<MessageEnvelope>& msgs, const CdaSession& s, SessionVerdict& v) {
  const double max_gap = 1.5 / s.state_rate_hz;
  for (const auto& p : s.participants) {
    std::vector<double> sends;
    for (const auto& e : msgs) {
      if (e.type != PayloadType::kStateShare || e.sender != p) continue;
      if (e.latency() > s.latency_bound + 1e-12) {
        v.violations.push_back({"latency", p, "seq " + std::to_string(e.seq) + " took " +
                                                  std::to_string(e.latency()) + " s"});
      }
      if (e.send_sim >= s.start - kBoundaryEps && e.send_sim <= s.end + kBoundaryEps) sends.push_back(e.send_sim);
    }
    std::sort(sends.begin(), sends.end());
    double prev = s.start;
    for (double t : sends) {
      if (t - prev > max_gap + 1e-9) {
        v.violations.push_back({"rate", p, "no state between " + std::to_string(prev) + " and " + std::to_string(t)});
      }
      prev = t;
    }
    if (s.end - prev > max_gap + 1e-9) {
      v.violations.push_back({"rate", p, "no state after " + std::to_string(prev)});
    }
  }
}

void check_intent_sharing(const std::vector<MessageEnvelope>& msgs, const CdaSession& s, SessionVerdict& v) {
  for (const auto& [receiver, entry] : s.conflict_entry) {
    for (const auto& [sender, other_entry] : s.conflict_entry) {
      if (sender == receiver) continue;
      bool ok = false;
      for (const auto& e : msgs) {
        if (e.type == PayloadType::kIntentShare && e.sender == sender && e.deliver_ts < entry) {
          ok = true;
          break;
        }
      }
      if (!ok) {
        v.violations.push_back({"intent_late", receiver, "no intent from " + sender + " before its conflict entry at " +
                                                             std::to_string(entry)});
      }
    }
  }
}

void check_coop_decision(const std::vector<MessageEnvelope>& msgs, const CdaSession& s, SessionVerdict& v) {
  std::vector<DecisionProposal> proposals;
  std::set<std::string> proposers;
  for (const auto& e : msgs) {
    if (e.type != PayloadType::kDecisionProposal) continue;
    proposals.push_back({e.sender, e.body.value("order", std::vector<std::string>{})});
    proposers.insert(e.sender);
  }
  for (const auto& p : s.participants) {
    if (!proposers.count(p)) v.violations.push_back({"missing_proposal", p, "no decision proposal"});
  }
  const Consensus c = consensus_check(proposals);
  if (!c.agreed) {
    std::string nodes;
    for (const auto& n : c.conflict) nodes += (nodes.empty() ? "" : ",") + n;
    v.violations.push_back({"priority_cycle", nodes, "proposed precedences form a cycle"});
    v.cycle = c.conflict;
  }
}

void check_coop_control(const std::vector<MessageEnvelope>& msgs, const CdaSession& s, SessionVerdict& v) {
  for (const auto& cmd_id : s.commands) {
    const MessageEnvelope* cmd = nullptr;
    for (const auto& e : msgs) {
      if (e.type == PayloadType::kControlCommand && !e.body.value("ack", false) &&
          e.body.value("command_id", std::string()) == cmd_id) {
        cmd = &e;
        break;
      }
    }
    if (!cmd) {
      v.violations.push_back({"missing_command", cmd_id, "command never issued"});
      continue;
    }
    const std::string target = cmd->body.value("target", std::string());
    const double valid_until = cmd->body.value("valid_until", cmd->send_sim);
    bool acked = false;
    for (const auto& e : msgs) {
      if (e.type == PayloadType::kControlCommand && e.body.value("ack", false) &&
          e.body.value("command_id", std::string()) == cmd_id && e.sender == target &&
          e.deliver_ts <= valid_until) {
        acked = true;
        break;
      }
    }
    if (!acked) v.violations.push_back({"unacknowledged", cmd_id, "no ack from " + target + " by " + std::to_string(valid_until)});
  }
}

}  // namespace

SessionVerdict validate_cda_session(const std::vector<MessageEnvelope>& trace, const CdaSession& session) {
  session.validate();
  std::vector<MessageEnvelope> msgs;
  for (const auto& e : trace) {
    if (in_session(e, session.id)) msgs.push_back(e);
  }
  SessionVerdict v;
  switch (session.level) {
    case CdaLevel::kStateSharing: check_state_sharing(msgs, session, v); break;
    case CdaLevel::kIntentSharing: check_intent_sharing(msgs, session, v); break;
    case CdaLevel::kCoopDecision: check_coop_decision(msgs, session, v); break;
    case CdaLevel::kCoopControl: check_coop_control(msgs, session, v); break;
  }
  v.pass = v.violations.empty();
  return v;
}

SessionVerdict validate_cda_session(const std::vector<MessageEnvelope>& trace,
                                    const std::map<std::string, CdaSession>& sessions,
                                    const std::string& session_id) {
  auto it = sessions.find(session_id);
  if (it == sessions.end()) throw Error(ErrorCode::kUnknownSession, "no session '" + session_id + "'");
  return validate_cda_session(trace, it->second);
}

// ---------------------------------------------------------------------------
// Signals

double SignalPlan::cycle_length() const {
  double l = 0.0;
  for (const auto& st : cycle) l += st.duration;
  return l;
}

void SignalPlan::validate() const {
  if (signal.empty()) throw Error(ErrorCode::kConfig, "signal plan without id");
  if (cycle.empty()) throw Error(ErrorCode::kConfig, "signal '" + signal + "' has an empty cycle");
  for (const auto& st : cycle) {
    if (!(st.duration > 0.0)) throw Error(ErrorCode::kConfig, "signal '" + signal + "': durations must be > 0");
    if (st.phases.empty() || st.phases.size() != cycle.front().phases.size()) {
      throw Error(ErrorCode::kConfig, "signal '" + signal + "': every step must cover all approaches");
    }
  }
}

namespace {

Spat spat_from_cycle(const std::string& signal, const std::vector<PhaseStep>& cycle, double pos) {
  double length = 0.0;
  for (const auto& st : cycle) length += st.duration;
  pos = std::fmod(pos, length);
  if (pos < 0.0) pos += length;
  Spat s;
  s.signal = signal;
  s.cycle = cycle;
  double start = 0.0;
  for (std::size_t i = 0; i < cycle.size(); ++i) {
    const double end = start + cycle[i].duration;
    // Snap positions within rounding noise of a boundary onto the next step.
    if (pos < end - kBoundaryEps || i + 1 == cycle.size()) {
      if (i + 1 == cycle.size() && pos >= end - kBoundaryEps) {
        s.step = 0;
        s.cycle_pos = 0.0;
        s.phase = cycle[0].phases;
        s.time_to_change = cycle[0].duration;
        return s;
      }
      s.step = i;
      s.cycle_pos = pos;
      s.phase = cycle[i].phases;
      s.time_to_change = end - pos;
      return s;
    }
    start = end;
  }
  return s;
}

}  // namespace

Spat spat_at(const SignalPlan& plan, double now) {
  plan.validate();
  return spat_from_cycle(plan.signal, plan.cycle, now + plan.offset);
}

Spat spat_next(const Spat& s, double dt) { return spat_from_cycle(s.signal, s.cycle, s.cycle_pos + dt); }

std::vector<std::pair<double, double>> green_windows(const Spat& spat, std::size_t approach, int cycles) {
  std::vector<std::pair<double, double>> out;
  if (spat.cycle.empty() || approach >= spat.phase.size()) return out;
  double t = 0.0;
  const std::size_t n = spat.cycle.size();
  const std::size_t steps = n * static_cast<std::size_t>(cycles) + 1;
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t i = (spat.step + k) % n;
    const double len = k == 0 ? spat.time_to_change : spat.cycle[i].duration;
    if (spat.cycle[i].phases[approach] == world::Phase::kGreen) {
      if (!out.empty() && std::abs(out.back().second - t) < kBoundaryEps) {
        out.back().second = t + len;
      } else {
        out.emplace_back(t, t + len);
      }
    }
    t += len;
  }
  return out;
}

GlosaAdvice glosa_advice(double dist, const Spat& spat, double v_min, double v_max, std::size_t approach) {
  if (!(dist > 0.0)) throw Error(ErrorCode::kConfig, "GLOSA needs a positive distance");
  if (!(v_min <= v_max)) throw Error(ErrorCode::kConfig, "GLOSA needs v_min <= v_max");
  GlosaAdvice stop;
  stop.stop = true;
  if (!(v_max > 0.0)) return stop;
  const double floor_v = std::max(v_min, 1e-6);
  for (const auto& [start, end] : green_windows(spat, approach)) {
    auto accept = [&](double v) -> std::optional<GlosaAdvice> {
      if (!(v >= floor_v && v <= v_max)) return std::nullopt;
      const double arrival = dist / v;
      if (!(arrival > start && arrival < end)) return std::nullopt;
      return GlosaAdvice{false, v, arrival};
    };
    // Earliest arrival is at v_max unless that beats the window opening.
    if (start <= 0.0 || v_max < dist / start) {
      if (auto a = accept(v_max)) return *a;
      continue;
    }
    const double delta = std::min(0.1, 0.5 * (end - start));
    if (auto a = accept(dist / (start + delta))) return *a;
  }
  return stop;
}

// ---------------------------------------------------------------------------
// MEC warnings

std::vector<Warning> mec_warnings(const std::map<std::string, world::EntityState>& view,
                                  const world::EntityState& ego, const world::ScenarioMap& map, const Rsu& rsu,
                                  const std::vector<Zone>& zones, const MecConfig& cfg) {
  std::vector<Warning> out;
  if (std::hypot(ego.pose.x - rsu.position.x, ego.pose.y - rsu.position.y) > rsu.range) return out;
  const double hc = std::cos(ego.pose.heading), hs = std::sin(ego.pose.heading);

  for (const auto& [id, e] : view) {
    if (id == ego.id || e.kind != world::EntityKind::kPedestrian) continue;
    const double dx = e.pose.x - ego.pose.x, dy = e.pose.y - ego.pose.y;
    const double along = dx * hc + dy * hs;
    const double lateral = -dx * hs + dy * hc;
    if (along > 0.0 && along <= cfg.vru_ahead && std::abs(lateral) <= cfg.vru_lateral) {
      out.push_back({WarningKind::kVruAlert, ego.id, {e.pose.x, e.pose.y}, "pedestrian ahead: " + id, along});
    }
  }

  // Lanes ahead of the ego with the distance to their start.
  std::vector<std::pair<std::string, double>> ahead;
  if (!ego.lane.empty()) {
    double base = -ego.s;
    ahead.emplace_back(ego.lane, base);
    base += map.lane(ego.lane).length();
    for (std::size_t i = ego.route_index + 1; i < ego.route.size() && base < cfg.zone_lookahead; ++i) {
      ahead.emplace_back(ego.route[i], base);
      base += map.lane(ego.route[i]).length();
    }
  }
  auto on_path = [&](const std::string& lane) -> std::optional<double> {
    for (const auto& [l, b] : ahead) {
      if (l == lane) return b;
    }
    return std::nullopt;
  };

  for (const auto& cp : map.conflict_points) {
    if (!cp.occluded) continue;
    std::string other;
    if (on_path(cp.lane_a)) {
      other = cp.lane_b;
    } else if (on_path(cp.lane_b)) {
      other = cp.lane_a;
    } else {
      continue;
    }
    std::set<std::string> feeding{other};
    for (const auto& [lid, lane] : map.lanes) {
      if (std::find(lane.next.begin(), lane.next.end(), other) != lane.next.end()) feeding.insert(lid);
    }
    for (const auto& [id, e] : view) {
      if (id == ego.id || !world::is_vehicle(e.kind) || !feeding.count(e.lane)) continue;
      const auto t = adversary::ttc_2d(ego, e, cfg.nlos_ttc);
      if (t && *t < cfg.nlos_ttc) {
        out.push_back({WarningKind::kNlosHazard, ego.id, {e.pose.x, e.pose.y}, "hidden crossing vehicle: " + id, *t});
      }
    }
  }

  for (const auto& z : zones) {
    const auto base = on_path(z.lane);
    if (!base) continue;
    const double d = *base + z.s_from;
    if (d <= cfg.zone_lookahead && *base + z.s_to >= 0.0) {
      const world::Pose at = map.lane(z.lane).pose_at(z.s_from, 0.0);
      out.push_back({z.kind, ego.id, {at.x, at.y}, to_string(z.kind) + " zone ahead", std::max(d, 0.0)});
    }
  }
  return out;
}

json warning_to_json(const Warning& w) {
  return {{"kind", to_string(w.kind)},
          {"target", w.target},
          {"position", {w.position.x, w.position.y}},
          {"advisory", w.advisory},
          {"value", w.value}};
}

json spat_to_json(const Spat& s) {
  json phases = json::array();
  for (auto p : s.phase) phases.push_back(world::to_string(p));
  return {{"signal", s.signal}, {"phase", phases}, {"time_to_change", s.time_to_change}};
}

void to_json(json& j, const SignalPlan& p) {
  json cycle = json::array();
  for (const auto& st : p.cycle) {
    json phases = json::array();
    for (auto ph : st.phases) phases.push_back(world::to_string(ph));
    cycle.push_back({{"phases", phases}, {"duration", st.duration}});
  }
  j = json{{"signal", p.signal}, {"cycle", cycle}, {"offset", p.offset}};
}

void from_json(const json& j, SignalPlan& p) {
  p.signal = j.at("signal").get<std::string>();
  p.offset = j.value("offset", 0.0);
  p.cycle.clear();
  for (const auto& st : j.at("cycle")) {
    PhaseStep step;
    step.duration = st.at("duration").get<double>();
    for (const auto& ph : st.at("phases")) step.phases.push_back(world::phase_from_string(ph.get<std::string>()));
    p.cycle.push_back(step);
  }
  p.validate();
}

void to_json(json& j, const Zone& z) {
  j = json{{"kind", to_string(z.kind)}, {"lane", z.lane}, {"s_from", z.s_from}, {"s_to", z.s_to}};
}

void from_json(const json& j, Zone& z) {
  z.kind = warning_kind_from_string(j.at("kind").get<std::string>());
  z.lane = j.at("lane").get<std::string>();
  z.s_from = j.at("s_from").get<double>();
  z.s_to = j.at("s_to").get<double>();
}

void to_json(json& j, const CdaSession& s) {
  j = json{{"id", s.id},
           {"level", to_string(s.level)},
           {"participants", s.participants},
           {"start", s.start},
           {"end", s.end},
           {"state_rate_hz", s.state_rate_hz},
           {"latency_bound", s.latency_bound},
           {"conflict_entry", s.conflict_entry},
           {"commands", s.commands}};
}

void from_json(const json& j, CdaSession& s) {
  const CdaSession d;
  s.id = j.at("id").get<std::string>();
  s.level = cda_level_from_string(j.at("level").get<std::string>());
  s.participants = j.at("participants").get<std::vector<std::string>>();
  s.start = j.value("start", d.start);
  s.end = j.at("end").get<double>();
  s.state_rate_hz = j.value("state_rate_hz", d.state_rate_hz);
  s.latency_bound = j.value("latency_bound", d.latency_bound);
  s.conflict_entry = j.value("conflict_entry", std::map<std::string, double>{});
  s.commands = j.value("commands", std::vector<std::string>{});
  s.validate();
}

}  // namespace vpat::cooperation
