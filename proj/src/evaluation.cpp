#include "vpat/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "vpat/adversary.hpp"

namespace vpat::evaluation {

using nlohmann::json;
using runlog::RunLog;
using world::EntityState;

// ---------------------------------------------------------------------------
// Scheme

void Scheme::normalize() {
  if (dimensions.empty()) throw Error(ErrorCode::kScheme, "scheme declares no dimensions");
  std::map<std::string, double> sums;
  for (const auto& m : metrics) {
    if (std::find(dimensions.begin(), dimensions.end(), m.dimension) == dimensions.end()) {
      throw Error(ErrorCode::kScheme, "metric '" + m.name + "' uses undeclared dimension '" + m.dimension + "'");
    }
    if (m.worst == m.best) throw Error(ErrorCode::kScheme, "metric '" + m.name + "' has worst == best");
    if (!(m.weight >= 0.0)) throw Error(ErrorCode::kScheme, "metric '" + m.name + "' has a negative weight");
    if (!registry().count(m.extractor)) {
      throw Error(ErrorCode::kScheme, "metric '" + m.name + "' names unknown extractor '" + m.extractor + "'");
    }
    sums[m.dimension] += m.weight;
  }
  for (const auto& d : dimensions) {
    if (!(sums[d] > 0.0)) throw Error(ErrorCode::kScheme, "dimension '" + d + "' has no weighted metric");
  }
  for (auto& m : metrics) m.weight /= sums[m.dimension];
  for (const auto& [d, w] : dimension_weights) {
    if (std::find(dimensions.begin(), dimensions.end(), d) == dimensions.end() || !(w >= 0.0)) {
      throw Error(ErrorCode::kScheme, "bad dimension weight for '" + d + "'");
    }
  }
}

Scheme parse_scheme(const json& j) {
  if (j.value("version", 0) != 1) throw Error(ErrorCode::kVersion, "scheme version must be 1");
  Scheme s;
  s.name = j.value("name", std::string("custom"));
  s.dimensions = j.value("dimensions", kDimensions);
  s.dimension_weights = j.value("dimension_weights", std::map<std::string, double>{});
  for (const auto& mj : j.at("metrics")) {
    MetricSpec m;
    m.name = mj.at("name").get<std::string>();
    m.dimension = mj.at("dimension").get<std::string>();
    m.extractor = mj.value("extractor", m.name);
    m.worst = mj.at("worst").get<double>();
    m.best = mj.at("best").get<double>();
    m.weight = mj.value("weight", 1.0);
    s.metrics.push_back(m);
  }
  s.normalize();
  return s;
}

Scheme load_scheme(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  try {
    return parse_scheme(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, path + ": " + e.what());
  }
}

json scheme_to_json(const Scheme& s) {
  json metrics = json::array();
  for (const auto& m : s.metrics) {
    metrics.push_back({{"name", m.name},
                       {"dimension", m.dimension},
                       {"extractor", m.extractor},
                       {"worst", m.worst},
                       {"best", m.best},
                       {"weight", m.weight}});
  }
  json j = {{"version", 1}, {"name", s.name}, {"dimensions", s.dimensions}, {"metrics", metrics}};
  if (!s.dimension_weights.empty()) j["dimension_weights"] = s.dimension_weights;
  return j;
}

Scheme default_scheme() {
  Scheme s;
  s.name = "default";
  auto add = [&](const char* name, const char* dim, double worst, double best) {
    s.metrics.push_back({name, dim, name, worst, best, 1.0});
  };
  add("min_ttc", "safety", 0.0, 6.5);
  add("min_pet", "safety", 0.0, 5.0);
  add("collision", "safety", 1.0, 0.0);
  add("task_time", "efficiency", 60.0, 15.0);
  add("avg_speed_ratio", "efficiency", 0.0, 1.0);
  add("max_jerk", "comfort", 10.0, 0.0);
  add("max_decel", "comfort", 8.0, 0.0);
  add("speed_violation_share", "compliance", 0.2, 0.0);
  add("red_light_entries", "compliance", 1.0, 0.0);
  add("lane_marking_violation_share", "compliance", 0.2, 0.0);
  add("induced_decel", "coordination", 6.0, 0.0);
  add("yield_count", "coordination", 0.0, 2.0);
  s.normalize();
  return s;
}

double score_metric(double raw, const MetricSpec& spec) {
  if (spec.worst == spec.best) throw Error(ErrorCode::kScheme, "anchors must differ");
  return std::clamp(100.0 * (raw - spec.worst) / (spec.best - spec.worst), 0.0, 100.0);
}

// ---------------------------------------------------------------------------
// PET

PetResult pet(const Occupancy& a, const Occupancy& b) {
  if (a.enter <= b.exit && b.enter <= a.exit) return {0.0, true};
  const Occupancy& first = a.exit < b.exit ? a : b;
  const Occupancy& second = a.exit < b.exit ? b : a;
  return {second.enter - first.exit, false};
}

namespace {

bool inside(const EntityState& e, const world::ConflictPoint& cp) {
  if (e.lane == cp.lane_a) return std::abs(e.s - cp.s_a) <= cp.radius + 0.5 * e.length;
  if (e.lane == cp.lane_b) return std::abs(e.s - cp.s_b) <= cp.radius + 0.5 * e.length;
  return false;
}

}  // namespace

std::optional<Occupancy> occupancy(const RunLog& log, const world::ConflictPoint& cp, const std::string& id) {
  std::optional<Occupancy> occ;
  for (const auto& t : log.ticks) {
    auto it = t.entities.find(id);
    const bool in = it != t.entities.end() && inside(it->second, cp);
    if (in) {
      if (!occ) occ = Occupancy{t.t, t.t};
      else occ->exit = t.t;
    } else if (occ) {
      break;
    }
  }
  return occ;
}

PetResult pet(const RunLog& log, const world::ConflictPoint& cp, const std::string& a, const std::string& b) {
  const auto oa = occupancy(log, cp, a);
  const auto ob = occupancy(log, cp, b);
  if (!oa || !ob) throw Error(ErrorCode::kNotApplicable, "no joint traversal of '" + cp.id + "'");
  return pet(*oa, *ob);
}

PetResult pet(const RunLog& log, const world::ConflictPoint& cp, const std::string& vut) {
  const auto ov = occupancy(log, cp, vut);
  if (!ov) throw Error(ErrorCode::kNotApplicable, "'" + vut + "' never crosses '" + cp.id + "'");
  std::set<std::string> others;
  for (const auto& t : log.ticks) {
    for (const auto& [id, e] : t.entities) {
      if (id != vut && world::is_vehicle(e.kind)) others.insert(id);
    }
  }
  std::optional<PetResult> best;
  for (const auto& id : others) {
    const auto oo = occupancy(log, cp, id);
    if (!oo) continue;
    const PetResult r = pet(*ov, *oo);
    if (!best || r.value < best->value) best = r;
  }
  if (!best) throw Error(ErrorCode::kNotApplicable, "nobody else crosses '" + cp.id + "'");
  return *best;
}

// ---------------------------------------------------------------------------
// Extractors

namespace {

std::vector<const EntityState*> vut_track(const ExtractContext& c) {
  std::vector<const EntityState*> out;
  for (const auto& t : c.log.ticks) {
    if (auto it = t.entities.find(c.vut); it != t.entities.end()) out.push_back(&it->second);
  }
  return out;
}

double limit_for(const ExtractContext& c, const EntityState& e) {
  return e.lane.empty() ? std::numeric_limits<double>::infinity() : c.map.lane(e.lane).speed_limit;
}

std::optional<double> share(const ExtractContext& c, const std::function<bool(const EntityState&)>& pred) {
  const auto track = vut_track(c);
  if (track.empty()) return std::nullopt;
  std::size_t n = 0;
  for (const auto* e : track) n += pred(*e) ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(track.size());
}

std::map<std::string, Extractor> build_registry() {
  std::map<std::string, Extractor> r;
  r["min_ttc"] = [](const ExtractContext& c) -> std::optional<double> {
    const auto per_tick = runlog::tick_min_ttc(c.log, c.vut, adversary::kDefaultHorizon);
    if (per_tick.empty()) return std::nullopt;
    double best = adversary::kDefaultHorizon;
    for (const auto& t : per_tick) {
      if (t) best = std::min(best, *t);
    }
    return best;
  };
  r["hazard_fraction"] = [](const ExtractContext& c) -> std::optional<double> {
    const auto per_tick = runlog::tick_min_ttc(c.log, c.vut);
    if (per_tick.empty()) return std::nullopt;
    return adversary::hazard_fraction(per_tick);
  };
  r["min_pet"] = [](const ExtractContext& c) -> std::optional<double> {
    std::optional<double> best;
    for (const auto& cp : c.map.conflict_points) {
      try {
        const double v = pet(c.log, cp, c.vut).value;
        if (!best || v < *best) best = v;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNotApplicable) throw;
      }
    }
    return best;
  };
  r["collision"] = [](const ExtractContext& c) -> std::optional<double> {
    for (const auto& ev : c.log.events) {
      if (ev.type != "collision") continue;
      if (ev.data.value("a", "") == c.vut || ev.data.value("b", "") == c.vut) return 1.0;
    }
    for (const auto& t : c.log.ticks) {
      auto it = t.entities.find(c.vut);
      if (it == t.entities.end()) continue;
      for (const auto& [id, e] : t.entities) {
        if (id != c.vut && e.kind != world::EntityKind::kRsu && world::overlaps(it->second, e)) return 1.0;
      }
    }
    return 0.0;
  };
  r["task_time"] = [](const ExtractContext& c) -> std::optional<double> {
    if (c.log.ticks.empty()) return std::nullopt;
    const double t0 = c.log.ticks.front().t;
    for (const auto& t : c.log.ticks) {
      auto it = t.entities.find(c.vut);
      if (it != t.entities.end() && it->second.route_complete) return t.t - t0;
    }
    return std::nullopt;
  };
  r["avg_speed_ratio"] = [](const ExtractContext& c) -> std::optional<double> {
    const auto track = vut_track(c);
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto* e : track) {
      if (e->lane.empty()) continue;
      sum += e->speed / limit_for(c, *e);
      ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  r["max_jerk"] = [](const ExtractContext& c) -> std::optional<double> {
    const auto track = vut_track(c);
    if (track.size() < 2) return std::nullopt;
    double best = 0.0;
    for (std::size_t i = 1; i < track.size(); ++i) {
      best = std::max(best, std::abs(track[i]->accel - track[i - 1]->accel) / c.log.dt());
    }
    return best;
  };
  r["max_decel"] = [](const ExtractContext& c) -> std::optional<double> {
    const auto track = vut_track(c);
    if (track.empty()) return std::nullopt;
    double best = 0.0;
    for (const auto* e : track) best = std::max(best, -e->accel);
    return best;
  };
  r["speed_violation_share"] = [](const ExtractContext& c) {
    return share(c, [&](const EntityState& e) { return e.speed > limit_for(c, e) + 1e-9; });
  };
  r["lane_marking_violation_share"] = [](const ExtractContext& c) {
    return share(c, [&](const EntityState& e) {
      if (e.lane.empty()) return false;
      if (e.straddle != 0.0) return true;
      return !e.changing_lane() && std::abs(e.offset) > 0.5 * (c.map.lane(e.lane).width - e.width);
    });
  };
  r["red_light_entries"] = [](const ExtractContext& c) -> std::optional<double> {
    double count = 0.0;
    const EntityState* prev = nullptr;
    const runlog::TickRecord* prev_tick = nullptr;
    for (const auto& t : c.log.ticks) {
      auto it = t.entities.find(c.vut);
      if (it == t.entities.end()) continue;
      const EntityState* cur = &it->second;
      if (prev && prev->lane == cur->lane && !cur->lane.empty()) {
        const double f0 = prev->s + 0.5 * prev->length, f1 = cur->s + 0.5 * cur->length;
        for (const auto& head : c.map.signals) {
          if (head.lane != cur->lane || !(f0 <= head.s && head.s < f1)) continue;
          auto sig = prev_tick->signals.find(head.signal);
          if (sig != prev_tick->signals.end() && head.approach < sig->second.size() &&
              sig->second[head.approach] == world::Phase::kRed) {
            count += 1.0;
          }
        }
      }
      prev = cur;
      prev_tick = &t;
    }
    return count;
  };
  r["induced_decel"] = [](const ExtractContext& c) -> std::optional<double> {
    double best = 0.0;
    for (const auto& t : c.log.ticks) {
      auto it = t.entities.find(c.vut);
      if (it == t.entities.end() || it->second.lane.empty()) continue;
      const EntityState& v = it->second;
      const EntityState* follower = nullptr;
      for (const auto& [id, e] : t.entities) {
        if (id == c.vut || e.lane != v.lane || !world::is_vehicle(e.kind)) continue;
        if (e.s < v.s && v.s - e.s <= 50.0 && (!follower || e.s > follower->s)) follower = &e;
      }
      if (follower) best = std::max(best, -follower->accel);
    }
    return best;
  };
  r["yield_count"] = [](const ExtractContext& c) -> std::optional<double> {
    std::set<std::string> others;
    for (const auto& t : c.log.ticks) {
      for (const auto& [id, e] : t.entities) {
        if (id != c.vut && world::is_vehicle(e.kind)) others.insert(id);
      }
    }
    std::size_t interactions = 0;
    double yields = 0.0;
    for (const auto& cp : c.map.conflict_points) {
      const auto ov = occupancy(c.log, cp, c.vut);
      if (!ov) continue;
      for (const auto& id : others) {
        const auto oo = occupancy(c.log, cp, id);
        if (!oo) continue;
        // Only encounters close enough in time to have required a decision.
        if (std::abs(ov->enter - oo->enter) > 10.0) continue;
        ++interactions;
        if (oo->exit < ov->enter) yields += 1.0;
      }
    }
    if (interactions == 0) return std::nullopt;
    return yields;
  };
  return r;
}

}  // namespace

std::map<std::string, Extractor>& registry() {
  static std::map<std::string, Extractor> r = build_registry();
  return r;
}

// ---------------------------------------------------------------------------
// Reports

std::optional<double> EvaluationReport::raw(const std::string& metric) const {
  for (const auto& m : metrics) {
    if (m.name == metric) return m.raw;
  }
  return std::nullopt;
}

std::optional<double> EvaluationReport::metric_score(const std::string& metric) const {
  for (const auto& m : metrics) {
    if (m.name == metric) return m.score;
  }
  return std::nullopt;
}

EvaluationReport aggregate(const Scheme& scheme, const std::map<std::string, std::optional<double>>& raw) {
  EvaluationReport r;
  std::map<std::string, double> num, den;
  for (const auto& m : scheme.metrics) {
    MetricResult mr{m.name, m.dimension, std::nullopt, std::nullopt, m.weight};
    if (auto it = raw.find(m.name); it != raw.end() && it->second) {
      mr.raw = it->second;
      mr.score = score_metric(*mr.raw, m);
      num[m.dimension] += m.weight * *mr.score;
      den[m.dimension] += m.weight;
    }
    r.metrics.push_back(mr);
  }
  double total = 0.0, total_w = 0.0;
  for (const auto& d : scheme.dimensions) {
    const double w = scheme.dimension_weights.count(d) ? scheme.dimension_weights.at(d) : 1.0;
    r.dimension_weights[d] = w;
    if (den[d] > 0.0) {
      const double s = num[d] / den[d];
      r.dimension_scores[d] = s;
      total += w * s;
      total_w += w;
    } else {
      r.dimension_scores[d] = std::nullopt;
    }
  }
  r.overall = total_w > 0.0 ? total / total_w : 0.0;
  return r;
}

EvaluationReport evaluate(const RunLog& log, const Scheme& scheme, const std::string& vut_in) {
  std::string vut = vut_in;
  if (vut.empty()) {
    const auto v = log.vuts();
    if (v.empty()) throw Error(ErrorCode::kConfig, "log names no vehicle under test");
    vut = v.front();
  }
  const world::ScenarioMap map = log.map();
  const ExtractContext ctx{log, map, vut};
  std::map<std::string, std::optional<double>> raw;
  for (const auto& m : scheme.metrics) {
    auto it = registry().find(m.extractor);
    if (it == registry().end()) throw Error(ErrorCode::kScheme, "unknown extractor '" + m.extractor + "'");
    raw[m.name] = it->second(ctx);
  }
  EvaluationReport r = aggregate(scheme, raw);
  r.scenario_id = log.scenario_id();
  r.algorithm_id = log.algorithm_id();
  r.algorithm_version = log.algorithm_version();
  r.vut = vut;
  return r;
}

namespace {
json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
}  // namespace

json report_to_json(const EvaluationReport& r) {
  json dims = json::object();
  for (const auto& [d, s] : r.dimension_scores) dims[d] = opt(s);
  json metrics = json::array();
  for (const auto& m : r.metrics) {
    metrics.push_back({{"name", m.name}, {"dimension", m.dimension}, {"raw", opt(m.raw)}, {"score", opt(m.score)},
                       {"weight", m.weight}});
  }
  return {{"scenario_id", r.scenario_id},
          {"algorithm", r.algorithm_id},
          {"algorithm_version", r.algorithm_version},
          {"vut", r.vut},
          {"dimensions", dims},
          {"dimension_weights", r.dimension_weights},
          {"metrics", metrics},
          {"overall", r.overall},
          {"notes",
           "coordination = induced deceleration of the direct follower plus yields at conflict points; "
           "overall = weighted mean of applicable dimensions"}};
}

std::string render_report(const EvaluationReport& r) {
  std::ostringstream os;
  os << "Scenario " << r.scenario_id << "  algorithm " << r.algorithm_id;
  if (!r.algorithm_version.empty()) os << " " << r.algorithm_version;
  os << "  vehicle " << r.vut << "\n" << std::fixed << std::setprecision(1);
  for (const auto& [d, s] : r.dimension_scores) {
    os << "  " << std::left << std::setw(14) << d << std::right << std::setw(7);
    if (s) os << *s; else os << "n/a";
    os << "\n";
  }
  os << "  " << std::left << std::setw(14) << "overall" << std::right << std::setw(7) << r.overall << "\n";
  os << std::setprecision(3);
  for (const auto& m : r.metrics) {
    os << "    " << std::left << std::setw(30) << m.name << std::right << std::setw(10);
    if (m.raw) os << *m.raw; else os << "n/a";
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Comparison

RankingTable compare(const std::vector<EvaluationReport>& reports, Axis axis) {
  if (reports.empty()) throw Error(ErrorCode::kGrouping, "nothing to compare");
  for (const auto& r : reports) {
    if (axis == Axis::kHorizontal && r.scenario_id != reports.front().scenario_id) {
      throw Error(ErrorCode::kGrouping, "horizontal comparison needs one scenario");
    }
    if (axis == Axis::kVertical && r.algorithm_id != reports.front().algorithm_id) {
      throw Error(ErrorCode::kGrouping, "vertical comparison needs one algorithm");
    }
  }
  RankingTable t;
  t.axis = axis;
  for (const auto& [d, s] : reports.front().dimension_scores) t.columns.push_back(d);
  t.columns.push_back("overall");
  for (const auto& r : reports) {
    RankingRow row;
    if (axis == Axis::kHorizontal) {
      row.label = r.algorithm_id + (r.algorithm_version.empty() ? "" : " " + r.algorithm_version);
    } else {
      row.label = r.scenario_id;
    }
    for (const auto& c : t.columns) {
      if (c == "overall") {
        row.scores[c] = r.overall;
      } else {
        auto it = r.dimension_scores.find(c);
        row.scores[c] = it == r.dimension_scores.end() ? std::nullopt : it->second;
      }
    }
    t.rows.push_back(row);
  }
  for (const auto& c : t.columns) {
    std::optional<double> hi, lo;
    for (const auto& row : t.rows) {
      const auto& v = row.scores.at(c);
      if (!v) continue;
      if (!hi || *v > *hi) {
        hi = v;
        t.best[c] = row.label;
      }
      if (!lo || *v < *lo) {
        lo = v;
        t.worst[c] = row.label;
      }
    }
    for (auto& row : t.rows) {
      const auto& v = row.scores.at(c);
      if (!v) continue;
      int better = 0;
      for (const auto& other : t.rows) {
        const auto& o = other.scores.at(c);
        if (o && *o > *v) ++better;
      }
      row.rank[c] = better + 1;
      row.delta_to_best[c] = *hi - *v;
    }
  }
  return t;
}

std::string render_table(const RankingTable& t) {
  std::ostringstream os;
  os << (t.axis == Axis::kHorizontal ? "horizontal" : "vertical") << " comparison\n";
  os << std::left << std::setw(24) << "" << std::right;
  for (const auto& c : t.columns) os << std::setw(14) << c;
  os << "\n" << std::fixed << std::setprecision(1);
  for (const auto& row : t.rows) {
    os << std::left << std::setw(24) << row.label << std::right;
    for (const auto& c : t.columns) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(1);
      const auto& v = row.scores.at(c);
      if (v) {
        cell << *v << " #" << row.rank.at(c);
        if (t.best.at(c) == row.label) cell << "+";
        if (t.worst.at(c) == row.label) cell << "-";
      } else {
        cell << "n/a";
      }
      os << std::setw(14) << cell.str();
    }
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Diagnosis

std::vector<Rule> parse_rulebase(const json& j) {
  if (j.value("version", 0) != 1) throw Error(ErrorCode::kVersion, "rulebase version must be 1");
  std::vector<Rule> rules;
  static const std::set<std::string> kOps = {"<", "<=", ">", ">=", "==", "!="};
  for (const auto& rj : j.at("rules")) {
    Rule r;
    r.id = rj.at("id").get<std::string>();
    r.dimension = rj.at("dimension").get<std::string>();
    r.metric = rj.value("metric", std::string());
    r.severity = rj.value("severity", std::string("warning"));
    r.suggestion = rj.at("suggestion").get<std::string>();
    for (const auto& cj : rj.at("when")) {
      Condition c{cj.at("field").get<std::string>(), cj.at("op").get<std::string>(), cj.at("value").get<double>()};
      if (!kOps.count(c.op)) throw Error(ErrorCode::kSchema, "rule '" + r.id + "': unknown operator '" + c.op + "'");
      r.when.push_back(c);
    }
    if (r.when.empty()) throw Error(ErrorCode::kSchema, "rule '" + r.id + "' has no condition");
    rules.push_back(r);
  }
  return rules;
}

std::vector<Rule> load_rulebase(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  try {
    return parse_rulebase(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, path + ": " + e.what());
  }
}

std::vector<Rule> default_rulebase() {
  return {
      {"SAF-01", "safety", "min_ttc", "major",
       {{"score.safety", "<", 60.0}, {"raw.min_ttc", "<", 2.5}},
       "Short time-to-collision margins: review gap acceptance and following distance."},
      {"SAF-02", "safety", "collision", "critical", {{"raw.collision", ">=", 1.0}},
       "Collision recorded: inspect the last seconds before contact."},
      {"EFF-01", "efficiency", "avg_speed_ratio", "minor",
       {{"score.efficiency", "<", 60.0}, {"raw.avg_speed_ratio", "<", 0.5}},
       "Slow progress: the planner may be overly conservative at interactions."},
      {"COM-01", "comfort", "max_jerk", "minor", {{"raw.max_jerk", ">", 5.0}},
       "Harsh jerk: smooth the longitudinal control."},
      {"CMP-01", "compliance", "red_light_entries", "major", {{"raw.red_light_entries", ">=", 1.0}},
       "Entered on red: check signal handling and stop-line detection."},
      {"CMP-02", "compliance", "speed_violation_share", "minor", {{"raw.speed_violation_share", ">", 0.05}},
       "Speed above the limit: enforce the lane speed limit in planning."},
      {"CRD-01", "coordination", "induced_decel", "major", {{"raw.induced_decel", ">", 3.0}},
       "Followers brake hard behind the vehicle: avoid abrupt cut-ins and late braking."},
  };
}

std::optional<double> field_value(const EvaluationReport& r, const std::string& field) {
  if (field == "overall") return r.overall;
  const auto dot = field.find('.');
  if (dot == std::string::npos) return std::nullopt;
  const std::string head = field.substr(0, dot), tail = field.substr(dot + 1);
  if (head == "score") {
    auto it = r.dimension_scores.find(tail);
    return it == r.dimension_scores.end() ? std::nullopt : it->second;
  }
  if (head == "raw") return r.raw(tail);
  if (head == "metric_score") return r.metric_score(tail);
  return std::nullopt;
}

bool holds(const Condition& c, const EvaluationReport& r) {
  const auto v = field_value(r, c.field);
  if (!v) return false;
  if (c.op == "<") return *v < c.value;
  if (c.op == "<=") return *v <= c.value;
  if (c.op == ">") return *v > c.value;
  if (c.op == ">=") return *v >= c.value;
  if (c.op == "==") return *v == c.value;
  if (c.op == "!=") return *v != c.value;
  return false;
}

std::vector<Finding> diagnose(const EvaluationReport& report, const std::vector<Rule>& rulebase) {
  if (rulebase.empty()) throw Error(ErrorCode::kConfig, "empty rulebase");
  std::vector<Finding> out;
  for (const auto& rule : rulebase) {
    const bool fire = std::all_of(rule.when.begin(), rule.when.end(), [&](const Condition& c) { return holds(c, report); });
    if (fire) out.push_back({rule.dimension, rule.metric, rule.severity, rule.id, rule.suggestion});
  }
  return out;
}

json findings_to_json(const std::vector<Finding>& f) {
  json out = json::array();
  for (const auto& x : f) {
    out.push_back({{"dimension", x.dimension},
                   {"metric", x.metric},
                   {"severity", x.severity},
                   {"rule", x.rule_id},
                   {"suggestion", x.suggestion}});
  }
  return out;
}

std::string render_findings(const std::vector<Finding>& f) {
  std::ostringstream os;
  if (f.empty()) os << "No findings.\n";
  for (const auto& x : f) {
    os << "[" << x.severity << "] " << x.rule_id << " " << x.dimension << "/" << x.metric << ": " << x.suggestion
       << "\n";
  }
  return os.str();
}

}  // namespace vpat::evaluation
