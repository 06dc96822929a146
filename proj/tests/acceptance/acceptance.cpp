// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vpat/bus.hpp"
#include "vpat/cooperation.hpp"
#include "vpat/credibility.hpp"
#include "vpat/deduction.hpp"
#include "vpat/evaluation.hpp"
#include "vpat/runlog.hpp"
#include "vpat/scenario.hpp"
#include "vpat/sim.hpp"

namespace vc = vpat::credibility;
namespace h = vpat::harness;
namespace coop = vpat::cooperation;
namespace bus = vpat::bus;
namespace world = vpat::world;
using nlohmann::json;

namespace {

/// Collects failed checks; the criterion passes when none failed.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    failed_ += !ok;
  }
  void near(double got, double want, double tol, const std::string& what) {
    std::ostringstream s;
    s.precision(17);
    s << what << ": got " << got << ", want " << want << " +- " << tol;
    expect(std::abs(got - want) <= tol, s.str());
  }
  void note(const std::string& n) { notes_ += (notes_.empty() ? "" : "; ") + n; }

  bool ok() const { return failed_ == 0; }
  std::string summary() const {
    std::string s = std::to_string(checks_ - failed_) + "/" + std::to_string(checks_) + " checks";
    if (!notes_.empty()) s += "; " + notes_;
    for (const auto& f : failures_) s += "\n      " + f;
    return s;
  }

 private:
  int checks_ = 0;
  int failed_ = 0;
  std::vector<std::string> failures_;
  std::string notes_;
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

struct Criterion {
  std::string name;
  double budget_s;  // 0 when the criterion has no runtime bound
  std::function<void(Check&)> body;
};

// --- credibility --------------------------------------------------------------

void metric_identity(Check& c) {
  for (const char* name : {"car_following", "lane_change", "unprotected_left_turn", "roundabout",
                           "unsignalized_intersection", "merge"}) {
    const auto m = vpat::runlog::extract_series(h::run(fixture::scenario(name)));
    const auto r = vc::assess(m, m);
    const std::string n(name);
    c.near(r.metrics.pcc, 1.0, 1e-9, n + " pcc");
    c.near(r.metrics.rmse, 0.0, 1e-12, n + " rmse");
    c.near(r.metrics.tic, 0.0, 1e-12, n + " tic");
    c.near(r.metrics.cs_psd, 1.0, 1e-9, n + " cs_psd");
    c.expect(r.metrics.cross_fuzzy_en <= 0.05, n + " cross_fuzzy_en = " + fmt(r.metrics.cross_fuzzy_en));
  }
}

void oracle_equivalence(Check& c) {
  vpat::Rng rng(2024);
  double worst = 0.0, worst_fe = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    // 8 samples is the shortest series cs_psd accepts.
    const std::size_t n = 8 + rng.index(25);  // 8..32
    const auto a = fixture::random_series(rng, n, -2.0, 2.0);
    const auto b = fixture::random_series(rng, n, -2.0, 2.0);
    const auto b2 = fixture::random_series(rng, 1 + rng.index(32), -2.0, 2.0);
    const std::string t = "trial " + std::to_string(trial);
    auto cmp = [&](double got, double want, const char* what) {
      worst = std::max(worst, std::abs(got - want));
      c.near(got, want, 1e-9, t + " " + what);
    };
    cmp(vc::dtw_align(a, b2).distance, oracle::dtw(oracle::as_rows(a), oracle::as_rows(b2)), "dtw");
    cmp(vc::pcc(a, b), oracle::pcc(a, b), "pcc");
    cmp(vc::rmse(a, b), oracle::rmse(a, b), "rmse");
    cmp(vc::tic(a, b), oracle::tic(a, b), "tic");
    cmp(vc::cs_psd(a, b), oracle::cs_psd(a, b), "cs_psd");
    const double fe = vc::cross_fuzzy_en(a, b), fe_ref = oracle::cross_fuzzy_en(a, b);
    worst_fe = std::max(worst_fe, std::abs(fe - fe_ref));
    c.near(fe, fe_ref, 1e-6, t + " cross_fuzzy_en");
  }
  c.note("max |diff| " + fmt(worst, 2) + ", fuzzy " + fmt(worst_fe, 2));
}

void pca_suite(Check& c) {
  vpat::Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + rng.index(5);
    std::vector<std::vector<double>> rows(d + 3 + rng.index(40));
    for (auto& r : rows) r = fixture::random_series(rng, d, -5.0, 5.0);
    const auto p = vc::pca_reduce(rows, d);
    const std::string t = "trial " + std::to_string(trial);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) dot += p.components[i][k] * p.components[j][k];
        c.near(dot, i == j ? 1.0 : 0.0, 1e-9, t + " orthonormality");
      }
    }
    double sum = 0.0;
    for (double l : p.explained_variance) sum += l;
    double trace = 0.0;
    const auto cov = oracle::covariance(rows);
    for (std::size_t i = 0; i < d; ++i) trace += cov[i][i];
    c.near(sum, trace, 1e-9, t + " eigenvalue sum vs covariance trace");
    c.near(p.total_variance, trace, 1e-9, t + " total variance");
    const auto rec = p.reconstruct();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t k = 0; k < d; ++k) c.near(rec[i][k], rows[i][k], 1e-9, t + " reconstruction");
    }
  }
  // Points on an offset line along a random unit direction.
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + rng.index(4);
    auto dir = fixture::random_series(rng, d);
    double norm = 0.0;
    for (double v : dir) norm += v * v;
    norm = std::sqrt(norm);
    std::size_t big = 0;
    for (std::size_t k = 0; k < d; ++k) {
      dir[k] /= norm;
      if (std::abs(dir[k]) > std::abs(dir[big])) big = k;
    }
    if (dir[big] < 0) {
      for (double& v : dir) v = -v;
    }
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 30; ++i) {
      const double s = rng.uniform(-10.0, 10.0);
      std::vector<double> r(d);
      for (std::size_t k = 0; k < d; ++k) r[k] = 1.0 + s * dir[k];
      rows.push_back(r);
    }
    const auto p = vc::pca_reduce(rows, 1);
    for (std::size_t k = 0; k < d; ++k) c.near(p.components[0][k], dir[k], 1e-9, "line direction");
  }
}

/// Fusion copy of `real`: each channel gets eps * sd(channel) times a fixed
/// smooth unit-RMS noise signal.
vc::SeriesMatrix perturb(const vc::SeriesMatrix& real, double eps) {
  vc::SeriesMatrix f = real;
  vpat::Rng rng(4242);
  const std::size_t n = real.rows.size();
  for (std::size_t col = 0; col < real.cols(); ++col) {
    const auto x = real.column(col);
    const double mu = oracle::mean(x);
    double var = 0.0;
    for (double v : x) var += (v - mu) * (v - mu);
    const double sd = std::sqrt(var / static_cast<double>(n));
    std::vector<double> noise(n, 0.0);
    for (int j = 0; j < 3; ++j) {
      const double freq = rng.uniform(0.05, 0.5), phase = rng.uniform(0.0, 2.0 * M_PI);
      for (std::size_t k = 0; k < n; ++k) noise[k] += std::sin(2.0 * M_PI * freq * real.dt * static_cast<double>(k) + phase);
    }
    double rms = 0.0;
    for (double v : noise) rms += v * v;
    rms = std::sqrt(rms / static_cast<double>(n));
    for (std::size_t k = 0; k < n; ++k) f.rows[k][col] += eps * sd * noise[k] / rms;
  }
  return f;
}

void degradation(Check& c) {
  for (const char* name : {"car_following", "lane_change", "roundabout"}) {
    const auto real = vpat::runlog::extract_series(h::run(fixture::scenario(name)));
    std::vector<vc::Metrics> ms;
    for (double eps : {0.0, 0.1, 0.3}) ms.push_back(vc::assess(real, perturb(real, eps)).metrics);
    const std::string n(name);
    for (std::size_t i = 1; i < ms.size(); ++i) {
      c.expect(ms[i].pcc <= ms[i - 1].pcc, n + " pcc rises: " + fmt(ms[i - 1].pcc, 8) + " -> " + fmt(ms[i].pcc, 8));
      c.expect(ms[i].rmse >= ms[i - 1].rmse, n + " rmse falls: " + fmt(ms[i - 1].rmse) + " -> " + fmt(ms[i].rmse));
      c.expect(ms[i].tic >= ms[i - 1].tic, n + " tic falls: " + fmt(ms[i - 1].tic) + " -> " + fmt(ms[i].tic));
    }
    const auto m5 = vc::assess(real, perturb(real, 0.05)).metrics;
    c.expect(m5.pcc >= 0.98, n + " pcc at 0.05 = " + fmt(m5.pcc));
    c.expect(m5.tic <= 0.11, n + " tic at 0.05 = " + fmt(m5.tic));
    c.note(n + " eps=0.05: pcc " + fmt(m5.pcc) + " tic " + fmt(m5.tic) + "; eps=0.3: pcc " + fmt(ms[2].pcc) + " tic " +
           fmt(ms[2].tic));
  }
}

// --- adversary ----------------------------------------------------------------

void adversarial_ab(Check& c) {
  const auto base = fixture::scenario("merge");
  double on = 0.0, off = 0.0;
  for (int i = 0; i < 20; ++i) {
    h::RunOptions o;
    o.seed = base.seed + static_cast<std::uint64_t>(i);
    auto with = base;
    auto without = base;
    without.adversary.enabled = false;
    on += vpat::runlog::hazard_fraction(h::run(with, o), "vut");
    off += vpat::runlog::hazard_fraction(h::run(without, o), "vut");
  }
  on /= 20.0;
  off /= 20.0;
  c.expect(on > off, "hazard fraction on " + fmt(on) + " <= off " + fmt(off));
  c.note("mean hazard fraction off " + fmt(100 * off, 3) + "% -> on " + fmt(100 * on, 3) + "%");
}

// --- harness ------------------------------------------------------------------

void determinism(Check& c) {
  for (const char* name : {"car_following", "lane_change", "unprotected_left_turn", "roundabout",
                           "unsignalized_intersection"}) {
    const auto spec = fixture::scenario(name);
    const auto a = h::run(spec), b = h::run(spec);
    c.expect(a.text == b.text, std::string(name) + " logs differ");
    c.expect(vpat::runlog::fnv1a_hex(a.text) == vpat::runlog::fnv1a_hex(b.text), std::string(name) + " hashes differ");
    c.expect(a.ticks.size() > 10, std::string(name) + " log too short");
  }
}

std::vector<std::string> tick_lines(const std::string& text, std::int64_t from, std::int64_t to) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) {
    const json j = json::parse(l);
    if (!j.contains("tick")) continue;
    const auto t = j["tick"].get<std::int64_t>();
    if (t >= from && t < to) out.push_back(l);
  }
  return out;
}

void fork_soundness(Check& c) {
  const auto spec = fixture::scenario("takeover_fork");
  auto unforked_spec = spec;
  unforked_spec.events.clear();
  const std::string unforked = h::run(unforked_spec).text;

  h::Simulation sim(spec);
  sim.run();
  c.expect(sim.deductions().size() == 1, "expected one deduction request");
  if (sim.deductions().empty()) return;
  const auto& req = sim.deductions()[0];
  const auto same = h::run_deduction(spec, req, h::original_controller(spec, "vut"), spec.deduction_horizon);
  const auto end = req.snapshot.tick + spec.tick_of(spec.deduction_horizon);
  const auto branch = tick_lines(same.branch_log.text, req.snapshot.tick, end);
  c.expect(!branch.empty(), "empty branch");
  c.expect(branch == tick_lines(unforked, req.snapshot.tick, end), "branch differs from the unforked run");
  c.note(std::to_string(branch.size()) + " records bit-identical from tick " + std::to_string(req.snapshot.tick));

  auto stub = [&](const char* name) {
    return h::run_deduction(spec, req, std::make_unique<vpat::aut::InprocAdapter>(vpat::aut::make_stub(name)),
                            spec.deduction_horizon);
  };
  const auto collide = stub("always-collide");
  c.expect(collide.outcome == h::Outcome::kIncapable, "always-collide -> " + h::to_string(collide.outcome));
  const auto complete = stub("always-complete");
  c.expect(complete.outcome == h::Outcome::kCapable, "always-complete -> " + h::to_string(complete.outcome));
}

// --- bus and clocks -------------------------------------------------------------

bus::MessageEnvelope envelope(const std::string& channel, const std::string& sender) {
  bus::MessageEnvelope e;
  e.channel = channel;
  e.sender = sender;
  return e;
}

void bus_contract(Check& c) {
  {
    bus::MessageBus b;
    auto cfg = bus::rsu_default();
    cfg.jitter = 0.5;
    b.add_channel(cfg);
    vpat::Rng rng(99);
    std::map<std::string, std::uint64_t> last;
    std::size_t delivered = 0, inversions = 0;
    auto take = [&](const std::vector<bus::MessageEnvelope>& out) {
      for (const auto& e : out) {
        inversions += e.seq <= last[e.sender];
        last[e.sender] = e.seq;
        ++delivered;
      }
    };
    for (int t = 0; t < 2500; ++t) {
      for (const char* s : {"a", "b", "c", "d"}) b.publish(envelope("rsu", s), 0.1 * t, {}, rng);
      take(b.deliver_due(0.1 * t));
    }
    take(b.deliver_due(1e9));
    c.expect(delivered == 10000, "delivered " + std::to_string(delivered) + " of 10000");
    c.expect(inversions == 0, std::to_string(inversions) + " FIFO inversions");
  }
  {
    world::WorldState w;
    w.entities["tx"] = fixture::vehicle("tx", 0, 0, 0, 0);
    w.entities["at"] = fixture::vehicle("at", 1000.0, 0, 0, 0);
    w.entities["past"] = fixture::vehicle("past", 1000.0 + 1e-6, 0, 0, 0);
    w.entities["diag"] = fixture::vehicle("diag", 600.0, 800.0, 0, 0);
    w.entities["diag_past"] = fixture::vehicle("diag_past", 600.0, 800.0 + 1e-6, 0, 0);
    auto e = envelope("rsu", "tx");
    const auto r = bus::receivers(e, bus::rsu_default(), w);
    c.expect(r == std::vector<std::string>{"at", "diag"}, "range cut-off at 1000 m");
  }
  {
    bus::MessageBus b;
    b.add_channel(bus::rsu_default());
    vpat::Rng rng(5);
    std::vector<bus::MessageEnvelope> all;
    for (int t = 0; t < 10000; ++t) {
      b.publish(envelope("rsu", "r" + std::to_string(t % 3)), 0.1 * t, {}, rng);
      for (auto& e : b.deliver_due(0.1 * t)) all.push_back(std::move(e));
    }
    for (auto& e : b.deliver_due(1e9)) all.push_back(std::move(e));
    const auto st = bus::latency_stats(all);
    c.expect(st.max <= 0.2, "max latency " + fmt(st.max));
    c.note("RSU latency max " + fmt(1000 * st.max) + " ms, mean " + fmt(1000 * st.mean) + " ms");
  }
}

void clock_bounds(Check& c) {
  const std::pair<world::ClockMode, double> modes[] = {
      {world::ClockMode::kNtp, 10e-3}, {world::ClockMode::kPtp, 50e-9}, {world::ClockMode::kGnss, 10e-9}};
  vpat::Rng rng(17);
  for (const auto& [mode, bound] : modes) {
    auto m = world::ClockModel::for_mode(mode);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) worst = std::max(worst, std::abs(world::sample_clock_offset(m, rng)));
    c.expect(worst <= bound, world::to_string(mode) + " offset " + fmt(worst) + " exceeds " + fmt(bound));
  }
}

// --- cooperation ----------------------------------------------------------------

coop::SignalPlan plan(std::vector<std::pair<world::Phase, double>> steps, double offset) {
  coop::SignalPlan p;
  p.signal = "sig";
  p.offset = offset;
  for (auto [ph, d] : steps) p.cycle.push_back({{ph}, d});
  return p;
}

void glosa(Check& c) {
  vpat::Rng rng(500);
  int advised = 0, stops = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto p = plan({{world::Phase::kGreen, rng.uniform(5, 40)}, {world::Phase::kYellow, rng.uniform(2, 4)},
                         {world::Phase::kRed, rng.uniform(5, 50)}},
                        rng.uniform(0, 90));
    const double now = rng.uniform(0, 200), dist = rng.uniform(5, 600);
    const double v_min = rng.uniform(0, 6), v_max = rng.uniform(v_min + 0.5, 22);
    const auto a = coop::glosa_advice(dist, coop::spat_at(p, now), v_min, v_max);
    if (a.stop) {
      ++stops;
      continue;
    }
    ++advised;
    const std::string t = "trial " + std::to_string(trial);
    c.expect(a.speed >= v_min && a.speed <= v_max, t + " speed outside band");
    const double arrive = now + dist / a.speed;
    for (double eps : {-1e-6, 0.0, 1e-6}) {
      c.expect(coop::spat_at(p, arrive + eps).phase[0] == world::Phase::kGreen, t + " arrival not strictly in green");
    }
  }
  c.note(std::to_string(advised) + " speed advisories, " + std::to_string(stops) + " stop advisories");
}

bus::MessageEnvelope cda_msg(const std::string& sender, bus::PayloadType type, double sent, double delivered,
                             json body = json::object()) {
  bus::MessageEnvelope e;
  e.channel = "v2v";
  e.sender = sender;
  e.type = type;
  e.send_sim = e.send_ts = sent;
  e.deliver_ts = delivered;
  body["session"] = "s1";
  e.body = body;
  return e;
}

coop::CdaSession cda_session(coop::CdaLevel level) {
  coop::CdaSession s;
  s.id = "s1";
  s.level = level;
  s.participants = {"A", "B"};
  s.start = 0.0;
  s.end = 2.0;
  return s;
}

void cda(Check& c) {
  using PT = bus::PayloadType;
  auto verdict = [&](const std::vector<bus::MessageEnvelope>& trace, const coop::CdaSession& s) {
    return coop::validate_cda_session(trace, s).pass;
  };
  // Level 1: 10 Hz state sharing.
  auto states = [](double latency, bool gap) {
    std::vector<bus::MessageEnvelope> t;
    for (int k = 0; k <= 20; ++k) {
      for (const char* s : {"A", "B"}) {
        if (gap && std::string(s) == "B" && k > 4 && k < 11) continue;
        t.push_back(cda_msg(s, PT::kStateShare, 0.1 * k, 0.1 * k + latency));
      }
    }
    return t;
  };
  const auto l1 = cda_session(coop::CdaLevel::kStateSharing);
  c.expect(verdict(states(0.05, false), l1), "state sharing pass trace rejected");
  c.expect(!verdict(states(0.05, true), l1), "state sharing gap accepted");
  c.expect(!verdict(states(0.35, false), l1), "state sharing latency accepted");

  // Level 2: intents delivered before the other party reaches the conflict.
  auto l2 = cda_session(coop::CdaLevel::kIntentSharing);
  l2.conflict_entry = {{"A", 1.5}, {"B", 1.8}};
  c.expect(verdict({cda_msg("A", PT::kIntentShare, 0.5, 0.6), cda_msg("B", PT::kIntentShare, 0.5, 0.6)}, l2),
           "intent pass trace rejected");
  c.expect(!verdict({cda_msg("A", PT::kIntentShare, 0.5, 0.6), cda_msg("B", PT::kIntentShare, 1.4, 1.6)}, l2),
           "late intent accepted");

  // Level 3: proposals must agree on an order.
  const auto l3 = cda_session(coop::CdaLevel::kCoopDecision);
  c.expect(verdict({cda_msg("A", PT::kDecisionProposal, 0.1, 0.2, {{"order", {"A", "B"}}}),
                    cda_msg("B", PT::kDecisionProposal, 0.1, 0.2, {{"order", {"A", "B"}}})},
                   l3),
           "agreeing proposals rejected");
  c.expect(!verdict({cda_msg("A", PT::kDecisionProposal, 0.1, 0.2, {{"order", {"A", "B"}}}),
                     cda_msg("B", PT::kDecisionProposal, 0.1, 0.2, {{"order", {"B", "A"}}})},
                    l3),
           "cyclic proposals accepted");

  // Level 4: commands acknowledged by their target before they expire.
  auto l4 = cda_session(coop::CdaLevel::kCoopControl);
  l4.commands = {"c1"};
  const json cmd{{"command_id", "c1"}, {"target", "B"}, {"valid_until", 0.5}};
  const json ack{{"command_id", "c1"}, {"ack", true}};
  c.expect(verdict({cda_msg("A", PT::kControlCommand, 0.1, 0.15, cmd), cda_msg("B", PT::kControlCommand, 0.2, 0.25, ack)}, l4),
           "acknowledged command rejected");
  c.expect(!verdict({cda_msg("A", PT::kControlCommand, 0.1, 0.15, cmd), cda_msg("B", PT::kControlCommand, 0.5, 0.6, ack)}, l4),
           "late acknowledgement accepted");

  // Consensus against a brute-force cycle check.
  vpat::Rng rng(606);
  const std::vector<std::string> ids{"A", "B", "C", "D", "E", "F"};
  int agreed = 0, total = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.index(5);
    std::vector<coop::DecisionProposal> props;
    std::vector<std::vector<std::string>> orders;
    for (std::size_t p = 0; p < n; ++p) {
      std::vector<std::string> order;
      for (std::size_t k = 0; k < 2 + rng.index(3); ++k) {
        const auto& id = ids[rng.index(n)];
        if (std::find(order.begin(), order.end(), id) == order.end()) order.push_back(id);
      }
      props.push_back({ids[p], order});
      orders.push_back(order);
    }
    const bool got = coop::consensus_check(props).agreed;
    c.expect(got == oracle::precedences_consistent(orders), "consensus trial " + std::to_string(trial));
    agreed += got;
    ++total;
  }
  c.note(std::to_string(agreed) + "/" + std::to_string(total) + " intent sets agree");
}

// --- evaluation -----------------------------------------------------------------

void evaluation(Check& c) {
  namespace ev = vpat::evaluation;
  const auto log = fixture::profile_log();
  const auto base = ev::evaluate(log, ev::default_scheme());
  auto dim = [&](const char* d) { return base.dimension_scores.at(d).value_or(-1.0); };
  c.expect(dim("compliance") > 80.0, "compliance " + fmt(dim("compliance")));
  c.expect(dim("comfort") > 80.0, "comfort " + fmt(dim("comfort")));
  for (const char* d : {"safety", "efficiency", "coordination"}) {
    c.expect(dim(d) >= 0.0 && dim(d) < 60.0, std::string(d) + " " + fmt(dim(d)));
  }
  c.note("scores: compliance " + fmt(dim("compliance"), 3) + ", comfort " + fmt(dim("comfort"), 3) + ", safety " +
         fmt(dim("safety"), 3) + ", efficiency " + fmt(dim("efficiency"), 3) + ", coordination " +
         fmt(dim("coordination"), 3));

  const json j = ev::scheme_to_json(ev::default_scheme());
  vpat::Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto scaled = j;
    const double k = rng.uniform(0.01, 100.0);
    for (auto& m : scaled["metrics"]) m["weight"] = m["weight"].get<double>() * k;
    // The default scheme weighs dimensions equally.
    for (const auto& d : ev::kDimensions) scaled["dimension_weights"][d] = k;
    const auto r = ev::evaluate(log, ev::parse_scheme(scaled));
    for (const auto& [d, s] : base.dimension_scores) {
      const auto& o = r.dimension_scores.at(d);
      c.expect(s.has_value() == o.has_value(), d + " availability changed");
      if (s && o) c.near(*o, *s, 1e-9, d + " after scaling by " + fmt(k));
    }
    c.near(r.overall, base.overall, 1e-9, "overall after scaling by " + fmt(k));
  }
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"metric identity", 5.0, metric_identity},
      {"oracle equivalence", 30.0, oracle_equivalence},
      {"pca suite", 0.0, pca_suite},
      {"credibility degradation ordering", 0.0, degradation},
      {"adversarial a/b", 120.0, adversarial_ab},
      {"determinism", 0.0, determinism},
      {"deduction fork soundness", 0.0, fork_soundness},
      {"bus contract", 0.0, bus_contract},
      {"clock bounds", 0.0, clock_bounds},
      {"glosa", 0.0, glosa},
      {"cda validation", 0.0, cda},
      {"evaluation profile", 0.0, evaluation},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.body(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cr.budget_s > 0.0) c.expect(secs < cr.budget_s, "runtime " + fmt(secs) + " s over " + fmt(cr.budget_s) + " s");
    const bool ok = c.ok();
    failed += !ok;
    std::printf("%s  %-34s %7.2fs  %s\n", ok ? "PASS" : "FAIL", cr.name.c_str(), secs, c.summary().c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
