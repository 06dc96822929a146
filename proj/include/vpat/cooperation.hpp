#pragma once

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vpat/bus.hpp"
#include "vpat/world.hpp"

namespace vpat::cooperation {

// --- CDA sessions ----------------------------------------------------------

enum class CdaLevel { kStateSharing, kIntentSharing, kCoopDecision, kCoopControl };

std::string to_string(CdaLevel l);
CdaLevel cda_level_from_string(const std::string& s);

/// What a session promises; the trace is checked against it. Every
/// requirement is declared up front so that losing messages can only add
/// violations.
struct CdaSession {
  std::string id;
  CdaLevel level = CdaLevel::kStateSharing;
  std::vector<std::string> participants;
  double start = 0.0;  // sim-time window the session covers
  double end = 0.0;
  double state_rate_hz = 10.0;
  double latency_bound = 0.2;
  std::map<std::string, double> conflict_entry;  // participant -> time it enters the conflict zone
  std::vector<std::string> commands;             // command ids that must be acknowledged

  void validate() const;
};

struct Violation {
  std::string rule;
  std::string subject;
  std::string detail;
};

struct SessionVerdict {
  bool pass = true;
  std::vector<Violation> violations;
  std::vector<std::string> cycle;  // coop_decision evidence
};

/// Messages belong to a session through body["session"].
SessionVerdict validate_cda_session(const std::vector<bus::MessageEnvelope>& trace, const CdaSession& session);
SessionVerdict validate_cda_session(const std::vector<bus::MessageEnvelope>& trace,
                                    const std::map<std::string, CdaSession>& sessions, const std::string& session_id);

struct DecisionProposal {
  std::string proposer;
  std::vector<std::string> order;  // each entry goes before the next
};

struct Consensus {
  bool agreed = false;
  std::vector<std::string> order;     // topological order when agreed
  std::vector<std::string> conflict;  // nodes of a shortest precedence cycle otherwise
};

/// Kahn's algorithm over the union of proposed precedences; ready nodes are
/// taken in lexicographic order.
Consensus consensus_check(const std::vector<DecisionProposal>& proposals);

// --- Signals ---------------------------------------------------------------

struct PhaseStep {
  std::vector<world::Phase> phases;  // one per approach
  double duration = 0.0;
};

struct SignalPlan {
  std::string signal;
  std::vector<PhaseStep> cycle;
  double offset = 0.0;  // cycle position at t = 0

  double cycle_length() const;
  void validate() const;
};

struct Spat {
  std::string signal;
  std::vector<world::Phase> phase;
  double time_to_change = 0.0;
  std::vector<PhaseStep> cycle;
  std::size_t step = 0;
  double cycle_pos = 0.0;  // seconds into the cycle
};

Spat spat_at(const SignalPlan& plan, double now);
/// Advances by dt, wrapping around the cycle.
Spat spat_next(const Spat& s, double dt);

void to_json(nlohmann::json& j, const SignalPlan& p);
void from_json(const nlohmann::json& j, SignalPlan& p);
nlohmann::json spat_to_json(const Spat& s);

struct GlosaAdvice {
  bool stop = false;
  double speed = 0.0;    // advised constant speed when !stop
  double arrival = 0.0;  // seconds from now at that speed
};

/// Highest legal constant speed that reaches the stop line strictly inside
/// a green interval, looking up to three cycles ahead.
GlosaAdvice glosa_advice(double dist, const Spat& spat, double v_min, double v_max, std::size_t approach = 0);

/// Green intervals [start, end) relative to now for one approach.
std::vector<std::pair<double, double>> green_windows(const Spat& spat, std::size_t approach, int cycles = 3);

// --- MEC warnings ----------------------------------------------------------

enum class WarningKind { kConstruction, kVruAlert, kNlosHazard, kCongestion, kGreenWave };

std::string to_string(WarningKind k);
WarningKind warning_kind_from_string(const std::string& s);

struct Warning {
  WarningKind kind = WarningKind::kVruAlert;
  std::string target;
  world::Vec2 position;
  std::string advisory;
  double value = 0.0;
};

nlohmann::json warning_to_json(const Warning& w);

struct Zone {
  WarningKind kind = WarningKind::kConstruction;
  std::string lane;
  double s_from = 0.0;
  double s_to = 0.0;
};

struct Rsu {
  std::string id;
  world::Vec2 position;
  double range = 1000.0;
};

struct MecConfig {
  double vru_ahead = 50.0;
  double vru_lateral = 2.5;
  double nlos_ttc = 6.0;
  double zone_lookahead = 200.0;
};

std::vector<Warning> mec_warnings(const std::map<std::string, world::EntityState>& view,
                                  const world::EntityState& ego, const world::ScenarioMap& map, const Rsu& rsu,
                                  const std::vector<Zone>& zones, const MecConfig& cfg = {});

void to_json(nlohmann::json& j, const Zone& z);
void from_json(const nlohmann::json& j, Zone& z);
void to_json(nlohmann::json& j, const CdaSession& s);
void from_json(const nlohmann::json& j, CdaSession& s);

}  // namespace vpat::cooperation
