#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vpat/adversary.hpp"
#include "vpat/bus.hpp"
#include "vpat/cooperation.hpp"
#include "vpat/traffic.hpp"
#include "vpat/world.hpp"

namespace vpat::harness {

inline constexpr int kSpecVersion = 1;

enum class ControlSource { kInternalBaseline, kAutEndpoint, kConsole, kScripted };

std::string to_string(ControlSource c);
ControlSource control_source_from_string(const std::string& s);

/// Piecewise-constant acceleration from `at` onward.
struct ScriptStep {
  double at = 0.0;
  double accel = 0.0;
};

struct RosterEntry {
  world::EntityState initial;
  ControlSource control = ControlSource::kInternalBaseline;
  std::string adapter;  // aut-endpoint only
  bool vut = false;
  traffic::DriverConfig driver;
  traffic::DriverConfig manual;  // human continuation after a takeover
  std::vector<ScriptStep> script;
  bool v2v = false;      // broadcasts its state on the v2v channel every tick
  std::string session;   // tag for those broadcasts
  double range = 1000.0;  // rsu coverage
};

struct AdapterSpec {
  std::string id;
  std::string transport = "inproc";  // inproc | tcp
  std::string stub = "baseline";     // inproc policy name
  std::string host = "127.0.0.1";
  int port = 0;
  int deadline_ms = 50;
};

enum class EventType { kTakeover, kRelease, kSetIntensity, kSignal };

std::string to_string(EventType t);
EventType event_type_from_string(const std::string& s);

struct ScriptedEvent {
  double at = 0.0;
  EventType type = EventType::kTakeover;
  std::string vehicle;  // takeover / release
  std::string reason;
  double value = 0.0;   // set_intensity
  std::string signal;   // signal override
  std::vector<world::Phase> phases;
  double duration = 0.0;
};

/// Risk-driven physical/virtual split of candidate human-driven vehicles:
/// physical ones become hdv_twin, the rest remote_hdv.
struct Allocation {
  std::size_t budget = 0;
  std::vector<std::string> candidates;
};

struct ScenarioSpec {
  int version = kSpecVersion;
  std::string id;
  std::string map_ref;  // path as written; empty when the map is inline
  world::ScenarioMap map;
  nlohmann::json map_doc;
  double dt = world::kDefaultDt;
  double duration = 30.0;
  std::uint64_t seed = 0;
  world::ClockMode clock = world::ClockMode::kNtp;
  bool halt_on_collision = true;
  std::string algorithm = "baseline";
  std::string algorithm_version = "1";
  std::vector<RosterEntry> roster;
  std::vector<AdapterSpec> adapters;
  std::vector<traffic::FlowSpec> flows;
  std::vector<bus::ChannelConfig> channels;
  adversary::AdversaryConfig adversary;
  std::string adversary_vut;
  std::vector<cooperation::SignalPlan> signals;
  std::vector<cooperation::Zone> zones;
  std::vector<cooperation::CdaSession> sessions;
  std::vector<ScriptedEvent> events;
  std::optional<Allocation> allocation;
  double deduction_horizon = 30.0;
  double twin_noise = world::kDefaultTwinNoise;
  double rsu_interval = 1.0;  // SPAT / warning broadcast period

  std::vector<std::string> vuts() const;
  const RosterEntry& entry(const std::string& id) const;
  const RosterEntry* find(const std::string& id) const;
  const AdapterSpec& adapter(const std::string& id) const;
  std::int64_t duration_ticks() const;
  std::int64_t tick_of(double t) const;
};

/// `base_dir` resolves a map given by path. Errors name the offending field.
ScenarioSpec parse_scenario(const nlohmann::json& doc, const std::string& base_dir = ".");
ScenarioSpec parse_scenario_text(const std::string& text, const std::string& base_dir = ".");
ScenarioSpec load_scenario(const std::string& path);

/// Keeps the map reference as written.
nlohmann::json emit_scenario(const ScenarioSpec& spec);
/// Self-contained form (map inline) stored in log headers and hashed.
nlohmann::json canonical_scenario(const ScenarioSpec& spec);
std::string spec_hash(const ScenarioSpec& spec);

}  // namespace vpat::harness
