#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vpat/adversary.hpp"
#include "vpat/aut.hpp"
#include "vpat/bus.hpp"
#include "vpat/runlog.hpp"
#include "vpat/scenario.hpp"
#include "vpat/traffic.hpp"
#include "vpat/world.hpp"

namespace vpat::harness {

enum class Initiator { kOperator, kScripted };
std::string to_string(Initiator i);

struct TakeoverEvent {
  std::string vehicle;
  std::int64_t tick = 0;
  Initiator initiator = Initiator::kScripted;
  std::string reason;
};

struct SignalOverride {
  double until = 0.0;
  std::vector<world::Phase> phases;
};

/// Everything the tick loop mutates. Copying it forks the run.
struct SimState {
  world::WorldState world;
  bus::MessageBus bus;
  traffic::FlowModel flow;
  adversary::Adversary adversary;
  std::map<std::string, world::EntityState> view;  // what the platform knows
  std::map<std::string, world::Control> held;      // last good AUT control
  std::map<std::string, double> clock_offsets;
  std::map<std::string, std::vector<bus::MessageEnvelope>> inbox;  // undelivered-to-AUT messages
  std::map<std::string, SignalOverride> overrides;
  std::set<std::pair<std::string, std::string>> contacts;  // overlapping pairs
  bool halt = false;
  std::uint64_t aut_faults = 0;
};

/// Taken at a tick boundary, before that tick's events are applied.
struct Snapshot {
  std::int64_t tick = 0;
  SimState state;
};

nlohmann::json snapshot_to_json(const Snapshot& s);
Snapshot snapshot_from_json(const nlohmann::json& j, const ScenarioSpec& spec);

using AdapterFactory = std::function<std::unique_ptr<aut::Adapter>(const AdapterSpec&, const std::string& vehicle)>;

/// inproc -> stub policy, tcp -> connection to host:port.
std::unique_ptr<aut::Adapter> make_adapter(const AdapterSpec& spec, const std::string& vehicle);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<bool> halt_on_collision;
  AdapterFactory factory;  // make_adapter when empty
};

enum class CommandKind { kTakeover, kRelease, kSetIntensity, kPause, kResume };
std::string to_string(CommandKind k);
CommandKind command_kind_from_string(const std::string& s);

/// External input, applied at the next tick boundary. `reply` receives an
/// ack or nack object.
struct Command {
  CommandKind kind = CommandKind::kPause;
  std::string vehicle;
  double value = 0.0;
  std::string reason;
  std::string id;
  std::function<void(const nlohmann::json&)> reply;
};

struct DeductionRequest {
  TakeoverEvent event;
  Snapshot snapshot;
};

class Simulation {
 public:
  explicit Simulation(ScenarioSpec spec, RunOptions opts = {});

  /// Continues a run from a snapshot with unchanged control.
  static std::unique_ptr<Simulation> resume(ScenarioSpec spec, const Snapshot& snap, RunOptions opts = {});

  /// Counterfactual branch: `vehicle` stays under `controller` and is never
  /// taken over; the branch ends after `horizon` seconds at the latest and
  /// always halts on collision.
  static std::unique_ptr<Simulation> branch(ScenarioSpec spec, const Snapshot& snap, const std::string& vehicle,
                                            std::unique_ptr<aut::Adapter> controller, double horizon,
                                            RunOptions opts = {});

  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  /// One tick. False once the run has terminated.
  bool step();
  runlog::RunLog run();

  bool done() const { return done_; }
  bool paused() const { return paused_; }
  std::int64_t tick() const { return state_.world.tick; }
  const SimState& state() const { return state_; }
  const ScenarioSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  Snapshot snapshot() const { return {state_.world.tick, state_}; }
  const std::string& termination_reason() const { return reason_; }
  const std::vector<DeductionRequest>& deductions() const { return deductions_; }
  const std::string& log_text() const { return writer_.text(); }
  runlog::RunLog log() const { return writer_.finish(); }

  /// Thread-safe; drained at tick boundaries.
  void submit(Command c);

  /// Console frame for the current state.
  nlohmann::json state_frame() const;

 private:
  struct BranchInfo {
    std::string vehicle;
    std::int64_t origin = 0;
    std::int64_t end = 0;
    std::string controller;
  };

  Simulation(ScenarioSpec spec, RunOptions opts, const Snapshot* snap);
  void connect_adapters();
  void write_header();
  void event(std::int64_t tick, const std::string& type, nlohmann::json data);
  std::optional<std::string> termination() const;
  void apply_inputs();
  bool takeover(const std::string& vehicle, Initiator who, const std::string& reason, const Snapshot* pre,
                std::string& why);
  bool release(const std::string& vehicle, std::string& why);
  void update_signals(double now);
  void deliver(double now);
  void publish(double now);
  void publish_rsu(double now);
  world::Controls controls(double now);
  world::Control query_aut(const std::string& id, double now);
  void post_advance();
  void finish(const std::string& reason);
  nlohmann::json observation(const std::string& id, double now);

  ScenarioSpec spec_;
  RunOptions opts_;
  std::uint64_t seed_ = 0;
  bool halt_on_collision_ = true;
  SimState state_;
  std::map<std::string, std::unique_ptr<aut::Adapter>> adapters_;
  std::map<std::string, aut::HelloAck> acks_;
  std::optional<BranchInfo> branch_;
  std::optional<std::int64_t> resumed_from_;
  runlog::Writer writer_;
  bool header_written_ = false;
  bool done_ = false;
  bool paused_ = false;
  std::int64_t inputs_tick_ = -1;
  std::string reason_;
  std::vector<DeductionRequest> deductions_;
  std::vector<runlog::EventRecord> recent_;
  std::vector<runlog::EventRecord> pending_;  // events raised before the header exists
  std::mutex queue_mu_;
  std::vector<Command> queue_;
};

/// Runs a spec to completion.
runlog::RunLog run(const ScenarioSpec& spec, RunOptions opts = {});

struct ReplayResult {
  bool equal = false;
  bool hash_ok = false;
  std::int64_t first_divergent_line = -1;  // 1-based, -1 when equal
  std::string detail;
};

/// Re-simulates from the header's spec and seed and compares byte for byte.
ReplayResult replay(const std::string& log_text, RunOptions opts = {});

}  // namespace vpat::harness
