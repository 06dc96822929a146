#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "vpat/rng.hpp"
#include "vpat/world.hpp"

namespace vpat::traffic {

inline constexpr double kFreeRoad = std::numeric_limits<double>::infinity();

struct IdmParams {
  double v0 = 15.0;
  double T = 1.5;
  double a_max = 2.0;
  double b_comf = 3.0;
  double s0 = 2.0;
  double delta = 4.0;
  double b_hard = 8.0;

  void validate() const;
};

/// Intelligent Driver Model acceleration, clamped to [-b_hard, a_max].
/// gap is bumper to bumper; pass kFreeRoad when nothing is ahead.
double idm_accel(double gap, double v, double v_lead, const IdmParams& p);

/// Longitudinal state of a vehicle on a lane.
struct Vehicle1D {
  double s = 0.0;
  double v = 0.0;
  double length = 4.8;
};

struct LaneSide {
  std::optional<Vehicle1D> leader;
  std::optional<Vehicle1D> follower;
  double bias = 0.0;  // extra incentive toward this side (mandatory merges)
};

struct MobilInput {
  Vehicle1D ego;
  IdmParams params;
  std::optional<Vehicle1D> leader;
  std::optional<Vehicle1D> follower;
  std::optional<LaneSide> left;   // absent when there is no lane on that side
  std::optional<LaneSide> right;
  std::optional<double> ego_current_accel;  // overrides the plain car-following value
  double politeness = 0.2;
  double threshold = 0.1;
  double safe_decel = 4.0;
};

enum class LaneDecision { kKeep, kChangeLeft, kChangeRight };

LaneDecision mobil_decide(const MobilInput& in);

struct FlowSpec {
  std::string entry_lane;
  std::vector<std::string> route;  // defaults to {entry_lane}
  double rate_vph = 0.0;
  double speed_init = 10.0;
  IdmParams params;
  double mix = 0.0;  // fraction eligible for adversarial control
  double length = 4.8;
  double width = 1.9;

  void validate() const;
};

struct FlowState {
  double next_arrival = 0.0;
  bool started = false;
  std::uint64_t backlog = 0;
  std::uint64_t spawned = 0;
};

/// Poisson arrivals; at most one vehicle enters per call, and only when
/// the bumper-to-bumper headway at the entry is at least s0 + v*T.
std::vector<world::EntityState> spawn_flow(const FlowSpec& spec, FlowState& state,
                                           std::size_t flow_index, double now, Rng& rng,
                                           double entry_gap);

/// Entities bucketed by the lane(s) they occupy, sorted by arc position.
class LaneIndex {
 public:
  struct Occupant {
    double s = 0.0;
    double v = 0.0;
    double length = 0.0;
    std::string id;
  };

  LaneIndex() = default;
  LaneIndex(const world::ScenarioMap& map, const std::vector<const world::EntityState*>& entities);

  const std::vector<Occupant>& on(const std::string& lane) const;
  std::optional<Occupant> ahead(const std::string& lane, double s, const std::string& self) const;
  std::optional<Occupant> behind(const std::string& lane, double s, const std::string& self) const;

 private:
  std::map<std::string, std::vector<Occupant>> lanes_;
};

struct DriverConfig {
  IdmParams idm;
  double politeness = 0.2;
  double lc_threshold = 0.1;
  double safe_decel = 4.0;
  double lookahead = 150.0;
  double speed_factor = 1.0;  // desired speed relative to the lane limit
  double speed_cap = kFreeRoad;  // advisory cap (e.g. green-wave speed)
  bool allow_lane_change = true;
  bool yield_all_conflicts = false;  // cautious human behaviour
  bool ignore_conflicts = false;     // forcing through conflict points
};

struct Surroundings {
  const world::ScenarioMap& map;
  const LaneIndex& index;
  const std::map<std::string, std::vector<world::Phase>>& signals;
};

/// Lane-following driver: IDM toward leaders, dead ends, stop lines and
/// conflict points (other traffic projected onto our lane by its distance
/// to the shared point), plus MOBIL lane changes.
world::Control drive(const world::EntityState& self, const Surroundings& env, const DriverConfig& cfg);

/// Longitudinal part of drive() without lane-change evaluation.
double drive_accel(const world::EntityState& self, const Surroundings& env, const DriverConfig& cfg);

/// Bumper-to-bumper headway from a lane position to the nearest occupant.
double entry_gap(const LaneIndex& index, const std::string& lane, double s, double length);

class FlowModel {
 public:
  FlowModel() = default;
  explicit FlowModel(std::vector<FlowSpec> flows);

  /// Makes an externally controlled entity visible to background traffic
  /// from the next control step.
  void map_external(const std::string& id);
  void unmap_external(const std::string& id);
  bool is_mapped(const std::string& id) const { return mapped_.count(id) != 0; }
  const std::set<std::string>& mapped() const { return mapped_; }

  std::vector<world::EntityState> spawn(double now, Rng& rng, const LaneIndex& index);
  void note_despawn() { ++despawned_; }

  /// Controls for every background vehicle. `view` is what the traffic
  /// model knows of the world; only background and mapped entities in it
  /// are perceived.
  world::Controls control(const world::WorldState& world, const std::map<std::string, world::EntityState>& view,
                          const world::ScenarioMap& map) const;

  LaneIndex perception_index(const world::WorldState& world,
                             const std::map<std::string, world::EntityState>& view,
                             const world::ScenarioMap& map) const;

  const std::vector<FlowSpec>& flows() const { return flows_; }
  std::uint64_t spawned() const;
  std::uint64_t despawned() const { return despawned_; }

  nlohmann::json state_to_json() const;
  void restore_state(const nlohmann::json& j);

 private:
  std::vector<FlowSpec> flows_;
  std::vector<FlowState> states_;
  std::set<std::string> mapped_;
  std::uint64_t despawned_ = 0;
};

void to_json(nlohmann::json& j, const IdmParams& p);
void from_json(const nlohmann::json& j, IdmParams& p);
void to_json(nlohmann::json& j, const FlowSpec& f);
void from_json(const nlohmann::json& j, FlowSpec& f);

}  // namespace vpat::traffic
