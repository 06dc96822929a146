#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vpat/error.hpp"
#include "vpat/rng.hpp"

namespace vpat::world {

inline constexpr double kDefaultDt = 0.1;
inline constexpr double kLaneChangeDuration = 3.0;
inline constexpr double kDefaultTwinNoise = 0.10;

double normalize_angle(double radians);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Position in the map frame. heading is kept in (-pi, pi].
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

enum class EntityKind {
  kPhysicalCav,
  kCloudControlled,
  kHdvTwin,
  kPedestrian,
  kRsu,
  kVirtualCav,
  kRemoteHdv,
  kBackground,
};

enum class ControlMode { kAuto, kManual, kAdversarial, kScripted };
enum class LaneIntent { kKeep, kLeft, kRight };
enum class Phase { kGreen, kYellow, kRed };

std::string to_string(EntityKind kind);
std::string to_string(ControlMode mode);
std::string to_string(LaneIntent intent);
std::string to_string(Phase phase);
EntityKind kind_from_string(std::string_view s);
ControlMode mode_from_string(std::string_view s);
LaneIntent intent_from_string(std::string_view s);
Phase phase_from_string(std::string_view s);

/// Entities with a presence on the physical test field.
bool is_physical(EntityKind kind);
/// Entities carrying an (actual or emulated) on-board unit.
bool has_obu(EntityKind kind);
bool is_vehicle(EntityKind kind);

struct EntityState {
  std::string id;
  EntityKind kind = EntityKind::kBackground;
  Pose pose;
  double speed = 0.0;
  double accel = 0.0;
  std::string lane;  // empty when the entity moves freely (pedestrians, RSUs)
  double s = 0.0;       // arc position on `lane`
  double offset = 0.0;  // lateral offset from the lane centerline, left positive
  double lc_rate = 0.0;  // |offset| decay rate while a lane change blends in
  double straddle = 0.0;  // held lateral offset, 0 when not straddling
  ControlMode mode = ControlMode::kAuto;
  double length = 4.8;
  double width = 1.9;
  std::vector<std::string> route;
  std::size_t route_index = 0;
  bool route_complete = false;
  bool adversarial_eligible = false;

  bool changing_lane() const { return lc_rate > 0.0; }
  Vec2 velocity() const;
};

struct Lane {
  std::string id;
  std::vector<Vec2> points;
  double width = 3.5;
  double speed_limit = 15.0;
  std::string left;
  std::string right;
  std::vector<std::string> next;
  bool dead_end = false;  // the lane end acts as a wall (merge ramps)

  double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  Vec2 point_at(double s) const;
  double heading_at(double s) const;
  Pose pose_at(double s, double offset) const;

  struct Projection {
    double s = 0.0;
    double lateral = 0.0;
  };
  Projection project(Vec2 p) const;

  /// Rebuilds the arc-length table; call after editing points.
  void finalize();

 private:
  std::size_t segment_for(double s) const;
  std::vector<double> cumulative_;
};

struct ConflictPoint {
  std::string id;
  std::string lane_a;
  double s_a = 0.0;
  std::string lane_b;
  double s_b = 0.0;
  double radius = 2.5;
  std::string priority;  // "a", "b" or empty for first-come
  bool occluded = false;
};

struct SignalHead {
  std::string signal;
  std::string lane;
  double s = 0.0;  // stop line
  std::size_t approach = 0;
};

/// Versioned map document. Parallel neighbours (left/right) share the same
/// arc-length parameterization so a lane change preserves s.
struct ScenarioMap {
  int version = 1;
  std::string name;
  std::map<std::string, Lane> lanes;
  std::vector<ConflictPoint> conflict_points;
  std::vector<SignalHead> signals;

  const Lane& lane(const std::string& id) const;
  bool has_lane(const std::string& id) const { return lanes.count(id) != 0; }
};

ScenarioMap parse_map(const nlohmann::json& doc);
ScenarioMap load_map(const std::string& path);
nlohmann::json map_to_json(const ScenarioMap& map);

enum class ClockMode { kNtp, kPtp, kGnss };

struct ClockModel {
  ClockMode mode = ClockMode::kNtp;
  double offset_bound = 1e-2;
  double node_offset = 0.0;

  static ClockModel for_mode(ClockMode mode);
};

ClockMode clock_mode_from_string(std::string_view s);
std::string to_string(ClockMode mode);

/// Draws a static node skew, uniform in [-bound, +bound], and stores it.
double sample_clock_offset(ClockModel& model, Rng& rng);

struct WorldState {
  std::int64_t tick = 0;
  double dt = kDefaultDt;
  std::map<std::string, EntityState> entities;
  std::map<std::string, std::vector<Phase>> signal_state;
  Rng rng;

  double sim_time() const { return static_cast<double>(tick) * dt; }
  const EntityState& entity(const std::string& id) const;
  EntityState& entity(const std::string& id);
  bool has(const std::string& id) const { return entities.count(id) != 0; }
};

struct Control {
  double accel = 0.0;
  LaneIntent intent = LaneIntent::kKeep;
  double straddle = 0.0;
};

using Controls = std::map<std::string, Control>;

/// One simulation step. Entities without a control keep their prior
/// acceleration; speed is clamped at zero.
WorldState advance_tick(const WorldState& world, const ScenarioMap& map, const Controls& controls,
                        double dt);

/// Places an entity on its lane (or leaves a free pose) and fills the pose.
void place(EntityState& e, const ScenarioMap& map);

/// Oriented-rectangle overlap between two bodies.
bool overlaps(const EntityState& a, const EntityState& b);

struct Observation {
  std::string id;
  Pose pose;
  double speed = 0.0;
};

/// Rebuilds a twin for an un-instrumented vehicle from a roadside
/// observation, with perception noise drawn uniformly on a disk.
EntityState twin_update(const Observation& obs, const WorldState& registry, Rng& rng,
                        double noise_bound = kDefaultTwinNoise);

void to_json(nlohmann::json& j, const Pose& p);
void from_json(const nlohmann::json& j, Pose& p);
void to_json(nlohmann::json& j, const EntityState& e);
void from_json(const nlohmann::json& j, EntityState& e);
nlohmann::json world_to_json(const WorldState& w);
WorldState world_from_json(const nlohmann::json& j);

}  // namespace vpat::world
