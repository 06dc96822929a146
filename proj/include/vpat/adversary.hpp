#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vpat/rng.hpp"
#include "vpat/traffic.hpp"
#include "vpat/world.hpp"

namespace vpat::adversary {

inline constexpr double kDefaultCollisionDistance = 4.0;
inline constexpr double kDefaultHorizon = 10.0;
inline constexpr double kHazardThreshold = 2.5;

/// Earliest t in [0, horizon] at which the constant-velocity extrapolations
/// come within d_col of each other; 0 when already that close.
std::optional<double> ttc_2d(const world::EntityState& a, const world::EntityState& b,
                             double horizon = kDefaultHorizon, double d_col = kDefaultCollisionDistance);

/// Minimum ttc_2d from `ego` to any other vehicle or pedestrian.
std::optional<double> min_ttc(const std::map<std::string, world::EntityState>& entities, const std::string& ego,
                              double horizon = kDefaultHorizon, double d_col = kDefaultCollisionDistance);

/// Share of ticks whose minimum TTC is below the threshold.
double hazard_fraction(const std::vector<std::optional<double>>& tick_min_ttc,
                       double threshold = kHazardThreshold);

enum class ManeuverKind {
  kAggressiveOvertake,
  kLaneStraddle,
  kContinuousLaneChange,
  kEmergencyBrake,
  kRushConflict,
  kMergeSqueeze,
};

std::string to_string(ManeuverKind k);
ManeuverKind maneuver_from_string(const std::string& s);

struct Maneuver {
  ManeuverKind kind = ManeuverKind::kEmergencyBrake;
  double duration = 6.0;
  std::map<std::string, double> params;
  double started = 0.0;
};

enum class ScenarioClass { kStraight, kMerge, kIntersection };

std::string to_string(ScenarioClass c);
ScenarioClass scenario_class_from_string(const std::string& s);

struct Thresholds {
  double t_safe = 4.0;
  double t_crit = 2.0;
  std::size_t window = 50;  // ticks
  double step_up = 0.1;
  double step_down = 0.2;
};

struct AdversarialState {
  double intensity = 0.0;
  std::map<std::string, Maneuver> active;
  std::deque<double> window;  // per-tick minimum TTC, +inf when none
};

/// Raises intensity after a calm window, lowers it after a critical one.
AdversarialState update_intensity(const AdversarialState& s, double ttc_min_window, const Thresholds& th = {});

/// Relative weights of the maneuver kinds for a scenario class.
std::vector<std::pair<ManeuverKind, double>> maneuver_weights(ScenarioClass cls, double intensity);

/// Maneuver of the given kind with intensity-scaled parameters.
Maneuver make_maneuver(ManeuverKind kind, double intensity, const world::EntityState& target, double now);

struct SelectionContext {
  const world::WorldState& world;
  const world::ScenarioMap& map;
  std::string vut;
  ScenarioClass cls = ScenarioClass::kStraight;
  double range = 80.0;
};

struct Selection {
  std::string target;
  Maneuver maneuver;
};

/// Picks the eligible vehicle with the largest risk contribution to the VUT
/// and samples a maneuver for it. nullopt when nobody is eligible.
std::optional<Selection> select_maneuver(double intensity, const SelectionContext& ctx, Rng& rng);

/// Control for an adversarial vehicle executing `m`.
world::Control execute(Maneuver& m, const world::EntityState& self, const world::EntityState& vut,
                       const traffic::Surroundings& env, double intensity, double now);

struct AdversaryConfig {
  bool enabled = false;
  ScenarioClass cls = ScenarioClass::kStraight;
  Thresholds thresholds;
  double initial_intensity = 0.5;
  std::size_t max_active = 1;
  double select_interval = 2.0;  // seconds between selections
  double range = 80.0;
  double ttc_horizon = kDefaultHorizon;
  double d_col = kDefaultCollisionDistance;
};

void to_json(nlohmann::json& j, const AdversaryConfig& c);
void from_json(const nlohmann::json& j, AdversaryConfig& c);

/// Tick-loop driver: tracks the VUT's margin, adapts intensity, and hands
/// out controls for the vehicles it has taken over.
class Adversary {
 public:
  Adversary() = default;
  Adversary(AdversaryConfig cfg, std::string vut);

  /// Marks selected targets adversarial in `world` and returns their controls.
  world::Controls step(world::WorldState& world, const world::ScenarioMap& map, const traffic::LaneIndex& index,
                       Rng& rng);

  void set_intensity(double v);
  const AdversarialState& state() const { return state_; }
  const AdversaryConfig& config() const { return cfg_; }
  const std::string& vut() const { return vut_; }

  nlohmann::json to_json() const;
  void restore(const nlohmann::json& j);

 private:
  AdversaryConfig cfg_;
  std::string vut_;
  AdversarialState state_;
  double last_selection_ = -1e300;
};

}  // namespace vpat::adversary
