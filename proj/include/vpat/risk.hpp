#pragma once

#include <map>
#include <string>
#include <vector>

#include "vpat/world.hpp"

namespace vpat::risk {

struct KernelParams {
  double sigma_long = 4.0;        // meters, at standstill
  double sigma_long_per_speed = 0.5;  // extra longitudinal spread per m/s
  double sigma_lat = 1.5;
  double corridor_ahead = 100.0;
  double corridor_behind = 20.0;
};

struct Cell {
  double x = 0.0;
  double y = 0.0;
  double value = 0.0;
};

/// Risk sampled over the ego's route corridor.
struct RiskField {
  double resolution = 1.0;
  std::vector<Cell> cells;
  std::map<std::string, double> contribution;  // kernel mass inside the corridor

  double total_mass() const;
};

/// Kernel of one entity at a point: amplitude (1 + speed/10), Gaussian
/// stretched along the heading as speed grows.
double kernel(const world::EntityState& e, world::Vec2 p, const KernelParams& k = {});

RiskField risk_field(const world::WorldState& world, const world::ScenarioMap& map, const std::string& ego,
                     double grid_res = 1.0, const KernelParams& k = {});

enum class Placement { kPhysical, kVirtual };

/// Top `budget` contributors become physical; ties go to the smaller id.
std::map<std::string, Placement> allocate_elements(const std::vector<std::string>& roster,
                                                   const std::map<std::string, double>& contributions,
                                                   std::size_t physical_budget);

}  // namespace vpat::risk
