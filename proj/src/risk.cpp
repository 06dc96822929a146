#include "vpat/risk.hpp"

#include <algorithm>
#include <cmath>

namespace vpat::risk {

double RiskField::total_mass() const {
  double m = 0.0;
  for (const auto& [id, c] : contribution) m += c;
  return m;
}

double kernel(const world::EntityState& e, world::Vec2 p, const KernelParams& k) {
  const double amp = 1.0 + e.speed / 10.0;
  const double sl = k.sigma_long + k.sigma_long_per_speed * e.speed;
  const double c = std::cos(e.pose.heading), s = std::sin(e.pose.heading);
  const double dx = p.x - e.pose.x, dy = p.y - e.pose.y;
  const double along = dx * c + dy * s;
  const double across = -dx * s + dy * c;
  return amp * std::exp(-0.5 * (along * along / (sl * sl) + across * across / (k.sigma_lat * k.sigma_lat)));
}

RiskField risk_field(const world::WorldState& world, const world::ScenarioMap& map, const std::string& ego_id,
                     double grid_res, const KernelParams& k) {
  if (!(grid_res > 0.0)) throw Error(ErrorCode::kConfig, "grid resolution must be positive");
  const world::EntityState& ego = world.entity(ego_id);
  RiskField field;
  field.resolution = grid_res;
  for (const auto& [id, e] : world.entities) {
    if (id != ego_id && e.kind != world::EntityKind::kRsu) field.contribution[id] = 0.0;
  }
  if (ego.lane.empty()) return field;

  // Corridor: walk the ego route from corridor_behind back to corridor_ahead.
  struct Piece {
    const world::Lane* lane;
    double from;
    double to;
  };
  std::vector<Piece> pieces;
  {
    const world::Lane* lane = &map.lane(ego.lane);
    double from = std::max(0.0, ego.s - k.corridor_behind);
    double remaining = ego.s - from + k.corridor_ahead;
    std::size_t idx = ego.route_index;
    while (remaining > 0.0) {
      const double to = std::min(lane->length(), from + remaining);
      if (to > from) pieces.push_back({lane, from, to});
      remaining -= std::max(0.0, to - from);
      if (idx + 1 >= ego.route.size() || lane->dead_end) break;
      lane = &map.lane(ego.route[++idx]);
      from = 0.0;
    }
  }
  const double area = grid_res * grid_res;
  for (const auto& piece : pieces) {
    const double half_w = 0.5 * piece.lane->width;
    const int n_lat = std::max(1, static_cast<int>(std::floor(piece.lane->width / grid_res)));
    for (double s = piece.from + 0.5 * grid_res; s < piece.to; s += grid_res) {
      for (int j = 0; j < n_lat; ++j) {
        const double off = -half_w + (j + 0.5) * piece.lane->width / n_lat;
        const world::Pose at = piece.lane->pose_at(s, off);
        Cell cell{at.x, at.y, 0.0};
        for (auto& [id, mass] : field.contribution) {
          const double v = kernel(world.entities.at(id), {at.x, at.y}, k);
          cell.value += v;
          mass += v * area;
        }
        field.cells.push_back(cell);
      }
    }
  }
  return field;
}

std::map<std::string, Placement> allocate_elements(const std::vector<std::string>& roster,
                                                   const std::map<std::string, double>& contributions,
                                                   std::size_t physical_budget) {
  std::vector<std::string> order = roster;
  auto value = [&](const std::string& id) {
    auto it = contributions.find(id);
    return it == contributions.end() ? 0.0 : it->second;
  };
  std::sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
    const double va = value(a), vb = value(b);
    return va != vb ? va > vb : a < b;
  });
  std::map<std::string, Placement> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out[order[i]] = i < physical_budget ? Placement::kPhysical : Placement::kVirtual;
  }
  return out;
}

}  // namespace vpat::risk
