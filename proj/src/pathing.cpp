#include "intentgrid/pathing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <tuple>

namespace intentgrid {

double visibility_heuristic(Cell cell, Cell goal, const VisibilityField& visibility, double eps_astar) {
  const double manhattan = std::abs(goal.x - cell.x) + std::abs(goal.y - cell.y);
  return visibility(cell) ? manhattan - eps_astar : manhattan;
}

double eps_astar_bound(const GridMap& map) { return 1.0 / (2.0 * static_cast<double>(map.cell_count())); }

void validate_eps_astar(const GridMap& map, double eps_astar) {
  if (!(eps_astar > 0.0) || !(eps_astar < eps_astar_bound(map)))
    throw std::invalid_argument("eps_astar must lie in (0, " + std::to_string(eps_astar_bound(map)) +
                                ") for a " + std::to_string(map.width()) + "x" + std::to_string(map.height()) + " map");
}

std::optional<Path> modified_astar(const GridMap& map, Cell start, Cell goal, const VisibilityField& visibility,
                                   double eps_astar) {
  if (start == goal) return Path{};
  if (!map.free(start) || !map.free(goal)) return std::nullopt;

  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr int kNone = -1;
  const std::size_t n = map.cell_count();
  std::vector<double> g(n, kInf);
  std::vector<int> parent(n, kNone);

  using Entry = std::tuple<double, double, std::size_t>;  // f, h, cell index
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;

  const std::size_t start_idx = map.index(start);
  const std::size_t goal_idx = map.index(goal);
  g[start_idx] = 0.0;
  {
    const double h = visibility_heuristic(start, goal, visibility, eps_astar);
    open.emplace(h, h, start_idx);
  }

  static constexpr Cell kSteps[4] = {{0, -1}, {0, 1}, {-1, 0}, {1, 0}};

  while (!open.empty()) {
    const auto [f, h, idx] = open.top();
    open.pop();
    if (f > g[idx] + h) continue;  // stale
    if (idx == goal_idx) break;
    const Cell c = map.cell_at(idx);
    for (const Cell& d : kSteps) {
      const Cell next{c.x + d.x, c.y + d.y};
      if (!map.free(next)) continue;
      const std::size_t next_idx = map.index(next);
      const double cost = g[idx] + (visibility(next) ? 1.0 - eps_astar : 1.0);
      if (cost < g[next_idx]) {
        g[next_idx] = cost;
        parent[next_idx] = static_cast<int>(idx);
        const double next_h = visibility_heuristic(next, goal, visibility, eps_astar);
        open.emplace(cost + next_h, next_h, next_idx);
      }
    }
  }

  if (g[goal_idx] == kInf) return std::nullopt;
  Path path;
  for (int idx = static_cast<int>(goal_idx); idx != static_cast<int>(start_idx); idx = parent[idx])
    path.cells.push_back(map.cell_at(static_cast<std::size_t>(idx)));
  std::reverse(path.cells.begin(), path.cells.end());
  return path;
}

PathOrientation path_orientation(const Pose& pose, const Path& path, const VisibilityField& visibility) {
  double sum_sin = 0.0;
  double sum_cos = 0.0;
  int visible = 0;
  const Cell origin = pose.cell();
  for (const Cell& c : path.cells) {
    if (!visibility(c)) continue;
    const double theta = std::atan2(-static_cast<double>(c.y - origin.y), static_cast<double>(c.x - origin.x));
    sum_sin += std::sin(theta);
    sum_cos += std::cos(theta);
    ++visible;
  }
  if (visible == 0) return {wrap_angle(pose.heading.radians() + std::numbers::pi), 0};
  return {wrap_angle(std::atan2(sum_sin, sum_cos)), visible};
}

}  // namespace intentgrid
