#pragma once

#include <optional>
#include <vector>

#include "intentgrid/gridworld.hpp"

namespace intentgrid {

/// Cells from the neighbor of the start through the goal. Empty when start == goal.
struct Path {
  std::vector<Cell> cells;

  int step_count() const { return static_cast<int>(cells.size()); }
};

struct PathOrientation {
  double theta_goal = 0.0;
  int visible_count = 0;
};

/// Manhattan distance to `goal`, reduced by eps_astar on visible cells.
double visibility_heuristic(Cell cell, Cell goal, const VisibilityField& visibility, double eps_astar);

/// Largest eps_astar that can only break ties between equal-length paths.
double eps_astar_bound(const GridMap& map);

/// Throws std::invalid_argument unless 0 < eps_astar < eps_astar_bound(map).
void validate_eps_astar(const GridMap& map, double eps_astar);

/// A* over 4-connected free cells where entering a visible cell costs 1 - eps_astar.
/// Returns a shortest path in step count; among those it leans toward visible cells.
/// Closed nodes are reopened when a cheaper route appears, since the discounted
/// heuristic is not consistent. Ties on f break by h, then cell index.
std::optional<Path> modified_astar(const GridMap& map, Cell start, Cell goal, const VisibilityField& visibility,
                                   double eps_astar);

/// Circular mean of the bearings to the visible path cells, or the reverse heading when none is visible.
PathOrientation path_orientation(const Pose& pose, const Path& path, const VisibilityField& visibility);

}  // namespace intentgrid
