#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "intentgrid/gridworld.hpp"

#ifndef INTENTGRID_DATA_DIR
#define INTENTGRID_DATA_DIR "data"
#endif

namespace support {

inline std::string data_path(const std::string& relative) { return std::string(INTENTGRID_DATA_DIR) + "/" + relative; }

/// Random map with the given wall density and `goals` distinct free goal cells.
inline intentgrid::GridMap random_map(std::mt19937_64& rng, int width, int height, double density, int goals) {
  std::bernoulli_distribution wall(density);
  for (;;) {
    std::vector<std::uint8_t> occ(static_cast<std::size_t>(width) * height);
    for (auto& o : occ) o = wall(rng) ? 1 : 0;
    std::vector<intentgrid::Cell> free_cells;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (!occ[static_cast<std::size_t>(y) * width + x]) free_cells.push_back({x, y});
    if (static_cast<int>(free_cells.size()) < goals + 1) continue;
    std::shuffle(free_cells.begin(), free_cells.end(), rng);
    return intentgrid::GridMap(width, height, std::move(occ),
                               std::vector<intentgrid::Cell>(free_cells.begin(), free_cells.begin() + goals));
  }
}

/// A uniformly chosen free pose.
inline intentgrid::Pose random_pose(std::mt19937_64& rng, const intentgrid::GridMap& map) {
  std::uniform_int_distribution<int> ux(0, map.width() - 1), uy(0, map.height() - 1), uh(0, 7);
  for (;;) {
    intentgrid::Pose p{ux(rng), uy(rng), intentgrid::Heading(uh(rng))};
    if (map.free(p.cell())) return p;
  }
}

}  // namespace support
