#pragma once

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace intentgrid {

inline constexpr int kHeadingCount = 8;

/// Integer grid coordinate. x grows east, y grows south; row 0 is north.
struct Cell {
  int x = 0;
  int y = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Wraps an angle into [0, 2pi).
double wrap_angle(double theta);

/// Absolute angular distance in [0, pi].
double angle_difference(double a, double b);

/// Discrete orientation: index k maps to k * pi/4, 0 = east, counterclockwise positive.
class Heading {
 public:
  constexpr Heading() = default;
  constexpr explicit Heading(int index) : index_(((index % kHeadingCount) + kHeadingCount) % kHeadingCount) {}

  constexpr int index() const { return index_; }
  constexpr double radians() const { return index_ * std::numbers::pi / 4.0; }

  constexpr Heading clockwise() const { return Heading(index_ - 1); }
  constexpr Heading counterclockwise() const { return Heading(index_ + 1); }

  friend constexpr bool operator==(Heading, Heading) = default;

 private:
  int index_ = 0;
};

struct Pose {
  int x = 0;
  int y = 0;
  Heading heading;

  Cell cell() const { return {x, y}; }
  friend bool operator==(const Pose&, const Pose&) = default;
};

class GridMap {
 public:
  GridMap(int width, int height, std::vector<std::uint8_t> occupied, std::vector<Cell> goals);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t cell_count() const { return static_cast<std::size_t>(width_) * height_; }
  std::size_t state_count() const { return cell_count() * kHeadingCount; }

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  bool occupied(Cell c) const { return occupied_[index(c)] != 0; }
  /// Out-of-bounds cells count as blocked.
  bool free(Cell c) const { return in_bounds(c) && !occupied(c); }

  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y) * width_ + c.x; }
  Cell cell_at(std::size_t index) const {
    return {static_cast<int>(index % width_), static_cast<int>(index / width_)};
  }

  const std::vector<Cell>& goals() const { return goals_; }
  int goal_count() const { return static_cast<int>(goals_.size()); }

  bool valid_pose(const Pose& p) const { return free(p.cell()); }

  /// Canonical ASCII form; parse_map(to_text()) reproduces the map.
  std::string to_text() const;

  /// FNV-1a 64 over dimensions, occupancy and ordered goals, as 16 hex digits.
  std::string hash() const;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> occupied_;
  std::vector<Cell> goals_;
};

/// Dense state index in row-major (y, x, heading) order.
inline std::size_t state_index(const GridMap& map, const Pose& p) {
  return map.index(p.cell()) * kHeadingCount + static_cast<std::size_t>(p.heading.index());
}

inline Pose pose_at(const GridMap& map, std::size_t state) {
  Cell c = map.cell_at(state / kHeadingCount);
  return {c.x, c.y, Heading(static_cast<int>(state % kHeadingCount))};
}

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MapParseError : public std::runtime_error {
 public:
  enum class Kind {
    Empty,
    MalformedCharacter,
    NonRectangular,
    DuplicateGoal,
    GoalOnOccupied,
    MissingGoal,
    NoGoals,
    BadDirective,
  };

  MapParseError(Kind kind, int line, int column, const std::string& what);

  Kind kind() const { return kind_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  Kind kind_;
  int line_;
  int column_;
};

/// Parses the ASCII map format: `#` occupied, `.` free, `1`..`9` goals.
/// After the grid, lines of the form `goal <digit> <x> <y>` place goals by coordinate.
/// Lines and columns in errors are 1-based.
GridMap parse_map(std::string_view text);

GridMap load_map(const std::string& path);

/// Per-cell visibility from one pose.
struct VisibilityField {
  Pose source;
  double fov_half_angle = std::numbers::pi / 2.0;
  int width = 0;
  std::vector<std::uint8_t> visible;

  bool operator()(Cell c) const { return visible[static_cast<std::size_t>(c.y) * width + c.x] != 0; }
  std::size_t count() const;
};

/// Bearing from one cell center to another in the heading frame (pi/2 = north).
double bearing(Cell from, Cell to);

/// Center-to-center ray casting with occupied cells as solid squares. A ray grazing a
/// corner is not blocked; the target cell itself never blocks its own ray.
VisibilityField compute_visibility(const GridMap& map, const Pose& pose, double fov_half_angle);

/// True when the sight segment from `from` to `to` crosses no occupied cell interior.
/// The endpoint cells are not tested.
bool line_of_sight(const GridMap& map, Cell from, Cell to);

}  // namespace intentgrid
