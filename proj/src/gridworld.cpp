#include "intentgrid/gridworld.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

namespace intentgrid {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kConeTolerance = 1e-9;

std::string at(int line, int column) {
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

}  // namespace

double wrap_angle(double theta) {
  double r = std::fmod(theta, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  // fmod of a value just below 0 can round up to exactly 2pi
  if (r >= kTwoPi) r = 0.0;
  return r;
}

double angle_difference(double a, double b) {
  double d = wrap_angle(a - b);
  return d > std::numbers::pi ? kTwoPi - d : d;
}

GridMap::GridMap(int width, int height, std::vector<std::uint8_t> occupancy, std::vector<Cell> goals)
    : width_(width), height_(height), occupied_(std::move(occupancy)), goals_(std::move(goals)) {
  if (width_ < 1 || height_ < 1) throw std::invalid_argument("map must be at least 1x1");
  if (occupied_.size() != cell_count()) throw std::invalid_argument("occupancy size does not match map dimensions");
  if (goals_.empty()) throw std::invalid_argument("map needs at least one goal");
  if (goals_.size() > 9) throw std::invalid_argument("at most 9 goals are supported");
  for (std::size_t i = 0; i < goals_.size(); ++i) {
    const Cell g = goals_[i];
    if (!in_bounds(g)) throw std::invalid_argument("goal " + std::to_string(i + 1) + " out of bounds");
    if (occupied(g)) throw std::invalid_argument("goal " + std::to_string(i + 1) + " on occupied cell");
    for (std::size_t j = 0; j < i; ++j)
      if (goals_[j] == g) throw std::invalid_argument("goals " + std::to_string(j + 1) + " and " + std::to_string(i + 1) + " coincide");
  }
}

std::string GridMap::to_text() const {
  std::string out;
  out.reserve(cell_count() + height_);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      char ch = occupied({x, y}) ? '#' : '.';
      for (std::size_t g = 0; g < goals_.size(); ++g)
        if (goals_[g] == Cell{x, y}) ch = static_cast<char>('1' + g);
      out.push_back(ch);
    }
    out.push_back('\n');
  }
  return out;
}

std::string GridMap::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  mix(static_cast<std::uint64_t>(width_));
  mix(static_cast<std::uint64_t>(height_));
  for (auto o : occupied_) mix(o);
  mix(goals_.size());
  for (const Cell& g : goals_) {
    mix(static_cast<std::uint64_t>(g.x));
    mix(static_cast<std::uint64_t>(g.y));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

MapParseError::MapParseError(Kind kind, int line, int column, const std::string& what)
    : std::runtime_error(what + " (" + at(line, column) + ")"), kind_(kind), line_(line), column_(column) {}

GridMap parse_map(std::string_view text) {
  using Kind = MapParseError::Kind;

  std::vector<std::string> lines;
  {
    std::string current;
    for (char ch : text) {
      if (ch == '\n') {
        lines.push_back(std::move(current));
        current.clear();
      } else if (ch != '\r') {
        current.push_back(ch);
      }
    }
    if (!current.empty()) lines.push_back(std::move(current));
  }

  std::size_t row_end = 0;
  while (row_end < lines.size() && !lines[row_end].empty() && lines[row_end].rfind("goal", 0) != 0) ++row_end;
  if (row_end == 0) throw MapParseError(Kind::Empty, 1, 1, "map has no grid rows");

  const int width = static_cast<int>(lines[0].size());
  const int height = static_cast<int>(row_end);
  std::vector<std::uint8_t> occupied(static_cast<std::size_t>(width) * height, 0);
  std::array<std::optional<Cell>, 9> goals;
  std::array<int, 9> goal_line{};

  for (int y = 0; y < height; ++y) {
    const std::string& row = lines[y];
    if (static_cast<int>(row.size()) != width)
      throw MapParseError(Kind::NonRectangular, y + 1, std::min<int>(row.size(), width) + 1,
                          "row length " + std::to_string(row.size()) + " differs from first row length " + std::to_string(width));
    for (int x = 0; x < width; ++x) {
      const char ch = row[x];
      if (ch == '#') {
        occupied[static_cast<std::size_t>(y) * width + x] = 1;
      } else if (ch >= '1' && ch <= '9') {
        const int g = ch - '1';
        if (goals[g]) throw MapParseError(Kind::DuplicateGoal, y + 1, x + 1, std::string("duplicate goal digit '") + ch + "'");
        goals[g] = Cell{x, y};
        goal_line[g] = y + 1;
      } else if (ch != '.') {
        throw MapParseError(Kind::MalformedCharacter, y + 1, x + 1, std::string("unexpected character '") + ch + "'");
      }
    }
  }

  for (std::size_t i = row_end; i < lines.size(); ++i) {
    const int line_no = static_cast<int>(i) + 1;
    const std::string& line = lines[i];
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream in(line);
    std::string keyword, digit;
    int x = 0, y = 0;
    if (!(in >> keyword >> digit >> x >> y) || keyword != "goal" || digit.size() != 1 || digit[0] < '1' || digit[0] > '9')
      throw MapParseError(Kind::BadDirective, line_no, 1, "expected 'goal <1-9> <x> <y>'");
    std::string rest;
    if (in >> rest) throw MapParseError(Kind::BadDirective, line_no, 1, "trailing text after goal directive");
    const int g = digit[0] - '1';
    if (goals[g]) throw MapParseError(Kind::DuplicateGoal, line_no, 6, "duplicate goal digit '" + digit + "'");
    if (x < 0 || y < 0 || x >= width || y >= height)
      throw MapParseError(Kind::BadDirective, line_no, 8, "goal coordinate out of bounds");
    if (occupied[static_cast<std::size_t>(y) * width + x])
      throw MapParseError(Kind::GoalOnOccupied, line_no, 8,
                          "goal " + digit + " placed on occupied cell (" + std::to_string(x) + ", " + std::to_string(y) + ")");
    for (int other = 0; other < 9; ++other)
      if (goals[other] && *goals[other] == Cell{x, y})
        throw MapParseError(Kind::DuplicateGoal, line_no, 8, "cell already holds goal " + std::to_string(other + 1));
    goals[g] = Cell{x, y};
    goal_line[g] = line_no;
  }

  std::vector<Cell> ordered;
  int last_present = -1;
  for (int g = 0; g < 9; ++g)
    if (goals[g]) last_present = g;
  if (last_present < 0) throw MapParseError(Kind::NoGoals, 1, 1, "map has no goal cells");
  for (int g = 0; g <= last_present; ++g) {
    if (!goals[g])
      throw MapParseError(Kind::MissingGoal, goal_line[last_present], 1,
                          "goal " + std::to_string(g + 1) + " missing while goal " + std::to_string(last_present + 1) + " is present");
    ordered.push_back(*goals[g]);
  }
  return GridMap(width, height, std::move(occupied), std::move(ordered));
}

GridMap load_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open map file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_map(buf.str());
}

std::size_t VisibilityField::count() const {
  return static_cast<std::size_t>(std::count(visible.begin(), visible.end(), std::uint8_t{1}));
}

double bearing(Cell from, Cell to) {
  return wrap_angle(std::atan2(-static_cast<double>(to.y - from.y), static_cast<double>(to.x - from.x)));
}

bool line_of_sight(const GridMap& map, Cell from, Cell to) {
  // Traversal in doubled coordinates: cell centers are odd integers and cell
  // borders even, so every crossing comparison is exact.
  const int dx = to.x - from.x;
  const int dy = to.y - from.y;
  const int step_x = dx > 0 ? 1 : -1;
  const int step_y = dy > 0 ? 1 : -1;
  const long long adx = 2LL * std::abs(dx);
  const long long ady = 2LL * std::abs(dy);

  Cell c = from;
  while (!(c == to)) {
    const long long nx = 2LL * std::abs(c.x - from.x) + 1;
    const long long ny = 2LL * std::abs(c.y - from.y) + 1;
    if (dx == 0) {
      c.y += step_y;
    } else if (dy == 0) {
      c.x += step_x;
    } else {
      // Compare crossing parameters nx/adx and ny/ady.
      const long long lhs = nx * ady;
      const long long rhs = ny * adx;
      if (lhs < rhs) {
        c.x += step_x;
      } else if (lhs > rhs) {
        c.y += step_y;
      } else {
        c.x += step_x;
        c.y += step_y;
      }
    }
    if (!(c == to) && map.occupied(c)) return false;
  }
  return true;
}

VisibilityField compute_visibility(const GridMap& map, const Pose& pose, double fov_half_angle) {
  VisibilityField field;
  field.source = pose;
  field.fov_half_angle = fov_half_angle;
  field.width = map.width();
  field.visible.assign(map.cell_count(), 0);

  const Cell origin = pose.cell();
  const double facing = pose.heading.radians();
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const Cell c{x, y};
      bool seen = false;
      if (c == origin) {
        seen = true;
      } else if (angle_difference(bearing(origin, c), facing) <= fov_half_angle + kConeTolerance) {
        seen = line_of_sight(map, origin, c);
      }
      field.visible[map.index(c)] = seen ? 1 : 0;
    }
  }
  return field;
}

}  // namespace intentgrid
