#pragma once

// Reference implementations used only by tests. They share nothing with the
// library beyond GridMap storage, and trade speed for obviousness.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <queue>
#include <vector>

#include <Eigen/Dense>

#include "intentgrid/gridworld.hpp"

namespace oracle {

using intentgrid::Cell;
using intentgrid::GridMap;

inline constexpr int kHeadings = 8;
inline constexpr int kActions = 7;

inline bool open(const GridMap& m, int x, int y) {
  return x >= 0 && y >= 0 && x < m.width() && y < m.height() && !m.occupied({x, y});
}

inline std::size_t state(const GridMap& m, int x, int y, int h) {
  return (static_cast<std::size_t>(y) * m.width() + x) * kHeadings + h;
}

struct Successor {
  std::size_t state;
  double p;
};

/// Distribution over successor states for intended action a (Up, Down, Left,
/// Right, CW, CCW, Stay), written straight from the movement matrix.
inline std::vector<Successor> successors(const GridMap& m, int x, int y, int h, int a, double eps) {
  static constexpr int dx[4] = {0, 0, -1, 1};
  static constexpr int dy[4] = {-1, 1, 0, 0};
  double matrix[7][7] = {
      {1 - 2 * eps, 0, eps, eps, 0, 0, 0},
      {0, 1 - 2 * eps, eps, eps, 0, 0, 0},
      {eps, eps, 1 - 2 * eps, 0, 0, 0, 0},
      {eps, eps, 0, 1 - 2 * eps, 0, 0, 0},
      {0, 0, 0, 0, 1 - eps, 0, eps},
      {0, 0, 0, 0, 0, 1 - eps, eps},
      {0, 0, 0, 0, 0, 0, 1},
  };
  std::vector<Successor> out;
  double stay = matrix[a][6];
  for (int r = 0; r < 4; ++r) {
    const double p = matrix[a][r];
    if (p == 0) continue;
    if (open(m, x + dx[r], y + dy[r]))
      out.push_back({state(m, x + dx[r], y + dy[r], h), p});
    else
      stay += p;
  }
  if (matrix[a][4] != 0) out.push_back({state(m, x, y, (h + 7) % 8), matrix[a][4]});
  if (matrix[a][5] != 0) out.push_back({state(m, x, y, (h + 1) % 8), matrix[a][5]});
  if (stay != 0) out.push_back({state(m, x, y, h), stay});
  return out;
}

/// Dense transition matrices, one per action, over all states.
inline std::array<Eigen::MatrixXd, kActions> dense_transitions(const GridMap& m, double eps) {
  const auto n = static_cast<Eigen::Index>(m.cell_count() * kHeadings);
  std::array<Eigen::MatrixXd, kActions> t;
  for (auto& mat : t) mat = Eigen::MatrixXd::Zero(n, n);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (!open(m, x, y)) continue;
      for (int h = 0; h < kHeadings; ++h)
        for (int a = 0; a < kActions; ++a)
          for (const auto& s : successors(m, x, y, h, a, eps))
            t[a](static_cast<Eigen::Index>(state(m, x, y, h)), static_cast<Eigen::Index>(s.state)) += s.p;
    }
  return t;
}

struct DenseSolution {
  Eigen::VectorXd values;
  int sweeps = 0;
};

/// Synchronous Bellman sweeps V <- max_a P_a (R + gamma V), stopping when the
/// summed absolute change drops below eta, or after exactly `fixed_sweeps`.
inline DenseSolution dense_value_iteration(const GridMap& m, const Eigen::VectorXd& rewards, double gamma, double eta,
                                           double eps, int fixed_sweeps = 0) {
  const auto t = dense_transitions(m, eps);
  const auto n = rewards.size();
  Eigen::VectorXd free_mask(n);
  for (Eigen::Index s = 0; s < n; ++s) free_mask[s] = open(m, m.cell_at(s / kHeadings).x, m.cell_at(s / kHeadings).y);
  DenseSolution sol;
  sol.values = Eigen::VectorXd::Zero(n);
  for (int sweep = 1; sweep < 1000000; ++sweep) {
    const Eigen::VectorXd target = rewards + gamma * sol.values;
    Eigen::VectorXd next = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
    for (int a = 0; a < kActions; ++a) next = next.cwiseMax(t[a] * target);
    next = next.cwiseProduct(free_mask);
    const double change = (next - sol.values).cwiseAbs().sum();
    sol.values = next;
    sol.sweeps = sweep;
    if (fixed_sweeps > 0 ? sweep == fixed_sweeps : change < eta) break;
  }
  return sol;
}

inline double dense_q(const GridMap& m, const Eigen::VectorXd& rewards, const Eigen::VectorXd& values, double gamma,
                      double eps, int x, int y, int h, int a) {
  double q = 0;
  for (const auto& s : successors(m, x, y, h, a, eps))
    q += s.p * (rewards[static_cast<Eigen::Index>(s.state)] + gamma * values[static_cast<Eigen::Index>(s.state)]);
  return q;
}

/// Breadth-first 4-connected step distance; -1 when unreachable.
inline int bfs_distance(const GridMap& m, Cell from, Cell to) {
  std::vector<int> dist(m.cell_count(), -1);
  std::queue<Cell> q;
  dist[m.index(from)] = 0;
  q.push(from);
  while (!q.empty()) {
    const Cell c = q.front();
    q.pop();
    if (c == to) return dist[m.index(c)];
    const Cell next[4] = {{c.x, c.y - 1}, {c.x, c.y + 1}, {c.x - 1, c.y}, {c.x + 1, c.y}};
    for (const Cell& n : next)
      if (open(m, n.x, n.y) && dist[m.index(n)] < 0) {
        dist[m.index(n)] = dist[m.index(c)] + 1;
        q.push(n);
      }
  }
  return -1;
}

/// Exact fraction with positive denominator.
struct Frac {
  long long num;
  long long den;
};
inline bool less(Frac a, Frac b) { return a.num * b.den < b.num * a.den; }

/// Does the segment between two cell centers pass through the open interior of cell c?
/// Slab clipping done in exact rational arithmetic on doubled coordinates.
inline bool segment_enters_interior(Cell a, Cell b, Cell c) {
  Frac lo{0, 1}, hi{1, 1};
  auto clip = [&](int p0, int p1, int centre) {
    const long long d = 2LL * (p1 - p0);
    const long long lower = 2LL * centre - 1 - 2LL * p0;
    const long long upper = 2LL * centre + 1 - 2LL * p0;
    if (d == 0) return lower < 0 && 0 < upper;
    Frac t0{lower, d}, t1{upper, d};
    if (d < 0) {
      t0 = {-upper, -d};
      t1 = {-lower, -d};
    }
    if (less(lo, t0)) lo = t0;
    if (less(t1, hi)) hi = t1;
    return true;
  };
  if (!clip(a.x, b.x, c.x)) return false;
  if (!clip(a.y, b.y, c.y)) return false;
  return less(lo, hi);
}

/// Visible cells by brute force: every occupied cell other than the target is
/// tested against the sight segment; the cone test uses the heading unit vector.
inline std::vector<std::uint8_t> visibility(const GridMap& m, int sx, int sy, int h, double half_angle) {
  std::vector<std::uint8_t> out(m.cell_count(), 0);
  const double hx = std::cos(h * std::numbers::pi / 4), hy = std::sin(h * std::numbers::pi / 4);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (x == sx && y == sy) {
        out[m.index({x, y})] = 1;
        continue;
      }
      const double vx = x - sx, vy = -(y - sy);
      const double angle = std::atan2(std::abs(hx * vy - hy * vx), hx * vx + hy * vy);
      if (angle > half_angle + 1e-9) continue;
      bool blocked = false;
      for (int oy = std::min(y, sy); oy <= std::max(y, sy) && !blocked; ++oy)
        for (int ox = std::min(x, sx); ox <= std::max(x, sx) && !blocked; ++ox) {
          if ((ox == x && oy == y) || (ox == sx && oy == sy) || !m.occupied({ox, oy})) continue;
          blocked = segment_enters_interior({sx, sy}, {x, y}, {ox, oy});
        }
      out[m.index({x, y})] = blocked ? 0 : 1;
    }
  return out;
}

struct ViterbiResult {
  std::vector<int> path;                         // states at steps 1..T
  std::vector<Eigen::VectorXd> normalized_best;  // per step, max path score ending in each state, normalized
};

/// Enumerates every hidden path s_0..s_T (s_0 weighted by the prior).
inline ViterbiResult exhaustive_viterbi(const Eigen::MatrixXd& transition, const Eigen::VectorXd& prior,
                                        const std::vector<Eigen::VectorXd>& emissions) {
  const int n = static_cast<int>(prior.size());
  const int steps = static_cast<int>(emissions.size());
  ViterbiResult r;
  for (int t = 1; t <= steps; ++t) {
    Eigen::VectorXd best = Eigen::VectorXd::Zero(n);
    double top = -1;
    std::vector<int> arg;
    std::vector<int> seq(static_cast<std::size_t>(t) + 1, 0);
    long long total = 1;
    for (int i = 0; i <= t; ++i) total *= n;
    for (long long code = 0; code < total; ++code) {
      long long c = code;
      for (int i = 0; i <= t; ++i) {
        seq[static_cast<std::size_t>(i)] = static_cast<int>(c % n);
        c /= n;
      }
      double score = prior[seq[0]];
      for (int i = 1; i <= t && score > 0; ++i)
        score *= transition(seq[i - 1], seq[i]) * emissions[static_cast<std::size_t>(i - 1)][seq[i]];
      const int last = seq[static_cast<std::size_t>(t)];
      best[last] = std::max(best[last], score);
      if (t == steps && score > top) {
        top = score;
        arg.assign(seq.begin() + 1, seq.end());
      }
    }
    r.normalized_best.push_back(best / best.sum());
    if (t == steps) r.path = arg;
  }
  return r;
}

}  // namespace oracle
