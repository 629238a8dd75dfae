#pragma once

#include <array>
#include <numbers>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "intentgrid/gridworld.hpp"

namespace intentgrid {

/// Agent actions in canonical order: Up, Down, Left, Right, turn clockwise,
/// turn counterclockwise, Stay. Up is north (y - 1).
enum class Action : int { Up = 0, Down, Left, Right, TurnCW, TurnCCW, Stay };

inline constexpr int kActionCount = 7;
inline constexpr std::array<Action, kActionCount> kAllActions = {
    Action::Up, Action::Down, Action::Left, Action::Right, Action::TurnCW, Action::TurnCCW, Action::Stay};

constexpr int to_index(Action a) { return static_cast<int>(a); }

std::string_view action_name(Action a);

/// Accepts canonical names plus the short forms R, L, S and ^ v < >.
std::optional<Action> parse_action(std::string_view name);

/// Successor pose of a realized action; blocked moves leave the pose unchanged.
Pose apply_action(const GridMap& map, const Pose& pose, Action realized);

bool is_blocked(const GridMap& map, const Pose& pose, Action a);

using TransitionRow = Eigen::Matrix<double, kActionCount, 1>;
using ActionValues = Eigen::Matrix<double, kActionCount, 1>;

/// Realization probabilities over the 7 actions for one intended action. Mass of
/// blocked movements is moved onto Stay.
TransitionRow build_transition(const GridMap& map, const Pose& pose, Action intended, double eps_move);

/// How to reward states with no visible path to the goal.
enum class RewardFloor {
  Derived,  // -(eps_reward + pi), the reverse-heading fallback
  Exact,    // exactly -pi
};

struct PlannerParams {
  double gamma = 0.95;
  double eta = 0.01;
  double eps_move = 0.1;
  double eps_reward = 0.1;
  double eps_astar = 1e-3;
  double fov_half_angle = std::numbers::pi / 2.0;
  RewardFloor reward_floor = RewardFloor::Derived;
  int max_sweeps = 100000;

  friend bool operator==(const PlannerParams&, const PlannerParams&) = default;
};

/// Throws std::invalid_argument naming the first out-of-range field.
void validate(const PlannerParams& params);
void validate(const PlannerParams& params, const GridMap& map);

/// Immediate reward per dense state for one goal hypothesis.
struct RewardTable {
  int goal_index = 0;  // zero-based
  Eigen::VectorXd values;

  double operator()(std::size_t state) const { return values[static_cast<Eigen::Index>(state)]; }
};

struct ValueTable {
  Eigen::VectorXd values;
  double gamma = 0.95;
  int sweeps = 0;
  double last_change = 0.0;  // sum of |V_j - V_{j-1}| on the final sweep

  double operator()(std::size_t state) const { return values[static_cast<Eigen::Index>(state)]; }
};

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double reward_floor_value(const PlannerParams& params);

/// Reward for the agent standing at `pose` under hypothesis `goal_index`.
double state_reward(const GridMap& map, int goal_index, const Pose& pose, const VisibilityField& visibility,
                    const PlannerParams& params);

RewardTable compute_rewards(const GridMap& map, int goal_index, const PlannerParams& params);

/// Rewards for every hypothesis, sharing one visibility solve per state.
std::vector<RewardTable> compute_all_rewards(const GridMap& map, const PlannerParams& params);

/// Successors and probabilities of every (state, intended action), shared by all hypotheses.
class TransitionModel {
 public:
  TransitionModel(const GridMap& map, double eps_move);

  struct Entry {
    std::array<std::uint32_t, kActionCount> successor;
    TransitionRow probability;
  };

  const Entry& at(std::size_t state, Action a) const { return entries_[state * kActionCount + to_index(a)]; }
  bool state_free(std::size_t state) const { return free_[state / kHeadingCount] != 0; }
  std::size_t state_count() const { return free_.size() * kHeadingCount; }

  double action_value(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values, double gamma, std::size_t state,
                      Action a) const;

 private:
  std::vector<Entry> entries_;
  std::vector<std::uint8_t> free_;
};

/// Synchronous Bellman sweeps from V = 0 until the summed absolute change drops below eta.
ValueTable value_iteration(const TransitionModel& model, const RewardTable& rewards, const PlannerParams& params);
ValueTable value_iteration(const GridMap& map, const RewardTable& rewards, const PlannerParams& params);

/// Expected reward plus discounted value after taking `a` at `pose`.
double action_value(const GridMap& map, const RewardTable& rewards, const ValueTable& values, const Pose& pose,
                    Action a, double eps_move);

/// One solved goal hypothesis with query helpers.
class HypothesisModel {
 public:
  HypothesisModel(const GridMap& map, RewardTable rewards, ValueTable values, double eps_move);

  const GridMap& map() const { return *map_; }
  const RewardTable& rewards() const { return rewards_; }
  const ValueTable& values() const { return values_; }

  double q(const Pose& pose, Action a) const;
  ActionValues q_values(const Pose& pose) const;

  /// Argmax of q; ties resolve to the earliest action in canonical order.
  Action optimal_action(const Pose& pose) const;
  /// Argmin of q; ties resolve to the earliest action in canonical order.
  Action worst_action(const Pose& pose) const;
  /// Q(a) >= Q(Stay).
  bool is_consistent(const Pose& pose, Action a) const;

 private:
  const GridMap* map_;
  RewardTable rewards_;
  ValueTable values_;
  double eps_move_;
};

Action argmax_action(const ActionValues& q);
Action argmin_action(const ActionValues& q);

}  // namespace intentgrid
