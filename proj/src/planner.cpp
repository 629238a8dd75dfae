#include "intentgrid/planner.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "intentgrid/pathing.hpp"

namespace intentgrid {

namespace {

constexpr std::array<std::string_view, kActionCount> kNames = {"Up", "Down", "Left", "Right", "TurnCW", "TurnCCW", "Stay"};

Cell move_offset(Action a) {
  switch (a) {
    case Action::Up: return {0, -1};
    case Action::Down: return {0, 1};
    case Action::Left: return {-1, 0};
    case Action::Right: return {1, 0};
    default: return {0, 0};
  }
}

bool is_move(Action a) { return to_index(a) <= to_index(Action::Right); }

// Nominal rows before blocked mass is moved to Stay.
TransitionRow nominal_row(Action intended, double eps) {
  TransitionRow row = TransitionRow::Zero();
  switch (intended) {
    case Action::Up:
    case Action::Down:
      row[to_index(intended)] = 1.0 - 2.0 * eps;
      row[to_index(Action::Left)] = eps;
      row[to_index(Action::Right)] = eps;
      break;
    case Action::Left:
    case Action::Right:
      row[to_index(intended)] = 1.0 - 2.0 * eps;
      row[to_index(Action::Up)] = eps;
      row[to_index(Action::Down)] = eps;
      break;
    case Action::TurnCW:
    case Action::TurnCCW:
      row[to_index(intended)] = 1.0 - eps;
      row[to_index(Action::Stay)] = eps;
      break;
    case Action::Stay:
      row[to_index(Action::Stay)] = 1.0;
      break;
  }
  return row;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

}  // namespace

std::string_view action_name(Action a) { return kNames[static_cast<std::size_t>(to_index(a))]; }

std::optional<Action> parse_action(std::string_view name) {
  for (int i = 0; i < kActionCount; ++i)
    if (kNames[static_cast<std::size_t>(i)] == name) return static_cast<Action>(i);
  if (name == "^") return Action::Up;
  if (name == "v") return Action::Down;
  if (name == "<") return Action::Left;
  if (name == ">") return Action::Right;
  if (name == "R") return Action::TurnCW;
  if (name == "L") return Action::TurnCCW;
  if (name == "S") return Action::Stay;
  return std::nullopt;
}

bool is_blocked(const GridMap& map, const Pose& pose, Action a) {
  if (!is_move(a)) return false;
  const Cell d = move_offset(a);
  return !map.free({pose.x + d.x, pose.y + d.y});
}

Pose apply_action(const GridMap& map, const Pose& pose, Action realized) {
  switch (realized) {
    case Action::TurnCW: return {pose.x, pose.y, pose.heading.clockwise()};
    case Action::TurnCCW: return {pose.x, pose.y, pose.heading.counterclockwise()};
    case Action::Stay: return pose;
    default: break;
  }
  if (is_blocked(map, pose, realized)) return pose;
  const Cell d = move_offset(realized);
  return {pose.x + d.x, pose.y + d.y, pose.heading};
}

TransitionRow build_transition(const GridMap& map, const Pose& pose, Action intended, double eps_move) {
  TransitionRow row = nominal_row(intended, eps_move);
  for (Action a : {Action::Up, Action::Down, Action::Left, Action::Right}) {
    const int j = to_index(a);
    if (row[j] != 0.0 && is_blocked(map, pose, a)) {
      row[to_index(Action::Stay)] += row[j];
      row[j] = 0.0;
    }
  }
  return row;
}

void validate(const PlannerParams& p) {
  require(p.gamma > 0.0 && p.gamma < 1.0, "gamma must lie in (0, 1)");
  require(p.eta > 0.0, "eta must be positive");
  require(p.eps_move > 0.0 && p.eps_move < 0.5, "eps_move must lie in (0, 0.5)");
  require(p.eps_reward >= 0.0 && std::isfinite(p.eps_reward), "eps_reward must be non-negative");
  require(p.eps_astar > 0.0 && p.eps_astar < 1.0, "eps_astar must lie in (0, 1)");
  require(p.fov_half_angle > 0.0 && p.fov_half_angle <= std::numbers::pi, "fov_half_angle must lie in (0, pi]");
  require(p.max_sweeps > 0, "max_sweeps must be positive");
}

void validate(const PlannerParams& p, const GridMap& map) {
  validate(p);
  validate_eps_astar(map, p.eps_astar);
}

double reward_floor_value(const PlannerParams& params) {
  return params.reward_floor == RewardFloor::Exact ? -std::numbers::pi : -(params.eps_reward + std::numbers::pi);
}

double state_reward(const GridMap& map, int goal_index, const Pose& pose, const VisibilityField& visibility,
                    const PlannerParams& params) {
  const Cell goal = map.goals().at(static_cast<std::size_t>(goal_index));
  if (pose.cell() == goal) return std::numbers::pi;
  const auto path = modified_astar(map, pose.cell(), goal, visibility, params.eps_astar);
  if (!path) return reward_floor_value(params);
  const PathOrientation orientation = path_orientation(pose, *path, visibility);
  if (orientation.visible_count == 0) return reward_floor_value(params);
  return -(params.eps_reward + angle_difference(orientation.theta_goal, pose.heading.radians()));
}

std::vector<RewardTable> compute_all_rewards(const GridMap& map, const PlannerParams& params) {
  const auto n = static_cast<Eigen::Index>(map.state_count());
  std::vector<RewardTable> tables(static_cast<std::size_t>(map.goal_count()));
  for (int g = 0; g < map.goal_count(); ++g) {
    tables[static_cast<std::size_t>(g)].goal_index = g;
    tables[static_cast<std::size_t>(g)].values = Eigen::VectorXd::Constant(n, reward_floor_value(params));
  }
  for (std::size_t s = 0; s < map.state_count(); ++s) {
    const Pose pose = pose_at(map, s);
    if (!map.valid_pose(pose)) continue;
    const VisibilityField visibility = compute_visibility(map, pose, params.fov_half_angle);
    for (auto& table : tables)
      table.values[static_cast<Eigen::Index>(s)] = state_reward(map, table.goal_index, pose, visibility, params);
  }
  return tables;
}

RewardTable compute_rewards(const GridMap& map, int goal_index, const PlannerParams& params) {
  if (goal_index < 0 || goal_index >= map.goal_count()) throw std::out_of_range("goal index out of range");
  RewardTable table;
  table.goal_index = goal_index;
  table.values = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(map.state_count()), reward_floor_value(params));
  for (std::size_t s = 0; s < map.state_count(); ++s) {
    const Pose pose = pose_at(map, s);
    if (!map.valid_pose(pose)) continue;
    table.values[static_cast<Eigen::Index>(s)] =
        state_reward(map, goal_index, pose, compute_visibility(map, pose, params.fov_half_angle), params);
  }
  return table;
}

TransitionModel::TransitionModel(const GridMap& map, double eps_move) {
  free_.resize(map.cell_count());
  for (std::size_t c = 0; c < map.cell_count(); ++c) free_[c] = map.free(map.cell_at(c)) ? 1 : 0;
  entries_.resize(map.state_count() * kActionCount);
  for (std::size_t s = 0; s < map.state_count(); ++s) {
    const Pose pose = pose_at(map, s);
    if (!map.valid_pose(pose)) continue;
    for (Action intended : kAllActions) {
      Entry& e = entries_[s * kActionCount + to_index(intended)];
      e.probability = build_transition(map, pose, intended, eps_move);
      for (Action realized : kAllActions)
        e.successor[static_cast<std::size_t>(to_index(realized))] =
            static_cast<std::uint32_t>(state_index(map, apply_action(map, pose, realized)));
    }
  }
}

double TransitionModel::action_value(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values, double gamma,
                                     std::size_t state, Action a) const {
  const Entry& e = at(state, a);
  double q = 0.0;
  for (int j = 0; j < kActionCount; ++j) {
    const double p = e.probability[j];
    if (p == 0.0) continue;
    const auto next = static_cast<Eigen::Index>(e.successor[static_cast<std::size_t>(j)]);
    q += p * (rewards[next] + gamma * values[next]);
  }
  return q;
}

ValueTable value_iteration(const TransitionModel& model, const RewardTable& rewards, const PlannerParams& params) {
  validate(params);
  const auto n = static_cast<Eigen::Index>(model.state_count());
  if (rewards.values.size() != n) throw std::invalid_argument("reward table does not match the transition model");

  ValueTable table;
  table.gamma = params.gamma;
  Eigen::VectorXd current = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd next = current;

  for (int sweep = 1; sweep <= params.max_sweeps; ++sweep) {
    for (Eigen::Index s = 0; s < n; ++s) {
      const auto state = static_cast<std::size_t>(s);
      if (!model.state_free(state)) continue;
      double best = model.action_value(rewards.values, current, params.gamma, state, Action::Up);
      for (int a = 1; a < kActionCount; ++a)
        best = std::max(best, model.action_value(rewards.values, current, params.gamma, state, static_cast<Action>(a)));
      next[s] = best;
    }
    const double change = (next - current).cwiseAbs().sum();
    current.swap(next);
    if (change < params.eta) {
      table.values = std::move(current);
      table.sweeps = sweep;
      table.last_change = change;
      return table;
    }
  }
  throw ConvergenceError("value iteration did not converge within " + std::to_string(params.max_sweeps) + " sweeps");
}

ValueTable value_iteration(const GridMap& map, const RewardTable& rewards, const PlannerParams& params) {
  return value_iteration(TransitionModel(map, params.eps_move), rewards, params);
}

double action_value(const GridMap& map, const RewardTable& rewards, const ValueTable& values, const Pose& pose,
                    Action a, double eps_move) {
  const TransitionRow row = build_transition(map, pose, a, eps_move);
  double q = 0.0;
  for (Action realized : kAllActions) {
    const double p = row[to_index(realized)];
    if (p == 0.0) continue;
    const std::size_t next = state_index(map, apply_action(map, pose, realized));
    q += p * (rewards(next) + values.gamma * values(next));
  }
  return q;
}

Action argmax_action(const ActionValues& q) {
  int best = 0;
  for (int a = 1; a < kActionCount; ++a)
    if (q[a] > q[best]) best = a;
  return static_cast<Action>(best);
}

Action argmin_action(const ActionValues& q) {
  int worst = 0;
  for (int a = 1; a < kActionCount; ++a)
    if (q[a] < q[worst]) worst = a;
  return static_cast<Action>(worst);
}

HypothesisModel::HypothesisModel(const GridMap& map, RewardTable rewards, ValueTable values, double eps_move)
    : map_(&map), rewards_(std::move(rewards)), values_(std::move(values)), eps_move_(eps_move) {}

double HypothesisModel::q(const Pose& pose, Action a) const {
  return action_value(*map_, rewards_, values_, pose, a, eps_move_);
}

ActionValues HypothesisModel::q_values(const Pose& pose) const {
  ActionValues q;
  for (Action a : kAllActions) q[to_index(a)] = this->q(pose, a);
  return q;
}

Action HypothesisModel::optimal_action(const Pose& pose) const { return argmax_action(q_values(pose)); }

Action HypothesisModel::worst_action(const Pose& pose) const { return argmin_action(q_values(pose)); }

bool HypothesisModel::is_consistent(const Pose& pose, Action a) const {
  return q(pose, a) >= q(pose, Action::Stay);
}

}  // namespace intentgrid
