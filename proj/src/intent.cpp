#include "intentgrid/intent.hpp"

#include <algorithm>

namespace intentgrid {

std::string desire_label(int state, int goal_count) {
  if (state == unknown_state(goal_count)) return "G?";
  if (state == irrational_state(goal_count)) return "Gx";
  return "G" + std::to_string(state + 1);
}

double normalized_action_value(const ActionValues& q, Action a) {
  const double best = q.maxCoeff();
  const double worst = q.minCoeff();
  const double span = best - worst;
  if (span < kQEquivalenceTolerance) return 1.0;
  return std::clamp((q[to_index(a)] - worst) / span, 0.0, 1.0);
}

ObservationVector observe(std::span<const HypothesisModel> hypotheses, const Pose& state, Action action) {
  ObservationVector obs;
  obs.state = state;
  obs.action = action;
  obs.values.resize(static_cast<Eigen::Index>(hypotheses.size()));
  for (std::size_t i = 0; i < hypotheses.size(); ++i)
    obs.values[static_cast<Eigen::Index>(i)] = normalized_action_value(hypotheses[i].q_values(state), action);
  return obs;
}

}  // namespace intentgrid
