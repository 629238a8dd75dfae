#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "intentgrid/planner.hpp"

namespace intentgrid {

/// How per-step desire probabilities are read off the trellis.
enum class FilterKind {
  Viterbi,  // normalized max-product trellis
  Forward,  // normalized sum-product (filtering posterior)
};

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Hidden states are ordered G_1..G_K, G_? (unknown), G_x (irrational).
inline int unknown_state(int goal_count) { return goal_count; }
inline int irrational_state(int goal_count) { return goal_count + 1; }
inline int desire_state_count(int goal_count) { return goal_count + 2; }

/// "G1".."G9", "G?", "Gx".
std::string desire_label(int state, int goal_count);

template <typename Scalar = double>
struct HmmParams {
  Scalar alpha = Scalar(0.2);   // goal -> unknown
  Scalar beta = Scalar(0.1);    // unknown -> each goal when there are three goals
  Scalar gamma = Scalar(0.65);  // unknown -> unknown
  Scalar delta = Scalar(0.1);   // irrational -> unknown
  Scalar c_rational = Scalar(0.55);
  Scalar c_unknown = Scalar(0.1);
  Scalar phi_threshold = Scalar(0.5);
  int window = 3;
  FilterKind filter = FilterKind::Viterbi;

  friend bool operator==(const HmmParams&, const HmmParams&) = default;

  /// Unknown -> irrational takes the remainder of the unknown row.
  Scalar unknown_to_irrational() const { return Scalar(1) - gamma - Scalar(3) * beta; }
};

template <typename Scalar>
void validate(const HmmParams<Scalar>& p) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(p.alpha >= 0 && p.alpha <= 1, "hmm alpha must lie in [0, 1]");
  require(p.beta >= 0, "hmm beta must be non-negative");
  require(p.gamma >= 0 && p.gamma <= 1, "hmm gamma must lie in [0, 1]");
  require(p.delta >= 0 && p.delta <= 1, "hmm delta must lie in [0, 1]");
  require(p.unknown_to_irrational() >= -Scalar(1e-12), "hmm gamma + 3 beta must not exceed 1");
  require(p.c_rational > 0, "c_rational must be positive");
  require(p.c_unknown > 0, "c_unknown must be positive");
  require(p.phi_threshold >= 0 && p.phi_threshold <= 1, "phi_threshold must lie in [0, 1]");
  require(p.window >= 1, "phi window must be at least 1");
}

/// Row-stochastic hidden-state transition matrix. The unknown state spreads 3 beta
/// evenly over the K goals, so the three-goal case keeps beta per goal.
template <typename Scalar>
Matrix<Scalar> transition_matrix(const HmmParams<Scalar>& p, int goal_count) {
  const int n = desire_state_count(goal_count);
  const int unknown = unknown_state(goal_count);
  const int irrational = irrational_state(goal_count);
  Matrix<Scalar> t = Matrix<Scalar>::Zero(n, n);
  for (int g = 0; g < goal_count; ++g) {
    t(g, g) = Scalar(1) - p.alpha;
    t(g, unknown) = p.alpha;
    t(unknown, g) = Scalar(3) * p.beta / Scalar(goal_count);
  }
  t(unknown, unknown) = p.gamma;
  t(unknown, irrational) = std::max(Scalar(0), p.unknown_to_irrational());
  t(irrational, unknown) = p.delta;
  t(irrational, irrational) = Scalar(1) - p.delta;
  return t;
}

/// All mass on the unknown state.
template <typename Scalar>
Vector<Scalar> initial_distribution(int goal_count) {
  Vector<Scalar> pi = Vector<Scalar>::Zero(desire_state_count(goal_count));
  pi[unknown_state(goal_count)] = Scalar(1);
  return pi;
}

/// Normalized action value per hypothesis for one (state, action) pair.
struct ObservationVector {
  Eigen::VectorXd values;
  Pose state;
  Action action = Action::Stay;
};

/// Degenerate-denominator guard: below this the action is treated as optimal.
inline constexpr double kQEquivalenceTolerance = 1e-9;

/// (Q(a) - Q(worst)) / (Q(best) - Q(worst)) for one hypothesis' action values.
double normalized_action_value(const ActionValues& q, Action a);

ObservationVector observe(std::span<const HypothesisModel> hypotheses, const Pose& state, Action action);

/// Max over hypotheses of the mean of the last `window` observations (fewer at episode start).
template <typename Scalar = double>
Scalar rationality_phi(std::span<const Vector<Scalar>> history, int window) {
  if (history.empty()) throw std::invalid_argument("rationality_phi needs at least one observation");
  const std::size_t used = std::min<std::size_t>(history.size(), static_cast<std::size_t>(window));
  Vector<Scalar> sum = Vector<Scalar>::Zero(history.back().size());
  for (std::size_t i = history.size() - used; i < history.size(); ++i) sum += history[i];
  return sum.maxCoeff() / static_cast<Scalar>(used);
}

/// Normalized emission likelihoods of one observation over the K + 2 hidden states.
template <typename Scalar = double>
Vector<Scalar> emission_row(const Vector<Scalar>& observation, Scalar phi, const HmmParams<Scalar>& p) {
  using std::tanh;
  const auto k = static_cast<int>(observation.size());
  Vector<Scalar> row(desire_state_count(k));
  if (phi > p.phi_threshold) {
    row.head(k) = observation.array().tanh();
    row[unknown_state(k)] = tanh(p.c_rational);
    row[irrational_state(k)] = Scalar(0);
  } else {
    row.head(k) = (observation.array() / Scalar(2)).tanh();
    row[unknown_state(k)] = tanh(p.c_unknown);
    row[irrational_state(k)] = tanh(Scalar(1) - phi);
  }
  return row / row.sum();
}

/// One max-product step: out(s) = e(s) * max_s' prev(s') T(s', s).
template <typename Scalar>
Vector<Scalar> viterbi_step(const Matrix<Scalar>& transition, const Vector<Scalar>& prev, const Vector<Scalar>& emission,
                            std::vector<int>* backpointer = nullptr) {
  const auto n = transition.rows();
  Vector<Scalar> out(n);
  if (backpointer) backpointer->assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index s = 0; s < n; ++s) {
    Eigen::Index arg = 0;
    const Scalar best = (prev.array() * transition.col(s).array()).maxCoeff(&arg);
    out[s] = emission[s] * best;
    if (backpointer) (*backpointer)[static_cast<std::size_t>(s)] = static_cast<int>(arg);
  }
  return out;
}

/// One sum-product step: out(s) = e(s) * sum_s' prev(s') T(s', s).
template <typename Scalar>
Vector<Scalar> forward_step(const Matrix<Scalar>& transition, const Vector<Scalar>& prev, const Vector<Scalar>& emission) {
  return emission.cwiseProduct(transition.transpose() * prev);
}

/// Incremental desire estimator. The trellis is renormalized every step, so
/// arbitrarily long sequences do not underflow.
template <typename Scalar = double>
class DesireFilter {
 public:
  DesireFilter(const HmmParams<Scalar>& params, int goal_count)
      : params_(params), goal_count_(goal_count), transition_(transition_matrix(params, goal_count)) {
    validate(params_);
    reset();
  }

  void reset() {
    delta_ = initial_distribution<Scalar>(goal_count_);
    forward_ = delta_;
    history_.assign(1, delta_);
    backpointers_.clear();
  }

  /// Extends the estimate by one emission row and returns the new per-step probabilities.
  const Vector<Scalar>& push(const Vector<Scalar>& emission) {
    if (emission.size() != transition_.rows()) throw std::invalid_argument("emission row has the wrong number of states");
    std::vector<int> back;
    Vector<Scalar> next = viterbi_step(transition_, delta_, emission, &back);
    const Scalar total = next.sum();
    if (!(total > Scalar(0))) throw std::logic_error("viterbi trellis collapsed to zero");
    delta_ = next / total;
    backpointers_.push_back(std::move(back));

    Vector<Scalar> fwd = forward_step(transition_, forward_, emission);
    forward_ = fwd / fwd.sum();

    history_.push_back(params_.filter == FilterKind::Forward ? forward_ : delta_);
    return history_.back();
  }

  /// Probabilities after `step` emissions; step 0 is the initial distribution.
  const Vector<Scalar>& probabilities(std::size_t step) const { return history_.at(step); }
  const Vector<Scalar>& current() const { return history_.back(); }
  std::size_t steps() const { return backpointers_.size(); }

  /// Normalized Viterbi trellis column, regardless of the reporting mode.
  const Vector<Scalar>& trellis() const { return delta_; }

  /// Most probable hidden-state sequence for steps 1..t (empty before any emission).
  std::vector<int> most_likely_sequence() const {
    std::vector<int> seq(backpointers_.size());
    if (seq.empty()) return seq;
    Eigen::Index last = 0;
    delta_.maxCoeff(&last);
    int state = static_cast<int>(last);
    for (std::size_t t = backpointers_.size(); t-- > 0;) {
      seq[t] = state;
      state = backpointers_[t][static_cast<std::size_t>(state)];
    }
    return seq;
  }

  const HmmParams<Scalar>& params() const { return params_; }
  const Matrix<Scalar>& transition() const { return transition_; }
  int goal_count() const { return goal_count_; }

 private:
  HmmParams<Scalar> params_;
  int goal_count_;
  Matrix<Scalar> transition_;
  Vector<Scalar> delta_;
  Vector<Scalar> forward_;
  std::vector<Vector<Scalar>> history_;
  std::vector<std::vector<int>> backpointers_;
};

template <typename Scalar = double>
struct DesireEstimate {
  std::vector<Vector<Scalar>> probabilities;  // index 0 is the prior
  std::vector<int> sequence;
};

/// Batch form of DesireFilter over a whole emission sequence.
template <typename Scalar = double>
DesireEstimate<Scalar> estimate_desires(const HmmParams<Scalar>& params, int goal_count,
                                        std::span<const Vector<Scalar>> emissions) {
  DesireFilter<Scalar> filter(params, goal_count);
  DesireEstimate<Scalar> out;
  out.probabilities.push_back(filter.current());
  for (const auto& e : emissions) out.probabilities.push_back(filter.push(e));
  out.sequence = filter.most_likely_sequence();
  return out;
}

}  // namespace intentgrid
