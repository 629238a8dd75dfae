#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentgrid/gridworld.hpp"
#include "intentgrid/intent.hpp"
#include "intentgrid/planner.hpp"

namespace intentgrid {

/// Input that fails validation (bad parameter, unknown action name, malformed file).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precomputed tables that do not belong to the requested map or parameters.
class MismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solved value and reward tables for every goal hypothesis of one map.
class Tables {
 public:
  Tables(GridMap map, PlannerParams params, std::vector<RewardTable> rewards, std::vector<ValueTable> values);

  const GridMap& map() const { return *map_; }
  const PlannerParams& params() const { return params_; }
  const std::string& map_hash() const { return map_hash_; }
  std::span<const HypothesisModel> hypotheses() const { return hypotheses_; }
  int goal_count() const { return static_cast<int>(hypotheses_.size()); }

  /// Throws MismatchError listing every differing field.
  void check_compatible(const GridMap& map, const PlannerParams& params) const;

 private:
  std::shared_ptr<const GridMap> map_;
  PlannerParams params_;
  std::string map_hash_;
  std::vector<HypothesisModel> hypotheses_;
};

struct PrecomputeReport {
  std::vector<int> sweeps;
  double seconds = 0.0;
  std::vector<std::string> warnings;
};

std::shared_ptr<const Tables> precompute(const GridMap& map, const PlannerParams& params,
                                         PrecomputeReport* report = nullptr);

/// Binary artifact: magic, version, JSON header, then per hypothesis V and R as
/// little-endian float64 in (y, x, heading) order.
void write_tables(const Tables& tables, std::ostream& out);
void save_tables(const Tables& tables, const std::filesystem::path& path);
std::shared_ptr<const Tables> read_tables(std::istream& in);
std::shared_ptr<const Tables> load_tables(const std::filesystem::path& path);

enum class StepMode { Deterministic, Stochastic };

std::string_view mode_name(StepMode mode);
StepMode parse_mode(std::string_view name);

struct StepRecord {
  int step = 0;
  Action intended = Action::Stay;
  Action realized = Action::Stay;
  Action observed = Action::Stay;  // the action fed to the observation model
  Pose before;
  Pose after;
  Eigen::VectorXd observation;
  double phi = 0.0;
  Eigen::VectorXd emission;
  Eigen::VectorXd desires;
  std::vector<bool> consistent;  // per hypothesis, for the observed action
};

/// Portable 64-bit generator; draws are converted to doubles without std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

/// Index of the realized action: argmax of the row, or a draw from it.
Action realize(const TransitionRow& row, StepMode mode, Rng& rng);

/// One agent's episode: pose, desire filter and step history over shared tables.
class Session {
 public:
  Session(std::shared_ptr<const Tables> tables, HmmParams<double> hmm, Pose start, StepMode mode, std::uint64_t seed);

  const StepRecord& step(Action intended);
  void reset();

  const Pose& pose() const { return pose_; }
  const Pose& start() const { return start_; }
  StepMode mode() const { return mode_; }
  std::uint64_t seed() const { return seed_; }
  const Tables& tables() const { return *tables_; }
  const HmmParams<double>& hmm() const { return filter_.params(); }
  const std::vector<StepRecord>& history() const { return history_; }
  const Eigen::VectorXd& desires() const { return filter_.current(); }
  std::vector<int> most_likely_sequence() const { return filter_.most_likely_sequence(); }

 private:
  std::shared_ptr<const Tables> tables_;
  Pose start_;
  Pose pose_;
  StepMode mode_;
  std::uint64_t seed_;
  Rng rng_;
  DesireFilter<double> filter_;
  std::vector<Eigen::VectorXd> observations_;
  std::vector<StepRecord> history_;
};

/// Recorded or scripted episode description.
struct Scenario {
  std::string name;
  std::filesystem::path map_path;
  Pose start;
  std::vector<Action> actions;
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;
  StepMode mode = StepMode::Deterministic;
};

/// Parses the scenario JSON. Relative map paths resolve against `base_dir`.
Scenario parse_scenario(const nlohmann::json& doc, const std::filesystem::path& base_dir);
Scenario load_scenario(const std::filesystem::path& path);

/// Applies a scenario/config `params` object; unknown keys are rejected.
void apply_overrides(const nlohmann::json& overrides, PlannerParams& planner, HmmParams<double>& hmm);

struct ReplayResult {
  std::vector<StepRecord> trace;
  Eigen::VectorXd final_desires;
  std::vector<int> sequence;
};

ReplayResult run_replay(std::shared_ptr<const Tables> tables, const HmmParams<double>& hmm, const Pose& start,
                        std::span<const Action> actions, StepMode mode = StepMode::Deterministic,
                        std::uint64_t seed = 0);

}  // namespace intentgrid
