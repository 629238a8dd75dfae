#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentgrid/engine.hpp"

namespace intentgrid {

inline constexpr int kTraceFormatVersion = 1;
inline constexpr const char* kTraceFormat = "intentgrid-trace";

nlohmann::json to_json(const Pose& pose);
Pose pose_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PlannerParams& params);
PlannerParams planner_params_from_json(const nlohmann::json& j);

nlohmann::json to_json(const HmmParams<double>& params);
HmmParams<double> hmm_params_from_json(const nlohmann::json& j);

nlohmann::json to_json(const StepRecord& record);
StepRecord step_record_from_json(const nlohmann::json& j);

nlohmann::json sequence_labels(const std::vector<int>& sequence, int goal_count);

/// First line of a trace file.
nlohmann::json trace_header(const Session& session);

/// Line-delimited trace writer; every line is flushed as it is written.
class TraceWriter {
 public:
  TraceWriter(std::ostream& out, const nlohmann::json& header);

  void write(const StepRecord& record);
  void write_summary(const Eigen::VectorXd& final_desires, const std::vector<int>& sequence);

 private:
  std::ostream* out_;
  int goal_count_;
};

struct Trace {
  nlohmann::json header;
  std::vector<StepRecord> records;
  std::optional<nlohmann::json> summary;
};

Trace read_trace(std::istream& in);
Trace load_trace(const std::filesystem::path& path);

}  // namespace intentgrid
