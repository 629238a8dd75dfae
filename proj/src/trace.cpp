#include "intentgrid/trace.hpp"

#include <fstream>
#include <istream>
#include <ostream>

namespace intentgrid {

namespace {

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Action action_from_json(const nlohmann::json& j) {
  const auto name = j.get<std::string>();
  const auto a = parse_action(name);
  if (!a) throw ValidationError("unknown action name '" + name + "'");
  return *a;
}

}  // namespace

nlohmann::json to_json(const Pose& pose) { return {{"x", pose.x}, {"y", pose.y}, {"heading", pose.heading.index()}}; }

Pose pose_from_json(const nlohmann::json& j) {
  return {j.at("x").get<int>(), j.at("y").get<int>(), Heading(j.at("heading").get<int>())};
}

nlohmann::json to_json(const PlannerParams& p) {
  return {
      {"gamma", p.gamma},
      {"eta", p.eta},
      {"eps_move", p.eps_move},
      {"eps_reward", p.eps_reward},
      {"eps_astar", p.eps_astar},
      {"fov_half_angle", p.fov_half_angle},
      {"reward_floor", p.reward_floor == RewardFloor::Exact ? "exact" : "derived"},
      {"max_sweeps", p.max_sweeps},
  };
}

PlannerParams planner_params_from_json(const nlohmann::json& j) {
  PlannerParams p;
  HmmParams<double> unused;
  apply_overrides(j, p, unused);
  return p;
}

nlohmann::json to_json(const HmmParams<double>& p) {
  return {
      {"hmm_alpha", p.alpha},
      {"hmm_beta", p.beta},
      {"hmm_gamma", p.gamma},
      {"hmm_delta", p.delta},
      {"c_rational", p.c_rational},
      {"c_unknown", p.c_unknown},
      {"phi_threshold", p.phi_threshold},
      {"phi_window", p.window},
      {"filter", p.filter == FilterKind::Forward ? "forward" : "viterbi"},
  };
}

HmmParams<double> hmm_params_from_json(const nlohmann::json& j) {
  PlannerParams unused;
  HmmParams<double> p;
  apply_overrides(j, unused, p);
  return p;
}

nlohmann::json to_json(const StepRecord& r) {
  nlohmann::json consistent = nlohmann::json::array();
  for (bool c : r.consistent) consistent.push_back(c);
  return {
      {"type", "step"},
      {"step", r.step},
      {"intended", action_name(r.intended)},
      {"realized", action_name(r.realized)},
      {"observed", action_name(r.observed)},
      {"before", to_json(r.before)},
      {"after", to_json(r.after)},
      {"observation", vector_json(r.observation)},
      {"phi", r.phi},
      {"emission", vector_json(r.emission)},
      {"desires", vector_json(r.desires)},
      {"consistent", consistent},
  };
}

StepRecord step_record_from_json(const nlohmann::json& j) {
  StepRecord r;
  r.step = j.at("step").get<int>();
  r.intended = action_from_json(j.at("intended"));
  r.realized = action_from_json(j.at("realized"));
  r.observed = action_from_json(j.at("observed"));
  r.before = pose_from_json(j.at("before"));
  r.after = pose_from_json(j.at("after"));
  r.observation = vector_from_json(j.at("observation"));
  r.phi = j.at("phi").get<double>();
  r.emission = vector_from_json(j.at("emission"));
  r.desires = vector_from_json(j.at("desires"));
  r.consistent = j.at("consistent").get<std::vector<bool>>();
  return r;
}

nlohmann::json sequence_labels(const std::vector<int>& sequence, int goal_count) {
  nlohmann::json out = nlohmann::json::array();
  for (int s : sequence) out.push_back(desire_label(s, goal_count));
  return out;
}

nlohmann::json trace_header(const Session& session) {
  const int k = session.tables().goal_count();
  nlohmann::json labels = nlohmann::json::array();
  for (int s = 0; s < desire_state_count(k); ++s) labels.push_back(desire_label(s, k));
  return {
      {"type", "header"},
      {"format", kTraceFormat},
      {"version", kTraceFormatVersion},
      {"map_hash", session.tables().map_hash()},
      {"params", to_json(session.tables().params())},
      {"hmm", to_json(session.hmm())},
      {"seed", session.seed()},
      {"mode", mode_name(session.mode())},
      {"start", to_json(session.start())},
      {"goal_count", k},
      {"labels", labels},
  };
}

TraceWriter::TraceWriter(std::ostream& out, const nlohmann::json& header)
    : out_(&out), goal_count_(header.at("goal_count").get<int>()) {
  *out_ << header.dump() << '\n' << std::flush;
}

void TraceWriter::write(const StepRecord& record) { *out_ << to_json(record).dump() << '\n' << std::flush; }

void TraceWriter::write_summary(const Eigen::VectorXd& final_desires, const std::vector<int>& sequence) {
  const nlohmann::json summary = {
      {"type", "summary"},
      {"steps", sequence.size()},
      {"final", vector_json(final_desires)},
      {"sequence", sequence_labels(sequence, goal_count_)},
  };
  *out_ << summary.dump() << '\n' << std::flush;
}

Trace read_trace(std::istream& in) {
  Trace trace;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string type = j.value("type", "");
    if (line_no == 1) {
      if (type != "header" || j.value("format", "") != kTraceFormat)
        throw ValidationError("trace does not start with an intentgrid-trace header");
      if (j.value("version", 0) != kTraceFormatVersion)
        throw ValidationError("unsupported trace version " + j.value("version", nlohmann::json()).dump());
      trace.header = std::move(j);
    } else if (type == "step") {
      try {
        trace.records.push_back(step_record_from_json(j));
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError("trace line " + std::to_string(line_no) + ": " + e.what());
      }
    } else if (type == "summary") {
      trace.summary = std::move(j);
    } else {
      throw ValidationError("trace line " + std::to_string(line_no) + ": unknown record type '" + type + "'");
    }
  }
  if (trace.header.is_null()) throw ValidationError("trace is empty");
  return trace;
}

Trace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace file: " + path.string());
  return read_trace(in);
}

}  // namespace intentgrid
