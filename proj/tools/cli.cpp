#include "cli.hpp"

#include <chrono>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "intentgrid/engine.hpp"
#include "intentgrid/service.hpp"
#include "intentgrid/trace.hpp"
#include "intentgrid/version.hpp"

namespace intentgrid::cli {

namespace {

using nlohmann::json;

/// Numeric and enumerated model parameters; key names match scenario `params`.
struct ParamFlags {
  std::optional<double> gamma, eta, eps_move, eps_reward, eps_astar, fov_half_angle;
  std::optional<int> max_sweeps;
  std::optional<std::string> reward_floor;
  std::optional<double> hmm_alpha, hmm_beta, hmm_gamma, hmm_delta, c_rational, c_unknown, phi_threshold;
  std::optional<int> phi_window;
  std::optional<std::string> filter;

  json overrides() const {
    json j = json::object();
    auto put = [&j](const char* key, const auto& v) {
      if (v) j[key] = *v;
    };
    put("gamma", gamma);
    put("eta", eta);
    put("eps_move", eps_move);
    put("eps_reward", eps_reward);
    put("eps_astar", eps_astar);
    put("fov_half_angle", fov_half_angle);
    put("max_sweeps", max_sweeps);
    put("reward_floor", reward_floor);
    put("hmm_alpha", hmm_alpha);
    put("hmm_beta", hmm_beta);
    put("hmm_gamma", hmm_gamma);
    put("hmm_delta", hmm_delta);
    put("c_rational", c_rational);
    put("c_unknown", c_unknown);
    put("phi_threshold", phi_threshold);
    put("phi_window", phi_window);
    put("filter", filter);
    return j;
  }
};

struct Options {
  std::optional<std::string> map, scenario, tables, out, from_trace, start, ui_dir, trace_dir, file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::string host = "127.0.0.1";
  std::uint16_t port = 8080;
  bool summary = false;
  bool print_config = false;
  ParamFlags params;
};

std::string env_name(const std::string& flag) {
  std::string name = kEnvPrefix;
  for (char c : flag) name.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return name;
}

template <typename T>
CLI::Option* flag(CLI::App& app, const std::string& name, T& target, const std::string& help) {
  return app.add_option("--" + name, target, help)->envname(env_name(name));
}

void add_model_flags(CLI::App& app, ParamFlags& p) {
  const PlannerParams dp;
  const HmmParams<double> dh;
  auto with_default = [](const std::string& help, auto value) {
    std::ostringstream s;
    s << help << " [default " << value << "]";
    return s.str();
  };
  flag(app, "gamma", p.gamma, with_default("MDP discount, in (0,1)", dp.gamma))->group("Planner");
  flag(app, "eta", p.eta, with_default("value iteration stop threshold on summed |dV|", dp.eta))->group("Planner");
  flag(app, "eps-move", p.eps_move, with_default("side-slip probability of a move, in (0,0.5)", dp.eps_move))->group("Planner");
  flag(app, "eps-reward", p.eps_reward, with_default("constant step penalty", dp.eps_reward))->group("Planner");
  flag(app, "eps-astar", p.eps_astar, with_default("A* discount on visible cells", dp.eps_astar))->group("Planner");
  flag(app, "fov-half-angle", p.fov_half_angle, with_default("vision cone half angle in radians, in (0,pi]", dp.fov_half_angle))
      ->group("Planner");
  flag(app, "max-sweeps", p.max_sweeps, with_default("value iteration sweep limit", dp.max_sweeps))->group("Planner");
  flag(app, "reward-floor", p.reward_floor, "reward where no path is visible: derived|exact [default derived]")
      ->check(CLI::IsMember({"derived", "exact"}))
      ->group("Planner");
  flag(app, "hmm-alpha", p.hmm_alpha, with_default("goal -> unknown transition", dh.alpha))->group("Desire filter");
  flag(app, "hmm-beta", p.hmm_beta, with_default("unknown -> goal transition (three-goal scale)", dh.beta))->group("Desire filter");
  flag(app, "hmm-gamma", p.hmm_gamma, with_default("unknown -> unknown transition", dh.gamma))->group("Desire filter");
  flag(app, "hmm-delta", p.hmm_delta, with_default("irrational -> unknown transition", dh.delta))->group("Desire filter");
  flag(app, "c-rational", p.c_rational, with_default("unknown-state emission constant when rational", dh.c_rational))
      ->group("Desire filter");
  flag(app, "c-unknown", p.c_unknown, with_default("unknown-state emission constant when irrational", dh.c_unknown))
      ->group("Desire filter");
  flag(app, "phi-threshold", p.phi_threshold, with_default("rationality threshold", dh.phi_threshold))->group("Desire filter");
  flag(app, "phi-window", p.phi_window, with_default("observations averaged for rationality", dh.window))->group("Desire filter");
  flag(app, "filter", p.filter, "probability readout: viterbi|forward [default viterbi]")
      ->check(CLI::IsMember({"viterbi", "forward"}))
      ->group("Desire filter");
}

void add_session_flags(CLI::App& app, Options& o) {
  flag(app, "seed", o.seed, "RNG seed for stochastic mode [default 0, or the scenario's]")->group("Session");
  flag(app, "mode", o.mode, "step realization: deterministic|stochastic [default deterministic, or the scenario's]")
      ->check(CLI::IsMember({"deterministic", "stochastic"}))
      ->group("Session");
}

struct Resolved {
  std::optional<GridMap> map;
  std::string map_path;
  std::optional<Scenario> scenario;
  PlannerParams planner;
  HmmParams<double> hmm;
  std::uint64_t seed = 0;
  StepMode mode = StepMode::Deterministic;
};

Pose parse_start(const std::string& text) {
  std::string s = text;
  for (char& c : s)
    if (c == ',') c = ' ';
  std::istringstream in(s);
  int x = 0, y = 0, h = 0;
  std::string rest;
  if (!(in >> x >> y >> h) || (in >> rest) || h < 0 || h >= kHeadingCount)
    throw ValidationError("--start expects x,y,heading_index with heading in 0..7");
  return {x, y, Heading(h)};
}

Pose default_start(const GridMap& map) {
  for (int y = 0; y < map.height(); ++y)
    for (int x = 0; x < map.width(); ++x) {
      const Cell c{x, y};
      if (map.free(c) && std::find(map.goals().begin(), map.goals().end(), c) == map.goals().end())
        return {x, y, Heading(0)};
    }
  return {map.goals()[0].x, map.goals()[0].y, Heading(0)};
}

/// Defaults, then scenario values, then environment and flags.
Resolved resolve(const Options& o) {
  Resolved r;
  if (o.scenario) {
    r.scenario = load_scenario(*o.scenario);
    r.map_path = r.scenario->map_path.string();
    apply_overrides(r.scenario->params, r.planner, r.hmm);
    r.seed = r.scenario->seed;
    r.mode = r.scenario->mode;
  }
  if (o.map) r.map_path = *o.map;
  apply_overrides(o.params.overrides(), r.planner, r.hmm);
  if (o.seed) r.seed = *o.seed;
  if (o.mode) r.mode = parse_mode(*o.mode);
  try {
    validate(r.planner);
    validate(r.hmm);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  return r;
}

void load_map_into(Resolved& r) {
  if (r.map_path.empty()) throw ValidationError("no map given: pass --map or --scenario");
  r.map = load_map(r.map_path);
  try {
    validate(r.planner, *r.map);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
}

json config_json(const Options& o, const Resolved& r, const std::string& command) {
  auto opt = [](const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); };
  json j = {
      {"command", command},
      {"map", r.map_path.empty() ? json(nullptr) : json(r.map_path)},
      {"scenario", opt(o.scenario)},
      {"tables", opt(o.tables)},
      {"out", opt(o.out)},
      {"params", to_json(r.planner)},
      {"hmm", to_json(r.hmm)},
      {"seed", r.seed},
      {"mode", mode_name(r.mode)},
  };
  if (command == "serve") {
    j["host"] = o.host;
    j["port"] = o.port;
    j["ui_dir"] = opt(o.ui_dir);
    j["trace_dir"] = opt(o.trace_dir);
    j["start"] = opt(o.start);
  }
  return j;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string estimate_line(const Eigen::VectorXd& desires, int goal_count) {
  std::string line;
  for (int s = 0; s < desires.size(); ++s) {
    if (s) line += "  ";
    line += desire_label(s, goal_count) + "=" + fixed(desires[s]);
  }
  return line;
}

std::shared_ptr<const Tables> obtain_tables(const Options& o, const Resolved& r, std::ostream& err) {
  if (o.tables) {
    auto tables = load_tables(*o.tables);
    tables->check_compatible(*r.map, r.planner);
    return tables;
  }
  PrecomputeReport report;
  auto tables = precompute(*r.map, r.planner, &report);
  for (const auto& w : report.warnings) err << "warning: " << w << '\n';
  return tables;
}

int cmd_precompute(const Options& o, std::ostream& out, std::ostream& err) {
  Resolved r = resolve(o);
  if (o.print_config) {
    out << config_json(o, r, "precompute").dump(2) << '\n';
    return kOk;
  }
  load_map_into(r);
  PrecomputeReport report;
  const auto tables = precompute(*r.map, r.planner, &report);
  for (const auto& w : report.warnings) err << "warning: " << w << '\n';
  out << "map " << r.map_path << ": " << r.map->width() << "x" << r.map->height() << ", " << r.map->goal_count()
      << " goals, hash " << tables->map_hash() << '\n';
  for (std::size_t i = 0; i < report.sweeps.size(); ++i)
    out << "hypothesis " << desire_label(static_cast<int>(i), r.map->goal_count()) << ": " << report.sweeps[i]
        << " sweeps\n";
  out << "wall time " << fixed(report.seconds, 3) << " s\n";
  if (o.out) {
    save_tables(*tables, *o.out);
    out << "wrote " << *o.out << '\n';
  }
  return kOk;
}

void print_summary(const std::vector<StepRecord>& records, const Eigen::VectorXd& initial, int goal_count,
                   std::ostream& out) {
  const int n = static_cast<int>(initial.size());
  out << "peaks:\n";
  for (int s = 0; s < n; ++s) {
    double best = initial[s];
    int at = 0;
    for (const auto& rec : records)
      if (rec.desires[s] > best) {
        best = rec.desires[s];
        at = rec.step;
      }
    out << "  " << desire_label(s, goal_count) << " " << fixed(best) << " at step " << at << '\n';
  }
  out << "switches:\n";
  Eigen::Index prev = 0;
  initial.maxCoeff(&prev);
  bool any = false;
  for (const auto& rec : records) {
    Eigen::Index cur = 0;
    rec.desires.maxCoeff(&cur);
    if (cur != prev) {
      out << "  step " << rec.step << ": " << desire_label(static_cast<int>(prev), goal_count) << " -> "
          << desire_label(static_cast<int>(cur), goal_count) << '\n';
      any = true;
    }
    prev = cur;
  }
  if (!any) out << "  none\n";
}

int cmd_replay(const Options& o, std::ostream& out, std::ostream& err) {
  if (!o.scenario && !o.from_trace) throw ValidationError("replay needs --scenario or --from-trace");
  if (o.scenario && o.from_trace) throw ValidationError("--scenario and --from-trace are exclusive");

  std::optional<Trace> recorded;
  if (o.from_trace) {
    recorded = load_trace(*o.from_trace);
    // the recorded header fixes the model; explicit flags still win
    const json& h = recorded->header;
    json overrides = h.at("params");
    overrides.update(h.at("hmm"));
    overrides.update(o.params.overrides());
    Resolved r;
    apply_overrides(overrides, r.planner, r.hmm);
    r.seed = o.seed.value_or(h.at("seed").get<std::uint64_t>());
    r.mode = parse_mode(o.mode.value_or(h.at("mode").get<std::string>()));
    r.map_path = o.map.value_or("");
    if (r.map_path.empty() && o.tables) {
      auto tables = load_tables(*o.tables);
      r.map = tables->map();
    } else {
      load_map_into(r);
    }
    if (o.print_config) {
      out << config_json(o, r, "replay").dump(2) << '\n';
      return kOk;
    }
    if (r.map->hash() != h.at("map_hash").get<std::string>())
      throw MismatchError("trace was recorded on map " + h.at("map_hash").get<std::string>() + ", given map is " +
                          r.map->hash());
    const auto tables = obtain_tables(o, r, err);
    const Pose start = pose_from_json(h.at("start"));
    std::vector<Action> actions;
    for (const auto& rec : recorded->records) actions.push_back(rec.intended);
    Session session(tables, r.hmm, start, r.mode, r.seed);
    std::size_t i = 0;
    for (Action a : actions) {
      const StepRecord& now = session.step(a);
      if (to_json(now).dump() != to_json(recorded->records[i]).dump()) {
        err << "trace differs at step " << now.step << '\n';
        return kMismatch;
      }
      ++i;
    }
    out << "reproduced " << actions.size() << " records identically\n";
    out << "final " << estimate_line(session.desires(), tables->goal_count()) << '\n';
    return kOk;
  }

  Resolved r = resolve(o);
  if (o.print_config) {
    out << config_json(o, r, "replay").dump(2) << '\n';
    return kOk;
  }
  load_map_into(r);
  const auto tables = obtain_tables(o, r, err);
  const int k = tables->goal_count();
  const Pose start = o.start ? parse_start(*o.start) : r.scenario->start;

  Session session(tables, r.hmm, start, r.mode, r.seed);
  const Eigen::VectorXd initial = session.desires();
  std::ofstream file;
  std::unique_ptr<TraceWriter> writer;
  if (o.out) {
    file.open(*o.out, std::ios::trunc);
    if (!file) throw IoError("cannot write trace file: " + *o.out);
    writer = std::make_unique<TraceWriter>(file, trace_header(session));
  }
  const auto began = std::chrono::steady_clock::now();
  for (Action a : r.scenario->actions) {
    const StepRecord& rec = session.step(a);
    if (writer) writer->write(rec);
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - began).count();
  const auto sequence = session.most_likely_sequence();
  if (writer) writer->write_summary(session.desires(), sequence);

  out << "steps " << session.history().size() << " (" << fixed(seconds, 3) << " s)\n";
  out << "final " << estimate_line(session.desires(), k) << '\n';
  out << "sequence";
  for (const auto& label : sequence_labels(sequence, k)) out << ' ' << label.get<std::string>();
  out << '\n';
  if (o.summary) print_summary(session.history(), initial, k, out);
  if (o.out) out << "wrote " << *o.out << '\n';
  return kOk;
}

int cmd_serve(const Options& o, std::ostream& out, std::ostream& err) {
  Resolved r = resolve(o);
  if (o.print_config) {
    out << config_json(o, r, "serve").dump(2) << '\n';
    return kOk;
  }
  load_map_into(r);
  const auto tables = obtain_tables(o, r, err);
  ServerOptions so;
  so.host = o.host;
  so.port = o.port;
  if (o.ui_dir) so.ui_dir = *o.ui_dir;
  so.session.start = o.start ? parse_start(*o.start) : r.scenario ? r.scenario->start : default_start(*r.map);
  if (!r.map->valid_pose(so.session.start)) throw ValidationError("start pose is out of bounds or occupied");
  so.session.mode = r.mode;
  so.session.seed = r.seed;
  so.session.hmm = r.hmm;
  if (o.trace_dir) so.session.trace_dir = *o.trace_dir;
  Server server(tables, so);
  server.listen();
  out << "listening on http://" << o.host << ":" << server.port() << " (map " << tables->map_hash() << ")" << std::endl;
  server.run();
  out << "stopped" << std::endl;
  return kOk;
}

int cmd_inspect(const Options& o, std::ostream& out) {
  const std::string& path = *o.file;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  in.seekg(0);
  if (in.gcount() == 4 && std::memcmp(magic, "IGTB", 4) == 0) {
    const auto tables = read_tables(in);
    const GridMap& map = tables->map();
    out << "tables " << path << '\n';
    out << "map " << map.width() << "x" << map.height() << ", " << map.goal_count() << " goals, hash "
        << tables->map_hash() << '\n';
    out << "params " << to_json(tables->params()).dump() << '\n';
    out << map.to_text();
    return kOk;
  }
  const Trace trace = read_trace(in);
  const int k = trace.header.at("goal_count").get<int>();
  out << "trace " << path << '\n';
  out << "map " << trace.header.at("map_hash").get<std::string>() << ", seed " << trace.header.at("seed") << ", mode "
      << trace.header.at("mode").get<std::string>() << '\n';
  out << "steps " << trace.records.size() << '\n';
  if (!trace.records.empty()) {
    out << "final " << estimate_line(trace.records.back().desires, k) << '\n';
    print_summary(trace.records, initial_distribution<double>(k), k, out);
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Goal-intent estimation on a grid world: precompute, replay, serve, inspect", "intentgrid"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.footer(std::string("Every flag FOO-BAR can also be set with the environment variable ") + kEnvPrefix +
             "FOO_BAR.\nExit codes: 0 ok, 2 validation error, 3 I/O error, 4 tables/trace mismatch.");

  auto* pre = app.add_subcommand("precompute", "solve reward and value tables for every goal of a map");
  flag(*pre, "map", o.map, "map file")->required();
  flag(*pre, "out", o.out, "tables artifact to write");
  add_model_flags(*pre, o.params);
  pre->add_flag("--print-config", o.print_config, "print the resolved configuration and exit");

  auto* rep = app.add_subcommand("replay", "run a scripted episode and write its trace");
  flag(*rep, "scenario", o.scenario, "scenario file (map, start, actions, params)");
  flag(*rep, "from-trace", o.from_trace, "re-run the actions of a recorded trace and verify it");
  flag(*rep, "map", o.map, "map file (overrides the scenario's)");
  flag(*rep, "tables", o.tables, "precomputed tables; computed on the fly when absent");
  flag(*rep, "out", o.out, "trace file to write");
  flag(*rep, "start", o.start, "start pose x,y,heading_index (overrides the scenario's)");
  rep->add_flag("--summary", o.summary, "print peak probabilities and desire switches");
  add_model_flags(*rep, o.params);
  add_session_flags(*rep, o);
  rep->add_flag("--print-config", o.print_config, "print the resolved configuration and exit");

  auto* srv = app.add_subcommand("serve", "serve live sessions over WebSocket plus the UI bundle");
  flag(*srv, "scenario", o.scenario, "scenario supplying map, start and params");
  flag(*srv, "map", o.map, "map file");
  flag(*srv, "tables", o.tables, "precomputed tables; computed on start when absent");
  flag(*srv, "start", o.start, "start pose x,y,heading_index");
  flag(*srv, "host", o.host, "address to bind [default 127.0.0.1]");
  flag(*srv, "port", o.port, "port to bind, 0 for any [default 8080]");
  flag(*srv, "ui-dir", o.ui_dir, "directory of static UI assets");
  flag(*srv, "trace-dir", o.trace_dir, "directory receiving one trace file per session");
  add_model_flags(*srv, o.params);
  add_session_flags(*srv, o);
  srv->add_flag("--print-config", o.print_config, "print the resolved configuration and exit");

  auto* ins = app.add_subcommand("inspect", "describe a tables artifact or a trace file");
  ins->add_option("file", o.file, "tables or trace file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (pre->parsed()) return cmd_precompute(o, out, err);
    if (rep->parsed()) return cmd_replay(o, out, err);
    if (srv->parsed()) return cmd_serve(o, out, err);
    if (ins->parsed()) return cmd_inspect(o, out);
  } catch (const MismatchError& e) {
    err << "error: " << e.what() << '\n';
    return kMismatch;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const MapParseError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace intentgrid::cli
