#include "intentgrid/engine.hpp"

#include <bit>
#include <chrono>
#include <cstring>
#include <fstream>
#include <queue>
#include <sstream>

#include "intentgrid/trace.hpp"

namespace intentgrid {

namespace {

constexpr char kTablesMagic[4] = {'I', 'G', 'T', 'B'};
constexpr std::uint32_t kTablesVersion = 1;
constexpr const char* kTablesFormat = "intentgrid-tables";

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.put(static_cast<char>((v >> (8 * b)) & 0xffu));
}

void put_u64(std::ostream& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.put(static_cast<char>((v >> (8 * b)) & 0xffu));
}

std::uint64_t get_uint(std::istream& in, int bytes) {
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b) {
    const int ch = in.get();
    if (ch == std::char_traits<char>::eof()) throw ValidationError("tables file truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(ch)) << (8 * b);
  }
  return v;
}

void put_doubles(std::ostream& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(v[i]));
}

Eigen::VectorXd get_doubles(std::istream& in, std::size_t n) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(get_uint(in, 8));
  return v;
}

// Free cells that cannot reach `goal`.
std::size_t unreachable_cells(const GridMap& map, Cell goal) {
  std::vector<std::uint8_t> seen(map.cell_count(), 0);
  std::queue<Cell> frontier;
  frontier.push(goal);
  seen[map.index(goal)] = 1;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const Cell c = frontier.front();
    frontier.pop();
    for (Cell d : {Cell{0, -1}, Cell{0, 1}, Cell{-1, 0}, Cell{1, 0}}) {
      const Cell n{c.x + d.x, c.y + d.y};
      if (!map.free(n) || seen[map.index(n)]) continue;
      seen[map.index(n)] = 1;
      ++reached;
      frontier.push(n);
    }
  }
  std::size_t free_cells = 0;
  for (std::size_t i = 0; i < map.cell_count(); ++i) free_cells += map.free(map.cell_at(i)) ? 1 : 0;
  return free_cells - reached;
}

template <typename T>
void diff_field(std::vector<std::string>& out, const char* name, const T& have, const T& want) {
  if (have == want) return;
  std::ostringstream s;
  s.precision(17);
  s << name << ": tables " << have << " != requested " << want;
  out.push_back(s.str());
}

}  // namespace

Tables::Tables(GridMap map, PlannerParams params, std::vector<RewardTable> rewards, std::vector<ValueTable> values)
    : map_(std::make_shared<const GridMap>(std::move(map))), params_(params), map_hash_(map_->hash()) {
  if (rewards.size() != values.size() || static_cast<int>(rewards.size()) != map_->goal_count())
    throw std::invalid_argument("one reward and value table per goal is required");
  const auto n = static_cast<Eigen::Index>(map_->state_count());
  hypotheses_.reserve(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    if (rewards[i].values.size() != n || values[i].values.size() != n)
      throw std::invalid_argument("table size does not match the map state count");
    hypotheses_.emplace_back(*map_, std::move(rewards[i]), std::move(values[i]), params_.eps_move);
  }
}

void Tables::check_compatible(const GridMap& map, const PlannerParams& p) const {
  std::vector<std::string> diffs;
  diff_field(diffs, "map_hash", map_hash_, map.hash());
  diff_field(diffs, "gamma", params_.gamma, p.gamma);
  diff_field(diffs, "eta", params_.eta, p.eta);
  diff_field(diffs, "eps_move", params_.eps_move, p.eps_move);
  diff_field(diffs, "eps_reward", params_.eps_reward, p.eps_reward);
  diff_field(diffs, "eps_astar", params_.eps_astar, p.eps_astar);
  diff_field(diffs, "fov_half_angle", params_.fov_half_angle, p.fov_half_angle);
  diff_field(diffs, "reward_floor", std::string(params_.reward_floor == RewardFloor::Exact ? "exact" : "derived"),
             std::string(p.reward_floor == RewardFloor::Exact ? "exact" : "derived"));
  if (diffs.empty()) return;
  std::string message = "precomputed tables do not match:";
  for (const auto& d : diffs) message += "\n  " + d;
  throw MismatchError(message);
}

std::shared_ptr<const Tables> precompute(const GridMap& map, const PlannerParams& params, PrecomputeReport* report) {
  try {
    validate(params, map);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  const auto started = std::chrono::steady_clock::now();

  std::vector<RewardTable> rewards = compute_all_rewards(map, params);
  const TransitionModel model(map, params.eps_move);
  std::vector<ValueTable> values;
  values.reserve(rewards.size());
  for (const auto& r : rewards) values.push_back(value_iteration(model, r, params));

  if (report) {
    report->sweeps.clear();
    for (const auto& v : values) report->sweeps.push_back(v.sweeps);
    report->warnings.clear();
    for (int g = 0; g < map.goal_count(); ++g) {
      const std::size_t cut_off = unreachable_cells(map, map.goals()[static_cast<std::size_t>(g)]);
      if (cut_off > 0)
        report->warnings.push_back("goal " + std::to_string(g + 1) + " is unreachable from " + std::to_string(cut_off) +
                                   " free cells; those states receive the floor reward");
    }
    report->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }
  return std::make_shared<const Tables>(map, params, std::move(rewards), std::move(values));
}

void write_tables(const Tables& tables, std::ostream& out) {
  const GridMap& map = tables.map();
  nlohmann::json header;
  header["format"] = kTablesFormat;
  header["version"] = kTablesVersion;
  header["map_hash"] = tables.map_hash();
  header["map"] = map.to_text();
  header["width"] = map.width();
  header["height"] = map.height();
  header["headings"] = kHeadingCount;
  header["state_order"] = "y,x,heading";
  header["params"] = to_json(tables.params());
  nlohmann::json sweeps = nlohmann::json::array();
  for (const auto& h : tables.hypotheses()) sweeps.push_back(h.values().sweeps);
  header["sweeps"] = sweeps;
  header["hypotheses"] = tables.goal_count();
  header["arrays"] = {"values", "rewards"};

  const std::string text = header.dump();
  out.write(kTablesMagic, 4);
  put_u32(out, kTablesVersion);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& h : tables.hypotheses()) {
    put_doubles(out, h.values().values);
    put_doubles(out, h.rewards().values);
  }
}

void save_tables(const Tables& tables, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write tables file: " + path.string());
  write_tables(tables, out);
  if (!out) throw IoError("failed writing tables file: " + path.string());
}

std::shared_ptr<const Tables> read_tables(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kTablesMagic, 4) != 0) throw ValidationError("not an intentgrid tables file");
  const auto version = static_cast<std::uint32_t>(get_uint(in, 4));
  if (version != kTablesVersion) throw ValidationError("unsupported tables version " + std::to_string(version));
  const std::uint64_t length = get_uint(in, 8);
  if (length > (1u << 26)) throw ValidationError("tables header is implausibly large");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw ValidationError("tables file truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("tables header: ") + e.what());
  }
  if (header.value("format", "") != kTablesFormat) throw ValidationError("tables header has the wrong format tag");

  GridMap map = parse_map(header.at("map").get<std::string>());
  if (map.hash() != header.at("map_hash").get<std::string>()) throw ValidationError("tables map hash is inconsistent");
  PlannerParams params = planner_params_from_json(header.at("params"));
  const auto sweeps = header.at("sweeps").get<std::vector<int>>();
  if (static_cast<int>(sweeps.size()) != map.goal_count()) throw ValidationError("tables sweep list has wrong length");

  std::vector<RewardTable> rewards;
  std::vector<ValueTable> values;
  for (int g = 0; g < map.goal_count(); ++g) {
    ValueTable v;
    v.gamma = params.gamma;
    v.sweeps = sweeps[static_cast<std::size_t>(g)];
    v.values = get_doubles(in, map.state_count());
    RewardTable r;
    r.goal_index = g;
    r.values = get_doubles(in, map.state_count());
    values.push_back(std::move(v));
    rewards.push_back(std::move(r));
  }
  return std::make_shared<const Tables>(std::move(map), params, std::move(rewards), std::move(values));
}

std::shared_ptr<const Tables> load_tables(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tables file: " + path.string());
  return read_tables(in);
}

std::string_view mode_name(StepMode mode) { return mode == StepMode::Stochastic ? "stochastic" : "deterministic"; }

StepMode parse_mode(std::string_view name) {
  if (name == "deterministic") return StepMode::Deterministic;
  if (name == "stochastic") return StepMode::Stochastic;
  throw ValidationError("unknown step mode '" + std::string(name) + "'");
}

Action realize(const TransitionRow& row, StepMode mode, Rng& rng) {
  if (mode == StepMode::Deterministic) return argmax_action(row);
  const double u = rng.uniform();
  double cumulative = 0.0;
  int last_nonzero = 0;
  for (int a = 0; a < kActionCount; ++a) {
    if (row[a] == 0.0) continue;
    last_nonzero = a;
    cumulative += row[a];
    if (u < cumulative) return static_cast<Action>(a);
  }
  return static_cast<Action>(last_nonzero);
}

Session::Session(std::shared_ptr<const Tables> tables, HmmParams<double> hmm, Pose start, StepMode mode,
                 std::uint64_t seed)
    : tables_(std::move(tables)),
      start_(start),
      pose_(start),
      mode_(mode),
      seed_(seed),
      rng_(seed),
      filter_(hmm, tables_->goal_count()) {
  if (!tables_->map().valid_pose(start)) throw ValidationError("start pose is out of bounds or on an occupied cell");
}

const StepRecord& Session::step(Action intended) {
  const Tables& t = *tables_;
  StepRecord rec;
  rec.step = static_cast<int>(history_.size()) + 1;
  rec.intended = intended;
  rec.before = pose_;

  const TransitionRow row = build_transition(t.map(), pose_, intended, t.params().eps_move);
  rec.realized = realize(row, mode_, rng_);
  rec.observed = mode_ == StepMode::Deterministic ? intended : rec.realized;

  const ObservationVector obs = observe(t.hypotheses(), pose_, rec.observed);
  rec.observation = obs.values;
  rec.consistent.reserve(static_cast<std::size_t>(t.goal_count()));
  for (const auto& h : t.hypotheses()) rec.consistent.push_back(h.is_consistent(pose_, rec.observed));

  observations_.push_back(obs.values);
  rec.phi = rationality_phi<double>(observations_, filter_.params().window);
  rec.emission = emission_row<double>(obs.values, rec.phi, filter_.params());
  rec.desires = filter_.push(rec.emission);

  pose_ = apply_action(t.map(), pose_, rec.realized);
  rec.after = pose_;
  history_.push_back(std::move(rec));
  return history_.back();
}

void Session::reset() {
  pose_ = start_;
  rng_ = Rng(seed_);
  filter_.reset();
  observations_.clear();
  history_.clear();
}

void apply_overrides(const nlohmann::json& overrides, PlannerParams& planner, HmmParams<double>& hmm) {
  if (overrides.is_null()) return;
  if (!overrides.is_object()) throw ValidationError("params must be an object");
  for (const auto& [key, value] : overrides.items()) {
    auto number = [&]() {
      if (!value.is_number()) throw ValidationError("param '" + key + "' must be a number");
      return value.get<double>();
    };
    if (key == "gamma") planner.gamma = number();
    else if (key == "eta") planner.eta = number();
    else if (key == "eps_move") planner.eps_move = number();
    else if (key == "eps_reward") planner.eps_reward = number();
    else if (key == "eps_astar") planner.eps_astar = number();
    else if (key == "fov_half_angle") planner.fov_half_angle = number();
    else if (key == "max_sweeps") planner.max_sweeps = static_cast<int>(number());
    else if (key == "reward_floor") {
      const std::string s = value.get<std::string>();
      if (s == "derived") planner.reward_floor = RewardFloor::Derived;
      else if (s == "exact") planner.reward_floor = RewardFloor::Exact;
      else throw ValidationError("reward_floor must be 'derived' or 'exact'");
    }
    else if (key == "hmm_alpha") hmm.alpha = number();
    else if (key == "hmm_beta") hmm.beta = number();
    else if (key == "hmm_gamma") hmm.gamma = number();
    else if (key == "hmm_delta") hmm.delta = number();
    else if (key == "c_rational") hmm.c_rational = number();
    else if (key == "c_unknown") hmm.c_unknown = number();
    else if (key == "phi_threshold") hmm.phi_threshold = number();
    else if (key == "phi_window") hmm.window = static_cast<int>(number());
    else if (key == "filter") {
      const std::string s = value.get<std::string>();
      if (s == "viterbi") hmm.filter = FilterKind::Viterbi;
      else if (s == "forward") hmm.filter = FilterKind::Forward;
      else throw ValidationError("filter must be 'viterbi' or 'forward'");
    }
    else throw ValidationError("unknown param '" + key + "'");
  }
}

Scenario parse_scenario(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ValidationError("scenario must be a JSON object");
  for (const auto& [key, _] : doc.items())
    if (key != "name" && key != "map" && key != "start" && key != "actions" && key != "params" && key != "seed" &&
        key != "mode")
      throw ValidationError("unknown scenario field '" + key + "'");
  Scenario s;
  try {
    s.name = doc.value("name", "");
    std::filesystem::path map = doc.at("map").get<std::string>();
    s.map_path = map.is_absolute() ? map : base_dir / map;
    const auto start = doc.at("start").get<std::vector<int>>();
    if (start.size() != 3) throw ValidationError("start must be [x, y, heading_index]");
    if (start[2] < 0 || start[2] >= kHeadingCount) throw ValidationError("start heading index must lie in 0..7");
    s.start = {start[0], start[1], Heading(start[2])};
    if (doc.contains("actions")) {
      const auto names = doc.at("actions").get<std::vector<std::string>>();
      for (std::size_t i = 0; i < names.size(); ++i) {
        const auto a = parse_action(names[i]);
        if (!a) throw ValidationError("action " + std::to_string(i + 1) + " has unknown name '" + names[i] + "'");
        s.actions.push_back(*a);
      }
    }
    if (doc.contains("params")) s.params = doc.at("params");
    s.seed = doc.value("seed", std::uint64_t{0});
    s.mode = parse_mode(doc.value("mode", std::string("deterministic")));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scenario: ") + e.what());
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("scenario " + path.string() + ": " + e.what());
  }
  return parse_scenario(doc, path.parent_path());
}

ReplayResult run_replay(std::shared_ptr<const Tables> tables, const HmmParams<double>& hmm, const Pose& start,
                        std::span<const Action> actions, StepMode mode, std::uint64_t seed) {
  Session session(std::move(tables), hmm, start, mode, seed);
  for (Action a : actions) session.step(a);
  ReplayResult result;
  result.trace = session.history();
  result.final_desires = session.desires();
  result.sequence = session.most_likely_sequence();
  return result;
}

}  // namespace intentgrid
