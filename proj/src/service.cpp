#include "intentgrid/service.hpp"

#include <chrono>
#include <csignal>
#include <ctime>
#include <deque>
#include <mutex>
#include <sstream>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "intentgrid/pathing.hpp"
#include "intentgrid/version.hpp"

namespace intentgrid {

namespace {

nlohmann::json cell_json(Cell c) { return nlohmann::json::array({c.x, c.y}); }

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

nlohmann::json label_list(int goal_count) {
  nlohmann::json labels = nlohmann::json::array();
  for (int s = 0; s < desire_state_count(goal_count); ++s) labels.push_back(desire_label(s, goal_count));
  return labels;
}

}  // namespace

nlohmann::json visible_cells(const Tables& tables, const Pose& pose) {
  const GridMap& map = tables.map();
  const VisibilityField field = compute_visibility(map, pose, tables.params().fov_half_angle);
  nlohmann::json out = nlohmann::json::array();
  for (int y = 0; y < map.height(); ++y)
    for (int x = 0; x < map.width(); ++x)
      if (field({x, y})) out.push_back(cell_json({x, y}));
  return out;
}

nlohmann::json goal_paths(const Tables& tables, const Pose& pose) {
  const GridMap& map = tables.map();
  const VisibilityField field = compute_visibility(map, pose, tables.params().fov_half_angle);
  nlohmann::json out = nlohmann::json::array();
  for (const Cell& goal : map.goals()) {
    const auto path = modified_astar(map, pose.cell(), goal, field, tables.params().eps_astar);
    if (!path) {
      out.push_back(nullptr);
      continue;
    }
    nlohmann::json cells = nlohmann::json::array({cell_json(pose.cell())});
    for (const Cell& c : path->cells) cells.push_back(cell_json(c));
    out.push_back(std::move(cells));
  }
  return out;
}

nlohmann::json health_document(const Tables& tables) {
  return {
      {"status", "ok"},
      {"version", kVersion},
      {"protocol", kProtocolVersion},
      {"map_hash", tables.map_hash()},
      {"goal_count", tables.goal_count()},
  };
}

SessionProtocol::SessionProtocol(std::shared_ptr<const Tables> tables, SessionOptions options, std::string id)
    : tables_(tables),
      options_(std::move(options)),
      id_(std::move(id)),
      session_(std::move(tables), options_.hmm, options_.start, options_.mode, options_.seed) {
  open_trace();
}

SessionProtocol::~SessionProtocol() { finish(); }

void SessionProtocol::open_trace() {
  if (!options_.trace_dir) return;
  std::filesystem::create_directories(*options_.trace_dir);
  const std::string name = epoch_ == 0 ? id_ + ".jsonl" : id_ + "." + std::to_string(epoch_) + ".jsonl";
  const auto path = *options_.trace_dir / name;
  trace_stream_.open(path, std::ios::trunc);
  if (!trace_stream_) throw IoError("cannot open trace file: " + path.string());
  trace_ = std::make_unique<TraceWriter>(trace_stream_, trace_header(session_));
  trace_files_.push_back(path);
}

void SessionProtocol::finish() {
  if (!trace_) return;
  trace_->write_summary(session_.desires(), session_.most_likely_sequence());
  trace_.reset();
  trace_stream_.close();
}

nlohmann::json SessionProtocol::init_message() const {
  const GridMap& map = tables_->map();
  nlohmann::json rows = nlohmann::json::array();
  std::istringstream text(map.to_text());
  for (std::string line; std::getline(text, line);) rows.push_back(line);
  nlohmann::json goals = nlohmann::json::array();
  for (const Cell& g : map.goals()) goals.push_back(cell_json(g));
  return {
      {"type", "init"},
      {"width", map.width()},
      {"height", map.height()},
      {"grid", rows},
      {"goals", goals},
      {"labels", label_list(map.goal_count())},
      {"map_hash", tables_->map_hash()},
      {"mode", mode_name(session_.mode())},
      {"seed", session_.seed()},
      {"fov_half_angle", tables_->params().fov_half_angle},
      {"start", to_json(session_.start())},
      {"pose", to_json(session_.pose())},
      {"step", session_.history().size()},
      {"desires", vector_json(session_.desires())},
      {"visible", visible_cells(*tables_, session_.pose())},
      {"paths", goal_paths(*tables_, session_.pose())},
  };
}

nlohmann::json SessionProtocol::error(const std::string& message, bool fatal) {
  if (fatal) closed_ = true;
  return {{"type", "error"}, {"message", message}, {"fatal", fatal}};
}

std::vector<nlohmann::json> SessionProtocol::open() {
  return {
      {{"type", "hello"}, {"version", kProtocolVersion}, {"server", kVersion}, {"map_hash", tables_->map_hash()}},
      init_message(),
  };
}

std::vector<nlohmann::json> SessionProtocol::handle(std::string_view text) {
  nlohmann::json message;
  try {
    message = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    return {error("message is not valid JSON")};
  }
  return handle(message);
}

std::vector<nlohmann::json> SessionProtocol::handle(const nlohmann::json& message) {
  if (closed_) return {error("session is closed", true)};
  if (!message.is_object() || !message.contains("type") || !message["type"].is_string())
    return {error("message must be an object with a string 'type'")};
  const std::string type = message["type"];

  if (type == "hello") {
    if (!message.contains("version") || !message["version"].is_string())
      return {error("hello needs a string 'version'")};
    if (message["version"] != kProtocolVersion)
      return {error("protocol version mismatch: server speaks " + std::string(kProtocolVersion) + ", client sent " +
                        message["version"].get<std::string>(),
                    true)};
    return {};
  }

  if (type == "action") {
    if (!message.contains("action") || !message["action"].is_string()) return {error("action needs a string 'action'")};
    const std::string name = message["action"];
    const auto action = parse_action(name);
    if (!action) return {error("unknown action '" + name + "'")};
    const StepRecord& r = session_.step(*action);
    if (trace_) trace_->write(r);
    nlohmann::json consistent = nlohmann::json::array();
    for (bool c : r.consistent) consistent.push_back(c);
    return {
        {
            {"type", "state"},
            {"step", r.step},
            {"action", action_name(r.intended)},
            {"realized", action_name(r.realized)},
            {"pose", to_json(r.after)},
            {"visible", visible_cells(*tables_, r.after)},
            {"paths", goal_paths(*tables_, r.after)},
        },
        {
            {"type", "estimate"},
            {"step", r.step},
            {"desires", vector_json(r.desires)},
            {"phi", r.phi},
            {"consistent", consistent},
            {"observation", vector_json(r.observation)},
            {"observed", action_name(r.observed)},
        },
    };
  }

  if (type == "reset") {
    std::uint64_t seed = session_.seed();
    if (message.contains("seed")) {
      if (!message["seed"].is_number_unsigned()) return {error("reset 'seed' must be a non-negative integer")};
      seed = message["seed"].get<std::uint64_t>();
    }
    finish();
    session_ = Session(tables_, options_.hmm, options_.start, options_.mode, seed);
    ++epoch_;
    open_trace();
    return {{{"type", "reset"}, {"seed", seed}}, init_message()};
  }

  return {error("unknown message type '" + type + "'")};
}

namespace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

class WsSession;

struct ServerCore {
  std::shared_ptr<const Tables> tables;
  ServerOptions options;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::vector<std::weak_ptr<WsSession>> sessions;
  std::string run_stamp;
  int next_id = 0;
  bool stopping = false;

  void accept();
  void shutdown();
  http::response<http::string_body> respond(const http::request<http::string_body>& req) const;
};

std::string_view mime_type(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript; charset=utf-8";
  if (ext == ".css") return "text/css; charset=utf-8";
  if (ext == ".json" || ext == ".map") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  if (ext == ".woff2") return "font/woff2";
  return "application/octet-stream";
}

constexpr std::string_view kPlaceholderPage =
    "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>intentgrid</title></head>\n"
    "<body><h1>intentgrid</h1><p>No UI bundle is installed. Start the server with --ui-dir pointing at a built "
    "web UI, or connect a WebSocket client to this address.</p><p><a href=\"/health\">/health</a></p></body></html>\n";

http::response<http::string_body> ServerCore::respond(const http::request<http::string_body>& req) const {
  auto make = [&req](http::status status, std::string_view type, std::string body) {
    http::response<http::string_body> res{status, req.version()};
    res.set(http::field::server, std::string("intentgrid/") + kVersion);
    res.set(http::field::content_type, std::string(type));
    res.keep_alive(false);
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  };

  if (req.method() != http::verb::get && req.method() != http::verb::head)
    return make(http::status::method_not_allowed, "text/plain", "method not allowed\n");

  std::string target(req.target());
  if (auto q = target.find('?'); q != std::string::npos) target.resize(q);
  if (target == "/health") return make(http::status::ok, "application/json", health_document(*tables).dump() + "\n");
  if (target.empty() || target[0] != '/' || target.find("..") != std::string::npos)
    return make(http::status::bad_request, "text/plain", "bad request target\n");

  if (options.ui_dir) {
    std::filesystem::path file = *options.ui_dir / target.substr(1);
    if (target.back() == '/') file /= "index.html";
    std::error_code ec;
    if (std::filesystem::is_regular_file(file, ec)) {
      std::ifstream in(file, std::ios::binary);
      std::ostringstream body;
      body << in.rdbuf();
      return make(http::status::ok, mime_type(file), body.str());
    }
  }
  if (target == "/" || target == "/index.html") return make(http::status::ok, "text/html; charset=utf-8", std::string(kPlaceholderPage));
  return make(http::status::not_found, "text/plain", "not found\n");
}

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, ServerCore& core, std::string id)
      : ws_(std::move(socket)), protocol_(core.tables, core.options.session, std::move(id)) {}

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.set_option(websocket::stream_base::decorator([](websocket::response_type& res) {
      res.set(http::field::server, std::string("intentgrid/") + kVersion);
    }));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

  /// Server shutdown: flush the trace and say goodbye.
  void shutdown() {
    protocol_.finish();
    close_code_ = websocket::close_code::going_away;
    close_pending_ = true;
    if (!writing_) close();
  }

  /// Drops the connection once the event loop has stopped.
  void abort() {
    protocol_.finish();
    beast::error_code ignored;
    beast::get_lowest_layer(ws_).socket().close(ignored);
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    ws_.text(true);
    send(protocol_.open());
    read();
  }

  void read() { ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this())); }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      protocol_.finish();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    send(protocol_.handle(std::string_view(text)));
    if (protocol_.closed()) {
      protocol_.finish();
      close_code_ = websocket::close_code::policy_error;
      close_pending_ = true;
      if (!writing_) close();
      return;
    }
    read();
  }

  void send(const std::vector<nlohmann::json>& messages) {
    if (closed_) return;
    for (const auto& m : messages) outbox_.push_back(m.dump());
    if (!writing_) write_next();
  }

  void write_next() {
    if (outbox_.empty()) {
      writing_ = false;
      if (close_pending_) close();
      return;
    }
    writing_ = true;
    ws_.async_write(net::buffer(outbox_.front()), beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      protocol_.finish();
      writing_ = false;
      return;
    }
    outbox_.pop_front();
    write_next();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    ws_.async_close(close_code_, [self = shared_from_this()](beast::error_code) {});
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  SessionProtocol protocol_;
  std::deque<std::string> outbox_;
  websocket::close_code close_code_ = websocket::close_code::normal;
  bool writing_ = false;
  bool close_pending_ = false;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, ServerCore& core) : stream_(std::move(socket)), core_(core) {}

  void start() {
    parser_.emplace();
    parser_->body_limit(1 << 16);
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, *parser_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

 private:
  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return;
    if (websocket::is_upgrade(parser_->get())) {
      if (core_.stopping) return;
      stream_.expires_never();
      char id[64];
      std::snprintf(id, sizeof id, "session-%s-%04d", core_.run_stamp.c_str(), ++core_.next_id);
      std::shared_ptr<WsSession> ws;
      try {
        ws = std::make_shared<WsSession>(stream_.release_socket(), core_, id);
      } catch (const std::exception&) {
        return;
      }
      core_.sessions.push_back(ws);
      ws->start(parser_->release());
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>(core_.respond(parser_->get()));
    if (parser_->get().method() == http::verb::head) res->body().clear();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  beast::tcp_stream stream_;
  ServerCore& core_;
  beast::flat_buffer buffer_;
  std::optional<http::request_parser<http::string_body>> parser_;
};

void ServerCore::accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<HttpSession>(std::move(socket), *this)->start();
    std::erase_if(sessions, [](const auto& w) { return w.expired(); });
    accept();
  });
}

void ServerCore::shutdown() {
  if (stopping) return;
  stopping = true;
  beast::error_code ignored;
  acceptor.close(ignored);
  for (auto& weak : sessions)
    if (auto s = weak.lock()) s->shutdown();
  // give close handshakes a moment, then drop whatever is left
  auto timer = std::make_shared<net::steady_timer>(ioc, std::chrono::milliseconds(250));
  timer->async_wait([this, timer](beast::error_code) { ioc.stop(); });
}

std::string run_stamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%S", &tm);
  return buf;
}

}  // namespace

struct Server::Impl {
  ServerCore core;
  bool listening = false;
};

Server::Server(std::shared_ptr<const Tables> tables, ServerOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->core.tables = std::move(tables);
  impl_->core.options = std::move(options);
  impl_->core.run_stamp = run_stamp();
}

Server::~Server() = default;

void Server::listen() {
  auto& core = impl_->core;
  tcp::resolver resolver(core.ioc);
  const auto results = resolver.resolve(core.options.host, std::to_string(core.options.port));
  if (results.empty()) throw IoError("cannot resolve host " + core.options.host);
  const tcp::endpoint endpoint = results.begin()->endpoint();
  core.acceptor.open(endpoint.protocol());
  core.acceptor.set_option(net::socket_base::reuse_address(true));
  beast::error_code ec;
  core.acceptor.bind(endpoint, ec);
  if (ec)
    throw IoError("cannot bind " + core.options.host + ":" + std::to_string(core.options.port) + ": " +
                             ec.message());
  core.acceptor.listen(net::socket_base::max_listen_connections);
  impl_->listening = true;
}

std::uint16_t Server::port() const { return impl_->core.acceptor.local_endpoint().port(); }

void Server::run(bool handle_signals) {
  auto& core = impl_->core;
  if (!impl_->listening) listen();
  std::optional<net::signal_set> signals;
  if (handle_signals) {
    signals.emplace(core.ioc, SIGINT, SIGTERM);
    signals->async_wait([&core](beast::error_code ec, int) {
      if (!ec) core.shutdown();
    });
  }
  core.accept();
  core.ioc.run();
  for (auto& weak : core.sessions)
    if (auto s = weak.lock()) s->abort();
}

void Server::stop() {
  auto& core = impl_->core;
  net::post(core.ioc, [&core] { core.shutdown(); });
}

}  // namespace intentgrid
