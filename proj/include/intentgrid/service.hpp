#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentgrid/engine.hpp"
#include "intentgrid/trace.hpp"

namespace intentgrid {

struct SessionOptions {
  Pose start;
  StepMode mode = StepMode::Deterministic;
  std::uint64_t seed = 0;
  HmmParams<double> hmm;
  std::optional<std::filesystem::path> trace_dir;
};

/// Payloads shared by `init` and `state`: what the agent sees and its planned paths.
nlohmann::json visible_cells(const Tables& tables, const Pose& pose);
nlohmann::json goal_paths(const Tables& tables, const Pose& pose);

/// Transport-free session state machine. Each inbound text message yields the
/// ordered list of outbound messages.
///
/// Client messages:
///   {"type":"hello","version":V}           optional; a different V is fatal
///   {"type":"action","action":NAME}        NAME as accepted by parse_action
///   {"type":"reset"} / {"type":"reset","seed":N}
/// Server messages: hello, init, state, estimate, reset, error.
class SessionProtocol {
 public:
  SessionProtocol(std::shared_ptr<const Tables> tables, SessionOptions options, std::string id = "session");
  ~SessionProtocol();

  SessionProtocol(const SessionProtocol&) = delete;
  SessionProtocol& operator=(const SessionProtocol&) = delete;

  /// Greeting sent on connect: hello, then init.
  std::vector<nlohmann::json> open();
  std::vector<nlohmann::json> handle(std::string_view text);
  std::vector<nlohmann::json> handle(const nlohmann::json& message);
  std::vector<nlohmann::json> handle(const char* text) { return handle(std::string_view(text)); }

  /// Set after a fatal error; the transport should close the connection.
  bool closed() const { return closed_; }

  /// Writes the trace summary; later calls are no-ops.
  void finish();

  const Session& session() const { return session_; }
  const std::vector<std::filesystem::path>& trace_files() const { return trace_files_; }

 private:
  nlohmann::json init_message() const;
  nlohmann::json error(const std::string& message, bool fatal = false);
  void open_trace();

  std::shared_ptr<const Tables> tables_;
  SessionOptions options_;
  std::string id_;
  Session session_;
  bool closed_ = false;
  int epoch_ = 0;
  std::ofstream trace_stream_;
  std::unique_ptr<TraceWriter> trace_;
  std::vector<std::filesystem::path> trace_files_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8080;
  std::optional<std::filesystem::path> ui_dir;
  SessionOptions session;
};

/// HTTP and WebSocket server on one port: GET /health, static UI assets, and a
/// session per WebSocket connection (any upgrade request path).
class Server {
 public:
  Server(std::shared_ptr<const Tables> tables, ServerOptions options);
  ~Server();

  /// Binds the listening socket. Throws std::runtime_error when the port is taken.
  void listen();
  /// Port actually bound; useful with port 0.
  std::uint16_t port() const;
  /// Serves until stop() or SIGINT/SIGTERM (when handle_signals). Finishes every
  /// live session's trace before returning.
  void run(bool handle_signals = true);
  /// Thread-safe.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

nlohmann::json health_document(const Tables& tables);

}  // namespace intentgrid
