#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "tar/scenario.hpp"
#include "tar/simulation.hpp"
#include "tar/stream.hpp"

namespace tar {

struct ServeOptions {
  std::string address = "127.0.0.1";
  /// 0 binds an ephemeral port (see SessionServer::port).
  unsigned short port = 1234;
  /// Sim seconds per wall second.
  double speed = 1.0;
  bool start_paused = false;
  /// Hold the clock until a client attaches.
  bool wait_for_client = true;
  EncodeOptions encode;
  /// Frames queued for a slow client beyond this are dropped, oldest first.
  std::size_t max_queued_frames = 8;
  /// Optional JSONL log path.
  std::string log_path;
};

/// Single-session WebSocket server at ws://address:port/live.
///
/// One sim thread owns the Simulation. The I/O thread talks to it through an
/// inbound command queue and posts outbound frames and telemetry to the
/// session's write queue. Client events are applied at the next tick
/// boundary and acknowledged once applied; session controls (pause, resume)
/// and malformed messages are acknowledged immediately.
class SessionServer {
 public:
  SessionServer(Scenario scenario, ServeOptions options);
  ~SessionServer();

  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  /// Binds and starts the I/O and sim threads. Throws on bind failure.
  void start();
  /// Stops everything; safe to call twice.
  void stop();
  /// Blocks until the scenario has run to completion (or stop()).
  void wait();

  unsigned short port() const;
  /// Snapshot of the log so far.
  RunLog log() const;
  /// Ticks completed so far.
  std::uint64_t ticks() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace tar
