#include "tar/server.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

namespace tar {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

class Session;

}  // namespace

struct SessionServer::Impl {
  Impl(Scenario s, ServeOptions o) : scenario(std::move(s)), options(std::move(o)), acceptor(ioc) {}

  void do_accept();
  void attach(const std::shared_ptr<Session>& s);
  void detach(const Session* s);
  void on_client_text(const std::shared_ptr<Session>& s, const std::string& text);
  void post(json msg, bool frame);
  void sim_loop();
  bool drain_controls(Simulation& sim, std::vector<ClientMessage>& events);

  Scenario scenario;
  ServeOptions options;
  net::io_context ioc;
  tcp::acceptor acceptor;
  std::thread io_thread;
  std::thread sim_thread;
  std::shared_ptr<Session> session;  // I/O thread only

  std::mutex mu;
  std::condition_variable cv;
  std::deque<ClientMessage> inbound;
  bool stopping = false;
  bool paused = false;
  bool attached = false;
  bool finished = false;

  mutable std::mutex log_mu;
  RunLog run_log;
  std::atomic<std::uint64_t> ticks{0};
  std::atomic<std::size_t> queued{0};
};

namespace {

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, SessionServer::Impl& server)
      : ws_(std::move(socket)), server_(server) {}

  void run() {
    http::async_read(ws_.next_layer(), buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_request(ec); });
  }

  void send(std::string text, bool frame) {
    if (!open_) return;
    if (frame) {
      std::size_t frames = 0;
      for (const auto& m : queue_) frames += m.frame ? 1 : 0;
      // Drop the oldest frame not already being written.
      while (frames >= server_.options.max_queued_frames && frames > 0) {
        auto it = queue_.begin();
        if (writing_) ++it;
        while (it != queue_.end() && !it->frame) ++it;
        if (it == queue_.end()) break;
        queue_.erase(it);
        --server_.queued;
        --frames;
      }
    }
    queue_.push_back({std::move(text), frame});
    ++server_.queued;
    if (!writing_) do_write();
  }

  bool open() const { return open_; }

  void close() {
    if (!open_) return;
    open_ = false;
    beast::error_code ec;
    ws_.next_layer().socket().shutdown(tcp::socket::shutdown_both, ec);
    ws_.next_layer().socket().close(ec);
  }

 private:
  struct Outbound {
    std::string text;
    bool frame;
  };

  void on_request(beast::error_code ec) {
    if (ec) return;
    if (!websocket::is_upgrade(req_) || req_.target() != "/live") {
      auto res = std::make_shared<http::response<http::string_body>>(http::status::not_found, req_.version());
      res->set(http::field::content_type, "text/plain");
      res->body() = "websocket endpoint is /live\n";
      res->prepare_payload();
      http::async_write(ws_.next_layer(), *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
        beast::error_code ignored;
        self->ws_.next_layer().socket().shutdown(tcp::socket::shutdown_both, ignored);
      });
      return;
    }
    ws_.async_accept(req_, [self = shared_from_this()](beast::error_code ec2) {
      if (ec2) return;
      self->open_ = true;
      self->server_.attach(self);
    });
  }

 public:
  void start_reading() { do_read(); }

 private:
  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        self->server_.detach(self.get());
        return;
      }
      std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->server_.on_client_text(self, text);
      self->do_read();
    });
  }

  void do_write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front().text), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->queue_.pop_front();
      --self->server_.queued;
      if (ec) {
        self->writing_ = false;
        self->server_.queued -= self->queue_.size();
        self->queue_.clear();
        return;
      }
      if (self->queue_.empty()) {
        self->writing_ = false;
      } else {
        self->do_write();
      }
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  SessionServer::Impl& server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::deque<Outbound> queue_;
  bool writing_ = false;
  bool open_ = false;
};

}  // namespace

void SessionServer::Impl::do_accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<Session>(std::move(socket), *this)->run();
    do_accept();
  });
}

void SessionServer::Impl::attach(const std::shared_ptr<Session>& s) {
  if (session && session->open()) {
    spdlog::warn("rejecting second client: a session is already active");
    s->close();
    return;
  }
  session = s;
  s->start_reading();
  spdlog::info("client attached");
  {
    std::lock_guard lock(mu);
    attached = true;
  }
  cv.notify_all();
}

void SessionServer::Impl::detach(const Session* s) {
  if (session.get() == s) {
    session.reset();
    queued = 0;
    spdlog::info("client detached");
  }
}

void SessionServer::Impl::post(json msg, bool frame) {
  net::post(ioc, [this, text = msg.dump(), frame]() mutable {
    if (session) session->send(std::move(text), frame);
  });
}

void SessionServer::Impl::on_client_text(const std::shared_ptr<Session>& s, const std::string& text) {
  ClientMessage m;
  try {
    m = parse_client_message(text);
  } catch (const ConfigError& e) {
    std::string of = "unknown";
    try {
      const json j = json::parse(text);
      if (j.is_object() && j.contains("type") && j.at("type").is_string()) of = j.at("type").get<std::string>();
    } catch (const json::exception&) {
    }
    s->send(ack_message(of, std::string(e.what())).dump(), false);
    return;
  }
  {
    std::lock_guard lock(mu);
    if (finished && std::holds_alternative<Event>(m.command)) {
      s->send(ack_message(m.type, std::string("simulation finished"), m.id).dump(), false);
      return;
    }
    inbound.push_back(std::move(m));
  }
  cv.notify_all();
}

// Called with `mu` held. Applies pause/resume in arrival order and moves
// simulation events to `events`. Returns true if anything was consumed.
bool SessionServer::Impl::drain_controls(Simulation& sim, std::vector<ClientMessage>& events) {
  bool any = false;
  while (!inbound.empty()) {
    ClientMessage m = std::move(inbound.front());
    inbound.pop_front();
    any = true;
    if (std::holds_alternative<PauseCommand>(m.command)) {
      paused = true;
      post(ack_message(m.type, std::nullopt, m.id), false);
    } else if (std::holds_alternative<ResumeCommand>(m.command)) {
      paused = false;
      // Resume also hands control back from position assist.
      if (sim.controller().mode() == OffboardMode::PositionAssist) {
        m.command = Event{AssistResume{}};
        events.push_back(std::move(m));
      } else {
        post(ack_message(m.type, std::nullopt, m.id), false);
      }
    } else {
      events.push_back(std::move(m));
    }
  }
  return any;
}

void SessionServer::Impl::sim_loop() {
  using clock = std::chrono::steady_clock;
  Simulation sim(scenario, Simulation::Options{false});
  std::ofstream file;
  if (!options.log_path.empty()) {
    file.open(options.log_path);
    if (!file) spdlog::error("cannot write log {}", options.log_path);
  }
  {
    std::lock_guard lock(log_mu);
    run_log.header = sim.header();
  }
  if (file) file << sim.header().dump() << '\n';

  std::vector<ClientMessage> pending;
  {
    std::unique_lock lock(mu);
    paused = options.start_paused;
    if (options.wait_for_client) cv.wait(lock, [&] { return stopping || attached; });
  }

  const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(scenario.dt / options.speed));
  auto deadline = clock::now();
  while (true) {
    {
      std::unique_lock lock(mu);
      drain_controls(sim, pending);
      while (paused && !stopping) {
        cv.wait(lock, [&] { return stopping || !inbound.empty(); });
        drain_controls(sim, pending);
        deadline = clock::now();
      }
      if (stopping) break;
    }

    std::vector<Event> events;
    events.reserve(pending.size());
    for (const auto& m : pending) events.push_back(std::get<Event>(m.command));
    std::vector<EventOutcome> outcomes;
    json record;
    try {
      record = sim.step(events, &outcomes);
    } catch (const std::exception& e) {
      spdlog::error("simulation stopped: {}", e.what());
      break;
    }
    ++ticks;
    if (file) file << record.dump() << '\n';

    post(frame_message(sim.frame(), sim.track(), options.encode), true);
    for (std::size_t k = 0; k < outcomes.size() && k < pending.size(); ++k)
      post(ack_message(pending[k].type, outcomes[k].error, pending[k].id), false);
    pending.clear();
    for (const auto& e : record.at("events"))
      if (e.at("type") == "redetect_request") post(redetect_request_message(e.at("seq").get<std::uint64_t>()), false);
    post(telemetry_message(record), false);
    {
      std::lock_guard lock(log_mu);
      run_log.records.push_back(std::move(record));
    }
    if (sim.finished()) break;

    // Real-time pacing; controls are still handled while waiting.
    deadline += period;
    if (clock::now() > deadline + std::chrono::seconds(1)) deadline = clock::now();
    std::unique_lock lock(mu);
    while (!stopping && clock::now() < deadline) {
      cv.wait_until(lock, deadline, [&] { return stopping || !inbound.empty(); });
      drain_controls(sim, pending);
      if (paused) break;
    }
  }

  post({{"type", "end"}, {"ticks", ticks.load()}}, false);
  {
    std::lock_guard lock(mu);
    finished = true;
    for (const auto& m : pending) post(ack_message(m.type, std::string("simulation finished"), m.id), false);
  }
  cv.notify_all();
}

SessionServer::SessionServer(Scenario scenario, ServeOptions options)
    : impl_(std::make_unique<Impl>(std::move(scenario), std::move(options))) {
  if (!(impl_->options.speed > 0.0)) throw ConfigError("speed must be positive");
  impl_->scenario.validate();
}

SessionServer::~SessionServer() { stop(); }

void SessionServer::start() {
  Impl& s = *impl_;
  const tcp::endpoint ep(net::ip::make_address(s.options.address), s.options.port);
  s.acceptor.open(ep.protocol());
  s.acceptor.set_option(net::socket_base::reuse_address(true));
  s.acceptor.bind(ep);
  s.acceptor.listen();
  s.do_accept();
  s.io_thread = std::thread([&s] { s.ioc.run(); });
  s.sim_thread = std::thread([&s] { s.sim_loop(); });
  spdlog::info("serving ws://{}:{}/live", s.options.address, port());
}

void SessionServer::stop() {
  Impl& s = *impl_;
  {
    std::lock_guard lock(s.mu);
    s.stopping = true;
  }
  s.cv.notify_all();
  if (s.sim_thread.joinable()) s.sim_thread.join();
  net::post(s.ioc, [&s] {
    beast::error_code ec;
    s.acceptor.close(ec);
    if (s.session) s.session->close();
    s.session.reset();
  });
  if (s.io_thread.joinable()) {
    // Give the close handler a moment, then stop the loop.
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    s.ioc.stop();
    s.io_thread.join();
  }
}

void SessionServer::wait() {
  Impl& s = *impl_;
  {
    std::unique_lock lock(s.mu);
    s.cv.wait(lock, [&] { return s.finished || s.stopping; });
  }
  // Let queued messages reach the client.
  const auto limit = std::chrono::steady_clock::now() + std::chrono::seconds(2);
  while (s.queued.load() > 0 && std::chrono::steady_clock::now() < limit)
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
}

unsigned short SessionServer::port() const {
  beast::error_code ec;
  const auto ep = impl_->acceptor.local_endpoint(ec);
  return ec ? 0 : ep.port();
}

RunLog SessionServer::log() const {
  std::lock_guard lock(impl_->log_mu);
  return impl_->run_log;
}

std::uint64_t SessionServer::ticks() const { return impl_->ticks.load(); }

}  // namespace tar
