#pragma once

#include <algorithm>
#include <chrono>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

// After Eigen: resolv.h defines a _res macro that collides with Eigen parameter names.
#include <httplib.h>

using Clock = std::chrono::steady_clock;

// OpenAI-style streaming stub that answers every completion with a fixed number of events.
class Stub {
 public:
  explicit Stub(int tokens, bool malformed = false) : tokens_(tokens), malformed_(malformed) {
    server_.Get("/health", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });
    server_.Post("/v1/completions", [this](const httplib::Request&, httplib::Response& res) {
      {
        std::lock_guard lock(mu_);
        arrivals_.push_back(std::chrono::duration<double>(Clock::now().time_since_epoch()).count());
      }
      res.set_chunked_content_provider("text/event-stream", [this](std::size_t, httplib::DataSink& sink) {
        const std::string event = malformed_ ? "data: not json\n\n" : "data: {\"choices\": [{\"text\": \"a\"}]}\n\n";
        for (int i = 0; i < tokens_; ++i) sink.write(event.data(), event.size());
        const std::string done = "data: [DONE]\n\n";
        sink.write(done.data(), done.size());
        sink.done();
        return true;
      });
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Stub() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::vector<double> arrivals() {
    std::lock_guard lock(mu_);
    auto a = arrivals_;
    std::sort(a.begin(), a.end());
    return a;
  }

 private:
  httplib::Server server_;
  int tokens_;
  bool malformed_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mu_;
  std::vector<double> arrivals_;
};
