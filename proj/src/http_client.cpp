#include "slotune/http_client.hpp"

#include <httplib.h>
#include <json.hpp>

#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

#include "slotune/errors.hpp"

namespace slotune {

namespace {

using Clock = std::chrono::steady_clock;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string value_text(const Value& v) {
  if (auto b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  return to_string(v);
}

// Child engine process in its own process group.
class EngineProcess {
 public:
  explicit EngineProcess(const std::string& command) {
    pid_ = fork();
    if (pid_ < 0) throw Error("fork failed while launching the engine");
    if (pid_ == 0) {
      setpgid(0, 0);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    setpgid(pid_, pid_);
  }
  EngineProcess(const EngineProcess&) = delete;
  EngineProcess& operator=(const EngineProcess&) = delete;
  ~EngineProcess() { stop(); }

  bool alive() {
    if (exited_) return false;
    int status = 0;
    if (waitpid(pid_, &status, WNOHANG) == pid_) exited_ = true;
    return !exited_;
  }

  void stop() {
    if (pid_ <= 0 || exited_) return;
    kill(-pid_, SIGTERM);
    for (int i = 0; i < 50 && alive(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    if (alive()) {
      kill(-pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
      exited_ = true;
    }
  }

 private:
  pid_t pid_ = -1;
  bool exited_ = false;
};

// Splits a server-sent-event stream into data payloads.
class EventParser {
 public:
  template <typename F>
  void feed(const char* data, std::size_t len, F&& on_event) {
    buffer_.append(data, len);
    std::size_t pos;
    while ((pos = buffer_.find('\n')) != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.rfind("data:", 0) != 0) continue;
      std::string payload = line.substr(5);
      if (!payload.empty() && payload.front() == ' ') payload.erase(0, 1);
      on_event(payload);
    }
  }

 private:
  std::string buffer_;
};

}  // namespace

std::string render_launch_command(const std::string& tmpl, const SearchSpace& space, const Configuration& config) {
  static const std::regex placeholder(R"(\{([A-Za-z_][A-Za-z0-9_]*)(?::([^{}]*))?\})");
  std::set<std::string> used;
  std::string out;
  auto begin = std::sregex_iterator(tmpl.begin(), tmpl.end(), placeholder);
  std::size_t last = 0;
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    out.append(tmpl, last, static_cast<std::size_t>(m.position()) - last);
    last = static_cast<std::size_t>(m.position() + m.length());
    const std::string name = m[1].str();
    const auto idx = space.index_of(name);
    if (!idx) throw ConfigRenderError("launch template references unknown parameter '" + name + "'");
    used.insert(name);
    const Value& v = config.values.at(*idx);
    if (m[2].matched) {
      const bool* b = std::get_if<bool>(&v);
      if (!b) throw ConfigRenderError("flag placeholder '{" + name + ":...}' needs a boolean parameter");
      if (*b) out += m[2].str();
    } else {
      out += value_text(v);
    }
  }
  out.append(tmpl, last, std::string::npos);
  for (const auto& p : space.params())
    if (!used.count(p.name)) throw ConfigRenderError("launch template does not use parameter '" + p.name + "'");
  return out;
}

RequestTiming timing_from_tokens(double arrival, const std::vector<double>& token_times) {
  RequestTiming r;
  r.arrival = arrival;
  r.output_tokens = static_cast<int>(token_times.size());
  r.first_token = token_times.empty() ? kNaN : token_times.front();
  r.completion = token_times.empty() ? kNaN : token_times.back();
  return r;
}

bool wait_ready(const HttpOptions& target, double timeout, const std::function<bool()>& alive) {
  const auto start = Clock::now();
  httplib::Client cli(target.endpoint);
  cli.set_connection_timeout(1, 0);
  cli.set_read_timeout(2, 0);
  while (seconds_since(start) < timeout) {
    if (alive && !alive()) return false;
    if (auto res = cli.Get(target.health_path); res && res->status == 200) return true;
    std::this_thread::sleep_for(std::chrono::duration<double>(target.poll_interval));
  }
  return false;
}

StressResult run_stress(const HttpOptions& target, const RequestTrace& trace, const StressProfile& profile) {
  const auto schedule = build_schedule(trace, profile);
  const auto start = Clock::now();

  struct Slot {
    std::vector<double> tokens;
    bool ok = false;
    bool parsed = true;
  };
  std::vector<Slot> slots(schedule.size());
  std::atomic<bool> abort{false};
  std::atomic<double> last_progress{0.0};
  std::atomic<std::size_t> finished{0};

  auto worker = [&](std::size_t i) {
    const auto& rec = trace.records[schedule[i].record];
    nlohmann::json body;
    body["model"] = target.model;
    body["prompt"] = rec.prompt ? *rec.prompt : std::string(static_cast<std::size_t>(rec.input_tokens), 'x');
    body["max_tokens"] = rec.output_tokens;
    body["min_tokens"] = rec.output_tokens;
    body["ignore_eos"] = true;
    body["stream"] = true;

    httplib::Client cli(target.endpoint);
    cli.set_connection_timeout(5, 0);
    cli.set_read_timeout(static_cast<time_t>(std::max(1.0, target.progress_timeout)), 0);
    httplib::Request req;
    req.method = "POST";
    req.path = target.completion_path;
    req.body = body.dump();
    req.set_header("Content-Type", "application/json");
    req.set_header("Accept", "text/event-stream");
    EventParser parser;
    Slot& slot = slots[i];
    req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
      parser.feed(data, len, [&](const std::string& payload) {
        if (payload == "[DONE]") return;
        try {
          const auto j = nlohmann::json::parse(payload);
          if (!j.contains("choices")) slot.parsed = false;
        } catch (const nlohmann::json::exception&) {
          slot.parsed = false;
          return;
        }
        const double now = seconds_since(start);
        slot.tokens.push_back(now);
        last_progress.store(now);
      });
      return !abort.load();
    };
    httplib::Response res;
    httplib::Error err;
    const bool sent = cli.send(req, res, err);
    slot.ok = sent && res.status == 200;
    finished.fetch_add(1);
  };

  std::vector<std::thread> threads;
  threads.reserve(schedule.size());
  for (std::size_t i = 0; i < schedule.size() && !abort.load(); ++i) {
    const auto due = start + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(schedule[i].arrival));
    while (Clock::now() < due) {
      std::this_thread::sleep_until(std::min(due, Clock::now() + std::chrono::milliseconds(200)));
      const double now = seconds_since(start);
      if (finished.load() < i && now - std::max(last_progress.load(), schedule[0].arrival) > target.progress_timeout)
        abort.store(true);
      if (abort.load()) break;
    }
    if (abort.load()) break;
    threads.emplace_back(worker, i);
  }
  // Drain in-flight requests until the horizon or a stall.
  const double horizon = profile.duration * (1.0 + profile.drain_factor);
  while (!abort.load() && finished.load() < threads.size()) {
    const double now = seconds_since(start);
    if (now >= horizon || now - last_progress.load() > target.progress_timeout) {
      abort.store(true);
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  const double stop_time = seconds_since(start);
  for (auto& t : threads) t.join();

  StressResult out;
  out.stalled = abort.load() && stop_time < horizon;
  out.horizon = std::min(stop_time, horizon);
  for (std::size_t i = 0; i < threads.size(); ++i) {
    const Slot& s = slots[i];
    if (!s.ok) ++out.failed;
    if (s.ok && (!s.parsed || s.tokens.empty())) ++out.malformed;
    RequestTiming t = timing_from_tokens(schedule[i].arrival, s.tokens);
    if (!s.ok) t.completion = kNaN;
    if (std::isfinite(t.completion) && t.completion > out.horizon) t.completion = kNaN;
    out.requests.push_back(t);
  }
  // Requests never sent because of an abort count as unfinished.
  for (std::size_t i = threads.size(); i < schedule.size(); ++i)
    out.requests.push_back({schedule[i].arrival, kNaN, kNaN, 0});
  return out;
}

Observation observation_from_stress(const Configuration& config, const StressResult& r, const StressProfile& profile,
                                    double wall_time) {
  std::size_t completed = 0;
  for (const auto& t : r.requests) completed += std::isfinite(t.completion) ? 1 : 0;
  if (r.requests.empty() || completed == 0) {
    if (r.malformed > 0) return Observation::failure(config, InvalidReason::malformed, wall_time, profile.seed);
    return Observation::failure(config, InvalidReason::timeout, wall_time, profile.seed);
  }
  if (r.malformed * 2 > r.requests.size())
    return Observation::failure(config, InvalidReason::malformed, wall_time, profile.seed);
  const double horizon = r.horizon > 0.0 ? r.horizon : profile.duration * (1.0 + profile.drain_factor);
  const Metrics m = summarize(r.requests, profile.duration, horizon, profile.percentile);
  return Observation::success(config, m, wall_time, profile.seed);
}

HttpEvaluator::HttpEvaluator(const SearchSpace& space, RequestTrace trace, HttpOptions options)
    : space_(&space), trace_(std::move(trace)), options_(std::move(options)) {
  if (trace_.records.empty()) throw EmptyTrace("HTTP evaluator needs a non-empty trace");
  if (!options_.launch_template.empty()) render_launch_command(options_.launch_template, space, space.default_config());
}

Observation HttpEvaluator::evaluate(const Configuration& config, const StressProfile& profile) {
  profile.validate();
  const auto start = Clock::now();
  std::unique_ptr<EngineProcess> engine;
  if (!options_.launch_template.empty()) {
    last_command_ = render_launch_command(options_.launch_template, *space_, config);
    engine = std::make_unique<EngineProcess>(last_command_);
  }
  auto alive = [&] { return !engine || engine->alive(); };
  if (!wait_ready(options_, options_.readiness_timeout, alive))
    return Observation::failure(config, InvalidReason::crash, seconds_since(start), profile.seed);

  StressResult r = run_stress(options_, trace_, profile);
  const bool died = engine && !engine->alive();
  if (engine) engine->stop();
  if (died) return Observation::failure(config, InvalidReason::crash, seconds_since(start), profile.seed);
  return observation_from_stress(config, r, profile, seconds_since(start));
}

}  // namespace slotune
