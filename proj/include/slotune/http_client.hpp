#pragma once

#include <functional>
#include <string>
#include <vector>

#include "slotune/evaluator.hpp"

namespace slotune {

struct HttpOptions {
  std::string endpoint = "http://127.0.0.1:8000";  // scheme://host:port
  std::string completion_path = "/v1/completions";
  std::string health_path = "/health";
  std::string model = "default";
  std::string launch_template;      // empty: the engine is managed externally
  double readiness_timeout = 120.0;  // seconds to wait for the health route
  double progress_timeout = 60.0;    // seconds without any token before giving up
  double poll_interval = 0.5;
};

/// Substitutes `{name}` with the parameter value and `{name:--flag}` with `--flag`
/// when the boolean parameter is true (nothing otherwise). Every parameter must be
/// referenced and every placeholder must name a parameter; ConfigRenderError otherwise.
std::string render_launch_command(const std::string& tmpl, const SearchSpace& space, const Configuration& config);

/// Per-request timing from token arrival times (seconds, same clock as `arrival`).
/// No tokens: first token and completion are NaN.
RequestTiming timing_from_tokens(double arrival, const std::vector<double>& token_times);

struct StressResult {
  std::vector<RequestTiming> requests;
  std::size_t failed = 0;     // non-200 responses or transport errors
  std::size_t malformed = 0;  // 200 responses without a parseable token stream
  bool stalled = false;       // progress timeout hit
  double horizon = 0.0;       // seconds from start when collection stopped
};

/// Open-loop load: sends trace requests at Poisson arrival times and streams each
/// response, timestamping every server-sent event as one token.
StressResult run_stress(const HttpOptions& target, const RequestTrace& trace, const StressProfile& profile);

/// Observation from a finished stress run: Invalid{timeout} when stalled with nothing
/// completed, Invalid{malformed} when no response could be parsed, else Valid.
Observation observation_from_stress(const Configuration& config, const StressResult& r, const StressProfile& profile,
                                    double wall_time);

/// Launches the engine (when a template is set), waits for readiness, stress-tests it and
/// stops it again. Evaluations run one at a time.
class HttpEvaluator final : public Evaluator {
 public:
  HttpEvaluator(const SearchSpace& space, RequestTrace trace, HttpOptions options);

  Observation evaluate(const Configuration& config, const StressProfile& profile) override;
  std::string name() const override { return "http"; }
  bool concurrent() const override { return false; }

  /// Command rendered for the most recent evaluation (empty without a template).
  const std::string& last_command() const noexcept { return last_command_; }

 private:
  const SearchSpace* space_;
  RequestTrace trace_;
  HttpOptions options_;
  std::string last_command_;
};

/// Polls the health route until it answers 200; false after `timeout` seconds or
/// as soon as `alive()` reports the engine process has exited.
bool wait_ready(const HttpOptions& target, double timeout, const std::function<bool()>& alive);

}  // namespace slotune
