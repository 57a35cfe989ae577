#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "slotune/observation.hpp"
#include "slotune/space.hpp"
#include "slotune/trace.hpp"

namespace slotune {

struct StressProfile {
  double duration = 100.0;      // seconds of request arrivals
  double request_rate = 10.0;   // Poisson intensity, requests per second
  std::uint64_t seed = 0;       // arrival times and request order
  int repeats = 3;              // robustness passes
  double percentile = 95.0;     // tail-latency percentile
  double drain_factor = 1.0;    // extra time after the window, as a multiple of duration

  /// Throws ValidationError for non-positive duration or rate.
  void validate() const;
};

struct ScheduledRequest {
  double arrival = 0.0;  // seconds from the start of the window
  std::size_t record = 0;
};

/// Arrival times in [0, duration) with exponential gaps of mean 1/rate.
std::vector<double> poisson_arrivals(double rate, double duration, std::uint64_t seed);

/// Poisson arrivals paired with trace records taken in a seeded shuffled order (cycling).
std::vector<ScheduledRequest> build_schedule(const RequestTrace& trace, const StressProfile& profile);

/// Per-request timestamps in seconds from the start of the window; NaN when an event never happened.
struct RequestTiming {
  double arrival = 0.0;
  double first_token = 0.0;
  double completion = 0.0;
  int output_tokens = 0;
};

/// Linear-interpolated percentile (p in [0,100]) of unsorted values; 0 for an empty input.
double percentile(std::vector<double> values, double p);

/// Aggregate metrics. Throughput counts completions inside the window; latencies of
/// requests still unfinished at `horizon` are censored there.
Metrics summarize(std::span<const RequestTiming> requests, double duration, double horizon, double pct);

class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual Observation evaluate(const Configuration& config, const StressProfile& profile) = 0;
  virtual std::string name() const = 0;
  /// Whether several evaluations may run at once.
  virtual bool concurrent() const { return true; }
};

/// Worst value of each metric over `repeats` runs with distinct arrival seeds.
/// Throws RobustnessFailed if any run is invalid.
Metrics robustness_pass(Evaluator& evaluator, const Configuration& config, const StressProfile& profile, int repeats);

/// Worst-case combination of several metric sets: min throughput, max latencies.
Metrics worst_case(std::span<const Metrics> runs);

}  // namespace slotune
