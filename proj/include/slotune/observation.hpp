#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "slotune/space.hpp"

namespace slotune {

enum class InvalidReason { crash, timeout, malformed };

std::string_view to_string(InvalidReason r);
InvalidReason parse_invalid_reason(std::string_view s);

/// Stress-test metrics of a run that completed. Latencies are in seconds.
struct Metrics {
  double throughput = 0.0;    // completed requests per second
  double tail_latency = 0.0;  // end-to-end latency percentile (p95 by default)
  double ttft = 0.0;          // mean time to first token
  double tpot = 0.0;          // mean time per output token after the first
  bool operator==(const Metrics&) const = default;
};

struct Observation {
  Configuration config;
  std::optional<Metrics> metrics;  // empty when the run was invalid
  InvalidReason reason = InvalidReason::crash;
  double wall_time = 0.0;
  std::uint64_t seed = 0;

  bool valid() const noexcept { return metrics.has_value(); }
  static Observation success(Configuration c, Metrics m, double wall_time, std::uint64_t seed);
  static Observation failure(Configuration c, InvalidReason r, double wall_time, std::uint64_t seed);
};

/// Objective weights over (throughput, tail latency, TTFT, TPOT). Only three patterns are
/// accepted: maximize throughput, minimize tail latency, or minimize TTFT and TPOT jointly.
class ObjectiveSpec {
 public:
  static ObjectiveSpec throughput() { return ObjectiveSpec({1, 0, 0, 0}); }
  static ObjectiveSpec tail_latency() { return ObjectiveSpec({0, -1, 0, 0}); }
  static ObjectiveSpec ttft_tpot() { return ObjectiveSpec({0, 0, -1, -1}); }
  /// Throws ValidationError for any other weight pattern.
  static ObjectiveSpec from_weights(const std::array<int, 4>& w);
  /// Accepts "throughput", "p95" and "ttft-tpot".
  static ObjectiveSpec parse(std::string_view name);

  const std::array<int, 4>& weights() const noexcept { return w_; }
  bool multi() const noexcept { return w_[2] != 0; }
  int outputs() const noexcept { return multi() ? 2 : 1; }
  std::string name() const;

  /// Objective vector in the maximization convention (weights applied).
  Eigen::VectorXd values(const Metrics& m) const;
  /// Maps a maximized value back to the raw metric for output `i`.
  double raw(double value, int i) const;
  std::string_view metric_name(int i) const;

  bool operator==(const ObjectiveSpec&) const = default;

 private:
  explicit ObjectiveSpec(std::array<int, 4> w) : w_(w) {}
  std::array<int, 4> w_;
};

}  // namespace slotune
