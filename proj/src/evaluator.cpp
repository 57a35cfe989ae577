#include "slotune/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "slotune/errors.hpp"
#include "slotune/random.hpp"

namespace slotune {

void StressProfile::validate() const {
  if (!(duration > 0.0)) throw ValidationError("stress duration must be positive");
  if (!(request_rate > 0.0)) throw ValidationError("request rate must be positive");
  if (repeats < 1) throw ValidationError("robustness repeats must be >= 1");
  if (percentile < 0.0 || percentile > 100.0) throw ValidationError("percentile must be in [0,100]");
  if (drain_factor < 0.0) throw ValidationError("drain factor must be >= 0");
}

std::vector<double> poisson_arrivals(double rate, double duration, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "arrivals"));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(rate * duration * 1.1) + 16);
  for (double t = rng.exponential(rate); t < duration; t += rng.exponential(rate)) out.push_back(t);
  return out;
}

std::vector<ScheduledRequest> build_schedule(const RequestTrace& trace, const StressProfile& profile) {
  profile.validate();
  if (trace.records.empty()) throw EmptyTrace("stress test needs a non-empty trace");
  const auto times = poisson_arrivals(profile.request_rate, profile.duration, profile.seed);
  std::vector<std::size_t> order(trace.records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(profile.seed, "order"));
  rng.shuffle(order.begin(), order.end());
  std::vector<ScheduledRequest> out(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) out[i] = {times[i], order[i % order.size()]};
  return out;
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Metrics summarize(std::span<const RequestTiming> requests, double duration, double horizon, double pct) {
  Metrics m;
  std::size_t in_window = 0;
  std::vector<double> latency;
  double ttft_sum = 0.0, tpot_sum = 0.0;
  std::size_t ttft_n = 0, tpot_n = 0;
  for (const auto& r : requests) {
    const bool done = std::isfinite(r.completion);
    if (done && r.completion <= duration) ++in_window;
    latency.push_back((done ? r.completion : horizon) - r.arrival);
    ttft_sum += (std::isfinite(r.first_token) ? r.first_token : horizon) - r.arrival;
    ++ttft_n;
    if (done && r.output_tokens >= 2 && std::isfinite(r.first_token)) {
      tpot_sum += (r.completion - r.first_token) / (r.output_tokens - 1);
      ++tpot_n;
    }
  }
  m.throughput = static_cast<double>(in_window) / duration;
  m.tail_latency = std::max(0.0, percentile(std::move(latency), pct));
  m.ttft = ttft_n ? std::max(0.0, ttft_sum / static_cast<double>(ttft_n)) : 0.0;
  m.tpot = tpot_n ? std::max(0.0, tpot_sum / static_cast<double>(tpot_n)) : 0.0;
  return m;
}

Metrics worst_case(std::span<const Metrics> runs) {
  if (runs.empty()) throw ValidationError("worst case of zero runs");
  Metrics w = runs.front();
  for (const auto& r : runs.subspan(1)) {
    w.throughput = std::min(w.throughput, r.throughput);
    w.tail_latency = std::max(w.tail_latency, r.tail_latency);
    w.ttft = std::max(w.ttft, r.ttft);
    w.tpot = std::max(w.tpot, r.tpot);
  }
  return w;
}

Metrics robustness_pass(Evaluator& evaluator, const Configuration& config, const StressProfile& profile, int repeats) {
  if (repeats < 1) throw ValidationError("robustness repeats must be >= 1");
  std::vector<Metrics> runs;
  for (int i = 0; i < repeats; ++i) {
    StressProfile p = profile;
    p.seed = derive_seed(profile.seed, "robustness", static_cast<std::uint64_t>(i));
    const Observation o = evaluator.evaluate(config, p);
    if (!o.valid())
      throw RobustnessFailed("robustness run " + std::to_string(i + 1) + " of " + std::to_string(repeats) +
                             " was invalid (" + std::string(to_string(o.reason)) + ")");
    runs.push_back(*o.metrics);
  }
  return worst_case(runs);
}

}  // namespace slotune
