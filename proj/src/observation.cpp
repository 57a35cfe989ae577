#include "slotune/observation.hpp"

#include "slotune/errors.hpp"

namespace slotune {

std::string_view to_string(InvalidReason r) {
  switch (r) {
    case InvalidReason::crash: return "crash";
    case InvalidReason::timeout: return "timeout";
    case InvalidReason::malformed: return "malformed";
  }
  return "crash";
}

InvalidReason parse_invalid_reason(std::string_view s) {
  if (s == "crash") return InvalidReason::crash;
  if (s == "timeout") return InvalidReason::timeout;
  if (s == "malformed") return InvalidReason::malformed;
  throw SchemaError("unknown invalid reason '" + std::string(s) + "'");
}

Observation Observation::success(Configuration c, Metrics m, double wall_time, std::uint64_t seed) {
  Observation o;
  o.config = std::move(c);
  o.metrics = m;
  o.wall_time = wall_time;
  o.seed = seed;
  return o;
}

Observation Observation::failure(Configuration c, InvalidReason r, double wall_time, std::uint64_t seed) {
  Observation o;
  o.config = std::move(c);
  o.reason = r;
  o.wall_time = wall_time;
  o.seed = seed;
  return o;
}

ObjectiveSpec ObjectiveSpec::from_weights(const std::array<int, 4>& w) {
  for (const auto& s : {throughput(), tail_latency(), ttft_tpot()})
    if (s.weights() == w) return s;
  throw ValidationError("objective weights must be (1,0,0,0), (0,-1,0,0) or (0,0,-1,-1)");
}

ObjectiveSpec ObjectiveSpec::parse(std::string_view name) {
  if (name == "throughput") return throughput();
  if (name == "p95" || name == "tail-latency") return tail_latency();
  if (name == "ttft-tpot") return ttft_tpot();
  throw ValidationError("unknown objective '" + std::string(name) + "' (throughput, p95, ttft-tpot)");
}

std::string ObjectiveSpec::name() const {
  if (multi()) return "ttft-tpot";
  return w_[0] != 0 ? "throughput" : "p95";
}

Eigen::VectorXd ObjectiveSpec::values(const Metrics& m) const {
  if (multi()) return Eigen::Vector2d(w_[2] * m.ttft, w_[3] * m.tpot);
  Eigen::VectorXd v(1);
  v[0] = w_[0] != 0 ? w_[0] * m.throughput : w_[1] * m.tail_latency;
  return v;
}

double ObjectiveSpec::raw(double value, int i) const {
  if (multi()) return value / w_[2 + i];
  return w_[0] != 0 ? value : value / w_[1];
}

std::string_view ObjectiveSpec::metric_name(int i) const {
  if (multi()) return i == 0 ? "ttft" : "tpot";
  return w_[0] != 0 ? "throughput" : "tail_latency";
}

}  // namespace slotune
