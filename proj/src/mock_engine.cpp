#include "slotune/mock_engine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "slotune/errors.hpp"

namespace slotune {

namespace {

double number(const Value& v) {
  if (auto p = std::get_if<std::int64_t>(&v)) return static_cast<double>(*p);
  if (auto p = std::get_if<double>(&v)) return *p;
  if (auto p = std::get_if<bool>(&v)) return *p ? 1.0 : 0.0;
  return std::stod(std::get<std::string>(v));
}

bool flag(const Value& v) {
  if (auto p = std::get_if<bool>(&v)) return *p;
  return number(v) != 0.0;
}

// Step cost model, milliseconds.
constexpr double kWeightsMs = 18.0;       // reading weights once per step
constexpr double kPerSeqMs = 0.06;        // per decoding sequence
constexpr double kPerKiloCtxMs = 0.8;     // attention over resident context, per 1000 tokens
constexpr double kPerPrefillMs = 0.2;     // per prompt token computed
constexpr double kTpExponent = 0.9;
constexpr double kPrefixHitRate = 0.25;   // prompt tokens served from the prefix cache
constexpr double kPrefixOverheadMs = 0.5;
constexpr double kDelayTimeout = 1.6;
constexpr int kDelaySeqLimit = 4096;

double block_factor(int block) {
  if (block <= 8) return 1.08;
  if (block <= 16) return 1.0;
  return 0.98;
}

struct Request {
  double arrival;
  int input;
  int output;
  int generated = 0;
  double first = std::numeric_limits<double>::quiet_NaN();
  double done = std::numeric_limits<double>::quiet_NaN();
};

// A sequence holding KV blocks: either still computing its prompt or decoding.
struct Sequence {
  std::size_t req;
  int prompt;       // tokens to (re)compute before the next token
  int computed;     // prompt tokens computed so far
  int blocks;
};

class Simulator {
 public:
  Simulator(const EngineSettings& s, double kv_tokens, std::vector<Request> reqs)
      : s_(s), reqs_(std::move(reqs)) {
    total_blocks_ = static_cast<long>(kv_tokens) / s.block_size;
    free_blocks_ = total_blocks_;
    watermark_ = std::max<long>(1, total_blocks_ / 100);
    tp_eff_ = std::pow(static_cast<double>(s.tensor_parallel), kTpExponent);
    allreduce_ms_ = s.tensor_parallel > 1 ? (s.custom_all_reduce ? 1.5 : 4.0) : 0.0;
    allreduce_token_ms_ = s.tensor_parallel > 1 ? (s.custom_all_reduce ? 0.002 : 0.005) : 0.0;
  }

  void run(double horizon) {
    std::size_t next_arrival = 0;
    double t = 0.0;
    while (t < horizon) {
      while (next_arrival < reqs_.size() && reqs_[next_arrival].arrival <= t) waiting_.push_back(next_arrival++);
      const double step = s_.chunked_prefill ? chunked_step(t) : plain_step(t);
      if (step <= 0.0) {
        // Idle until the next arrival.
        if (next_arrival >= reqs_.size()) break;
        t = std::max(t, reqs_[next_arrival].arrival);
        continue;
      }
      t += step;
      complete_step(t);
    }
  }

  const std::vector<Request>& requests() const { return reqs_; }
  long preemptions() const { return preemptions_; }

 private:
  long blocks_for(long tokens) const { return (tokens + s_.block_size - 1) / s_.block_size; }
  int context_of(const Sequence& q) const { return reqs_[q.req].input + reqs_[q.req].generated; }

  bool delay_passed(double t) const {
    if (decoding_.empty() && prefilling_.empty()) return true;
    return t - last_prompt_time_ >= s_.scheduler_delay_factor * last_prompt_latency_;
  }

  // Admits the head of the waiting queue if sequence count and free blocks allow.
  bool try_admit() {
    const std::size_t idx = waiting_.front();
    if (static_cast<int>(decoding_.size() + prefilling_.size()) >= s_.max_num_seqs) return false;
    const Request& r = reqs_[idx];
    const int prompt = r.input + r.generated;  // preempted sequences recompute everything
    const long need = blocks_for(prompt + 1);
    if (free_blocks_ - need < watermark_ && !(decoding_.empty() && prefilling_.empty())) return false;
    if (need > free_blocks_) return false;
    free_blocks_ -= need;
    prefilling_.push_back({idx, prompt, 0, static_cast<int>(need)});
    waiting_.pop_front();
    return true;
  }

  // Every decoding sequence needs room for one more token; preempt the newest until it fits.
  void reserve_decode_blocks() {
    for (;;) {
      long need = 0;
      for (const auto& q : decoding_)
        if (blocks_for(context_of(q) + 1) > q.blocks) ++need;
      if (need <= free_blocks_ || decoding_.empty()) {
        for (auto& q : decoding_) {
          const long b = blocks_for(context_of(q) + 1);
          if (b > q.blocks) {
            free_blocks_ -= b - q.blocks;
            q.blocks = static_cast<int>(b);
          }
        }
        return;
      }
      Sequence victim = decoding_.back();
      decoding_.pop_back();
      free_blocks_ += victim.blocks;
      context_ -= context_of(victim);
      waiting_.push_front(victim.req);
      ++preemptions_;
    }
  }

  double step_ms(double prefill_tokens, std::size_t decode_seqs) const {
    double compute = kWeightsMs + kPerSeqMs * static_cast<double>(decode_seqs) +
                     kPerKiloCtxMs * block_factor(s_.block_size) * context_ / 1000.0;
    if (prefill_tokens > 0.0) {
      const double computed = s_.prefix_caching ? prefill_tokens * (1.0 - kPrefixHitRate) : prefill_tokens;
      compute += kPerPrefillMs * computed;
    }
    if (s_.prefix_caching) compute += kPrefixOverheadMs;
    const double tokens = prefill_tokens + static_cast<double>(decode_seqs);
    return compute / tp_eff_ + allreduce_ms_ + allreduce_token_ms_ * tokens;
  }

  // Without chunking: a prompt step when the delay rule allows and something fits, else decode.
  double plain_step(double t) {
    step_decodes_ = false;
    if (!waiting_.empty() && delay_passed(t)) {
      long tokens = 0;
      while (!waiting_.empty()) {
        const Request& r = reqs_[waiting_.front()];
        if (tokens + r.input + r.generated > s_.max_num_batched_tokens) break;
        if (!try_admit()) break;
        tokens += prefilling_.back().prompt;
        prefilling_.back().computed = prefilling_.back().prompt;
      }
      if (tokens > 0) {
        const double step = step_ms(static_cast<double>(tokens), 0) / 1000.0;
        last_prompt_time_ = t;
        last_prompt_latency_ = step;
        return step;
      }
    }
    if (decoding_.empty()) return 0.0;
    reserve_decode_blocks();
    step_decodes_ = true;
    return step_ms(0.0, decoding_.size()) / 1000.0;
  }

  // With chunking: every decoding sequence advances; leftover budget goes to prompt chunks.
  double chunked_step(double t) {
    reserve_decode_blocks();
    step_decodes_ = !decoding_.empty();
    long budget = s_.max_num_batched_tokens - static_cast<long>(decoding_.size());
    long prefill = 0;
    for (auto& q : prefilling_) {
      if (budget <= 0) break;
      const long chunk = std::min<long>(budget, q.prompt - q.computed);
      q.computed += static_cast<int>(chunk);
      budget -= chunk;
      prefill += chunk;
    }
    if (budget > 0 && !waiting_.empty() && delay_passed(t)) {
      bool admitted = false;
      while (budget > 0 && !waiting_.empty() && try_admit()) {
        auto& q = prefilling_.back();
        const long chunk = std::min<long>(budget, q.prompt);
        q.computed = static_cast<int>(chunk);
        budget -= chunk;
        prefill += chunk;
        admitted = true;
      }
      if (admitted) last_prompt_time_ = t;
    }
    if (prefill == 0 && decoding_.empty()) return 0.0;
    const double step = step_ms(static_cast<double>(prefill), decoding_.size()) / 1000.0;
    if (prefill > 0) last_prompt_latency_ = step;
    return step;
  }

  void finish(Sequence& q, double t) {
    Request& r = reqs_[q.req];
    r.done = t;
    free_blocks_ += q.blocks;
  }

  void complete_step(double t) {
    if (step_decodes_) {
      std::vector<Sequence> still;
      still.reserve(decoding_.size());
      for (auto& q : decoding_) {
        Request& r = reqs_[q.req];
        ++r.generated;
        ++context_;
        if (r.generated >= r.output) {
          context_ -= context_of(q);
          finish(q, t);
        } else {
          still.push_back(q);
        }
      }
      decoding_ = std::move(still);
    }
    // Prompts that finished this step emit a token and join the decode batch.
    for (auto it = prefilling_.begin(); it != prefilling_.end();) {
      if (it->computed < it->prompt) {
        ++it;
        continue;
      }
      Request& r = reqs_[it->req];
      if (!std::isfinite(r.first)) r.first = t;
      ++r.generated;
      if (r.generated >= r.output) {
        finish(*it, t);
      } else {
        context_ += context_of(*it);
        decoding_.push_back(*it);
      }
      it = prefilling_.erase(it);
    }
    if (decoding_.empty()) context_ = 0;
  }

  EngineSettings s_;
  std::vector<Request> reqs_;
  long total_blocks_ = 0;
  long free_blocks_ = 0;
  long watermark_ = 1;
  double tp_eff_ = 1.0;
  double allreduce_ms_ = 0.0;
  double allreduce_token_ms_ = 0.0;

  std::deque<std::size_t> waiting_;
  std::deque<Sequence> prefilling_;
  std::vector<Sequence> decoding_;  // admission order; the back is preempted first
  long context_ = 0;
  bool step_decodes_ = false;
  long preemptions_ = 0;
  double last_prompt_time_ = -std::numeric_limits<double>::infinity();
  double last_prompt_latency_ = 0.0;
};

}  // namespace

EngineSettings EngineSettings::from(const SearchSpace& space, const Configuration& config) {
  auto get = [&](const char* name) -> const Value& {
    if (!space.index_of(name))
      throw ValidationError(std::string("mock engine needs parameter '") + name + "' in the search space");
    return space.get(config, name);
  };
  EngineSettings s;
  s.tensor_parallel = static_cast<int>(number(get("tensor_parallel")));
  s.max_num_seqs = static_cast<int>(number(get("max_num_seqs")));
  s.max_num_batched_tokens = static_cast<int>(number(get("max_num_batched_tokens")));
  s.block_size = static_cast<int>(number(get("block_size")));
  s.scheduler_delay_factor = number(get("scheduler_delay_factor"));
  s.chunked_prefill = flag(get("enable_chunked_prefill"));
  s.prefix_caching = flag(get("enable_prefix_caching"));
  s.custom_all_reduce = !flag(get("disable_custom_all_reduce"));
  s.v2_block_manager = flag(get("use_v2_block_manager"));
  return s;
}

MockEngine::MockEngine(const SearchSpace& space, RequestTrace trace, MockOptions options)
    : space_(&space), trace_(std::move(trace)), options_(options) {
  if (trace_.records.empty()) throw EmptyTrace("mock engine needs a non-empty trace");
  EngineSettings::from(space, space.default_config());
}

double MockEngine::kv_capacity_tokens(const EngineSettings& s) const {
  const double tp = s.tensor_parallel;
  const double per_rank_gb = options_.device_memory_gb * options_.memory_utilization - options_.weights_gb / tp -
                             s.max_num_batched_tokens * options_.activation_mb_per_token / 1000.0 / tp;
  const double per_token_gb = options_.kv_mb_per_token / 1000.0 / tp;
  double tokens = std::max(0.0, per_rank_gb) / per_token_gb;
  if (s.v2_block_manager) tokens *= 1.04;
  return tokens;
}

std::optional<InvalidReason> MockEngine::hidden_failure(const EngineSettings& s) const {
  if (!options_.hidden_failures) return std::nullopt;
  if (kv_capacity_tokens(s) < options_.max_model_len) return InvalidReason::crash;
  if (s.scheduler_delay_factor > kDelayTimeout && s.max_num_seqs > kDelaySeqLimit) return InvalidReason::timeout;
  return std::nullopt;
}

Observation MockEngine::evaluate(const Configuration& config, const StressProfile& profile) {
  const EngineSettings s = EngineSettings::from(*space_, config);
  if (auto failure = hidden_failure(s)) {
    const double wall = options_.startup_seconds + (*failure == InvalidReason::timeout ? profile.duration : 0.0);
    return Observation::failure(config, *failure, wall, profile.seed);
  }

  const auto schedule = build_schedule(trace_, profile);
  std::vector<Request> reqs;
  reqs.reserve(schedule.size());
  for (const auto& sr : schedule) {
    const auto& rec = trace_.records[sr.record];
    // Prompts longer than the context window are truncated, as the engine would reject them.
    const int input = std::min(rec.input_tokens, options_.max_model_len - 1);
    const int output = std::max(1, std::min(rec.output_tokens, options_.max_model_len - input));
    reqs.push_back({sr.arrival, input, output});
  }
  double kv = kv_capacity_tokens(s);
  if (!options_.hidden_failures) kv = std::max(kv, static_cast<double>(options_.max_model_len));

  const double horizon = profile.duration * (1.0 + profile.drain_factor);
  Simulator sim(s, kv, std::move(reqs));
  sim.run(horizon);

  std::vector<RequestTiming> timings;
  timings.reserve(sim.requests().size());
  for (const auto& r : sim.requests()) {
    const double done = r.done <= horizon ? r.done : std::numeric_limits<double>::quiet_NaN();
    const double first = r.first <= horizon ? r.first : std::numeric_limits<double>::quiet_NaN();
    timings.push_back({r.arrival, first, done, r.output});
  }
  const Metrics m = summarize(timings, profile.duration, horizon, profile.percentile);
  return Observation::success(config, m, options_.startup_seconds + horizon, profile.seed);
}

}  // namespace slotune
