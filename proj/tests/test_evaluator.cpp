#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "slotune/errors.hpp"
#include "slotune/evaluator.hpp"
#include "slotune/mock_engine.hpp"
#include "slotune/random.hpp"
#include "slotune/trace.hpp"

using namespace slotune;
using doctest::Approx;

namespace {

SearchSpace vllm() { return load_space(SLOTUNE_SPACES "/vllm-0.4.2.json"); }

Configuration with(const SearchSpace& s, Configuration c, std::string_view name, Value v) {
  c.values[*s.index_of(name)] = std::move(v);
  return c;
}

class Scripted final : public Evaluator {
 public:
  explicit Scripted(std::vector<std::optional<double>> throughputs) : runs_(std::move(throughputs)) {}
  Observation evaluate(const Configuration& c, const StressProfile& p) override {
    const auto t = runs_.at(calls_++);
    if (!t) return Observation::failure(c, InvalidReason::crash, 0.0, p.seed);
    Metrics m;
    m.throughput = *t;
    m.tail_latency = 1.0 / *t;
    return Observation::success(c, m, 0.0, p.seed);
  }
  std::string name() const override { return "scripted"; }

 private:
  std::vector<std::optional<double>> runs_;
  std::size_t calls_ = 0;
};

}  // namespace

TEST_CASE("trace parsing") {
  const std::string four =
      "{\"input_tokens\": 10, \"output_tokens\": 5}\n"
      "\n"
      "{\"input_tokens\": 20, \"output_tokens\": 50, \"prompt\": \"hi\"}\n"
      "{\"input_tokens\": 30, \"output_tokens\": 7}\n"
      "{\"input_tokens\": 40, \"output_tokens\": 80}\n";
  const RequestTrace t = parse_trace(four);
  REQUIRE(t.size() == 4);
  CHECK(t.records[1].prompt == "hi");
  const RequestTrace half = longest_output_half(t);
  REQUIRE(half.size() == 2);
  CHECK(half.records[0].output_tokens == 50);
  CHECK(half.records[1].output_tokens == 80);

  CHECK(parse_trace(trace_document(t)).digest() == t.digest());
  CHECK(half.digest() != t.digest());

  CHECK_THROWS_AS(parse_trace(""), EmptyTrace);
  CHECK_THROWS_AS(parse_trace("\n\n"), EmptyTrace);
  CHECK_THROWS_AS(parse_trace("{\"input_tokens\": 3, \"output_tokens\": 0}"), ParseError);
  CHECK_THROWS_AS(parse_trace("{\"input_tokens\": 3}"), ParseError);
  try {
    parse_trace("{\"input_tokens\": 3, \"output_tokens\": 2}\n{oops}\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find('2') != std::string::npos);
  }

  for (const char* kind : {"bot", "sql", "cls", "rec"}) {
    const auto s = synthetic_trace(kind, 200, 3);
    CHECK(s.size() == 200);
    CHECK(s.digest() == synthetic_trace(kind, 200, 3).digest());
    for (const auto& r : s.records) {
      CHECK(r.input_tokens > 0);
      CHECK(r.output_tokens > 0);
    }
  }
}

TEST_CASE("stress profile validation") {
  StressProfile p;
  CHECK_NOTHROW(p.validate());
  p.duration = 0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p.duration = 10;
  p.request_rate = -1;
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("Poisson arrivals") {
  const auto many = poisson_arrivals(10.0, 10000.0, 1);
  REQUIRE(many.size() > 99000);
  const double mean_gap = many.back() / static_cast<double>(many.size());
  CHECK(std::abs(mean_gap - 0.1) < 0.001);
  for (std::size_t i = 1; i < many.size(); ++i) REQUIRE(many[i] > many[i - 1]);

  for (double rate : {1.0, 5.0, 10.0, 20.0, 60.0})
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto a = poisson_arrivals(rate, 100.0, seed);
      CHECK(std::abs(static_cast<double>(a.size()) - rate * 100) <= 3 * std::sqrt(rate * 100));
      CHECK(a == poisson_arrivals(rate, 100.0, seed));
      CHECK(a.back() < 100.0);
    }

  const auto trace = synthetic_trace("bot", 7, 1);
  StressProfile p;
  p.request_rate = 5;
  p.duration = 20;
  const auto sched = build_schedule(trace, p);
  std::vector<int> uses(7, 0);
  for (const auto& s : sched) ++uses[s.record];
  // Records cycle through a shuffled order, so usage counts differ by at most one.
  CHECK(*std::max_element(uses.begin(), uses.end()) - *std::min_element(uses.begin(), uses.end()) <= 1);
}

TEST_CASE("percentile and summary") {
  CHECK(percentile({1, 2, 3, 4}, 95) == Approx(3.85));
  CHECK(percentile({4, 1, 3, 2}, 50) == Approx(2.5));
  CHECK(percentile({7}, 95) == 7);
  CHECK(percentile({}, 95) == 0);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::vector<RequestTiming> reqs{
      {0.0, 0.5, 1.4, 10},  // ttft .5, tpot .1, latency 1.4
      {1.0, 1.2, 1.2, 1},   // single token: ttft only
      {2.0, 3.0, 12.0, 4},  // completes after the window
      {9.0, nan, nan, 5},   // never served: censored at the horizon
  };
  const Metrics m = summarize(reqs, 10.0, 20.0, 50.0);
  CHECK(m.throughput == Approx(0.2));
  CHECK(m.ttft == Approx((0.5 + 0.2 + 1.0 + 11.0) / 4));
  CHECK(m.tpot == Approx((0.1 + 3.0) / 2));
  CHECK(m.tail_latency == Approx(percentile({1.4, 0.2, 10.0, 11.0}, 50)));
}

TEST_CASE("mock engine hidden failures") {
  const SearchSpace s = vllm();
  MockEngine engine(s, synthetic_trace("bot", 200, 1));
  StressProfile p;
  p.duration = 30;
  auto tp2 = with(s, s.default_config(), "tensor_parallel", std::int64_t{2});
  auto busy = with(s, with(s, tp2, "max_num_batched_tokens", std::int64_t{8192}), "max_num_seqs", std::int64_t{8192});
  const auto slow = with(s, busy, "scheduler_delay_factor", 2.0);
  REQUIRE(s.check_known(slow));
  const Observation t = engine.evaluate(slow, p);
  CHECK_FALSE(t.valid());
  CHECK(t.reason == InvalidReason::timeout);
  CHECK(engine.evaluate(with(s, slow, "scheduler_delay_factor", 1.5), p).valid());

  const auto big = with(s, s.default_config(), "max_num_batched_tokens", std::int64_t{8192});
  const Observation c = engine.evaluate(big, p);
  CHECK_FALSE(c.valid());
  CHECK(c.reason == InvalidReason::crash);
  CHECK(engine.hidden_failure(big) == InvalidReason::crash);
  CHECK_FALSE(engine.hidden_failure(s.default_config()));

  MockOptions off;
  off.hidden_failures = false;
  MockEngine safe(s, synthetic_trace("bot", 200, 1), off);
  CHECK(safe.evaluate(slow, p).valid());
  CHECK(safe.evaluate(big, p).valid());
}

TEST_CASE("mock engine determinism and sanity") {
  const SearchSpace s = vllm();
  MockEngine engine(s, synthetic_trace("rec", 300, 2));
  StressProfile p;
  p.request_rate = 20;
  p.duration = 40;
  p.seed = 5;
  for (const auto& c : sobol_sample(s, 40, 8)) {
    const Observation a = engine.evaluate(c, p);
    const Observation b = engine.evaluate(c, p);
    CHECK(a.valid() == b.valid());
    if (!a.valid()) continue;
    CHECK(*a.metrics == *b.metrics);
    CHECK(a.wall_time == b.wall_time);
    const Metrics& m = *a.metrics;
    CHECK(std::isfinite(m.throughput));
    CHECK(m.throughput >= 0);
    CHECK(m.throughput <= p.request_rate);
    CHECK(m.tail_latency >= 0);
    CHECK(m.ttft >= 0);
    CHECK(m.tpot >= 0);
  }
}

TEST_CASE("max_num_seqs trades first-token delay for per-token time") {
  // Operating points where the sequence cap binds before the KV pool does.
  const SearchSpace s = vllm();
  const std::pair<const char*, double> points[] = {{"bot", 12}, {"bot", 14}, {"bot", 16}, {"rec", 12}};
  for (const auto& [kind, rate] : points) {
    MockEngine engine(s, synthetic_trace(kind, 500, 4));
    StressProfile p;
    p.request_rate = rate;
    p.duration = 60;
    const auto base = with(s, with(s, s.default_config(), "tensor_parallel", std::int64_t{4}), "max_num_batched_tokens",
                           std::int64_t{8192});
    double prev_ttft = std::numeric_limits<double>::infinity(), prev_tpot = 0.0, first_ttft = 0.0;
    for (std::int64_t seqs : {64, 96, 128, 192, 256, 384, 512, 1024, 2048, 4096, 8192}) {
      CAPTURE(kind);
      CAPTURE(rate);
      CAPTURE(seqs);
      const Observation o = engine.evaluate(with(s, base, "max_num_seqs", seqs), p);
      REQUIRE(o.valid());
      if (seqs == 64) first_ttft = o.metrics->ttft;
      CHECK(o.metrics->ttft <= prev_ttft);
      CHECK(o.metrics->tpot >= prev_tpot);
      prev_ttft = o.metrics->ttft;
      prev_tpot = o.metrics->tpot;
    }
    // The cap must actually bind somewhere along the sweep.
    CHECK(prev_ttft < first_ttft);
  }
}

TEST_CASE("robustness pass") {
  const SearchSpace s = vllm();
  MockEngine engine(s, synthetic_trace("bot", 200, 1));
  StressProfile p;
  p.duration = 30;
  p.seed = 3;
  const Metrics one = robustness_pass(engine, s.default_config(), p, 1);
  StressProfile q = p;
  q.seed = derive_seed(p.seed, "robustness", 0);
  CHECK(one == *engine.evaluate(s.default_config(), q).metrics);

  Scripted three({10.1, 9.8, 10.0});
  CHECK(robustness_pass(three, s.default_config(), p, 3).throughput == 9.8);
  Scripted fragile({10.1, std::nullopt, 10.0});
  CHECK_THROWS_AS(robustness_pass(fragile, s.default_config(), p, 3), RobustnessFailed);
  CHECK_THROWS_AS(robustness_pass(engine, s.default_config(), p, 0), ValidationError);

  const std::vector<Metrics> runs{{10, 1, 0.2, 0.05}, {9, 2, 0.1, 0.06}};
  const Metrics w = worst_case(runs);
  CHECK(w == Metrics{9, 2, 0.2, 0.06});
}
