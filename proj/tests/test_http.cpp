#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

#include "slotune/errors.hpp"
#include "slotune/http_client.hpp"
#include "slotune/trace.hpp"
#include "stub_server.hpp"

using namespace slotune;
using doctest::Approx;

namespace {

HttpOptions options_for(const Stub& stub) {
  HttpOptions o;
  o.endpoint = stub.endpoint();
  o.readiness_timeout = 5;
  o.progress_timeout = 10;
  o.poll_interval = 0.05;
  return o;
}

RequestTrace ten_token_trace() { return parse_trace("{\"input_tokens\": 16, \"output_tokens\": 10}\n"); }

const char* kTemplate =
    "serve --tp {tensor_parallel} --seqs {max_num_seqs} --tokens {max_num_batched_tokens} --block {block_size} "
    "--delay {scheduler_delay_factor}{enable_chunked_prefill: --chunked}{enable_prefix_caching: --prefix}"
    "{disable_custom_all_reduce: --no-car}{use_v2_block_manager: --v2}";

}  // namespace

TEST_CASE("token timestamps") {
  const std::vector<double> ts{1.0, 1.5, 1.75, 2.0, 2.5, 3.0, 3.25, 3.5, 4.0, 4.6};
  const RequestTiming t = timing_from_tokens(0.25, ts);
  CHECK(t.first_token == 1.0);
  CHECK(t.completion == 4.6);
  CHECK(t.output_tokens == 10);
  const std::vector<RequestTiming> one{t};
  const Metrics m = summarize(one, 10.0, 20.0, 95.0);
  CHECK(m.ttft == 1.0 - 0.25);
  CHECK(m.tpot == (4.6 - 1.0) / 9);
  CHECK(m.tail_latency == 4.6 - 0.25);

  const RequestTiming none = timing_from_tokens(2.0, {});
  CHECK(std::isnan(none.first_token));
  CHECK(std::isnan(none.completion));
}

TEST_CASE("launch command rendering") {
  const SearchSpace s = load_space(SLOTUNE_SPACES "/vllm-0.4.2.json");
  Configuration c = s.default_config();
  c.values[*s.index_of("enable_prefix_caching")] = true;
  CHECK(render_launch_command(kTemplate, s, c) == "serve --tp 1 --seqs 256 --tokens 4096 --block 16 --delay 0 --prefix");
  CHECK_THROWS_AS(render_launch_command("serve {tensor_parallel}", s, c), ConfigRenderError);
  CHECK_THROWS_AS(render_launch_command(std::string(kTemplate) + " {ghost}", s, c), ConfigRenderError);
  CHECK_THROWS_AS(render_launch_command(std::string(kTemplate) + " {max_num_seqs:--x}", s, c), ConfigRenderError);
}

TEST_CASE("readiness failures are crashes") {
  const SearchSpace s = load_space(SLOTUNE_SPACES "/vllm-0.4.2.json");
  HttpOptions o;
  o.endpoint = "http://127.0.0.1:9";
  o.readiness_timeout = 1.0;
  o.poll_interval = 0.1;
  HttpEvaluator eval(s, ten_token_trace(), o);
  StressProfile p;
  p.duration = 1;
  const Observation obs = eval.evaluate(s.default_config(), p);
  CHECK_FALSE(obs.valid());
  CHECK(obs.reason == InvalidReason::crash);

  // The launched process exits immediately, so readiness is abandoned early.
  o.launch_template = std::string("exit 3; ") + kTemplate;
  o.readiness_timeout = 30.0;
  HttpEvaluator dying(s, ten_token_trace(), o);
  const auto t0 = Clock::now();
  const Observation d = dying.evaluate(s.default_config(), p);
  CHECK(std::chrono::duration<double>(Clock::now() - t0).count() < 10.0);
  CHECK_FALSE(d.valid());
  CHECK(d.reason == InvalidReason::crash);
  CHECK(dying.last_command().rfind("exit 3; serve --tp 1", 0) == 0);
}

TEST_CASE("malformed streams") {
  Stub stub(5, true);
  const SearchSpace s = load_space(SLOTUNE_SPACES "/vllm-0.4.2.json");
  HttpEvaluator eval(s, ten_token_trace(), options_for(stub));
  StressProfile p;
  p.duration = 3;
  p.request_rate = 5;
  const Observation o = eval.evaluate(s.default_config(), p);
  CHECK_FALSE(o.valid());
  CHECK(o.reason == InvalidReason::malformed);
}

TEST_CASE("Poisson load against a stub endpoint") {
  Stub stub(10);
  const SearchSpace s = load_space(SLOTUNE_SPACES "/vllm-0.4.2.json");
  StressProfile p;
  p.request_rate = 5;
  p.duration = 100;
  p.seed = 42;
  const auto schedule = build_schedule(ten_token_trace(), p);
  HttpEvaluator eval(s, ten_token_trace(), options_for(stub));
  const Observation o = eval.evaluate(s.default_config(), p);
  REQUIRE(o.valid());
  CHECK(std::abs(o.metrics->throughput - 5.0) <= 0.5);
  CHECK(o.metrics->ttft >= 0.0);
  CHECK(o.metrics->ttft < 0.1);

  const auto seen = stub.arrivals();
  REQUIRE(seen.size() == schedule.size());
  CHECK(std::abs(static_cast<double>(seen.size()) - 500.0) <= 3 * std::sqrt(500.0));
  std::vector<double> gaps;
  for (std::size_t i = 1; i < seen.size(); ++i) gaps.push_back(seen[i] - seen[i - 1]);
  double mean = 0.0;
  for (double g : gaps) mean += g;
  mean /= static_cast<double>(gaps.size());
  // Exponential gaps have standard deviation equal to their mean.
  CHECK(std::abs(mean - 0.2) <= 3 * 0.2 / std::sqrt(static_cast<double>(gaps.size())));
  // Sends follow the generated schedule.
  double worst = 0.0;
  for (std::size_t i = 0; i < seen.size(); ++i)
    worst = std::max(worst, std::abs((seen[i] - seen[0]) - (schedule[i].arrival - schedule[0].arrival)));
  CHECK(worst < 0.25);
}
