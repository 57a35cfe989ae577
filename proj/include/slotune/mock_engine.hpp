#pragma once

#include <optional>
#include <string>

#include "slotune/evaluator.hpp"

namespace slotune {

/// Hardware and model constants of the simulated deployment (a 7B model on 24 GB devices).
struct MockOptions {
  bool hidden_failures = true;     // false: no crash or timeout regions
  double device_memory_gb = 24.0;
  double memory_utilization = 0.9;
  double weights_gb = 13.5;
  double activation_mb_per_token = 1.0;  // per batched token, split across tensor-parallel ranks
  double kv_mb_per_token = 0.5;          // split across tensor-parallel ranks
  int max_model_len = 4096;
  double startup_seconds = 20.0;
};

/// Engine settings read from a configuration by parameter name.
struct EngineSettings {
  int tensor_parallel = 1;
  int max_num_seqs = 256;
  int max_num_batched_tokens = 4096;
  int block_size = 16;
  double scheduler_delay_factor = 0.0;
  bool chunked_prefill = false;
  bool prefix_caching = false;
  bool custom_all_reduce = true;
  bool v2_block_manager = false;

  /// Requires the parameter names of the shipped vLLM space; throws ValidationError otherwise.
  static EngineSettings from(const SearchSpace& space, const Configuration& config);
};

/// Deterministic continuous-batching serving simulator.
///
/// A scheduler admits waiting requests subject to max_num_seqs, the per-step token
/// budget and the KV-cache pool, then runs prefill or decode steps whose duration
/// grows with batch size and resident context. Without chunked prefill, prefill steps
/// stall decoding; with it, each step mixes decode tokens with prefill chunks.
class MockEngine final : public Evaluator {
 public:
  MockEngine(const SearchSpace& space, RequestTrace trace, MockOptions options = {});

  Observation evaluate(const Configuration& config, const StressProfile& profile) override;
  std::string name() const override { return "mock"; }

  /// Failure the engine would hit for these settings, if any. This is the ground truth
  /// for the hidden constraints.
  std::optional<InvalidReason> hidden_failure(const EngineSettings& s) const;
  std::optional<InvalidReason> hidden_failure(const Configuration& config) const {
    return hidden_failure(EngineSettings::from(*space_, config));
  }
  /// Tokens the KV pool holds (summed over ranks, in token units).
  double kv_capacity_tokens(const EngineSettings& s) const;

  const MockOptions& options() const noexcept { return options_; }
  const RequestTrace& trace() const noexcept { return trace_; }

 private:
  const SearchSpace* space_;
  RequestTrace trace_;
  MockOptions options_;
};

}  // namespace slotune
