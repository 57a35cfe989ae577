#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "slotune/acquisition.hpp"
#include "slotune/evaluator.hpp"
#include "slotune/forest.hpp"
#include "slotune/nsga2.hpp"
#include "slotune/observation.hpp"
#include "slotune/space.hpp"

namespace slotune {

enum class Strategy {
  bo,          // surrogate + feasibility model + adaptive threshold
  random,      // Sobol points only
  penalty_bo,  // surrogate without feasibility model; failures get a penalty objective
};
std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

struct TunerConfig {
  std::size_t budget = 30;        // total evaluations, valid or not
  std::size_t parallel = 1;       // configurations per iteration
  std::size_t initial = 0;        // initial design size including the default; 0: dimensionality
  ObjectiveSpec objective = ObjectiveSpec::throughput();
  Strategy strategy = Strategy::bo;
  std::uint64_t seed = 0;
  StressProfile profile;          // profile.seed is derived from `seed` when the run starts
  SolverSettings solver;
  ForestOptions forest;
  int gp_restarts = 8;
  bool literal_beta = false;
  bool robustness = true;         // re-test the reported configuration(s) at the end
  std::string evaluator = "mock";

  /// Throws ValidationError for an unusable combination.
  void validate(const SearchSpace& space) const;
  std::size_t initial_count(const SearchSpace& space) const;
};

enum class Source { default_config, initial, solver, fallback, random };
std::string_view to_string(Source s);
Source parse_source(std::string_view s);

struct LoggedObservation {
  Observation obs;
  int iteration = 0;  // 0: initialization
  Source source = Source::initial;
};

struct ThresholdStep {
  int iteration = 0;
  double delta = 0.5;
  int streak = 0;
};

struct RobustnessRecord {
  std::size_t index = 0;           // observation re-tested
  std::optional<Metrics> metrics;  // worst case; empty when a repeat failed
  std::string error;
};

struct TunerState {
  std::vector<LoggedObservation> observations;
  ThresholdState threshold;
  std::vector<ThresholdStep> trajectory;
  std::vector<RobustnessRecord> robustness;
  int iterations = 0;    // suggestion iterations completed
  int solver_calls = 0;  // solver invocations
};

/// Receives log records as the run progresses.
class RunLog {
 public:
  virtual ~RunLog() = default;
  virtual void write(const nlohmann::json& record) = 0;
};

/// Line-delimited JSON log file; every record is flushed as it is written.
class FileRunLog final : public RunLog {
 public:
  explicit FileRunLog(const std::filesystem::path& path);
  ~FileRunLog() override;
  void write(const nlohmann::json& record) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Collects records in memory.
class MemoryRunLog final : public RunLog {
 public:
  void write(const nlohmann::json& record) override { lines.push_back(record.dump()); }
  std::string text() const;
  std::vector<std::string> lines;
};

struct RunContext {
  const SearchSpace* space = nullptr;
  Evaluator* evaluator = nullptr;
  TunerConfig config;
  nlohmann::json trace_info = nlohmann::json::object();      // recorded in the log header
  nlohmann::json evaluator_info = nlohmann::json::object();  // recorded in the log header
};

/// Runs the tuning loop to the budget. With `resume_from`, continues from that state
/// (its observations are written to the log first).
TunerState tune(const RunContext& ctx, RunLog* log = nullptr, std::optional<TunerState> resume_from = {});

/// Header record describing a run.
nlohmann::json header_record(const RunContext& ctx);

struct ReplayedRun {
  nlohmann::json header;
  SearchSpace space;
  TunerConfig config;
  TunerState state;
  bool finished = false;
};

/// Rebuilds a run from its log text. Throws LogCorrupt (with the 0-based record index)
/// on malformed lines, inconsistent records, or a missing end record.
ReplayedRun replay_log(std::string_view text);
ReplayedRun replay_file(const std::filesystem::path& path);

nlohmann::json config_to_json(const SearchSpace& space, const Configuration& c);
Configuration config_from_json(const SearchSpace& space, const nlohmann::json& j);
nlohmann::json metrics_to_json(const Metrics& m);
Metrics metrics_from_json(const nlohmann::json& j);

struct TuningReport {
  std::string space;
  ObjectiveSpec objective = ObjectiveSpec::throughput();
  Strategy strategy = Strategy::bo;
  std::size_t evaluations = 0;
  std::size_t invalid = 0;
  int iterations = 0;
  int solver_calls = 0;
  std::size_t solver_suggestions = 0;
  std::size_t fallback_suggestions = 0;

  std::optional<std::size_t> best;     // single objective: best valid observation
  std::vector<std::size_t> front;      // two objectives: non-dominated valid observations
  std::optional<std::size_t> max_hv;   // two objectives: largest single-point hypervolume
  std::optional<Point2> reference;
  double front_hypervolume = 0.0;

  double final_delta = 0.5;
  double min_delta = 0.5;
  double max_delta = 0.5;
  std::vector<RobustnessRecord> robustness;
};

/// Throws NoValidObservations when nothing ran successfully.
TuningReport make_report(const SearchSpace& space, const TunerConfig& config, const TunerState& state);

/// Best value of the (single) objective, maximization convention.
double best_objective(const TuningReport& report, const TunerState& state);

enum class ReportFormat { table, csv, json };
ReportFormat parse_report_format(std::string_view s);
void write_report(std::ostream& out, const SearchSpace& space, const TuningReport& report, const TunerState& state,
                  ReportFormat format);

struct ComparisonRow {
  Strategy strategy = Strategy::bo;
  std::optional<double> best;  // single objective, maximization convention
  std::size_t invalid = 0;
  double front_hypervolume = 0.0;  // two objectives, reference = default configuration
  int solver_calls = 0;
};

/// Runs each strategy with the same budget, seeds and evaluator.
std::vector<ComparisonRow> compare_baselines(const RunContext& ctx, const std::vector<Strategy>& strategies);

}  // namespace slotune
