// slotune: tune LLM inference engine parameters against service-level objectives.

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>

#include "slotune/errors.hpp"
#include "slotune/http_client.hpp"
#include "slotune/mock_engine.hpp"
#include "slotune/trace.hpp"
#include "slotune/tuner.hpp"

using namespace slotune;
namespace fs = std::filesystem;

namespace {

struct EvaluatorArgs {
  std::string kind = "mock";
  std::string endpoint = "http://127.0.0.1:8000";
  std::string launch_template;
  std::string health = "/health";
  std::string completion = "/v1/completions";
  std::string model = "default";
  double readiness = 120.0;
  bool crash_free = false;

  void add(CLI::App* app) {
    app->add_option("--evaluator", kind, "mock or http")->check(CLI::IsMember({"mock", "http"}));
    app->add_option("--endpoint", endpoint, "engine base URL (http evaluator)");
    app->add_option("--launch-template", launch_template, "file with the engine launch command template");
    app->add_option("--health", health, "health route polled before each stress test");
    app->add_option("--completion-path", completion, "streaming completion route");
    app->add_option("--model", model, "model name sent with each request");
    app->add_option("--readiness-timeout", readiness, "seconds to wait for the engine to become ready");
    app->add_flag("--crash-free", crash_free, "mock engine without hidden failure regions");
  }

  nlohmann::json info() const {
    nlohmann::json j{{"kind", kind}};
    if (kind == "mock") j["hidden_failures"] = !crash_free;
    if (kind == "http") {
      j["endpoint"] = endpoint;
      j["health"] = health;
      j["completion_path"] = completion;
      j["model"] = model;
      j["readiness_timeout"] = readiness;
      j["launch_template"] = launch_template;
    }
    return j;
  }

  void load(const nlohmann::json& j) {
    kind = j.value("kind", kind);
    crash_free = !j.value("hidden_failures", true);
    endpoint = j.value("endpoint", endpoint);
    health = j.value("health", health);
    completion = j.value("completion_path", completion);
    model = j.value("model", model);
    readiness = j.value("readiness_timeout", readiness);
  }

  std::unique_ptr<Evaluator> make(const SearchSpace& space, RequestTrace trace, std::string* template_text) const {
    if (kind == "mock") {
      MockOptions o;
      o.hidden_failures = !crash_free;
      return std::make_unique<MockEngine>(space, std::move(trace), o);
    }
    HttpOptions o;
    o.endpoint = endpoint;
    o.health_path = health;
    o.completion_path = completion;
    o.model = model;
    o.readiness_timeout = readiness;
    if (!launch_template.empty()) {
      std::ifstream in(launch_template);
      if (!in) throw Error("cannot read launch template " + launch_template);
      std::getline(in, o.launch_template, '\0');
      while (!o.launch_template.empty() && (o.launch_template.back() == '\n' || o.launch_template.back() == '\r'))
        o.launch_template.pop_back();
      if (template_text) *template_text = o.launch_template;
    }
    return std::make_unique<HttpEvaluator>(space, std::move(trace), o);
  }
};

struct TraceArgs {
  std::string path;
  bool longest_half = false;

  void add(CLI::App* app, bool required) {
    auto* o = app->add_option("--trace", path, "request trace (JSON lines)");
    if (required) o->required();
    app->add_flag("--longest-output-half", longest_half, "keep only the half of requests with the longest outputs");
  }

  RequestTrace load() const { return load_trace(path, longest_half); }

  nlohmann::json info(const RequestTrace& t) const {
    return {{"path", path}, {"records", t.size()}, {"digest", t.digest()}, {"longest_output_half", longest_half}};
  }
};

void print_report(const SearchSpace& space, const TunerConfig& cfg, const TunerState& st, ReportFormat f,
                  const fs::path* file) {
  const TuningReport rep = make_report(space, cfg, st);
  write_report(std::cout, space, rep, st, f);
  if (file) {
    std::ofstream out(*file);
    write_report(out, space, rep, st, ReportFormat::table);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained Bayesian-optimization tuner for LLM inference engines"};
  app.require_subcommand(1);

  // tune
  auto* tune_cmd = app.add_subcommand("tune", "run a tuning session");
  std::string space_path, objective = "throughput", out_dir = "run", strategy = "bo";
  TunerConfig cfg;
  TraceArgs trace_args;
  EvaluatorArgs ev_args;
  bool no_robustness = false;
  tune_cmd->add_option("--space", space_path, "search-space definition (JSON)")->required();
  trace_args.add(tune_cmd, true);
  tune_cmd->add_option("--objective", objective, "throughput, p95 or ttft-tpot");
  tune_cmd->add_option("--budget", cfg.budget, "total evaluations");
  tune_cmd->add_option("--parallel", cfg.parallel, "configurations evaluated per iteration");
  tune_cmd->add_option("--initial", cfg.initial, "initial design size including the default (0: dimensionality)");
  tune_cmd->add_option("--strategy", strategy, "bo, random or penalty_bo");
  tune_cmd->add_option("--seed", cfg.seed, "master seed");
  tune_cmd->add_option("--out", out_dir, "output directory");
  tune_cmd->add_option("--rate", cfg.profile.request_rate, "request rate (req/s)");
  tune_cmd->add_option("--duration", cfg.profile.duration, "stress-test duration (s)");
  tune_cmd->add_option("--repeats", cfg.profile.repeats, "robustness repeats");
  tune_cmd->add_option("--percentile", cfg.profile.percentile, "tail-latency percentile");
  tune_cmd->add_flag("--literal-beta", cfg.literal_beta, "use the exploration weight without the square root");
  tune_cmd->add_flag("--no-robustness", no_robustness, "skip the final robustness re-tests");
  ev_args.add(tune_cmd);

  // replay / resume
  auto* replay_cmd = app.add_subcommand("replay", "rebuild a run from its log and print its state");
  std::string log_path;
  replay_cmd->add_option("--log", log_path, "run log")->required();

  auto* resume_cmd = app.add_subcommand("resume", "continue a logged run to a larger budget");
  std::size_t new_budget = 0;
  resume_cmd->add_option("--log", log_path, "run log")->required();
  resume_cmd->add_option("--budget", new_budget, "new total budget")->required();
  resume_cmd->add_option("--out", out_dir, "output directory");
  TraceArgs resume_trace;
  resume_trace.add(resume_cmd, true);
  std::string resume_template;
  resume_cmd->add_option("--launch-template", resume_template, "launch template (http evaluator)");

  // report
  auto* report_cmd = app.add_subcommand("report", "print the report of a logged run");
  std::string format = "table";
  report_cmd->add_option("--log", log_path, "run log")->required();
  report_cmd->add_option("--format", format, "table, csv or json");

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "run several strategies with shared seeds and budget");
  std::vector<std::string> strategies{"bo", "random", "penalty_bo"};
  std::vector<std::uint64_t> seeds{0};
  compare_cmd->add_option("--space", space_path, "search-space definition (JSON)")->required();
  TraceArgs compare_trace;
  compare_trace.add(compare_cmd, true);
  compare_cmd->add_option("--strategies", strategies, "strategies to run");
  compare_cmd->add_option("--objective", objective, "throughput, p95 or ttft-tpot");
  compare_cmd->add_option("--budget", cfg.budget, "total evaluations");
  compare_cmd->add_option("--parallel", cfg.parallel, "configurations evaluated per iteration");
  compare_cmd->add_option("--seeds", seeds, "seeds to run");
  compare_cmd->add_option("--rate", cfg.profile.request_rate, "request rate (req/s)");
  compare_cmd->add_option("--duration", cfg.profile.duration, "stress-test duration (s)");
  EvaluatorArgs compare_ev;
  compare_ev.add(compare_cmd);

  // validate-slo
  auto* slo_cmd = app.add_subcommand("validate-slo", "re-test the reported configuration(s) of a logged run");
  int repeats = 3;
  slo_cmd->add_option("--log", log_path, "run log")->required();
  slo_cmd->add_option("--repeats", repeats, "stress-test repeats");
  TraceArgs slo_trace;
  slo_trace.add(slo_cmd, true);
  std::string slo_template;
  slo_cmd->add_option("--launch-template", slo_template, "launch template (http evaluator)");

  // synth-trace
  auto* synth_cmd = app.add_subcommand("synth-trace", "write a synthetic request trace");
  std::string kind = "bot", synth_out;
  std::size_t count = 1000;
  std::uint64_t synth_seed = 0;
  synth_cmd->add_option("--kind", kind, "bot, sql, cls or rec");
  synth_cmd->add_option("--count", count, "number of records");
  synth_cmd->add_option("--seed", synth_seed, "seed");
  synth_cmd->add_option("--out", synth_out, "output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*tune_cmd) {
      const SearchSpace space = load_space(space_path);
      const RequestTrace trace = trace_args.load();
      cfg.objective = ObjectiveSpec::parse(objective);
      cfg.strategy = parse_strategy(strategy);
      cfg.robustness = !no_robustness;
      cfg.evaluator = ev_args.kind;
      auto evaluator = ev_args.make(space, trace, nullptr);
      RunContext ctx{&space, evaluator.get(), cfg, trace_args.info(trace), ev_args.info()};
      fs::create_directories(out_dir);
      FileRunLog log(fs::path(out_dir) / "run.jsonl");
      const TunerState st = tune(ctx, &log);
      const fs::path report_file = fs::path(out_dir) / "report.txt";
      print_report(space, cfg, st, ReportFormat::table, &report_file);
      return 0;
    }
    if (*replay_cmd) {
      const ReplayedRun run = replay_file(log_path);
      std::cout << "observations " << run.state.observations.size() << ", iterations " << run.state.iterations
                << ", threshold " << run.state.threshold.delta << " (streak " << run.state.threshold.streak
                << ")\n";
      print_report(run.space, run.config, run.state, ReportFormat::table, nullptr);
      return 0;
    }
    if (*resume_cmd) {
      ReplayedRun run = replay_file(log_path);
      if (new_budget < run.state.observations.size())
        throw ValidationError("new budget is smaller than the logged observation count");
      run.config.budget = new_budget;
      EvaluatorArgs ev;
      ev.load(run.header.value("evaluator_options", nlohmann::json::object()));
      ev.launch_template = resume_template;
      resume_trace.longest_half =
          resume_trace.longest_half || run.header["trace"].value("longest_output_half", false);
      const RequestTrace trace = resume_trace.load();
      if (run.header["trace"].contains("digest") && run.header["trace"]["digest"].get<std::uint64_t>() != trace.digest())
        throw ValidationError("trace differs from the one recorded in the log");
      auto evaluator = ev.make(run.space, trace, nullptr);
      RunContext ctx{&run.space, evaluator.get(), run.config, run.header["trace"], ev.info()};
      fs::create_directories(out_dir);
      FileRunLog log(fs::path(out_dir) / "run.jsonl");
      const TunerState st = tune(ctx, &log, run.state);
      const fs::path report_file = fs::path(out_dir) / "report.txt";
      print_report(run.space, run.config, st, ReportFormat::table, &report_file);
      return 0;
    }
    if (*report_cmd) {
      const ReplayedRun run = replay_file(log_path);
      print_report(run.space, run.config, run.state, parse_report_format(format), nullptr);
      return 0;
    }
    if (*compare_cmd) {
      const SearchSpace space = load_space(space_path);
      const RequestTrace trace = compare_trace.load();
      cfg.objective = ObjectiveSpec::parse(objective);
      cfg.robustness = false;
      std::vector<Strategy> list;
      for (const auto& s : strategies) list.push_back(parse_strategy(s));
      auto evaluator = compare_ev.make(space, trace, nullptr);
      std::cout << std::left << std::setw(8) << "seed" << std::setw(12) << "strategy" << std::right << std::setw(14)
                << (cfg.objective.multi() ? "hypervolume" : "best") << std::setw(10) << "invalid" << std::setw(10)
                << "solver" << "\n";
      for (auto seed : seeds) {
        cfg.seed = seed;
        RunContext ctx{&space, evaluator.get(), cfg, compare_trace.info(trace), compare_ev.info()};
        for (const auto& row : compare_baselines(ctx, list)) {
          const double shown = cfg.objective.multi() ? row.front_hypervolume
                                                     : cfg.objective.raw(row.best.value_or(0.0), 0);
          std::cout << std::left << std::setw(8) << seed << std::setw(12) << to_string(row.strategy) << std::right
                    << std::setw(14) << std::setprecision(6) << shown << std::setw(10) << row.invalid << std::setw(10)
                    << row.solver_calls << "\n";
        }
      }
      return 0;
    }
    if (*slo_cmd) {
      const ReplayedRun run = replay_file(log_path);
      EvaluatorArgs ev;
      ev.load(run.header.value("evaluator_options", nlohmann::json::object()));
      ev.launch_template = slo_template;
      slo_trace.longest_half = slo_trace.longest_half || run.header["trace"].value("longest_output_half", false);
      auto evaluator = ev.make(run.space, slo_trace.load(), nullptr);
      const TuningReport rep = make_report(run.space, run.config, run.state);
      std::vector<std::size_t> targets;
      if (rep.best) targets.push_back(*rep.best);
      if (rep.max_hv) targets.push_back(*rep.max_hv);
      int status = 0;
      for (auto idx : targets) {
        StressProfile p = run.config.profile;
        p.seed = run.config.seed;
        try {
          const Metrics m = robustness_pass(*evaluator, run.state.observations[idx].obs.config, p, repeats);
          std::cout << "#" << idx << " worst case over " << repeats << " runs: throughput " << m.throughput
                    << " req/s, tail latency " << m.tail_latency << " s, ttft " << m.ttft << " s, tpot " << m.tpot
                    << " s\n";
        } catch (const RobustnessFailed& e) {
          std::cout << "#" << idx << " failed: " << e.what() << "\n";
          status = 3;
        }
      }
      return status;
    }
    if (*synth_cmd) {
      const RequestTrace t = synthetic_trace(kind, count, synth_seed);
      std::ofstream out(synth_out);
      if (!out) throw Error("cannot write " + synth_out);
      out << trace_document(t);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
