#include "slotune/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <thread>

#include "slotune/errors.hpp"
#include "slotune/gp.hpp"
#include "slotune/random.hpp"
#include "slotune/suggest.hpp"

namespace slotune {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::bo: return "bo";
    case Strategy::random: return "random";
    case Strategy::penalty_bo: return "penalty_bo";
  }
  return "bo";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "bo") return Strategy::bo;
  if (s == "random") return Strategy::random;
  if (s == "penalty_bo" || s == "penalty-bo") return Strategy::penalty_bo;
  throw ValidationError("unknown strategy '" + std::string(s) + "' (bo, random, penalty_bo)");
}

std::string_view to_string(Source s) {
  switch (s) {
    case Source::default_config: return "default";
    case Source::initial: return "initial";
    case Source::solver: return "solver";
    case Source::fallback: return "fallback";
    case Source::random: return "random";
  }
  return "initial";
}

Source parse_source(std::string_view s) {
  if (s == "default") return Source::default_config;
  if (s == "initial") return Source::initial;
  if (s == "solver") return Source::solver;
  if (s == "fallback") return Source::fallback;
  if (s == "random") return Source::random;
  throw SchemaError("unknown observation source '" + std::string(s) + "'");
}

std::size_t TunerConfig::initial_count(const SearchSpace& space) const {
  return initial > 0 ? initial : std::max<std::size_t>(1, space.dim());
}

void TunerConfig::validate(const SearchSpace& space) const {
  if (parallel < 1) throw ValidationError("parallelism must be >= 1");
  if (budget <= initial_count(space))
    throw ValidationError("budget (" + std::to_string(budget) + ") must exceed the initial design size (" +
                          std::to_string(initial_count(space)) + ")");
  if (gp_restarts < 1) throw ValidationError("GP restarts must be >= 1");
  profile.validate();
  solver.validate();
}

namespace {

struct Training {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;  // one column per objective, maximization convention
};

// Surrogate training set: valid observations, plus penalized failures for penalty_bo.
Training training_set(const SearchSpace& space, const TunerConfig& cfg, const TunerState& st) {
  const int m = cfg.objective.outputs();
  std::vector<std::size_t> valid, invalid;
  for (std::size_t i = 0; i < st.observations.size(); ++i)
    (st.observations[i].obs.valid() ? valid : invalid).push_back(i);
  const bool penalize = cfg.strategy == Strategy::penalty_bo;
  const std::size_t rows = valid.size() + (penalize ? invalid.size() : 0);
  Training t{Eigen::MatrixXd(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(space.dim())),
             Eigen::MatrixXd(static_cast<Eigen::Index>(rows), m)};
  Eigen::Index r = 0;
  for (auto i : valid) {
    t.x.row(r) = space.encode(st.observations[i].obs.config).transpose();
    t.y.row(r) = cfg.objective.values(*st.observations[i].obs.metrics).transpose();
    ++r;
  }
  if (penalize && !invalid.empty()) {
    const auto nv = static_cast<Eigen::Index>(valid.size());
    Eigen::RowVectorXd penalty(m);
    for (int c = 0; c < m; ++c) {
      const auto col = t.y.col(c).head(nv);
      const double mean = col.mean();
      const double sd = std::sqrt((col.array() - mean).square().mean());
      penalty[c] = col.minCoeff() - (sd > 0.0 ? sd : 1.0);
    }
    for (auto i : invalid) {
      t.x.row(r) = space.encode(st.observations[i].obs.config).transpose();
      t.y.row(r) = penalty;
      ++r;
    }
  }
  return t;
}

std::vector<Observation> evaluate_batch(Evaluator& ev, const std::vector<Configuration>& batch,
                                        const StressProfile& profile) {
  std::vector<Observation> out(batch.size());
  if (batch.size() > 1 && ev.concurrent()) {
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
      threads.emplace_back([&, i] {
        try {
          out[i] = ev.evaluate(batch[i], profile);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    for (auto& t : threads) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t i = 0; i < batch.size(); ++i) out[i] = ev.evaluate(batch[i], profile);
  }
  return out;
}

nlohmann::json observation_record(const SearchSpace& space, const LoggedObservation& lo, std::size_t index) {
  nlohmann::json j;
  j["type"] = "obs";
  j["index"] = index;
  j["iteration"] = lo.iteration;
  j["source"] = to_string(lo.source);
  j["config"] = config_to_json(space, lo.obs.config);
  j["valid"] = lo.obs.valid();
  if (lo.obs.valid())
    j["metrics"] = metrics_to_json(*lo.obs.metrics);
  else
    j["reason"] = to_string(lo.obs.reason);
  j["wall_time"] = lo.obs.wall_time;
  j["seed"] = lo.obs.seed;
  return j;
}

nlohmann::json threshold_record(const ThresholdStep& s) {
  return {{"type", "threshold"}, {"iteration", s.iteration}, {"delta", s.delta}, {"streak", s.streak}};
}

nlohmann::json robustness_record(const SearchSpace& space, const TunerState& st, const RobustnessRecord& r) {
  nlohmann::json j;
  j["type"] = "robustness";
  j["index"] = r.index;
  j["config"] = config_to_json(space, st.observations.at(r.index).obs.config);
  if (r.metrics)
    j["metrics"] = metrics_to_json(*r.metrics);
  else
    j["error"] = r.error;
  return j;
}

std::vector<Configuration> evaluated_configs(const TunerState& st) {
  std::vector<Configuration> out;
  out.reserve(st.observations.size());
  for (const auto& o : st.observations) out.push_back(o.obs.config);
  return out;
}

// Good configurations to seed the solver population.
std::vector<Configuration> anchors(const SearchSpace& space, const TunerConfig& cfg, const TunerState& st) {
  (void)space;
  std::vector<std::pair<double, std::size_t>> scored;
  if (cfg.objective.multi()) {
    Eigen::MatrixXd y(0, 2);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < st.observations.size(); ++i)
      if (st.observations[i].obs.valid()) {
        y.conservativeResize(y.rows() + 1, 2);
        y.row(y.rows() - 1) = cfg.objective.values(*st.observations[i].obs.metrics).transpose();
        idx.push_back(i);
      }
    std::vector<Configuration> out;
    for (auto r : pareto_indices(y)) out.push_back(st.observations[idx[static_cast<std::size_t>(r)]].obs.config);
    if (out.size() > 16) out.resize(16);
    return out;
  }
  for (std::size_t i = 0; i < st.observations.size(); ++i)
    if (st.observations[i].obs.valid())
      scored.push_back({cfg.objective.values(*st.observations[i].obs.metrics)[0], i});
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Configuration> out;
  for (std::size_t i = 0; i < scored.size() && i < 8; ++i) out.push_back(st.observations[scored[i].second].obs.config);
  return out;
}

class Runner {
 public:
  Runner(const RunContext& ctx, RunLog* log) : ctx_(ctx), space_(*ctx.space), cfg_(ctx.config), log_(log) {
    profile_ = cfg_.profile;
    profile_.seed = derive_seed(cfg_.seed, "stress");
  }

  TunerState run(std::optional<TunerState> resume) {
    cfg_.validate(space_);
    if (cfg_.parallel > 4) std::cerr << "warning: parallelism above 4 tends to degrade suggestion quality\n";
    emit(header_record(ctx_));
    if (resume) {
      st_ = std::move(*resume);
      st_.robustness.clear();
      replay_records();
    } else {
      initialize();
    }
    if (cfg_.strategy != Strategy::random) require_valid();
    while (st_.observations.size() < cfg_.budget) iterate();
    finish();
    return std::move(st_);
  }

 private:
  void emit(const nlohmann::json& j) {
    if (log_) log_->write(j);
  }

  void append(Observation o, int iteration, Source source) {
    st_.observations.push_back({std::move(o), iteration, source});
    emit(observation_record(space_, st_.observations.back(), st_.observations.size() - 1));
  }

  void replay_records() {
    std::size_t step = 0;
    for (std::size_t i = 0; i < st_.observations.size(); ++i) {
      emit(observation_record(space_, st_.observations[i], i));
      const bool last_of_iteration = i + 1 == st_.observations.size() ||
                                     st_.observations[i + 1].iteration != st_.observations[i].iteration;
      if (last_of_iteration && step < st_.trajectory.size() &&
          st_.trajectory[step].iteration == st_.observations[i].iteration)
        emit(threshold_record(st_.trajectory[step++]));
    }
  }

  void initialize() {
    const std::size_t n = cfg_.strategy == Strategy::random ? cfg_.budget : cfg_.initial_count(space_);
    std::vector<Configuration> batch{space_.default_config()};
    if (!space_.check_known(batch.front()))
      throw ValidationError("the default configuration violates a known constraint");
    if (n > 1) {
      auto rest = sobol_sample(space_, n - 1, derive_seed(cfg_.seed, "initial"), batch);
      batch.insert(batch.end(), rest.begin(), rest.end());
    }
    const auto results = evaluate_batch(*ctx_.evaluator, batch, profile_);
    for (std::size_t i = 0; i < results.size(); ++i) {
      const Source s = i == 0 ? Source::default_config
                              : (cfg_.strategy == Strategy::random ? Source::random : Source::initial);
      append(results[i], 0, s);
    }
  }

  void require_valid() const {
    for (const auto& o : st_.observations)
      if (o.obs.valid()) return;
    throw NoValidObservations("every initial evaluation was invalid");
  }

  void iterate() {
    const int t = st_.iterations + 1;
    const std::size_t k = std::min(cfg_.parallel, cfg_.budget - st_.observations.size());
    const Training data = training_set(space_, cfg_, st_);

    std::optional<FeasibilityModel> forest;
    if (cfg_.strategy == Strategy::bo) {
      Eigen::MatrixXd x(static_cast<Eigen::Index>(st_.observations.size()), static_cast<Eigen::Index>(space_.dim()));
      std::vector<bool> labels;
      for (std::size_t i = 0; i < st_.observations.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = space_.encode(st_.observations[i].obs.config).transpose();
        labels.push_back(st_.observations[i].obs.valid());
      }
      forest = FeasibilityModel::train(x, labels, cfg_.forest, derive_seed(cfg_.seed, "forest", t));
    }

    const auto evaluated = evaluated_configs(st_);
    const auto anchor = anchors(space_, cfg_, st_);
    SuggestRequest req;
    req.space = &space_;
    req.k = k;
    req.iteration = t;
    req.seed = derive_seed(cfg_.seed, "suggest", t);
    req.feasibility = forest ? &*forest : nullptr;
    req.threshold = st_.threshold.delta;
    req.evaluated = evaluated;
    req.anchors = anchor;
    req.literal_beta = cfg_.literal_beta;

    FitOptions fit;
    fit.restarts = cfg_.gp_restarts;
    fit.seed = derive_seed(cfg_.seed, "gp", t);
    std::vector<Suggestion> picks;
    if (cfg_.objective.multi()) {
      const auto gp = MultiOutputGP::fit(data.x, data.y, fit);
      ParetoFront front;
      front.reference = reference_point(st_.observations.front().obs, cfg_.objective);
      std::vector<Point2> pts;
      for (const auto& o : st_.observations)
        if (o.obs.valid()) pts.push_back(cfg_.objective.values(*o.obs.metrics));
      front.points = pareto_filter(pts);
      picks = suggest_mobo(req, gp, front, cfg_.solver);
    } else {
      const auto gp = GaussianProcess::fit(data.x, data.y.col(0), fit);
      picks = suggest_sobo(req, gp, data.y.col(0).head(valid_count()).maxCoeff(), cfg_.solver);
    }
    ++st_.solver_calls;

    std::vector<Configuration> batch;
    for (const auto& p : picks) batch.push_back(p.config);
    const auto results = evaluate_batch(*ctx_.evaluator, batch, profile_);
    std::vector<bool> outcome;
    for (std::size_t i = 0; i < results.size(); ++i) {
      outcome.push_back(results[i].valid());
      append(results[i], t, picks[i].from_solver ? Source::solver : Source::fallback);
    }
    if (cfg_.strategy == Strategy::bo) {
      st_.threshold.update(outcome);
      st_.trajectory.push_back({t, st_.threshold.delta, st_.threshold.streak});
      emit(threshold_record(st_.trajectory.back()));
    }
    st_.iterations = t;
  }

  Eigen::Index valid_count() const {
    Eigen::Index n = 0;
    for (const auto& o : st_.observations) n += o.obs.valid() ? 1 : 0;
    return n;
  }

  void finish() {
    if (cfg_.robustness) {
      const TuningReport rep = make_report(space_, cfg_, st_);
      std::vector<std::size_t> targets;
      if (rep.best) targets.push_back(*rep.best);
      if (rep.max_hv) targets.push_back(*rep.max_hv);
      for (auto idx : targets) {
        RobustnessRecord r;
        r.index = idx;
        StressProfile p = profile_;
        p.seed = derive_seed(cfg_.seed, "robustness-pass");
        try {
          r.metrics = robustness_pass(*ctx_.evaluator, st_.observations[idx].obs.config, p, cfg_.profile.repeats);
        } catch (const RobustnessFailed& e) {
          r.error = e.what();
        }
        st_.robustness.push_back(r);
        emit(robustness_record(space_, st_, r));
      }
    }
    emit({{"type", "end"}, {"observations", st_.observations.size()}, {"iterations", st_.iterations}});
  }

  const RunContext& ctx_;
  const SearchSpace& space_;
  TunerConfig cfg_;
  RunLog* log_;
  StressProfile profile_;
  TunerState st_;
};

}  // namespace

TunerState tune(const RunContext& ctx, RunLog* log, std::optional<TunerState> resume_from) {
  if (!ctx.space || !ctx.evaluator) throw ValidationError("run context needs a space and an evaluator");
  return Runner(ctx, log).run(std::move(resume_from));
}

std::vector<ComparisonRow> compare_baselines(const RunContext& ctx, const std::vector<Strategy>& strategies) {
  std::vector<ComparisonRow> rows;
  for (auto s : strategies) {
    RunContext c = ctx;
    c.config.strategy = s;
    const TunerState st = tune(c);
    ComparisonRow row;
    row.strategy = s;
    row.solver_calls = st.solver_calls;
    for (const auto& o : st.observations) row.invalid += o.obs.valid() ? 0 : 1;
    const TuningReport rep = make_report(*ctx.space, c.config, st);
    if (c.config.objective.multi())
      row.front_hypervolume = rep.front_hypervolume;
    else
      row.best = best_objective(rep, st);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace slotune
