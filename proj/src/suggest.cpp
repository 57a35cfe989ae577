#include "slotune/suggest.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "slotune/errors.hpp"
#include "slotune/random.hpp"
#include "slotune/sobol.hpp"

namespace slotune {

namespace {

using ConfigSet = std::unordered_set<Configuration, ConfigurationHash>;

// Caches fitness per lattice point; the solver revisits the same snapped points often.
class CachedProblem {
 public:
  CachedProblem(const SuggestRequest& req, std::function<Eigen::VectorXd(const Eigen::VectorXd&)> score)
      : req_(req), score_(std::move(score)) {}

  SolverProblem problem() {
    SolverProblem p;
    p.dim = static_cast<Eigen::Index>(req_.space->dim());
    p.repair = [this](const Eigen::VectorXd& u) { return req_.space->snap(u); };
    p.evaluate = [this](const Eigen::VectorXd& u) { return fitness(u); };
    for (const auto& a : req_.anchors) p.seeds.push_back(req_.space->encode(a));
    return p;
  }

 private:
  Fitness fitness(const Eigen::VectorXd& u) {
    Configuration c = req_.space->decode(u);
    if (auto it = cache_.find(c); it != cache_.end()) return it->second;
    Fitness f;
    f.violations = static_cast<int>(req_.space->count_violations(c));
    if (req_.feasibility && req_.feasibility->pof(u) < req_.threshold) ++f.violations;
    f.objectives = score_(u);
    cache_.emplace(std::move(c), f);
    return f;
  }

  const SuggestRequest& req_;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> score_;
  std::unordered_map<Configuration, Fitness, ConfigurationHash> cache_;
};

void check_request(const SuggestRequest& req) {
  if (!req.space) throw ValidationError("suggestion request has no search space");
  if (req.k < 1) throw ValidationError("parallelism degree must be >= 1");
}

void top_up(const SuggestRequest& req, std::vector<Suggestion>& out, ConfigSet& taken) {
  if (out.size() >= req.k) return;
  std::vector<Configuration> exclude(taken.begin(), taken.end());
  // Unordered-set iteration order is not part of the contract; sort for determinism.
  std::sort(exclude.begin(), exclude.end(), [&](const Configuration& a, const Configuration& b) {
    return ConfigurationHash{}(a) < ConfigurationHash{}(b);
  });
  auto extra = fallback_fill(*req.space, req.k - out.size(), derive_seed(req.seed, "fallback"), req.feasibility,
                             req.threshold, exclude);
  for (auto& c : extra) {
    taken.insert(c);
    out.push_back({std::move(c), false});
  }
}

}  // namespace

std::vector<Suggestion> suggest_sobo(const SuggestRequest& req, const GaussianProcess& gp, double incumbent,
                                     const SolverSettings& settings) {
  check_request(req);
  // Acquisitions work on the standardized target scale.
  const double mu0 = gp.target_mean(), scale = gp.target_scale();
  AcquisitionContext ctx = AcquisitionContext::at(req.iteration, (incumbent - mu0) / scale, req.literal_beta);
  CachedProblem cp(req, [&](const Eigen::VectorXd& u) {
    const Prediction p = gp.predict(u);
    const double m = (p.mean - mu0) / scale;
    const double s = std::sqrt(p.variance) / scale;
    return Eigen::Vector3d(ucb(m, s, ctx), pi(m, s, ctx), ei(m, s, ctx)).eval();
  });
  const SolverResult res = nsga2(cp.problem(), settings, derive_seed(req.seed, "solver"));

  ConfigSet taken(req.evaluated.begin(), req.evaluated.end());
  std::vector<Configuration> pool;
  for (const auto& ind : res.population) {
    if (ind.rank != 0 || ind.violations != 0) continue;
    Configuration c = req.space->decode(ind.x);
    if (taken.count(c) || std::find(pool.begin(), pool.end(), c) != pool.end()) continue;
    pool.push_back(std::move(c));
  }
  Rng rng(derive_seed(req.seed, "pick"));
  rng.shuffle(pool.begin(), pool.end());
  std::vector<Suggestion> out;
  for (auto& c : pool) {
    if (out.size() == req.k) break;
    taken.insert(c);
    out.push_back({std::move(c), true});
  }
  top_up(req, out, taken);
  return out;
}

std::vector<Suggestion> suggest_mobo(const SuggestRequest& req, const MultiOutputGP& gp, const ParetoFront& front,
                                     const SolverSettings& settings) {
  check_request(req);
  if (gp.outputs() != 2) throw DimensionError("EHVI suggestion needs a two-output surrogate");
  // Standardize each output; the front and reference follow the same affine map.
  Point2 mu0, scale;
  for (int i = 0; i < 2; ++i) {
    mu0[i] = gp.output(i).target_mean();
    scale[i] = gp.output(i).target_scale();
  }
  ParetoFront sf;
  sf.reference = (front.reference - mu0).cwiseQuotient(scale);
  for (const auto& p : front.points) sf.points.push_back((p - mu0).cwiseQuotient(scale));

  CachedProblem cp(req, [&](const Eigen::VectorXd& u) {
    const auto pr = gp.predict(u);
    Point2 m, s;
    for (int i = 0; i < 2; ++i) {
      m[i] = (pr[i].mean - mu0[i]) / scale[i];
      s[i] = std::sqrt(pr[i].variance) / scale[i];
    }
    Eigen::VectorXd v(1);
    v[0] = ehvi(m, s, sf);
    return v;
  });
  const SolverResult res = nsga2(cp.problem(), settings, derive_seed(req.seed, "solver"));

  std::vector<const Individual*> ranked;
  for (const auto& ind : res.archive)
    if (ind.violations == 0 && ind.objectives[0] > 0.0) ranked.push_back(&ind);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Individual* a, const Individual* b) { return a->objectives[0] > b->objectives[0]; });

  ConfigSet taken(req.evaluated.begin(), req.evaluated.end());
  std::vector<Suggestion> out;
  for (const auto* ind : ranked) {
    if (out.size() == req.k) break;
    Configuration c = req.space->decode(ind->x);
    if (taken.count(c)) continue;
    taken.insert(c);
    out.push_back({std::move(c), true});
  }
  top_up(req, out, taken);
  return out;
}

std::vector<Configuration> fallback_fill(const SearchSpace& space, std::size_t count, std::uint64_t seed,
                                         const FeasibilityModel* feasibility, double threshold,
                                         std::span<const Configuration> exclude) {
  if (count < 1) throw ValidationError("fallback count must be >= 1");
  ConfigSet seen(exclude.begin(), exclude.end());
  std::vector<Configuration> preferred, relaxed;
  SobolSequence seq(space.dim(), seed == 0 ? 1 : seed);
  const std::size_t cap = 1000 * count;
  for (std::size_t draw = 0; draw < cap && preferred.size() < count; ++draw) {
    Configuration c = space.decode(seq.next());
    if (seen.count(c) || !space.check_known(c)) continue;
    seen.insert(c);
    if (!feasibility || feasibility->pof(space.encode(c)) >= threshold)
      preferred.push_back(std::move(c));
    else
      relaxed.push_back(std::move(c));
  }
  for (std::size_t i = 0; preferred.size() < count && i < relaxed.size(); ++i) preferred.push_back(relaxed[i]);
  if (preferred.size() < count)
    throw SamplingExhausted("could not find " + std::to_string(count) +
                            " new configurations satisfying the known constraints");
  return preferred;
}

Point2 reference_point(const Observation& default_run, const ObjectiveSpec& objective) {
  if (!objective.multi()) throw DimensionError("reference point needs a two-objective spec");
  if (!default_run.valid()) throw MissingReference("the default configuration did not run successfully");
  return objective.values(*default_run.metrics);
}

}  // namespace slotune
