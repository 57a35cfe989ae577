#include "slotune/nsga2.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "slotune/errors.hpp"
#include "slotune/random.hpp"

namespace slotune {

void SolverSettings::validate() const {
  if (population < 8 || population % 2 != 0) throw ValidationError("solver population must be even and >= 8");
  if (generations < 1) throw ValidationError("solver generations must be >= 1");
  if (crossover_rate < 0.0 || crossover_rate > 1.0) throw ValidationError("crossover rate must be in [0,1]");
  if (mutation_rate > 1.0) throw ValidationError("mutation rate must be <= 1");
}

bool constrained_dominates(const Individual& a, const Individual& b) {
  if (a.violations != b.violations) return a.violations < b.violations;
  bool better = false;
  for (Eigen::Index i = 0; i < a.objectives.size(); ++i) {
    if (a.objectives[i] < b.objectives[i]) return false;
    if (a.objectives[i] > b.objectives[i]) better = true;
  }
  return better;
}

namespace {

void assign_crowding(std::vector<Individual>& pop, const std::vector<std::size_t>& front) {
  for (auto i : front) pop[i].crowding = 0.0;
  if (front.empty()) return;
  const Eigen::Index m = pop[front[0]].objectives.size();
  std::vector<std::size_t> order = front;
  for (Eigen::Index k = 0; k < m; ++k) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pop[a].objectives[k] < pop[b].objectives[k]; });
    const double lo = pop[order.front()].objectives[k], hi = pop[order.back()].objectives[k];
    pop[order.front()].crowding = pop[order.back()].crowding = std::numeric_limits<double>::infinity();
    if (!(hi > lo)) continue;
    for (std::size_t j = 1; j + 1 < order.size(); ++j)
      pop[order[j]].crowding += (pop[order[j + 1]].objectives[k] - pop[order[j - 1]].objectives[k]) / (hi - lo);
  }
}

bool better(const Individual& a, const Individual& b) {
  if (a.rank != b.rank) return a.rank < b.rank;
  return a.crowding > b.crowding;
}

// Bounded simulated binary crossover on [0,1].
void sbx(Eigen::VectorXd& c1, Eigen::VectorXd& c2, double eta, Rng& rng) {
  for (Eigen::Index i = 0; i < c1.size(); ++i) {
    if (rng.uniform() > 0.5) continue;
    double y1 = std::min(c1[i], c2[i]), y2 = std::max(c1[i], c2[i]);
    if (y2 - y1 < 1e-14) continue;
    const double u = rng.uniform();
    auto child = [&](double beta_bound) {
      const double alpha = 2.0 - std::pow(beta_bound, -(eta + 1.0));
      const double bq = u <= 1.0 / alpha ? std::pow(u * alpha, 1.0 / (eta + 1.0))
                                         : std::pow(1.0 / (2.0 - u * alpha), 1.0 / (eta + 1.0));
      return bq;
    };
    const double b1 = child(1.0 + 2.0 * y1 / (y2 - y1));
    const double b2 = child(1.0 + 2.0 * (1.0 - y2) / (y2 - y1));
    double n1 = std::clamp(0.5 * ((y1 + y2) - b1 * (y2 - y1)), 0.0, 1.0);
    double n2 = std::clamp(0.5 * ((y1 + y2) + b2 * (y2 - y1)), 0.0, 1.0);
    if (rng.uniform() < 0.5) std::swap(n1, n2);
    c1[i] = n1;
    c2[i] = n2;
  }
}

// Bounded polynomial mutation on [0,1].
void mutate(Eigen::VectorXd& x, double rate, double eta, Rng& rng) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (rng.uniform() >= rate) continue;
    const double y = x[i];
    const double u = rng.uniform();
    const double p = 1.0 / (eta + 1.0);
    double dq;
    if (u < 0.5) {
      const double v = 2.0 * u + (1.0 - 2.0 * u) * std::pow(1.0 - y, eta + 1.0);
      dq = std::pow(v, p) - 1.0;
    } else {
      const double v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(y, eta + 1.0);
      dq = 1.0 - std::pow(v, p);
    }
    x[i] = std::clamp(y + dq, 0.0, 1.0);
  }
}

}  // namespace

std::vector<std::vector<std::size_t>> non_dominated_sort(std::vector<Individual>& pop) {
  const std::size_t n = pop.size();
  std::vector<std::vector<std::size_t>> dominated(n);
  std::vector<int> count(n, 0);
  std::vector<std::vector<std::size_t>> fronts(1);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = p + 1; q < n; ++q) {
      if (constrained_dominates(pop[p], pop[q])) {
        dominated[p].push_back(q);
        ++count[q];
      } else if (constrained_dominates(pop[q], pop[p])) {
        dominated[q].push_back(p);
        ++count[p];
      }
    }
  }
  for (std::size_t p = 0; p < n; ++p)
    if (count[p] == 0) {
      pop[p].rank = 0;
      fronts[0].push_back(p);
    }
  for (std::size_t f = 0; !fronts[f].empty(); ++f) {
    std::vector<std::size_t> next;
    for (auto p : fronts[f])
      for (auto q : dominated[p])
        if (--count[q] == 0) {
          pop[q].rank = static_cast<int>(f + 1);
          next.push_back(q);
        }
    fronts.push_back(std::move(next));
  }
  fronts.pop_back();
  for (const auto& f : fronts) assign_crowding(pop, f);
  return fronts;
}

SolverResult nsga2(const SolverProblem& problem, const SolverSettings& settings, std::uint64_t seed) {
  settings.validate();
  if (problem.dim < 1) throw ValidationError("solver dimension must be >= 1");
  Rng rng(seed);
  const double mut_rate = settings.mutation_rate < 0.0 ? 1.0 / static_cast<double>(problem.dim) : settings.mutation_rate;
  const auto pop_size = static_cast<std::size_t>(settings.population);

  SolverResult result;
  auto make = [&](Eigen::VectorXd x) {
    if (problem.repair) x = problem.repair(x);
    Individual ind;
    const Fitness f = problem.evaluate(x);
    ind.x = std::move(x);
    ind.objectives = f.objectives;
    ind.violations = f.violations;
    result.archive.push_back(ind);
    return ind;
  };

  std::vector<Individual> pop;
  pop.reserve(2 * pop_size);
  for (const auto& s : problem.seeds) {
    if (pop.size() >= pop_size) break;
    pop.push_back(make(s));
  }
  while (pop.size() < pop_size) {
    Eigen::VectorXd x(problem.dim);
    for (Eigen::Index i = 0; i < problem.dim; ++i) x[i] = rng.uniform();
    pop.push_back(make(std::move(x)));
  }
  non_dominated_sort(pop);

  auto tournament = [&]() -> const Individual& {
    const auto& a = pop[rng.below(pop.size())];
    const auto& b = pop[rng.below(pop.size())];
    return better(b, a) ? b : a;
  };

  for (int g = 0; g < settings.generations; ++g) {
    std::vector<Individual> offspring;
    offspring.reserve(pop_size);
    while (offspring.size() < pop_size) {
      Eigen::VectorXd c1 = tournament().x, c2 = tournament().x;
      if (rng.uniform() < settings.crossover_rate) sbx(c1, c2, settings.crossover_eta, rng);
      mutate(c1, mut_rate, settings.mutation_eta, rng);
      mutate(c2, mut_rate, settings.mutation_eta, rng);
      offspring.push_back(make(std::move(c1)));
      offspring.push_back(make(std::move(c2)));
    }
    for (auto& o : offspring) pop.push_back(std::move(o));
    const auto fronts = non_dominated_sort(pop);

    std::vector<Individual> next;
    next.reserve(2 * pop_size);
    for (const auto& f : fronts) {
      if (next.size() + f.size() <= pop_size) {
        for (auto i : f) next.push_back(pop[i]);
        continue;
      }
      std::vector<std::size_t> order = f;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return pop[a].crowding > pop[b].crowding; });
      for (std::size_t j = 0; next.size() < pop_size; ++j) next.push_back(pop[order[j]]);
      break;
    }
    pop = std::move(next);
    non_dominated_sort(pop);
  }
  result.population = std::move(pop);
  return result;
}

}  // namespace slotune
