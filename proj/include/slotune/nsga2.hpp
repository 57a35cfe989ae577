#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <vector>

namespace slotune {

struct SolverSettings {
  int population = 64;
  int generations = 40;
  double crossover_rate = 0.9;
  double mutation_rate = -1.0;  // negative: 1 / dimension
  double crossover_eta = 15.0;
  double mutation_eta = 20.0;

  /// Throws ValidationError unless population is even and >= 8 and generations >= 1.
  void validate() const;
};

struct Individual {
  Eigen::VectorXd x;           // point in the unit hypercube
  Eigen::VectorXd objectives;  // maximized
  int violations = 0;
  int rank = 0;
  double crowding = 0.0;
};

/// Objective vector and constraint-violation count for a candidate.
struct Fitness {
  Eigen::VectorXd objectives;
  int violations = 0;
};

struct SolverProblem {
  Eigen::Index dim = 0;
  std::function<Fitness(const Eigen::VectorXd&)> evaluate;
  /// Maps a perturbed point back onto a representable one (identity when empty).
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> repair;
  /// Optional starting points; the rest of the population is uniform random.
  std::vector<Eigen::VectorXd> seeds;
};

struct SolverResult {
  std::vector<Individual> population;  // final population, ranked
  std::vector<Individual> archive;     // every individual evaluated, in order
};

/// Constrained-domination: fewer violations wins; equal violations compare by Pareto dominance.
bool constrained_dominates(const Individual& a, const Individual& b);

/// Assigns rank (0 = first front) and crowding distance; returns the fronts as index lists.
std::vector<std::vector<std::size_t>> non_dominated_sort(std::vector<Individual>& pop);

/// Elitist non-dominated-sorting genetic algorithm over [0,1]^dim with simulated
/// binary crossover and polynomial mutation.
SolverResult nsga2(const SolverProblem& problem, const SolverSettings& settings, std::uint64_t seed);

}  // namespace slotune
