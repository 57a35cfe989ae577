#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "slotune/acquisition.hpp"
#include "slotune/forest.hpp"
#include "slotune/gp.hpp"
#include "slotune/nsga2.hpp"
#include "slotune/observation.hpp"
#include "slotune/space.hpp"

namespace slotune {

/// Shared inputs for one suggestion round.
struct SuggestRequest {
  const SearchSpace* space = nullptr;
  std::size_t k = 1;
  int iteration = 1;
  std::uint64_t seed = 0;
  const FeasibilityModel* feasibility = nullptr;  // null disables the POF filter
  double threshold = 0.5;
  std::span<const Configuration> evaluated;  // never suggested again
  std::span<const Configuration> anchors;    // good configurations used to seed the solver
  bool literal_beta = false;
};

struct Suggestion {
  Configuration config;
  bool from_solver = true;  // false: filled from the Sobol fallback
};

/// k configurations drawn uniformly from the non-dominated set of (UCB, PI, EI).
/// `incumbent` is the best observed value on the GP's target scale.
std::vector<Suggestion> suggest_sobo(const SuggestRequest& req, const GaussianProcess& gp, double incumbent,
                                     const SolverSettings& settings = {});

/// Top-k distinct configurations by expected hypervolume improvement over `front`.
std::vector<Suggestion> suggest_mobo(const SuggestRequest& req, const MultiOutputGP& gp, const ParetoFront& front,
                                     const SolverSettings& settings = {});

/// Sobol configurations satisfying the known constraints. POF >= threshold is
/// preferred but dropped when it alone blocks reaching `count`.
std::vector<Configuration> fallback_fill(const SearchSpace& space, std::size_t count, std::uint64_t seed,
                                         const FeasibilityModel* feasibility, double threshold,
                                         std::span<const Configuration> exclude = {});

/// Objectives of the default configuration's run, used as the hypervolume reference.
/// Throws MissingReference if that run was invalid.
Point2 reference_point(const Observation& default_run, const ObjectiveSpec& objective);

}  // namespace slotune
