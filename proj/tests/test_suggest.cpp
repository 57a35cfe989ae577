#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "slotune/errors.hpp"
#include "slotune/random.hpp"
#include "slotune/space.hpp"
#include "slotune/suggest.hpp"

using namespace slotune;

namespace {

SearchSpace unit_float() {
  return parse_space(R"({"name": "u", "params": [{"name": "x", "kind": "float", "range": [0, 1], "default": 0.5}]})");
}

double coord(const Configuration& c) { return std::get<double>(c.values[0]); }

FeasibilityModel never_feasible(Eigen::Index dim) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(4, dim, 0.5);
  x(0, 0) = 0.1;
  return FeasibilityModel::train(x, std::vector<bool>(4, false));
}

SolverSettings quick() {
  SolverSettings s;
  s.population = 32;
  s.generations = 20;
  return s;
}

}  // namespace

TEST_CASE("solver settings validation") {
  SolverSettings s;
  CHECK_NOTHROW(s.validate());
  s.population = 7;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.population = 6;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.population = 8;
  s.generations = 0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("constrained domination and sorting") {
  auto ind = [](double a, double b, int v) {
    Individual i;
    i.x = Eigen::Vector2d(a, b);
    i.objectives = Eigen::Vector2d(a, b);
    i.violations = v;
    return i;
  };
  CHECK(constrained_dominates(ind(0, 0, 0), ind(5, 5, 1)));
  CHECK(constrained_dominates(ind(0, 0, 1), ind(5, 5, 2)));
  CHECK(constrained_dominates(ind(2, 2, 1), ind(1, 2, 1)));
  CHECK_FALSE(constrained_dominates(ind(2, 1, 0), ind(1, 2, 0)));

  std::vector<Individual> pop{ind(1, 1, 0), ind(2, 0, 0), ind(0, 2, 0), ind(3, 3, 1), ind(0.5, 0.5, 0)};
  const auto fronts = non_dominated_sort(pop);
  REQUIRE(fronts.size() == 3);
  CHECK(fronts[0] == std::vector<std::size_t>{0, 1, 2});
  CHECK(pop[4].rank == 1);
  CHECK(pop[3].rank == 2);
  CHECK(std::isinf(pop[1].crowding));
}

TEST_CASE("solver stays on the lattice and finds a simple optimum") {
  const SearchSpace space = load_space(SLOTUNE_SPACES "/vllm-0.4.2.json");
  SolverProblem p;
  p.dim = static_cast<Eigen::Index>(space.dim());
  p.repair = [&](const Eigen::VectorXd& u) { return space.snap(u); };
  p.evaluate = [](const Eigen::VectorXd& u) {
    Fitness f;
    f.objectives = Eigen::VectorXd::Constant(1, -(u.array() - 0.3).square().sum());
    return f;
  };
  const auto res = nsga2(p, {}, 4);
  for (const auto& ind : res.archive) {
    CHECK((ind.x.array() >= 0.0).all());
    CHECK((ind.x.array() <= 1.0).all());
    CHECK(space.snap(ind.x) == ind.x);
  }
  double best = -1e9;
  for (const auto& ind : res.population) best = std::max(best, ind.objectives[0]);
  // Boolean and enumerated coordinates cannot reach 0.3; compare with the snapped target.
  const Eigen::VectorXd target = space.snap(Eigen::VectorXd::Constant(p.dim, 0.3));
  CHECK(best >= p.evaluate(target).objectives[0] - 0.05);

  const auto again = nsga2(p, {}, 4);
  REQUIRE(again.archive.size() == res.archive.size());
  for (std::size_t i = 0; i < res.archive.size(); ++i) CHECK(again.archive[i].x == res.archive[i].x);
}

TEST_CASE("single-objective suggestions") {
  const SearchSpace space = unit_float();
  SUBCASE("one observation") {
    Eigen::MatrixXd x(1, 1);
    x << 0.2;
    const auto gp = GaussianProcess::fit(x, Eigen::VectorXd::Constant(1, 1.0));
    SuggestRequest req;
    req.space = &space;
    const auto out = suggest_sobo(req, gp, 1.0, quick());
    REQUIRE(out.size() == 1);
    CHECK(space.contains(out[0].config));
    CHECK(space.check_known(out[0].config));
  }
  SUBCASE("zero feasibility falls back entirely") {
    Eigen::MatrixXd x(3, 1);
    x << 0.1, 0.5, 0.9;
    const auto gp = GaussianProcess::fit(x, Eigen::Vector3d(0, 1, 0));
    const auto pof = never_feasible(1);
    SuggestRequest req;
    req.space = &space;
    req.k = 3;
    req.feasibility = &pof;
    const auto out = suggest_sobo(req, gp, 1.0, quick());
    REQUIRE(out.size() == 3);
    for (const auto& s : out) CHECK_FALSE(s.from_solver);
  }
  SUBCASE("suggestions move toward the optimum") {
    Eigen::MatrixXd x(10, 1);
    Eigen::VectorXd y(10);
    std::vector<Configuration> seen;
    for (Eigen::Index i = 0; i < 10; ++i) {
      x(i, 0) = 0.05 + 0.1 * static_cast<double>(i);
      y[i] = -std::pow(x(i, 0) - 0.8, 2);
      seen.push_back(space.decode(x.row(i).transpose()));
    }
    const auto gp = GaussianProcess::fit(x, y);
    double dist = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      SuggestRequest req;
      req.space = &space;
      req.seed = seed;
      req.iteration = 1;
      req.evaluated = seen;
      const auto out = suggest_sobo(req, gp, y.maxCoeff(), quick());
      dist += std::abs(coord(out.at(0).config) - 0.8);
    }
    // Uniform sampling on [0, 1] averages (0.8^2 + 0.2^2) / 2 = 0.34 from 0.8.
    CHECK(dist / 20.0 < 0.34);
  }
  SUBCASE("determinism and no repeats") {
    const SearchSpace vs = load_space(SLOTUNE_SPACES "/vllm-0.4.2.json");
    const auto init = sobol_sample(vs, 10, 2);
    Eigen::MatrixXd x(10, static_cast<Eigen::Index>(vs.dim()));
    Eigen::VectorXd y(10);
    for (Eigen::Index i = 0; i < 10; ++i) {
      x.row(i) = vs.encode(init[static_cast<std::size_t>(i)]).transpose();
      y[i] = x.row(i).sum();
    }
    const auto gp = GaussianProcess::fit(x, y);
    SuggestRequest req;
    req.space = &vs;
    req.k = 4;
    req.seed = 11;
    req.iteration = 3;
    req.evaluated = init;
    const auto a = suggest_sobo(req, gp, y.maxCoeff(), quick());
    const auto b = suggest_sobo(req, gp, y.maxCoeff(), quick());
    REQUIRE(a.size() == 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].config == b[i].config);
      CHECK(vs.check_known(a[i].config));
      CHECK(std::find(init.begin(), init.end(), a[i].config) == init.end());
      for (std::size_t j = 0; j < i; ++j) CHECK_FALSE(a[i].config == a[j].config);
    }
  }
}

TEST_CASE("multi-objective suggestions") {
  const SearchSpace space = unit_float();
  SUBCASE("no improvement possible still fills k") {
    Eigen::MatrixXd x(4, 1);
    x << 0.1, 0.4, 0.6, 0.9;
    Eigen::MatrixXd y(4, 2);
    y << 0, 0, 0.1, 0.1, 0.05, 0.05, 0, 0.1;
    const auto gp = MultiOutputGP::fit(x, y);
    ParetoFront front;
    front.points = {{100, 100}};
    SuggestRequest req;
    req.space = &space;
    req.k = 2;
    const auto out = suggest_mobo(req, gp, front, quick());
    REQUIRE(out.size() == 2);
    for (const auto& s : out) CHECK(space.check_known(s.config));
    CHECK_FALSE(out[0].config == out[1].config);
  }
  SUBCASE("two modes give distinct picks") {
    Eigen::MatrixXd x(7, 1);
    Eigen::MatrixXd y(7, 2);
    for (Eigen::Index i = 0; i < 7; ++i) {
      x(i, 0) = i / 6.0;
      y(i, 0) = std::exp(-std::pow((x(i, 0) - 0.2) / 0.1, 2));
      y(i, 1) = std::exp(-std::pow((x(i, 0) - 0.8) / 0.1, 2));
    }
    const auto gp = MultiOutputGP::fit(x, y);
    ParetoFront front;
    front.points = {{0.1, 0.1}};
    SuggestRequest req;
    req.space = &space;
    req.k = 2;
    const auto out = suggest_mobo(req, gp, front, quick());
    REQUIRE(out.size() == 2);
    CHECK(out[0].from_solver);
    CHECK_FALSE(out[0].config == out[1].config);
  }
  SUBCASE("wrong output count") {
    Eigen::MatrixXd x(2, 1);
    x << 0.1, 0.9;
    const auto gp = MultiOutputGP::fit(x, Eigen::MatrixXd::Ones(2, 3));
    SuggestRequest req;
    req.space = &space;
    CHECK_THROWS_AS(suggest_mobo(req, gp, ParetoFront{}, quick()), DimensionError);
  }
}

TEST_CASE("fallback fill") {
  const SearchSpace vs = load_space(SLOTUNE_SPACES "/vllm-0.4.2.json");
  const auto three = fallback_fill(vs, 3, 1, nullptr, 0.5);
  REQUIRE(three.size() == 3);
  for (const auto& c : three) CHECK(vs.check_known(c));

  const auto pof = never_feasible(static_cast<Eigen::Index>(vs.dim()));
  const auto relaxed = fallback_fill(vs, 5, 1, &pof, 0.5);
  REQUIRE(relaxed.size() == 5);
  for (const auto& c : relaxed) CHECK(vs.check_known(c));

  const auto excluded = fallback_fill(vs, 3, 1, nullptr, 0.5, three);
  for (const auto& c : excluded) CHECK(std::find(three.begin(), three.end(), c) == three.end());

  const SearchSpace impossible = parse_space(
      R"({"name": "i", "params": [{"name": "x", "kind": "float", "range": [0, 1], "default": 0.5}], "constraints": ["x > 2"]})");
  CHECK_THROWS_AS(fallback_fill(impossible, 1, 1, nullptr, 0.5), SamplingExhausted);
  CHECK_THROWS_AS(fallback_fill(vs, 0, 1, nullptr, 0.5), ValidationError);
}

TEST_CASE("reference point") {
  Metrics m;
  m.ttft = 0.9;
  m.tpot = 0.05;
  const auto ok = Observation::success({}, m, 1.0, 0);
  const Point2 r = reference_point(ok, ObjectiveSpec::ttft_tpot());
  CHECK(r[0] == -0.9);
  CHECK(r[1] == -0.05);
  CHECK_THROWS_AS(reference_point(Observation::failure({}, InvalidReason::crash, 1.0, 0), ObjectiveSpec::ttft_tpot()),
                  MissingReference);
  CHECK_THROWS_AS(reference_point(ok, ObjectiveSpec::throughput()), DimensionError);

  ParetoFront f;
  f.reference = r;
  f.points = {{-0.5, -0.04}, {-0.7, -0.03}};
  CHECK(hypervolume_2d(f) > 0.0);
}
