#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "slotune/forest.hpp"
#include "slotune/mock_engine.hpp"
#include "slotune/random.hpp"
#include "slotune/space.hpp"
#include "slotune/trace.hpp"
#include "threshold_script.hpp"

using namespace slotune;
using doctest::Approx;

namespace {

std::vector<bool> batch_of(const ScriptedBatch& b) {
  std::vector<bool> v(static_cast<std::size_t>(b.size), true);
  if (b.invalid_at >= 0) v[static_cast<std::size_t>(b.invalid_at)] = false;
  return v;
}

// Straight transcription of the listing, kept separate from the library code.
struct Listing {
  double delta = 0.5;
  int c = 0;
  void step(std::size_t k, bool any_invalid) {
    if (any_invalid) {
      delta = std::min(0.75, std::max(0.5, delta + 0.05));
      c = 0;
    } else {
      c += static_cast<int>(k);
      if (c >= 5) {
        delta = std::max(0.25, delta - 0.05);
        c -= 5;
      }
    }
  }
};

}  // namespace

TEST_CASE("threshold examples") {
  ThresholdState s;
  CHECK(s.delta == 0.5);
  CHECK(s.streak == 0);
  s.update(std::vector<bool>{true, false});
  CHECK(s.delta == Approx(0.55));
  CHECK(s.streak == 0);

  s.streak = 4;
  s.update(std::vector<bool>{true});
  CHECK(s.delta == Approx(0.5));
  CHECK(s.streak == 0);

  s.delta = 0.3;
  s.update(std::vector<bool>{false});
  CHECK(s.delta == Approx(0.5));
  CHECK(s.streak == 0);
}

TEST_CASE("scripted threshold trajectory") {
  ThresholdState s;
  int batch = 0;
  for (const auto& b : kThresholdScript) {
    CAPTURE(batch);
    s.update(batch_of(b));
    CHECK(s.delta == Approx(b.delta).epsilon(1e-12));
    CHECK(s.streak == b.streak);
    ++batch;
  }
  CHECK(batch == 50);
}

TEST_CASE("threshold fuzz") {
  Rng rng(99);
  for (int seq = 0; seq < 100000; ++seq) {
    ThresholdState s;
    Listing ref;
    const auto k = 1 + rng.below(8);
    for (int e = 0; e < 12; ++e) {
      std::vector<bool> batch(k);
      for (std::size_t i = 0; i < k; ++i) batch[i] = rng.uniform() < 0.8;
      const bool bad = std::find(batch.begin(), batch.end(), false) != batch.end();
      s.update(batch);
      ref.step(k, bad);
      REQUIRE(s.delta >= ThresholdState::kFloor);
      REQUIRE(s.delta <= ThresholdState::kCeiling);
      REQUIRE(s.streak >= 0);
      // With one decrement per batch the streak only stays bounded while k <= 5.
      if (k <= 5) REQUIRE(s.streak <= 4 + static_cast<int>(k));
      if (bad) {
        REQUIRE(s.delta >= 0.5);
        REQUIRE(s.streak == 0);
      }
      REQUIRE(std::abs(s.delta - ref.delta) < 1e-9);
      REQUIRE(s.streak == ref.c);
    }
  }
}

TEST_CASE("streak grows for batches larger than the decrement") {
  ThresholdState s;
  const std::vector<bool> eight(8, true);
  int expected = 0;
  for (int i = 0; i < 6; ++i) {
    s.update(eight);
    expected += 3;
    CHECK(s.streak == expected);
  }
  CHECK(s.delta == ThresholdState::kFloor);
}

TEST_CASE("forest on constant labels") {
  Rng rng(2);
  Eigen::MatrixXd x(20, 3);
  for (auto& v : x.reshaped()) v = rng.uniform();
  const auto ok = FeasibilityModel::train(x, std::vector<bool>(20, true));
  const auto bad = FeasibilityModel::train(x, std::vector<bool>(20, false));
  CHECK(ok.tree_count() == 100);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector3d q(rng.uniform(), rng.uniform(), rng.uniform());
    CHECK(ok.pof(q) == 1.0);
    CHECK(bad.pof(q) == 0.0);
  }
  ForestOptions one;
  one.trees = 1;
  const auto single = FeasibilityModel::train(x.topRows(1), std::vector<bool>{false}, one);
  CHECK(single.pof(Eigen::Vector3d(0.5, 0.5, 0.5)) == 0.0);
}

TEST_CASE("forest separates a one-dimensional rule") {
  Rng rng(12);
  Eigen::MatrixXd x(200, 1);
  std::vector<bool> y(200);
  for (Eigen::Index i = 0; i < 200; ++i) {
    x(i, 0) = rng.uniform();
    y[static_cast<std::size_t>(i)] = x(i, 0) < 0.5;
  }
  const auto m = FeasibilityModel::train(x, y, {}, 5);
  int correct = 0;
  for (int i = 0; i < 1000; ++i) {
    const double q = rng.uniform();
    const double p = m.pof(Eigen::VectorXd::Constant(1, q));
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    correct += (p >= 0.5) == (q < 0.5);
  }
  CHECK(correct >= 900);
  for (Eigen::Index i = 0; i < 200; ++i)
    if (x(i, 0) < 0.4) CHECK(m.pof(x.row(i).transpose()) >= 0.9);

  const auto again = FeasibilityModel::train(x, y, {}, 5);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd q = Eigen::VectorXd::Constant(1, i / 20.0);
    CHECK(again.pof(q) == m.pof(q));
  }
}

TEST_CASE("retraining on growing data stays in range") {
  Rng rng(31);
  Eigen::MatrixXd x(60, 4);
  for (auto& v : x.reshaped()) v = rng.uniform();
  std::vector<bool> y(60);
  for (Eigen::Index i = 0; i < 60; ++i) y[static_cast<std::size_t>(i)] = x(i, 0) + x(i, 1) < 1.2;
  for (Eigen::Index n = 1; n <= 60; n += 7) {
    const auto m = FeasibilityModel::train(x.topRows(n), std::vector<bool>(y.begin(), y.begin() + n), {}, 1);
    for (int i = 0; i < 20; ++i) {
      const Eigen::Vector4d q(rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform());
      const double p = m.pof(q);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
}

TEST_CASE("forest learns the mock engine failure region") {
  const SearchSpace space = load_space(SLOTUNE_SPACES "/vllm-0.4.2.json");
  MockEngine engine(space, synthetic_trace("cls", 100, 1));
  const auto train = sobol_sample(space, 60, 3);
  Eigen::MatrixXd x(60, static_cast<Eigen::Index>(space.dim()));
  std::vector<bool> y;
  for (std::size_t i = 0; i < train.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = space.encode(train[i]).transpose();
    y.push_back(!engine.hidden_failure(train[i]));
  }
  CHECK(std::count(y.begin(), y.end(), false) > 0);
  const auto m = FeasibilityModel::train(x, y, {}, 0);
  int correct = 0;
  const auto held = sobol_sample(space, 1000, 1234, train);
  for (const auto& c : held) correct += (m.pof(space.encode(c)) >= 0.5) == !engine.hidden_failure(c);
  CHECK(correct >= 850);
}
