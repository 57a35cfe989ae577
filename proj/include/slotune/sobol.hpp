#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <vector>

namespace slotune {

/// Gray-code Sobol generator over [0,1)^dim with Joe-Kuo direction numbers.
///
/// The stream starts at its first point (the origin) with no burn-in. A
/// nonzero seed applies a seeded random digital shift (XOR of every coordinate
/// with a per-dimension 32-bit mask), which preserves the net structure; seed 0
/// yields the canonical unscrambled sequence.
class SobolSequence {
 public:
  static constexpr std::size_t kMaxDim = 21;
  static constexpr int kBits = 32;

  explicit SobolSequence(std::size_t dim, std::uint64_t seed = 0);

  std::size_t dim() const noexcept { return dim_; }
  std::uint64_t index() const noexcept { return index_; }

  Eigen::VectorXd next();

 private:
  std::size_t dim_;
  std::uint64_t index_ = 0;
  std::vector<std::array<std::uint32_t, kBits>> directions_;
  std::vector<std::uint32_t> state_;
  std::vector<std::uint32_t> shift_;
};

}  // namespace slotune
