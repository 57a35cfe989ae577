#include "slotune/sobol.hpp"

#include <stdexcept>

#include "slotune/errors.hpp"
#include "slotune/random.hpp"

namespace slotune {

namespace {

struct Primitive {
  unsigned degree;
  std::uint32_t coeffs;
  std::array<std::uint32_t, 8> m;
};

// new-joe-kuo-6.21201, dimensions 2..21.
constexpr Primitive kJoeKuo[] = {
    {1, 0, {1}},
    {2, 1, {1, 3}},
    {3, 1, {1, 3, 1}},
    {3, 2, {1, 1, 1}},
    {4, 1, {1, 1, 3, 3}},
    {4, 4, {1, 3, 5, 13}},
    {5, 2, {1, 1, 5, 5, 17}},
    {5, 4, {1, 1, 5, 5, 5}},
    {5, 7, {1, 1, 7, 11, 19}},
    {5, 11, {1, 1, 5, 1, 1}},
    {5, 13, {1, 1, 1, 3, 11}},
    {5, 14, {1, 3, 5, 5, 31}},
    {6, 1, {1, 3, 3, 9, 7, 49}},
    {6, 13, {1, 1, 1, 15, 21, 21}},
    {6, 16, {1, 3, 1, 13, 27, 49}},
    {6, 19, {1, 1, 1, 15, 7, 5}},
    {6, 22, {1, 3, 1, 15, 13, 25}},
    {6, 25, {1, 1, 5, 5, 19, 61}},
    {7, 1, {1, 3, 7, 11, 23, 15, 103}},
    {7, 4, {1, 3, 7, 13, 13, 15, 69}},
};
static_assert(std::size(kJoeKuo) + 1 == SobolSequence::kMaxDim);

}  // namespace

SobolSequence::SobolSequence(std::size_t dim, std::uint64_t seed)
    : dim_(dim), directions_(dim), state_(dim, 0u), shift_(dim, 0u) {
  if (dim == 0 || dim > kMaxDim)
    throw DimensionMismatch("Sobol dimension must be in [1, " + std::to_string(kMaxDim) + "]");

  for (int k = 0; k < kBits; ++k) directions_[0][k] = 1u << (kBits - 1 - k);

  for (std::size_t d = 1; d < dim; ++d) {
    const auto& p = kJoeKuo[d - 1];
    auto& v = directions_[d];
    const unsigned s = p.degree;
    for (unsigned k = 0; k < s && k < kBits; ++k) v[k] = p.m[k] << (kBits - 1 - k);
    for (unsigned k = s; k < kBits; ++k) {
      std::uint32_t x = v[k - s] ^ (v[k - s] >> s);
      for (unsigned j = 1; j < s; ++j) {
        if ((p.coeffs >> (s - 1 - j)) & 1u) x ^= v[k - j];
      }
      v[k] = x;
    }
  }

  if (seed != 0) {
    Rng rng(derive_seed(seed, "sobol-shift"));
    for (auto& s : shift_) s = static_cast<std::uint32_t>(rng.bits() >> 32);
  }
}

Eigen::VectorXd SobolSequence::next() {
  Eigen::VectorXd out(static_cast<Eigen::Index>(dim_));
  constexpr double scale = 0x1.0p-32;
  for (std::size_t d = 0; d < dim_; ++d)
    out[static_cast<Eigen::Index>(d)] = static_cast<double>(state_[d] ^ shift_[d]) * scale;

  // Advance: flip the direction number at the lowest zero bit of the index.
  std::uint64_t i = index_;
  int c = 0;
  while (i & 1u) {
    i >>= 1;
    ++c;
  }
  if (c >= kBits) throw SamplingExhausted("Sobol sequence exhausted");
  for (std::size_t d = 0; d < dim_; ++d) state_[d] ^= directions_[d][static_cast<std::size_t>(c)];
  ++index_;
  return out;
}

}  // namespace slotune
