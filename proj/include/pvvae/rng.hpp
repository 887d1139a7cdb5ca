#pragma once

#include <ATen/core/Generator.h>
#include <torch/types.h>

#include <cstdint>

namespace pvvae {

/// SplitMix64 finalizer; derives statistically independent child seeds.
uint64_t derive_seed(uint64_t seed, uint64_t stream);

/// Seeded random stream backed by a torch CPU generator.
///
/// All stochastic operations in the library take an `Rng&` so that results are
/// a pure function of the seed. Child streams are derived from the seed, never
/// from the current generator state, which keeps them stable under resume.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  Rng(const Rng&) = delete;
  Rng& operator=(const Rng&) = delete;
  Rng(Rng&&) noexcept = default;
  Rng& operator=(Rng&&) noexcept = default;

  uint64_t seed() const { return seed_; }
  at::Generator& generator() { return gen_; }

  /// Uniform integer in the closed range [lo, hi].
  int64_t uniform_int(int64_t lo, int64_t hi);
  /// Uniform real in [0, 1).
  double uniform();
  torch::Tensor normal(at::IntArrayRef shape, torch::Dtype dtype = torch::kFloat32);
  torch::Tensor uniform(at::IntArrayRef shape, torch::Dtype dtype = torch::kFloat32);

  Rng child(uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }

 private:
  uint64_t seed_;
  at::Generator gen_;
};

}  // namespace pvvae
