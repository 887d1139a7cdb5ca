#include "pvvae/rng.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

namespace pvvae {

uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Rng::Rng(uint64_t seed) : seed_(seed), gen_(at::make_generator<at::CPUGeneratorImpl>(seed)) {}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  TORCH_CHECK(hi >= lo, "uniform_int: empty range");
  return torch::randint(lo, hi + 1, {1}, gen_, torch::kInt64).item<int64_t>();
}

double Rng::uniform() {
  return torch::rand({1}, gen_, torch::TensorOptions().dtype(torch::kFloat64)).item<double>();
}

torch::Tensor Rng::normal(at::IntArrayRef shape, torch::Dtype dtype) {
  return torch::randn(shape, gen_, torch::TensorOptions().dtype(dtype));
}

torch::Tensor Rng::uniform(at::IntArrayRef shape, torch::Dtype dtype) {
  return torch::rand(shape, gen_, torch::TensorOptions().dtype(dtype));
}

}  // namespace pvvae
