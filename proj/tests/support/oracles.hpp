#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of these call into the library code they check.

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace pvvae::oracle {

/// Pearson statistic of observed counts against a uniform expectation.
inline double chi_square_uniform(const std::vector<int64_t>& counts) {
  int64_t total = 0;
  for (auto c : counts) total += c;
  const double expected = static_cast<double>(total) / static_cast<double>(counts.size());
  double stat = 0.0;
  for (auto c : counts) stat += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  return stat;
}

/// Upper 1% point of the chi-square distribution with 4 degrees of freedom.
inline constexpr double kChiSquare4dfAlpha01 = 13.2767;

/// Mean of squared differences by explicit iteration over flat data.
inline double elementwise_mse(const torch::Tensor& a, const torch::Tensor& b) {
  auto x = a.contiguous().to(torch::kFloat64);
  auto y = b.contiguous().to(torch::kFloat64);
  const double* px = x.data_ptr<double>();
  const double* py = y.data_ptr<double>();
  long double acc = 0.0L;
  for (int64_t i = 0; i < x.numel(); ++i) acc += static_cast<long double>(px[i] - py[i]) * (px[i] - py[i]);
  return static_cast<double>(acc / static_cast<long double>(x.numel()));
}

struct Eigen {
  std::vector<double> values;               // unsorted
  std::vector<std::vector<double>> vectors;  // vectors[k] is the k-th eigenvector
};

/// Cyclic Jacobi rotations on a dense symmetric matrix.
inline Eigen jacobi_eigen(std::vector<std::vector<double>> a, int sweeps = 100) {
  const size_t n = a.size();
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int s = 0; s < sweeps; ++s) {
    double off = 0.0;
    for (size_t p = 0; p < n; ++p)
      for (size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (size_t p = 0; p < n; ++p) {
      for (size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), sn = t * c;
        for (size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - sn * akq;
          a[k][q] = sn * akp + c * akq;
        }
        for (size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - sn * aqk;
          a[q][k] = sn * apk + c * aqk;
        }
        for (size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - sn * vkq;
          v[k][q] = sn * vkp + c * vkq;
        }
      }
    }
  }
  Eigen e;
  for (size_t i = 0; i < n; ++i) {
    e.values.push_back(a[i][i]);
    std::vector<double> col(n);
    for (size_t k = 0; k < n; ++k) col[k] = v[k][i];
    e.vectors.push_back(col);
  }
  return e;
}

/// SSIM of two single-channel planes in [0, 1] by direct window sums
/// (11x11 Gaussian, sigma 1.5, valid positions only).
inline double plane_ssim(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) {
  const int win = 11;
  double w[11][11];
  double total = 0.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double di = i - 5.0, dj = j - 5.0;
      w[i][j] = std::exp(-(di * di + dj * dj) / (2 * 1.5 * 1.5));
      total += w[i][j];
    }
  const double c1 = 1e-4, c2 = 9e-4;
  const int h = static_cast<int>(x.size()), wd = static_cast<int>(x[0].size());
  double acc = 0.0;
  int count = 0;
  for (int r = 0; r + win <= h; ++r) {
    for (int c = 0; c + win <= wd; ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double k = w[i][j] / total, a = x[r + i][c + j], b = y[r + i][c + j];
          mx += k * a;
          my += k * b;
          sxx += k * a * a;
          syy += k * b * b;
          sxy += k * a * b;
        }
      sxx -= mx * mx;
      syy -= my * my;
      sxy -= mx * my;
      acc += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
      ++count;
    }
  }
  return acc / count;
}

/// Mean plane SSIM over every (clip, channel, frame) of two [-1, 1] videos.
inline double video_ssim(const torch::Tensor& a, const torch::Tensor& b) {
  auto x = a.to(torch::kFloat64).contiguous();
  auto y = b.to(torch::kFloat64).contiguous();
  double acc = 0.0;
  int64_t planes = 0;
  for (int64_t n = 0; n < x.size(0); ++n)
    for (int64_t c = 0; c < x.size(1); ++c)
      for (int64_t f = 0; f < x.size(2); ++f) {
        std::vector<std::vector<double>> pa(static_cast<size_t>(x.size(3)), std::vector<double>(static_cast<size_t>(x.size(4))));
        auto pb = pa;
        for (int64_t i = 0; i < x.size(3); ++i)
          for (int64_t j = 0; j < x.size(4); ++j) {
            pa[static_cast<size_t>(i)][static_cast<size_t>(j)] = (x[n][c][f][i][j].item<double>() + 1) / 2;
            pb[static_cast<size_t>(i)][static_cast<size_t>(j)] = (y[n][c][f][i][j].item<double>() + 1) / 2;
          }
        acc += plane_ssim(pa, pb);
        ++planes;
      }
  return acc / static_cast<double>(planes);
}

struct GradCheckResult {
  int64_t checked = 0;
  double max_relative_error = 0.0;
  int64_t failures = 0;
};

/// Central finite differences of `loss` against autograd for `samples`
/// randomly chosen scalar entries of `params` (double precision expected).
/// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckResult finite_difference_check(const std::vector<torch::Tensor>& params,
                                               const std::function<torch::Tensor()>& loss, int64_t samples,
                                               double step, double tolerance, uint64_t seed, double floor = 1e-7) {
  for (const auto& p : params)
    if (p.grad().defined()) p.grad().zero_();
  loss().backward();
  std::vector<std::pair<size_t, int64_t>> entries;
  for (size_t i = 0; i < params.size(); ++i)
    for (int64_t j = 0; j < params[i].numel(); ++j) entries.emplace_back(i, j);
  std::mt19937_64 gen(seed);
  std::shuffle(entries.begin(), entries.end(), gen);
  entries.resize(std::min<size_t>(entries.size(), static_cast<size_t>(samples)));

  GradCheckResult r;
  torch::NoGradGuard guard;
  for (auto [i, j] : entries) {
    auto flat = params[i].view({-1});
    const double analytic = params[i].grad().view({-1})[j].item<double>();
    const double orig = flat[j].item<double>();
    flat[j] = orig + step;
    const double up = loss().item<double>();
    flat[j] = orig - step;
    const double down = loss().item<double>();
    flat[j] = orig;
    const double numeric = (up - down) / (2 * step);
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    r.max_relative_error = std::max(r.max_relative_error, rel);
    if (rel >= tolerance) ++r.failures;
    ++r.checked;
  }
  return r;
}

}  // namespace pvvae::oracle
