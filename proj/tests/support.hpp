#pragma once

// Shared oracles for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "a2os2a/ops.hpp"

namespace a2os2a::testing {

using Rng = std::mt19937_64;

inline Tensor<double> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0,
                                    double hi = 1.0, bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor<double>(shape, std::move(v), requires_grad);
}

inline Tensor<double> random_binary(const Shape& shape, Rng& rng, double p = 0.5) {
  std::bernoulli_distribution dist(p);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng) ? 1.0 : 0.0;
  return Tensor<double>(shape, std::move(v));
}

inline Tensor<double> random_ternary(const Shape& shape, Rng& rng) {
  std::uniform_int_distribution<int> dist(-1, 1);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor<double>(shape, std::move(v));
}

/// Textbook triple loop, i-j-p order.
inline std::vector<double> naive_matmul(std::span<const double> a, std::span<const double> b,
                                        std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
  return c;
}

inline double max_rel_error(std::span<const double> got, std::span<const double> want,
                            double floor = 1e-12) {
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double scale = std::max({std::abs(got[i]), std::abs(want[i]), floor});
    worst = std::max(worst, std::abs(got[i] - want[i]) / scale);
  }
  return worst;
}

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  bool all_finite = true;
};

/// Compares tape gradients of loss() w.r.t. `leaves` against central
/// differences. Relative error uses max(|analytic|, |numeric|, floor).
inline GradCheck check_gradients(const std::function<Tensor<double>()>& loss,
                                 const std::vector<Tensor<double>>& leaves, double h = 1e-4,
                                 double floor = 1e-6) {
  std::vector<std::vector<double>> analytic;
  {
    for (const auto& t : leaves) t.zero_grad();
    Tape<double> tape;
    TapeScope<double> scope(tape);
    tape.backward(loss());
    for (const auto& t : leaves) analytic.emplace_back(t.grad().begin(), t.grad().end());
  }
  GradCheck out;
  NoGradScope<double> no_grad;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto v = leaves[l].mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + h;
      const double up = loss().item();
      v[i] = orig - h;
      const double down = loss().item();
      v[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[l][i];
      if (!std::isfinite(a)) out.all_finite = false;
      const double scale = std::max({std::abs(a), std::abs(numeric), floor});
      out.max_rel = std::max(out.max_rel, std::abs(a - numeric) / scale);
      ++out.checked;
    }
  }
  return out;
}

/// (1/α)·max(0, 1 − |d|/α), written out independently of the library.
inline double window(double d, double alpha) {
  const double w = 1.0 - std::abs(d) / alpha;
  return w > 0.0 ? w / alpha : 0.0;
}

}  // namespace a2os2a::testing
