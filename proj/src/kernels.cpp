#include "a2os2a/kernels.hpp"

#include <algorithm>
#include <vector>

#include "a2os2a/errors.hpp"

namespace a2os2a {

template <typename R>
bool is_binary(std::span<const R> values) {
  return std::all_of(values.begin(), values.end(),
                     [](R v) { return v == R(0) || v == R(1); });
}

template <typename R>
bool is_ternary(std::span<const R> values) {
  return std::all_of(values.begin(), values.end(),
                     [](R v) { return v == R(0) || v == R(1) || v == R(-1); });
}

template <typename R>
KernelStats dense_matmul(std::span<const R> a, std::span<const R> b, std::span<R> c,
                         std::size_t m, std::size_t k, std::size_t n) {
  std::fill(c.begin(), c.end(), R(0));
  for (std::size_t i = 0; i < m; ++i) {
    R* crow = c.data() + i * n;
    const R* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const R av = arow[p];
      if (av == R(0)) continue;
      const R* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  KernelStats stats;
  stats.multiplications = static_cast<std::uint64_t>(m) * k * n;
  stats.additions = stats.multiplications;
  return stats;
}

template <typename R>
void gemm_nt_accumulate(std::span<const R> a, std::span<const R> b, std::span<R> c,
                        std::size_t m, std::size_t k, std::size_t n) {
  // Transposed copy of B so the inner loop is a contiguous axpy.
  std::vector<R> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  for (std::size_t i = 0; i < m; ++i) {
    const R* arow = a.data() + i * k;
    R* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const R av = arow[p];
      if (av == R(0)) continue;
      const R* brow = bt.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename R>
void gemm_tn_accumulate(std::span<const R> a, std::span<const R> b, std::span<R> c,
                        std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const R* arow = a.data() + p * m;
    const R* brow = b.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const R av = arow[i];
      if (av == R(0)) continue;
      R* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename R>
KernelStats addonly_matmul_binary(std::span<const R> a, std::span<const R> b, std::span<R> c,
                                  std::size_t m, std::size_t k, std::size_t n) {
  if (!is_binary(a)) throw DomainError("addonly_matmul_binary: left operand is not binary");
  return addonly_matmul_binary_unchecked(a, b, c, m, k, n);
}

template <typename R>
KernelStats addonly_matmul_binary_unchecked(std::span<const R> a, std::span<const R> b,
                                            std::span<R> c, std::size_t m, std::size_t k,
                                            std::size_t n) {
  KernelStats stats;
  std::fill(c.begin(), c.end(), R(0));
  for (std::size_t i = 0; i < m; ++i) {
    R* crow = c.data() + i * n;
    const R* arow = a.data() + i * k;
    std::uint64_t selected = 0;
    for (std::size_t p = 0; p < k; ++p) {
      if (arow[p] == R(0)) continue;
      const R* brow = b.data() + p * n;
      // 0 + x is exact, so the first selected row is a copy.
      for (std::size_t j = 0; j < n; ++j) crow[j] += brow[j];
      ++selected;
    }
    if (selected > 1) stats.additions += (selected - 1) * n;
  }
  return stats;
}

template <typename R>
KernelStats addonly_matmul_ternary(std::span<const R> a, std::span<const R> b, std::span<R> c,
                                   std::size_t m, std::size_t k, std::size_t n) {
  if (!is_ternary(b)) throw DomainError("addonly_matmul_ternary: right operand is not ternary");
  // Column index lists per row of B, split by sign.
  std::vector<std::size_t> plus_start(k + 1, 0), minus_start(k + 1, 0);
  std::vector<std::size_t> plus_cols, minus_cols;
  plus_cols.reserve(k * n);
  minus_cols.reserve(k * n);
  for (std::size_t p = 0; p < k; ++p) {
    const R* brow = b.data() + p * n;
    for (std::size_t j = 0; j < n; ++j) {
      if (brow[j] == R(1)) plus_cols.push_back(j);
      else if (brow[j] == R(-1)) minus_cols.push_back(j);
    }
    plus_start[p + 1] = plus_cols.size();
    minus_start[p + 1] = minus_cols.size();
  }

  std::fill(c.begin(), c.end(), R(0));
  for (std::size_t i = 0; i < m; ++i) {
    R* crow = c.data() + i * n;
    const R* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const R av = arow[p];
      for (std::size_t q = plus_start[p]; q < plus_start[p + 1]; ++q) crow[plus_cols[q]] += av;
      for (std::size_t q = minus_start[p]; q < minus_start[p + 1]; ++q) crow[minus_cols[q]] -= av;
    }
  }

  // Counts depend only on the nonzero pattern of each column of B.
  KernelStats per_row;
  for (std::size_t j = 0; j < n; ++j) {
    bool first = true;
    for (std::size_t p = 0; p < k; ++p) {
      const R v = b[p * n + j];
      if (v == R(0)) continue;
      if (first) {
        if (v == R(-1)) ++per_row.subtractions;
        first = false;
      } else if (v == R(1)) {
        ++per_row.additions;
      } else {
        ++per_row.subtractions;
      }
    }
  }
  KernelStats stats;
  stats.additions = per_row.additions * m;
  stats.subtractions = per_row.subtractions * m;
  return stats;
}

#define A2OS2A_INSTANTIATE(R)                                                                 \
  template bool is_binary<R>(std::span<const R>);                                            \
  template bool is_ternary<R>(std::span<const R>);                                           \
  template KernelStats dense_matmul<R>(std::span<const R>, std::span<const R>, std::span<R>, \
                                       std::size_t, std::size_t, std::size_t);               \
  template void gemm_nt_accumulate<R>(std::span<const R>, std::span<const R>, std::span<R>,  \
                                      std::size_t, std::size_t, std::size_t);                \
  template void gemm_tn_accumulate<R>(std::span<const R>, std::span<const R>, std::span<R>,  \
                                      std::size_t, std::size_t, std::size_t);                \
  template KernelStats addonly_matmul_binary<R>(std::span<const R>, std::span<const R>,      \
                                                std::span<R>, std::size_t, std::size_t,      \
                                                std::size_t);                                \
  template KernelStats addonly_matmul_binary_unchecked<R>(std::span<const R>, std::span<const R>, \
                                                          std::span<R>, std::size_t, std::size_t, \
                                                          std::size_t);                        \
  template KernelStats addonly_matmul_ternary<R>(std::span<const R>, std::span<const R>,     \
                                                 std::span<R>, std::size_t, std::size_t,     \
                                                 std::size_t);

A2OS2A_INSTANTIATE(float)
A2OS2A_INSTANTIATE(double)

#undef A2OS2A_INSTANTIATE

}  // namespace a2os2a
