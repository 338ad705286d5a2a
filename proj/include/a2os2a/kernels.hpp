#pragma once

// Raw row-major matrix kernels. No autodiff here; ops.hpp wraps these.
//
// The two addition-only kernels realise a product with a spike operand as
// gather-and-add. They never multiply, and they report the exact number of
// additions and subtractions they performed in the returned KernelStats.

#include <cstddef>
#include <cstdint>
#include <span>

namespace a2os2a {

struct KernelStats {
  std::uint64_t additions = 0;
  std::uint64_t subtractions = 0;
  std::uint64_t multiplications = 0;

  KernelStats& operator+=(const KernelStats& o) {
    additions += o.additions;
    subtractions += o.subtractions;
    multiplications += o.multiplications;
    return *this;
  }
};

template <typename R>
bool is_binary(std::span<const R> values);
template <typename R>
bool is_ternary(std::span<const R> values);

/// C[m×n] = A[m×k]·B[k×n] by dense multiply-accumulate, k ascending.
/// Zero entries of A are skipped, which does not change any result.
template <typename R>
KernelStats dense_matmul(std::span<const R> a, std::span<const R> b, std::span<R> c,
                         std::size_t m, std::size_t k, std::size_t n);

/// C[m×n] += A[m×k]·B[n×k]ᵀ.
template <typename R>
void gemm_nt_accumulate(std::span<const R> a, std::span<const R> b, std::span<R> c,
                        std::size_t m, std::size_t k, std::size_t n);

/// C[m×n] += A[k×m]ᵀ·B[k×n].
template <typename R>
void gemm_tn_accumulate(std::span<const R> a, std::span<const R> b, std::span<R> c,
                        std::size_t m, std::size_t k, std::size_t n);

/// C[i][j] = Σ_{k : A[i][k] = 1} B[k][j] for binary A.
/// Each output row is the sum of the selected rows of B; a row with p
/// selected entries costs n·(p-1) additions (the first term is a copy).
/// Throws DomainError if A is not strictly binary.
template <typename R>
KernelStats addonly_matmul_binary(std::span<const R> a, std::span<const R> b, std::span<R> c,
                                  std::size_t m, std::size_t k, std::size_t n);

/// Same as addonly_matmul_binary without the domain check, for callers that
/// already validated a larger tensor A was gathered from.
template <typename R>
KernelStats addonly_matmul_binary_unchecked(std::span<const R> a, std::span<const R> b,
                                            std::span<R> c, std::size_t m, std::size_t k,
                                            std::size_t n);

/// C[i][j] = Σ_{k : B[k][j] = 1} A[i][k] − Σ_{k : B[k][j] = −1} A[i][k] for
/// ternary B. Per output element the first nonzero term is a copy (or a
/// negation, counted as one subtraction); every later term is one addition or
/// one subtraction. Throws DomainError if B is not strictly ternary.
template <typename R>
KernelStats addonly_matmul_ternary(std::span<const R> a, std::span<const R> b, std::span<R> c,
                                   std::size_t m, std::size_t k, std::size_t n);

}  // namespace a2os2a
