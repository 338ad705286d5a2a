#pragma once

// Tensors whose elements are known to lie in a small codomain. Construction
// validates every element, so holding a SpikeTensor is proof of binariness.
// The wrapped Tensor keeps its place in the autodiff graph.

#include <cstddef>

#include "a2os2a/kernels.hpp"
#include "a2os2a/tensor.hpp"

namespace a2os2a {

enum class Codomain { binary, ternary };

template <typename R, Codomain C>
class CodedTensor {
 public:
  /// Throws DomainError if any element lies outside the codomain.
  static CodedTensor checked(Tensor<R> tensor) {
    const bool ok = C == Codomain::binary ? is_binary<R>(tensor.values())
                                          : is_ternary<R>(tensor.values());
    if (!ok) {
      throw DomainError(std::string("tensor is not ") +
                        (C == Codomain::binary ? "binary {0,1}" : "ternary {-1,0,1}"));
    }
    std::size_t nonzero = 0;
    for (R v : tensor.values()) nonzero += v != R(0);
    return CodedTensor(std::move(tensor), nonzero);
  }

  const Tensor<R>& tensor() const { return tensor_; }
  const Shape& shape() const { return tensor_.shape(); }
  std::size_t nonzero() const { return nonzero_; }
  /// Fraction of nonzero elements.
  double density() const {
    return tensor_.numel() ? static_cast<double>(nonzero_) / static_cast<double>(tensor_.numel())
                           : 0.0;
  }

 private:
  CodedTensor(Tensor<R> tensor, std::size_t nonzero)
      : tensor_(std::move(tensor)), nonzero_(nonzero) {}

  Tensor<R> tensor_;
  std::size_t nonzero_;
};

template <typename R>
using SpikeTensor = CodedTensor<R, Codomain::binary>;
template <typename R>
using TernaryTensor = CodedTensor<R, Codomain::ternary>;

}  // namespace a2os2a
