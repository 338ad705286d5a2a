#pragma once

// Differentiable operations on Tensor. Every op records a backward rule on
// the active tape when an input requires a gradient.

#include <type_traits>
#include <cstddef>
#include <span>
#include <vector>

#include "a2os2a/kernels.hpp"
#include "a2os2a/tensor.hpp"

namespace a2os2a {

enum class Mode { train, eval };

// ---- elementwise ----------------------------------------------------------

template <typename R>
Tensor<R> add(const Tensor<R>& a, const Tensor<R>& b);
template <typename R>
Tensor<R> sub(const Tensor<R>& a, const Tensor<R>& b);
template <typename R>
Tensor<R> mul(const Tensor<R>& a, const Tensor<R>& b);
template <typename R>
Tensor<R> scale(const Tensor<R>& a, R factor);
template <typename R>
Tensor<R> add_scalar(const Tensor<R>& a, R offset);
/// max(0, x); the backward gate is 1 where x > 0 and 0 elsewhere.
template <typename R>
Tensor<R> relu(const Tensor<R>& a);
/// |x|; derivative sign(x), 0 at 0.
template <typename R>
Tensor<R> abs_value(const Tensor<R>& a);

// ---- reductions -----------------------------------------------------------

template <typename R>
Tensor<R> sum(const Tensor<R>& a);
template <typename R>
Tensor<R> mean(const Tensor<R>& a);
/// x[a,b,c] -> mean over b -> [a,c].
template <typename R>
Tensor<R> mean_axis1(const Tensor<R>& x);

// ---- layout ---------------------------------------------------------------

template <typename R>
Tensor<R> reshape(const Tensor<R>& x, Shape shape);
/// Output dim i is input dim perm[i].
template <typename R>
Tensor<R> permute(const Tensor<R>& x, const std::vector<std::size_t>& perm);
/// Swaps the last two dimensions.
template <typename R>
Tensor<R> transpose_last2(const Tensor<R>& x);
/// x[i, ...] along the leading dimension.
template <typename R>
Tensor<R> slice_first(const Tensor<R>& x, std::size_t index);
/// Stacks equally shaped tensors along a new leading dimension.
template <typename R>
Tensor<R> stack_first(const std::vector<Tensor<R>>& parts);
/// x[B, ...] -> [times·B, ...], copy t occupying rows [t·B, (t+1)·B).
template <typename R>
Tensor<R> repeat_first(const Tensor<R>& x, std::size_t times);

// ---- linear algebra -------------------------------------------------------

/// Dense reference product C = A·B for A[m×k], B[k×n].
template <typename R>
Tensor<R> matmul(const Tensor<R>& a, const Tensor<R>& b, KernelStats* stats = nullptr);

/// y[..., n] = x[..., k]·W[k×n] (+ bias[n]). A binary x runs through the
/// addition-only kernel; anything else through the dense kernel.
template <typename R>
Tensor<R> linear(const Tensor<R>& x, const Tensor<R>& weight, const std::type_identity_t<Tensor<R>>* bias = nullptr,
                 KernelStats* stats = nullptr);

enum class ProductKernel {
  dense,          ///< multiply-accumulate
  binary_left,    ///< left operand must be binary
  ternary_right,  ///< right operand must be ternary
};

/// C[g] = A[g]·B[g] for A[G×m×k], B[G×k×n]. Backward is the dense rule for
/// every kernel choice.
template <typename R>
Tensor<R> batched_matmul(const Tensor<R>& a, const Tensor<R>& b, ProductKernel kernel,
                         KernelStats* stats = nullptr);

/// Softmax over the last dimension.
template <typename R>
Tensor<R> softmax_last(const Tensor<R>& x);

// ---- normalisation --------------------------------------------------------

template <typename R>
struct BatchNormState {
  std::vector<R> running_mean;
  std::vector<R> running_var;
  bool initialized = false;
  double momentum = 0.1;
  /// Equal-weight running average instead of the exponential one.
  bool cumulative = false;
  std::size_t updates = 0;

  void clear() {
    running_mean.clear();
    running_var.clear();
    initialized = false;
    updates = 0;
  }
};

inline constexpr double kBatchNormEps = 1e-5;

/// Per-channel normalisation of x[..., C] over all leading positions.
/// Train mode uses batch statistics (biased variance) and updates `state`
/// with the unbiased variance; eval mode uses `state` and throws StateError if
/// it was never populated.
template <typename R>
Tensor<R> batch_norm(const Tensor<R>& x, const Tensor<R>& gamma, const Tensor<R>& beta,
                     BatchNormState<R>& state, Mode mode, double eps = kBatchNormEps);

/// Learnable affine parameters plus running statistics of one BN layer.
template <typename R>
struct BatchNormParams {
  Tensor<R> gamma;
  Tensor<R> beta;
  BatchNormState<R> state;

  static BatchNormParams create(std::size_t channels) {
    return {Tensor<R>::full({channels}, R(1), true), Tensor<R>::zeros({channels}, true), {}};
  }
  Tensor<R> apply(const Tensor<R>& x, Mode mode) {
    return batch_norm(x, gamma, beta, state, mode);
  }
};

// ---- convolution ----------------------------------------------------------

/// Stride-1 "same" convolution on x[B,H,W,C] with weight[K·K·C × O], rows
/// ordered (ky, kx, c). Binary inputs run through the addition-only kernel.
template <typename R>
Tensor<R> conv2d(const Tensor<R>& x, const Tensor<R>& weight, std::size_t kernel,
                 KernelStats* stats = nullptr);

/// Max pooling on x[B,H,W,C].
template <typename R>
Tensor<R> max_pool2d(const Tensor<R>& x, std::size_t kernel = 3, std::size_t stride = 2,
                     std::size_t padding = 1);

// ---- spike functions ------------------------------------------------------

struct SurrogateSpec {
  /// Half-width of the triangular window.
  double alpha = 1.0;
  /// Replace the forward step by the integral of the surrogate. The backward
  /// rule is then the exact derivative of the forward, which makes whole
  /// spiking graphs checkable by finite differences. Testing only.
  bool relaxed_forward = false;
};

/// g(d) = (1/α)·max(0, 1 − |d|/α), d = u − v_th.
template <typename R>
R surrogate_derivative(R distance, R alpha);
/// ∫g: 0 below −α, 1 above α, piecewise quadratic in between.
template <typename R>
R relaxed_step(R distance, R alpha);

/// Hea(u − v_th) with Hea(0) = 1; backward is g(u − v_th).
template <typename R>
Tensor<R> spike_heaviside(const Tensor<R>& u, R v_th, const SurrogateSpec& surrogate = {});

/// sign(u)·Hea(|u| − v_th) ∈ {−1,0,1}; backward is g(|u| − v_th), the sign
/// passing through.
template <typename R>
Tensor<R> spike_ternary(const Tensor<R>& u, R v_th, const SurrogateSpec& surrogate = {});

// ---- loss -----------------------------------------------------------------

/// Mean cross-entropy of logits[B×C] against integer labels.
template <typename R>
Tensor<R> cross_entropy(const Tensor<R>& logits, std::span<const int> labels);

}  // namespace a2os2a
