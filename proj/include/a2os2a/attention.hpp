#pragma once

// Self-attention variants over token tensors shaped [T, N, d] or
// [T, G, N, d] (G independent groups: batch × heads). Attention never mixes
// timesteps; every (t, g) slice is one N×d attention problem.
//
//   VSA     softmax(Q·Kᵀ / √d_k)·V                 Q, K, V real
//   VSSA    SN(Q·Kᵀ·V · s)                          Q, K, V binary
//   A2OS2A  SN(Q·Kᵀ·V)                              Q binary, K ≥ 0 real, V ternary
//
// The spiking variants evaluate both products as (Q·Kᵀ)·V through the
// addition-only kernels, so no multiplication happens inside them.

#include <string>
#include <string_view>

#include "a2os2a/coded_tensor.hpp"
#include "a2os2a/neurons.hpp"
#include "a2os2a/ops.hpp"
#include "a2os2a/trace.hpp"

namespace a2os2a {

enum class AttentionVariant { vsa, vssa, a2os2a };

std::string to_string(AttentionVariant variant);
/// Accepts "vsa", "vssa", "a2os2a"; throws ConfigError otherwise.
AttentionVariant parse_attention_variant(std::string_view text);

struct AttentionConfig {
  AttentionVariant variant = AttentionVariant::a2os2a;
  /// Key dimension for the VSA scaling; 0 means the per-head dimension.
  double d_k = 0.0;
  /// VSSA output scaling factor.
  double vssa_scale = 0.125;
  std::size_t heads = 1;

  void validate(std::size_t dim) const;
  double key_dim(std::size_t dim) const { return d_k > 0.0 ? d_k : double(dim / heads); }
};

template <typename R>
struct AttentionWeights {
  Tensor<R> w_q, w_k, w_v;  // [D×D]
  BatchNormParams<R> bn_q, bn_k, bn_v;
};

template <typename R>
struct Qkv {
  Tensor<R> q, k, v;
};

/// Projects x[T, ..., D] to Q, K, V according to the variant:
///   VSA     Q, K, V = X·W
///   VSSA    SN_b(BN(X·W)) for all three
///   A2OS2A  Q = SN_b(BN(X·W_Q)), K = ReLU(BN(X·W_K)), V = SN_t(BN(X·W_V))
template <typename R>
Qkv<R> project_qkv(const Tensor<R>& x, AttentionWeights<R>& weights, const AttentionConfig& cfg,
                   const NeuronParams& neuron, Mode mode, ForwardTrace* trace = nullptr,
                   std::string_view name = "attn");

/// softmax(Q·Kᵀ/√d_k)·V per timestep and group.
template <typename R>
Tensor<R> vsa(const Tensor<R>& q, const Tensor<R>& k, const Tensor<R>& v, double d_k,
              ForwardTrace* trace = nullptr, std::string_view name = "attn");

/// Q·Kᵀ·V·s before the output neuron. The map Q·Kᵀ holds non-negative integers.
template <typename R>
Tensor<R> vssa_pre_neuron(const SpikeTensor<R>& q, const SpikeTensor<R>& k,
                          const SpikeTensor<R>& v, double s, ForwardTrace* trace = nullptr,
                          std::string_view name = "attn");

/// SN(Q·Kᵀ·V·s) with a binary output neuron.
template <typename R>
Tensor<R> vssa(const SpikeTensor<R>& q, const SpikeTensor<R>& k, const SpikeTensor<R>& v,
               double s, const NeuronParams& out_neuron, ForwardTrace* trace = nullptr,
               std::string_view name = "attn");

/// The attention map Q·Kᵀ for binary Q and non-negative K, with no softmax.
/// Throws DomainError if K has a negative element.
template <typename R>
Tensor<R> a2os2a_attention_map(const SpikeTensor<R>& q, const Tensor<R>& k,
                               ForwardTrace* trace = nullptr, std::string_view name = "attn");

/// (Q·Kᵀ)·V, the value handed to the output neuron. May be negative.
template <typename R>
Tensor<R> a2os2a_pre_neuron(const SpikeTensor<R>& q, const Tensor<R>& k, const TernaryTensor<R>& v,
                            ForwardTrace* trace = nullptr, std::string_view name = "attn");

/// SN(Q·Kᵀ·V): no softmax and no scaling factor; binary output neuron.
template <typename R>
Tensor<R> a2os2a(const SpikeTensor<R>& q, const Tensor<R>& k, const TernaryTensor<R>& v,
                 const NeuronParams& out_neuron, ForwardTrace* trace = nullptr,
                 std::string_view name = "attn");

/// Projection, head split, the configured variant and head merge, for
/// x[T, B, N, D]. Returns [T, B, N, D].
template <typename R>
Tensor<R> attention_forward(const Tensor<R>& x, AttentionWeights<R>& weights,
                            const AttentionConfig& cfg, const NeuronParams& neuron, Mode mode,
                            ForwardTrace* trace = nullptr, std::string_view name = "attn");

}  // namespace a2os2a
