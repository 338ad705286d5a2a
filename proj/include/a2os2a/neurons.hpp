#pragma once

// Leaky integrate-and-fire layers.
//
//   U[t] = H[t-1] + X[t]
//   S[t] = fire(U[t])
//   H[t] = V_reset·S[t] + β·U[t]·(1 − |S[t]|)
//
// The binary neuron fires Hea(U − V_th) ∈ {0,1}; the ternary neuron fires
// sign(U)·Hea(|U| − V_th) ∈ {−1,0,1}.

#include <cstdint>

#include "a2os2a/ops.hpp"

namespace a2os2a {

struct NeuronParams {
  double v_th = 1.0;
  double v_reset = 0.0;
  double beta = 0.5;
  SurrogateSpec surrogate{};

  /// Throws ConfigError unless v_th > 0 and 0 <= beta <= 1.
  void validate() const;
};

enum class NeuronKind { binary, ternary };

template <typename R>
struct NeuronState {
  Tensor<R> h;

  static NeuronState resting(const Shape& shape) { return {Tensor<R>::zeros(shape)}; }
};

template <typename R>
struct StepResult {
  Tensor<R> spikes;
  NeuronState<R> state;
};

/// One binary LIF step built from primitive ops.
template <typename R>
StepResult<R> lif_step(const NeuronState<R>& state, const Tensor<R>& x, const NeuronParams& params);

/// One ternary LIF step built from primitive ops.
template <typename R>
StepResult<R> ternary_step(const NeuronState<R>& state, const Tensor<R>& x,
                           const NeuronParams& params);

/// Firing summary of one sequence run.
struct SpikeStats {
  std::uint64_t elements = 0;  ///< neuron updates (elements × T)
  std::uint64_t nonzero = 0;   ///< emitted spikes, either sign
  std::uint64_t comparisons = 0;

  double rate() const { return elements ? static_cast<double>(nonzero) / elements : 0.0; }
};

/// Runs a neuron over x[T, ...] from a resting state as one fused op, with
/// backpropagation through time under the surrogate derivative (the reset
/// path included). Output has the shape of x.
template <typename R>
Tensor<R> run_sequence(NeuronKind kind, const Tensor<R>& x, const NeuronParams& params,
                       SpikeStats* stats = nullptr);

/// Same dynamics unrolled through lif_step / ternary_step. Slower; used as a
/// second route to check run_sequence.
template <typename R>
Tensor<R> run_sequence_stepwise(NeuronKind kind, const Tensor<R>& x, const NeuronParams& params);

/// Max(0, x), the activation that produces non-negative real keys.
template <typename R>
Tensor<R> relu_activation(const Tensor<R>& x) {
  return relu(x);
}

}  // namespace a2os2a
