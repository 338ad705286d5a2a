#include "a2os2a/neurons.hpp"

#include <cmath>

namespace a2os2a {

void NeuronParams::validate() const {
  if (!(v_th > 0.0) || !std::isfinite(v_th)) throw ConfigError("neuron threshold must be > 0");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("neuron decay must lie in [0,1]");
  if (!std::isfinite(v_reset)) throw ConfigError("neuron reset potential must be finite");
  if (!(surrogate.alpha > 0.0)) throw ConfigError("surrogate window must be > 0");
}

namespace {

template <typename R>
void require_state_shape(const NeuronState<R>& state, const Tensor<R>& x) {
  if (state.h.shape() != x.shape()) {
    throw DimensionError("neuron input " + shape_str(x.shape()) + " does not match state " +
                         shape_str(state.h.shape()));
  }
}

// H' = v_reset·s + (β·U)·(1 − m), m the firing magnitude.
template <typename R>
Tensor<R> next_membrane(const Tensor<R>& u, const Tensor<R>& s, const Tensor<R>& m,
                        const NeuronParams& p) {
  const Tensor<R> keep = add_scalar(scale(m, R(-1)), R(1));
  return add(scale(s, static_cast<R>(p.v_reset)), mul(scale(u, static_cast<R>(p.beta)), keep));
}

}  // namespace

template <typename R>
StepResult<R> lif_step(const NeuronState<R>& state, const Tensor<R>& x, const NeuronParams& params) {
  require_state_shape(state, x);
  const Tensor<R> u = add(state.h, x);
  const Tensor<R> s = spike_heaviside(u, static_cast<R>(params.v_th), params.surrogate);
  return {s, {next_membrane(u, s, s, params)}};
}

template <typename R>
StepResult<R> ternary_step(const NeuronState<R>& state, const Tensor<R>& x,
                           const NeuronParams& params) {
  require_state_shape(state, x);
  const R v_th = static_cast<R>(params.v_th);
  const Tensor<R> u = add(state.h, x);
  const Tensor<R> s = spike_ternary(u, v_th, params.surrogate);
  const Tensor<R> m = spike_heaviside(abs_value(u), v_th, params.surrogate);
  return {s, {next_membrane(u, s, m, params)}};
}

template <typename R>
Tensor<R> run_sequence(NeuronKind kind, const Tensor<R>& x, const NeuronParams& params,
                       SpikeStats* stats) {
  if (x.rank() == 0 || x.dim(0) == 0) {
    throw DimensionError("run_sequence needs a leading time dimension, got " + shape_str(x.shape()));
  }
  const std::size_t steps = x.dim(0);
  const std::size_t n = x.numel() / steps;
  const R v_th = static_cast<R>(params.v_th);
  const R v_reset = static_cast<R>(params.v_reset);
  const R beta = static_cast<R>(params.beta);
  const R alpha = static_cast<R>(params.surrogate.alpha);
  const bool relaxed = params.surrogate.relaxed_forward;
  const bool ternary = kind == NeuronKind::ternary;

  auto xv = x.values();
  std::vector<R> out(x.numel());
  auto membrane = std::make_shared<std::vector<R>>(x.numel());  // U[t]
  std::vector<R> h(n, R(0));
  std::uint64_t nonzero = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = t * n + i;
      const R u = h[i] + xv[idx];
      R s, m;
      if (ternary) {
        const R sign = u > R(0) ? R(1) : (u < R(0) ? R(-1) : R(0));
        m = relaxed ? relaxed_step(std::abs(u) - v_th, alpha)
                    : (std::abs(u) - v_th >= R(0) ? R(1) : R(0));
        s = sign * m;
      } else {
        m = relaxed ? relaxed_step(u - v_th, alpha) : (u - v_th >= R(0) ? R(1) : R(0));
        s = m;
      }
      (*membrane)[idx] = u;
      out[idx] = s;
      h[i] = s * v_reset + (u * beta) * ((-m) + R(1));
      if (s != R(0)) ++nonzero;
    }
  }
  if (stats) {
    stats->elements += x.numel();
    stats->nonzero += nonzero;
    stats->comparisons += x.numel() * (ternary ? 2 : 1);
  }

  return detail::make_result<R>(
      x.shape(), out, {&x},
      [membrane, steps, n, v_th, v_reset, beta, alpha, relaxed, ternary](detail::Node<R>& node) {
        auto* gx = detail::input_grad(node, 0);
        if (!gx) return;
        const auto& ds = node.grad;
        std::vector<R> dh(n, R(0));
        for (std::size_t t = steps; t-- > 0;) {
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t idx = t * n + i;
            const R u = (*membrane)[idx];
            R m, g, dm_du;
            if (ternary) {
              const R d = std::abs(u) - v_th;
              m = relaxed ? relaxed_step(d, alpha) : (d >= R(0) ? R(1) : R(0));
              g = surrogate_derivative(d, alpha);
              const R sign = u > R(0) ? R(1) : (u < R(0) ? R(-1) : R(0));
              dm_du = sign * g;
            } else {
              const R d = u - v_th;
              m = relaxed ? relaxed_step(d, alpha) : (d >= R(0) ? R(1) : R(0));
              g = surrogate_derivative(d, alpha);
              dm_du = g;
            }
            // ds/du = g for both kinds; dH/du through the spike and the leak.
            const R dh_du = v_reset * g + beta * ((-m) + R(1)) - beta * u * dm_du;
            const R du = ds[idx] * g + dh[i] * dh_du;
            (*gx)[idx] += du;
            dh[i] = du;
          }
        }
      });
}

template <typename R>
Tensor<R> run_sequence_stepwise(NeuronKind kind, const Tensor<R>& x, const NeuronParams& params) {
  if (x.rank() == 0 || x.dim(0) == 0) {
    throw DimensionError("run_sequence needs a leading time dimension, got " + shape_str(x.shape()));
  }
  Shape inner(x.shape().begin() + 1, x.shape().end());
  auto state = NeuronState<R>::resting(inner);
  std::vector<Tensor<R>> spikes;
  for (std::size_t t = 0; t < x.dim(0); ++t) {
    const Tensor<R> xt = slice_first(x, t);
    auto step = kind == NeuronKind::binary ? lif_step(state, xt, params)
                                           : ternary_step(state, xt, params);
    spikes.push_back(step.spikes);
    state = step.state;
  }
  return stack_first(spikes);
}

#define A2OS2A_INSTANTIATE(R)                                                                   \
  template StepResult<R> lif_step<R>(const NeuronState<R>&, const Tensor<R>&,                   \
                                     const NeuronParams&);                                      \
  template StepResult<R> ternary_step<R>(const NeuronState<R>&, const Tensor<R>&,               \
                                         const NeuronParams&);                                  \
  template Tensor<R> run_sequence<R>(NeuronKind, const Tensor<R>&, const NeuronParams&,         \
                                     SpikeStats*);                                              \
  template Tensor<R> run_sequence_stepwise<R>(NeuronKind, const Tensor<R>&, const NeuronParams&);

A2OS2A_INSTANTIATE(float)
A2OS2A_INSTANTIATE(double)

#undef A2OS2A_INSTANTIATE

}  // namespace a2os2a
