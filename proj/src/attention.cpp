#include "a2os2a/attention.hpp"

#include <cmath>

namespace a2os2a {

std::string to_string(AttentionVariant variant) {
  switch (variant) {
    case AttentionVariant::vsa: return "vsa";
    case AttentionVariant::vssa: return "vssa";
    case AttentionVariant::a2os2a: return "a2os2a";
  }
  return "unknown";
}

AttentionVariant parse_attention_variant(std::string_view text) {
  if (text == "vsa") return AttentionVariant::vsa;
  if (text == "vssa") return AttentionVariant::vssa;
  if (text == "a2os2a") return AttentionVariant::a2os2a;
  throw ConfigError("unknown attention variant '" + std::string(text) + "'");
}

void AttentionConfig::validate(std::size_t dim) const {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention heads (" + std::to_string(heads) + ") must divide D (" +
                      std::to_string(dim) + ")");
  }
  if (!(vssa_scale > 0.0)) throw ConfigError("VSSA scale must be > 0");
  if (d_k < 0.0) throw ConfigError("d_k must be >= 0");
}

namespace {

struct Grouping {
  Shape original;
  std::size_t groups;  // T × G
  std::size_t tokens;
  std::size_t width;
};

template <typename R>
Grouping grouping_of(const Tensor<R>& x, const char* what) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw DimensionError(std::string(what) + " must be [T,N,d] or [T,G,N,d], got " +
                         shape_str(x.shape()));
  }
  const std::size_t width = x.shape().back();
  const std::size_t tokens = x.shape()[x.rank() - 2];
  return {x.shape(), x.numel() / (width * tokens), tokens, width};
}

template <typename R>
Tensor<R> as_groups(const Tensor<R>& x, const Grouping& g) {
  return reshape(x, {g.groups, g.tokens, g.width});
}

// Q and K must agree exactly; V must share everything except its width.
template <typename R>
void check_qkv(const Tensor<R>& q, const Tensor<R>& k, const Tensor<R>& v) {
  if (q.shape() != k.shape() || v.rank() != q.rank() ||
      !std::equal(q.shape().begin(), q.shape().end() - 1, v.shape().begin())) {
    throw DimensionError("attention operands " + shape_str(q.shape()) + ", " +
                         shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
}

std::string join(std::string_view a, std::string_view b) {
  return std::string(a) + "." + std::string(b);
}

template <typename R>
Tensor<R> from_groups(const Tensor<R>& x, const Grouping& g, std::size_t width) {
  Shape shape = g.original;
  shape.back() = width;
  return reshape(x, std::move(shape));
}

template <typename R>
Tensor<R> output_neuron(const Tensor<R>& pre, const NeuronParams& neuron, ForwardTrace* trace,
                        std::string_view name) {
  SpikeStats stats;
  Tensor<R> out = run_sequence(NeuronKind::binary, pre, neuron, &stats);
  if (trace) trace->record_neuron(join(name, "out_sn"), stats);
  return out;
}

}  // namespace

template <typename R>
Tensor<R> vsa(const Tensor<R>& q, const Tensor<R>& k, const Tensor<R>& v, double d_k,
              ForwardTrace* trace, std::string_view name) {
  check_qkv(q, k, v);
  if (!(d_k > 0.0)) throw ConfigError("VSA needs d_k > 0");
  const Grouping g = grouping_of(q, "Q");
  const Grouping gv = grouping_of(v, "V");
  KernelStats qk, av;
  const Tensor<R> scores =
      batched_matmul(as_groups(q, g), transpose_last2(as_groups(k, g)), ProductKernel::dense, &qk);
  const Tensor<R> weights = softmax_last(scale(scores, static_cast<R>(1.0 / std::sqrt(d_k))));
  const Tensor<R> out = batched_matmul(weights, as_groups(v, gv), ProductKernel::dense, &av);
  if (trace) {
    trace->record_kernel(join(name, "qk"), OpKind::attention_product, qk);
    trace->record({join(name, "softmax"), OpKind::elementwise, 2 * scores.numel(),
                   2 * scores.numel(), 0});
    trace->record_kernel(join(name, "av"), OpKind::attention_product, av);
  }
  return from_groups(out, g, gv.width);
}

template <typename R>
Tensor<R> vssa_pre_neuron(const SpikeTensor<R>& q, const SpikeTensor<R>& k,
                          const SpikeTensor<R>& v, double s, ForwardTrace* trace,
                          std::string_view name) {
  check_qkv(q.tensor(), k.tensor(), v.tensor());
  const Grouping g = grouping_of(q.tensor(), "Q");
  const Grouping gv = grouping_of(v.tensor(), "V");
  KernelStats qk, av;
  const Tensor<R> map = batched_matmul(as_groups(q.tensor(), g),
                                       transpose_last2(as_groups(k.tensor(), g)),
                                       ProductKernel::binary_left, &qk);
  const Tensor<R> product =
      batched_matmul(map, as_groups(v.tensor(), gv), ProductKernel::ternary_right, &av);
  const Tensor<R> scaled = scale(product, static_cast<R>(s));
  if (trace) {
    trace->record_kernel(join(name, "qk"), OpKind::attention_product, qk);
    trace->record_kernel(join(name, "av"), OpKind::attention_product, av);
    trace->record({join(name, "scale"), OpKind::elementwise, 0, product.numel(), 0});
  }
  return from_groups(scaled, g, gv.width);
}

template <typename R>
Tensor<R> vssa(const SpikeTensor<R>& q, const SpikeTensor<R>& k, const SpikeTensor<R>& v, double s,
               const NeuronParams& out_neuron, ForwardTrace* trace, std::string_view name) {
  return output_neuron(vssa_pre_neuron(q, k, v, s, trace, name), out_neuron, trace, name);
}

template <typename R>
Tensor<R> a2os2a_attention_map(const SpikeTensor<R>& q, const Tensor<R>& k, ForwardTrace* trace,
                               std::string_view name) {
  if (q.shape() != k.shape()) {
    throw DimensionError("attention operands " + shape_str(q.shape()) + ", " +
                         shape_str(k.shape()));
  }
  for (R value : k.values()) {
    if (value < R(0)) throw DomainError("A2OS2A keys must be non-negative");
  }
  const Grouping g = grouping_of(q.tensor(), "Q");
  KernelStats qk;
  const Tensor<R> map = batched_matmul(as_groups(q.tensor(), g), transpose_last2(as_groups(k, g)),
                                       ProductKernel::binary_left, &qk);
  if (trace) trace->record_kernel(join(name, "qk"), OpKind::attention_product, qk);
  return map;
}

template <typename R>
Tensor<R> a2os2a_pre_neuron(const SpikeTensor<R>& q, const Tensor<R>& k, const TernaryTensor<R>& v,
                            ForwardTrace* trace, std::string_view name) {
  check_qkv(q.tensor(), k, v.tensor());
  const Tensor<R> map = a2os2a_attention_map(q, k, trace, name);
  const Grouping g = grouping_of(q.tensor(), "Q");
  const Grouping gv = grouping_of(v.tensor(), "V");
  KernelStats av;
  const Tensor<R> product =
      batched_matmul(map, as_groups(v.tensor(), gv), ProductKernel::ternary_right, &av);
  if (trace) trace->record_kernel(join(name, "av"), OpKind::attention_product, av);
  return from_groups(product, g, gv.width);
}

template <typename R>
Tensor<R> a2os2a(const SpikeTensor<R>& q, const Tensor<R>& k, const TernaryTensor<R>& v,
                 const NeuronParams& out_neuron, ForwardTrace* trace, std::string_view name) {
  return output_neuron(a2os2a_pre_neuron(q, k, v, trace, name), out_neuron, trace, name);
}

template <typename R>
Qkv<R> project_qkv(const Tensor<R>& x, AttentionWeights<R>& weights, const AttentionConfig& cfg,
                   const NeuronParams& neuron, Mode mode, ForwardTrace* trace,
                   std::string_view name) {
  if (x.rank() < 2 || x.shape().back() != weights.w_q.dim(0)) {
    throw DimensionError("project_qkv: input " + shape_str(x.shape()) + " for weights " +
                         shape_str(weights.w_q.shape()));
  }
  const bool binary_input = is_binary<R>(x.values());
  auto project = [&](const Tensor<R>& w, const char* which) {
    KernelStats stats;
    Tensor<R> y = linear(x, w, nullptr, &stats);
    if (trace) {
      const std::string layer = join(name, std::string(which) + "_proj");
      trace->probe_weight_input(layer, true, binary_input);
      trace->record_kernel(layer, OpKind::weight_layer, stats);
    }
    return y;
  };
  auto fire = [&](NeuronKind kind, const Tensor<R>& u, const char* which) {
    SpikeStats stats;
    Tensor<R> s = run_sequence(kind, u, neuron, &stats);
    if (trace) trace->record_neuron(join(name, std::string(which) + "_sn"), stats);
    return s;
  };

  Tensor<R> q = project(weights.w_q, "q");
  Tensor<R> k = project(weights.w_k, "k");
  Tensor<R> v = project(weights.w_v, "v");
  switch (cfg.variant) {
    case AttentionVariant::vsa:
      return {q, k, v};
    case AttentionVariant::vssa:
      return {fire(NeuronKind::binary, weights.bn_q.apply(q, mode), "q"),
              fire(NeuronKind::binary, weights.bn_k.apply(k, mode), "k"),
              fire(NeuronKind::binary, weights.bn_v.apply(v, mode), "v")};
    case AttentionVariant::a2os2a:
      return {fire(NeuronKind::binary, weights.bn_q.apply(q, mode), "q"),
              relu_activation(weights.bn_k.apply(k, mode)),
              fire(NeuronKind::ternary, weights.bn_v.apply(v, mode), "v")};
  }
  throw ConfigError("unknown attention variant");
}

namespace {

// [T,B,N,D] -> [T,B·h,N,D/h]
template <typename R>
Tensor<R> split_heads(const Tensor<R>& x, std::size_t heads) {
  if (heads == 1) return x;
  const std::size_t t = x.dim(0), b = x.dim(1), n = x.dim(2), d = x.dim(3);
  const Tensor<R> split = reshape(x, {t, b, n, heads, d / heads});
  return reshape(permute(split, {0, 1, 3, 2, 4}), {t, b * heads, n, d / heads});
}

// [T,B·h,N,D/h] -> [T,B,N,D]
template <typename R>
Tensor<R> merge_heads(const Tensor<R>& x, std::size_t heads) {
  if (heads == 1) return x;
  const std::size_t t = x.dim(0), b = x.dim(1) / heads, n = x.dim(2), dh = x.dim(3);
  const Tensor<R> split = reshape(x, {t, b, heads, n, dh});
  return reshape(permute(split, {0, 1, 3, 2, 4}), {t, b, n, heads * dh});
}

}  // namespace

template <typename R>
Tensor<R> attention_forward(const Tensor<R>& x, AttentionWeights<R>& weights,
                            const AttentionConfig& cfg, const NeuronParams& neuron, Mode mode,
                            ForwardTrace* trace, std::string_view name) {
  if (x.rank() != 4) throw DimensionError("attention input must be [T,B,N,D], got " + shape_str(x.shape()));
  cfg.validate(x.dim(3));
  const Qkv<R> qkv = project_qkv(x, weights, cfg, neuron, mode, trace, name);
  const Tensor<R> q = split_heads(qkv.q, cfg.heads);
  const Tensor<R> k = split_heads(qkv.k, cfg.heads);
  const Tensor<R> v = split_heads(qkv.v, cfg.heads);
  Tensor<R> out;
  switch (cfg.variant) {
    case AttentionVariant::vsa:
      out = vsa(q, k, v, cfg.key_dim(x.dim(3)), trace, name);
      break;
    case AttentionVariant::vssa:
      out = vssa(SpikeTensor<R>::checked(q), SpikeTensor<R>::checked(k),
                 SpikeTensor<R>::checked(v), cfg.vssa_scale, neuron, trace, name);
      break;
    case AttentionVariant::a2os2a:
      out = a2os2a(SpikeTensor<R>::checked(q), k, TernaryTensor<R>::checked(v), neuron, trace, name);
      break;
  }
  return merge_heads(out, cfg.heads);
}

#define A2OS2A_INSTANTIATE(R)                                                                    \
  template Qkv<R> project_qkv<R>(const Tensor<R>&, AttentionWeights<R>&, const AttentionConfig&, \
                                 const NeuronParams&, Mode, ForwardTrace*, std::string_view);    \
  template Tensor<R> vsa<R>(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&, double,        \
                            ForwardTrace*, std::string_view);                                    \
  template Tensor<R> vssa_pre_neuron<R>(const SpikeTensor<R>&, const SpikeTensor<R>&,            \
                                        const SpikeTensor<R>&, double, ForwardTrace*,            \
                                        std::string_view);                                       \
  template Tensor<R> vssa<R>(const SpikeTensor<R>&, const SpikeTensor<R>&, const SpikeTensor<R>&, \
                             double, const NeuronParams&, ForwardTrace*, std::string_view);      \
  template Tensor<R> a2os2a_attention_map<R>(const SpikeTensor<R>&, const Tensor<R>&,            \
                                             ForwardTrace*, std::string_view);                   \
  template Tensor<R> a2os2a_pre_neuron<R>(const SpikeTensor<R>&, const Tensor<R>&,               \
                                          const TernaryTensor<R>&, ForwardTrace*,                \
                                          std::string_view);                                     \
  template Tensor<R> a2os2a<R>(const SpikeTensor<R>&, const Tensor<R>&, const TernaryTensor<R>&, \
                               const NeuronParams&, ForwardTrace*, std::string_view);            \
  template Tensor<R> attention_forward<R>(const Tensor<R>&, AttentionWeights<R>&,                \
                                          const AttentionConfig&, const NeuronParams&, Mode,     \
                                          ForwardTrace*, std::string_view);

A2OS2A_INSTANTIATE(float)
A2OS2A_INSTANTIATE(double)

#undef A2OS2A_INSTANTIATE

}  // namespace a2os2a
