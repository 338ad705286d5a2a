#include "a2os2a/model.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <random>

namespace a2os2a {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError("key '" + key + "': '" + text + "' is not a number");
  }
  return v;
}

std::size_t parse_size(const std::string& key, const std::string& text) {
  std::size_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("key '" + key + "': '" + text + "' is not a non-negative integer");
  }
  return v;
}

}  // namespace

void ModelConfig::validate() const {
  if (timesteps == 0) throw ConfigError("timesteps must be >= 1");
  if (dim == 0 || dim % 8 != 0) throw ConfigError("D must be a positive multiple of 8");
  if (in_channels == 0 || image_height == 0 || image_width == 0) {
    throw ConfigError("image dimensions must be positive");
  }
  if (patch_size == 0 || !std::has_single_bit(patch_size) ||
      patch_size > (std::size_t{1} << kSpsStages)) {
    throw ConfigError("patch size must be a power of two no larger than " +
                      std::to_string(std::size_t{1} << kSpsStages));
  }
  if (image_height % patch_size != 0 || image_width % patch_size != 0) {
    throw ConfigError("image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                      " is not divisible by patch size " + std::to_string(patch_size));
  }
  if (num_classes == 0) throw ConfigError("num_classes must be >= 1");
  if (!(mlp_ratio > 0.0) || mlp_hidden() == 0) throw ConfigError("mlp_ratio must be > 0");
  attention.validate(dim);
  neuron.validate();
}

std::size_t ModelConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::llround(mlp_ratio * static_cast<double>(dim)));
}

std::size_t ModelConfig::sps_channels(std::size_t i) const {
  switch (i) {
    case 0: return in_channels;
    case 1: return dim / 8;
    case 2: return dim / 4;
    case 3: return dim / 2;
    default: return dim;
  }
}

bool ModelConfig::sps_pools(std::size_t stage) const {
  const std::size_t pools = static_cast<std::size_t>(std::countr_zero(patch_size));
  return stage + pools >= kSpsStages;
}

std::string ModelConfig::name() const {
  return "Spiking Transformer-" + std::to_string(layers) + "-" + std::to_string(dim);
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_key_values() const {
  return {
      {"layers", std::to_string(layers)},
      {"dim", std::to_string(dim)},
      {"timesteps", std::to_string(timesteps)},
      {"patch_size", std::to_string(patch_size)},
      {"in_channels", std::to_string(in_channels)},
      {"image_height", std::to_string(image_height)},
      {"image_width", std::to_string(image_width)},
      {"num_classes", std::to_string(num_classes)},
      {"attention", to_string(attention.variant)},
      {"heads", std::to_string(attention.heads)},
      {"d_k", format_double(attention.d_k)},
      {"vssa_scale", format_double(attention.vssa_scale)},
      {"mlp_ratio", format_double(mlp_ratio)},
      {"v_th", format_double(neuron.v_th)},
      {"v_reset", format_double(neuron.v_reset)},
      {"beta", format_double(neuron.beta)},
      {"surrogate_alpha", format_double(neuron.surrogate.alpha)},
  };
}

bool ModelConfig::set(const std::string& key, const std::string& value) {
  if (key == "layers") layers = parse_size(key, value);
  else if (key == "dim") dim = parse_size(key, value);
  else if (key == "timesteps") timesteps = parse_size(key, value);
  else if (key == "patch_size") patch_size = parse_size(key, value);
  else if (key == "in_channels") in_channels = parse_size(key, value);
  else if (key == "image_height") image_height = parse_size(key, value);
  else if (key == "image_width") image_width = parse_size(key, value);
  else if (key == "num_classes") num_classes = parse_size(key, value);
  else if (key == "attention") attention.variant = parse_attention_variant(value);
  else if (key == "heads") attention.heads = parse_size(key, value);
  else if (key == "d_k") attention.d_k = parse_double(key, value);
  else if (key == "vssa_scale") attention.vssa_scale = parse_double(key, value);
  else if (key == "mlp_ratio") mlp_ratio = parse_double(key, value);
  else if (key == "v_th") neuron.v_th = parse_double(key, value);
  else if (key == "v_reset") neuron.v_reset = parse_double(key, value);
  else if (key == "beta") neuron.beta = parse_double(key, value);
  else if (key == "surrogate_alpha") neuron.surrogate.alpha = parse_double(key, value);
  else return false;
  return true;
}

namespace {

// Spiking layer over a tensor whose leading dimension is T·B (or T).
template <typename R>
Tensor<R> fire(const Tensor<R>& x, NeuronKind kind, std::size_t timesteps,
               const NeuronParams& neuron, ForwardTrace* trace, const std::string& name) {
  SpikeStats stats;
  const Tensor<R> seq = reshape(x, {timesteps, x.numel() / timesteps});
  Tensor<R> s = reshape(run_sequence(kind, seq, neuron, &stats), x.shape());
  if (trace) trace->record_neuron(name, stats);
  return s;
}

template <typename R>
Tensor<R> conv_bn(const Tensor<R>& x, ConvBn<R>& layer, Mode mode, ForwardTrace* trace,
                  const std::string& name) {
  KernelStats stats;
  Tensor<R> y = conv2d(x, layer.weight, 3, &stats);
  if (trace) {
    trace->probe_weight_input(name, false, is_binary<R>(x.values()));
    trace->record_kernel(name, OpKind::weight_layer, stats);
  }
  return layer.bn.apply(y, mode);
}

template <typename R>
Tensor<R> linear_bn(const Tensor<R>& x, const Tensor<R>& weight, BatchNormParams<R>& bn, Mode mode,
                    ForwardTrace* trace, const std::string& name) {
  KernelStats stats;
  Tensor<R> y = linear(x, weight, nullptr, &stats);
  if (trace) {
    trace->probe_weight_input(name, true, is_binary<R>(x.values()));
    trace->record_kernel(name, OpKind::weight_layer, stats);
  }
  return bn.apply(y, mode);
}

template <typename R>
Tensor<R> residual(const Tensor<R>& a, const Tensor<R>& b, ForwardTrace* trace,
                   const std::string& name) {
  if (trace) trace->record({name, OpKind::elementwise, a.numel(), 0, 0});
  return add(a, b);
}

}  // namespace

template <typename R>
Tensor<R> sps_forward(const Tensor<R>& images, SpsParams<R>& params, const ModelConfig& cfg,
                      Mode mode, ForwardTrace* trace) {
  if (images.rank() != 4 || images.dim(1) != cfg.in_channels || images.dim(2) != cfg.image_height ||
      images.dim(3) != cfg.image_width) {
    throw DimensionError("SPS expects images [B," + std::to_string(cfg.in_channels) + "," +
                         std::to_string(cfg.image_height) + "," + std::to_string(cfg.image_width) +
                         "], got " + shape_str(images.shape()));
  }
  const std::size_t batch = images.dim(0);
  const std::size_t t = cfg.timesteps;
  Tensor<R> x = repeat_first(permute(images, {0, 2, 3, 1}), t);
  for (std::size_t i = 0; i < kSpsStages; ++i) {
    const std::string name = "sps.stage" + std::to_string(i);
    x = conv_bn(x, params.stages[i], mode, trace, name);
    if (i + 1 < kSpsStages) x = fire(x, NeuronKind::binary, t, cfg.neuron, trace, name + ".sn");
    if (cfg.sps_pools(i)) x = max_pool2d(x, 3, 2, 1);
  }
  const Tensor<R>& u = x;  // [T·B, h, w, D] membrane potentials
  const Tensor<R> s = fire(u, NeuronKind::binary, t, cfg.neuron, trace, "sps.sn");
  const Tensor<R> rpe = conv_bn(s, params.rpe, mode, trace, "sps.rpe");
  const Tensor<R> u0 = residual(u, rpe, trace, "sps.residual");
  return reshape(u0, {t, batch, cfg.tokens(), cfg.dim});
}

template <typename R>
BlockOutput<R> encoder_block(const Tensor<R>& spikes, const Tensor<R>& membrane,
                             EncoderBlockParams<R>& params, const ModelConfig& cfg, Mode mode,
                             ForwardTrace* trace, const std::string& name) {
  if (spikes.rank() != 4 || spikes.shape() != membrane.shape() || spikes.dim(3) != cfg.dim) {
    throw DimensionError("encoder block inputs " + shape_str(spikes.shape()) + " and " +
                         shape_str(membrane.shape()));
  }
  const std::size_t t = cfg.timesteps;
  const Tensor<R> attn = attention_forward(spikes, params.attention, cfg.attention, cfg.neuron,
                                           mode, trace, name + ".attn");
  const Tensor<R> u_attn = residual(attn, membrane, trace, name + ".attn_residual");
  const Tensor<R> s_attn = fire(u_attn, NeuronKind::binary, t, cfg.neuron, trace, name + ".sn1");

  Tensor<R> h = linear_bn(s_attn, params.mlp.w1, params.mlp.bn1, mode, trace, name + ".mlp.fc1");
  h = fire(h, NeuronKind::binary, t, cfg.neuron, trace, name + ".mlp.sn");
  const Tensor<R> mlp = linear_bn(h, params.mlp.w2, params.mlp.bn2, mode, trace, name + ".mlp.fc2");
  const Tensor<R> u_out = residual(mlp, u_attn, trace, name + ".mlp_residual");
  const Tensor<R> s_out = fire(u_out, NeuronKind::binary, t, cfg.neuron, trace, name + ".sn2");
  return {s_out, u_out};
}

template <typename R>
Tensor<R> classify(const Tensor<R>& spikes, const HeadParams<R>& head, ForwardTrace* trace) {
  const bool single = spikes.rank() == 3;
  if (!single && spikes.rank() != 4) {
    throw DimensionError("classify expects [T,B,N,D] or [T,N,D], got " + shape_str(spikes.shape()));
  }
  const Tensor<R> s4 = single
                           ? reshape(spikes, {spikes.dim(0), 1, spikes.dim(1), spikes.dim(2)})
                           : spikes;
  const std::size_t t = s4.dim(0), b = s4.dim(1), n = s4.dim(2), d = s4.dim(3);
  const Tensor<R> pooled = mean_axis1(reshape(permute(s4, {1, 0, 2, 3}), {b, t * n, d}));
  KernelStats stats;
  Tensor<R> logits = linear(pooled, head.weight, &head.bias, &stats);
  if (trace) {
    trace->record({"gap", OpKind::elementwise, s4.numel(), b * d, 0});
    trace->probe_weight_input("head", false, is_binary<R>(pooled.values()));
    trace->record_kernel("head", OpKind::head, stats);
  }
  if (single) return reshape(logits, {head.weight.dim(1)});
  return logits;
}

template <typename R>
SpikingTransformer<R> SpikingTransformer<R>::create(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SpikingTransformer model(cfg);
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<R> values(shape_numel(shape));
    for (R& v : values) v = static_cast<R>(dist(rng));
    return Tensor<R>(std::move(shape), std::move(values), true);
  };
  auto conv = [&](std::size_t in, std::size_t out) {
    return ConvBn<R>{uniform({9 * in, out}, 9 * in), BatchNormParams<R>::create(out)};
  };

  for (std::size_t i = 0; i < kSpsStages; ++i) {
    model.sps_.stages[i] = conv(cfg.sps_channels(i), cfg.sps_channels(i + 1));
  }
  model.sps_.rpe = conv(cfg.dim, cfg.dim);

  const std::size_t d = cfg.dim, hidden = cfg.mlp_hidden();
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    EncoderBlockParams<R> block;
    block.attention.w_q = uniform({d, d}, d);
    block.attention.w_k = uniform({d, d}, d);
    block.attention.w_v = uniform({d, d}, d);
    block.attention.bn_q = BatchNormParams<R>::create(d);
    block.attention.bn_k = BatchNormParams<R>::create(d);
    block.attention.bn_v = BatchNormParams<R>::create(d);
    block.mlp.w1 = uniform({d, hidden}, d);
    block.mlp.bn1 = BatchNormParams<R>::create(hidden);
    block.mlp.w2 = uniform({hidden, d}, hidden);
    block.mlp.bn2 = BatchNormParams<R>::create(d);
    model.blocks_.push_back(std::move(block));
  }
  model.head_.weight = uniform({d, cfg.num_classes}, d);
  model.head_.bias = uniform({cfg.num_classes}, d);
  return model;
}

template <typename R>
std::vector<std::pair<std::string, BatchNormParams<R>*>> SpikingTransformer<R>::batch_norms() {
  std::vector<std::pair<std::string, BatchNormParams<R>*>> out;
  for (std::size_t i = 0; i < kSpsStages; ++i) {
    out.emplace_back("sps.stage" + std::to_string(i) + ".bn", &sps_.stages[i].bn);
  }
  out.emplace_back("sps.rpe.bn", &sps_.rpe.bn);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const std::string p = "block" + std::to_string(l);
    auto& b = blocks_[l];
    out.emplace_back(p + ".attn.bn_q", &b.attention.bn_q);
    out.emplace_back(p + ".attn.bn_k", &b.attention.bn_k);
    out.emplace_back(p + ".attn.bn_v", &b.attention.bn_v);
    out.emplace_back(p + ".mlp.bn1", &b.mlp.bn1);
    out.emplace_back(p + ".mlp.bn2", &b.mlp.bn2);
  }
  return out;
}

template <typename R>
std::vector<NamedTensor<R>> SpikingTransformer<R>::parameters() {
  std::vector<NamedTensor<R>> out;
  for (std::size_t i = 0; i < kSpsStages; ++i) {
    out.push_back({"sps.stage" + std::to_string(i) + ".weight", sps_.stages[i].weight});
  }
  out.push_back({"sps.rpe.weight", sps_.rpe.weight});
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const std::string p = "block" + std::to_string(l);
    auto& b = blocks_[l];
    out.push_back({p + ".attn.w_q", b.attention.w_q});
    out.push_back({p + ".attn.w_k", b.attention.w_k});
    out.push_back({p + ".attn.w_v", b.attention.w_v});
    out.push_back({p + ".mlp.w1", b.mlp.w1});
    out.push_back({p + ".mlp.w2", b.mlp.w2});
  }
  out.push_back({"head.weight", head_.weight});
  out.push_back({"head.bias", head_.bias});
  for (auto& [name, bn] : batch_norms()) {
    out.push_back({name + ".gamma", bn->gamma});
    out.push_back({name + ".beta", bn->beta});
  }
  return out;
}

template <typename R>
std::size_t SpikingTransformer<R>::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

template <typename R>
Tensor<R> SpikingTransformer<R>::forward(const Tensor<R>& images, Mode mode, ForwardTrace* trace) {
  const bool single = images.rank() == 3;
  const Tensor<R> batch =
      single ? reshape(images, {1, images.dim(0), images.dim(1), images.dim(2)}) : images;
  const Tensor<R> u0 = sps_forward(batch, sps_, config_, mode, trace);
  Tensor<R> membrane = u0;
  Tensor<R> spikes = fire(u0, NeuronKind::binary, config_.timesteps, config_.neuron, trace, "sn0");
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    auto out = encoder_block(spikes, membrane, blocks_[l], config_, mode, trace,
                             "block" + std::to_string(l));
    spikes = out.spikes;
    membrane = out.membrane;
  }
  Tensor<R> logits = classify(spikes, head_, trace);
  if (single) return reshape(logits, {config_.num_classes});
  return logits;
}

template <typename R>
void SpikingTransformer<R>::reset_batch_norm_statistics(bool cumulative) {
  for (auto& [name, bn] : batch_norms()) {
    bn->state.clear();
    bn->state.cumulative = cumulative;
  }
}

#define A2OS2A_INSTANTIATE(R)                                                                   \
  template Tensor<R> sps_forward<R>(const Tensor<R>&, SpsParams<R>&, const ModelConfig&, Mode,  \
                                    ForwardTrace*);                                             \
  template BlockOutput<R> encoder_block<R>(const Tensor<R>&, const Tensor<R>&,                  \
                                           EncoderBlockParams<R>&, const ModelConfig&, Mode,    \
                                           ForwardTrace*, const std::string&);                  \
  template Tensor<R> classify<R>(const Tensor<R>&, const HeadParams<R>&, ForwardTrace*);        \
  template class SpikingTransformer<R>;

A2OS2A_INSTANTIATE(float)
A2OS2A_INSTANTIATE(double)

#undef A2OS2A_INSTANTIATE

}  // namespace a2os2a
