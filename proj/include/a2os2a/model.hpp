#pragma once

// Spiking Transformer-L-D.
//
//   images ──SPS──► U0 (membrane) ──SN──► S0
//   for l in 1..L:
//     U'_l = Attention(S_{l−1}) + U_{l−1}
//     S'_l = SN(U'_l)
//     U_l  = MLP(S'_l) + U'_l
//     S_l  = SN(U_l)
//   logits = Head(mean over T and N of S_L)
//
// Residuals add membrane potentials; every weight layer inside the encoder
// sees binary spikes.
//
// Layout: spatial maps are NHWC with the time axis folded into the batch
// ([T·B, H, W, C], time outer); token tensors are [T, B, N, D].

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "a2os2a/attention.hpp"
#include "a2os2a/neurons.hpp"
#include "a2os2a/ops.hpp"
#include "a2os2a/trace.hpp"

namespace a2os2a {

inline constexpr std::size_t kSpsStages = 4;

struct ModelConfig {
  std::size_t layers = 2;       ///< L, encoder blocks
  std::size_t dim = 64;         ///< D, embedding width
  std::size_t timesteps = 4;    ///< T
  std::size_t patch_size = 4;   ///< power of two; one stride-2 pool per factor of 2
  std::size_t in_channels = 3;
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  std::size_t num_classes = 10;
  AttentionConfig attention{};
  double mlp_ratio = 4.0;
  NeuronParams neuron{};

  void validate() const;

  std::size_t grid_height() const { return image_height / patch_size; }
  std::size_t grid_width() const { return image_width / patch_size; }
  std::size_t tokens() const { return grid_height() * grid_width(); }
  std::size_t mlp_hidden() const;
  /// Channel count after SPS stage i (i = 0 is the input).
  std::size_t sps_channels(std::size_t i) const;
  /// Whether SPS stage i (0-based) ends with a stride-2 max pool.
  bool sps_pools(std::size_t stage) const;
  /// "Spiking Transformer-L-D".
  std::string name() const;

  /// Flat key=value form; keys in a fixed order.
  std::vector<std::pair<std::string, std::string>> to_key_values() const;
  /// Sets one key; returns false when the key is not a model key.
  bool set(const std::string& key, const std::string& value);
};

template <typename R>
struct ConvBn {
  Tensor<R> weight;  ///< [K·K·C_in × C_out]
  BatchNormParams<R> bn;
};

template <typename R>
struct SpsParams {
  std::array<ConvBn<R>, kSpsStages> stages;
  ConvBn<R> rpe;
};

template <typename R>
struct MlpParams {
  Tensor<R> w1;  ///< [D × hidden]
  BatchNormParams<R> bn1;
  Tensor<R> w2;  ///< [hidden × D]
  BatchNormParams<R> bn2;
};

template <typename R>
struct EncoderBlockParams {
  AttentionWeights<R> attention;
  MlpParams<R> mlp;
};

template <typename R>
struct HeadParams {
  Tensor<R> weight;  ///< [D × classes]
  Tensor<R> bias;    ///< [classes]
};

template <typename R>
struct NamedTensor {
  std::string name;
  Tensor<R> tensor;
};

template <typename R>
struct BlockOutput {
  Tensor<R> spikes;    ///< S_l
  Tensor<R> membrane;  ///< U_l, carried to the next residual
};

/// SPS front end: images[B,C,H,W] (repeated over T inside) -> U0[T,B,N,D].
template <typename R>
Tensor<R> sps_forward(const Tensor<R>& images, SpsParams<R>& params, const ModelConfig& cfg,
                      Mode mode, ForwardTrace* trace = nullptr);

/// One encoder block on S_{l−1}, U_{l−1} of shape [T,B,N,D].
template <typename R>
BlockOutput<R> encoder_block(const Tensor<R>& spikes, const Tensor<R>& membrane,
                             EncoderBlockParams<R>& params, const ModelConfig& cfg, Mode mode,
                             ForwardTrace* trace = nullptr, const std::string& name = "block");

/// Global average over T and N, then one linear layer. [T,B,N,D] gives
/// [B, classes]; a single sample [T,N,D] gives [classes].
template <typename R>
Tensor<R> classify(const Tensor<R>& spikes, const HeadParams<R>& head,
                   ForwardTrace* trace = nullptr);

template <typename R>
class SpikingTransformer {
 public:
  /// Fan-in scaled uniform initialisation from `seed`; BN starts at γ=1, β=0
  /// with no running statistics.
  static SpikingTransformer create(const ModelConfig& cfg, std::uint64_t seed);

  SpikingTransformer(SpikingTransformer&&) noexcept = default;
  SpikingTransformer& operator=(SpikingTransformer&&) noexcept = default;
  SpikingTransformer(const SpikingTransformer&) = delete;
  SpikingTransformer& operator=(const SpikingTransformer&) = delete;

  const ModelConfig& config() const { return config_; }
  SpsParams<R>& sps() { return sps_; }
  std::vector<EncoderBlockParams<R>>& blocks() { return blocks_; }
  HeadParams<R>& head() { return head_; }
  const HeadParams<R>& head() const { return head_; }

  /// Trainable tensors in a fixed order.
  std::vector<NamedTensor<R>> parameters();
  /// Every BN layer with its name prefix, same order as parameters().
  std::vector<std::pair<std::string, BatchNormParams<R>*>> batch_norms();
  std::size_t parameter_count();

  /// images[B,C,H,W] -> logits[B, classes]; images[C,H,W] -> logits[classes].
  Tensor<R> forward(const Tensor<R>& images, Mode mode, ForwardTrace* trace = nullptr);

  /// Switches every BN layer to equal-weight running averages and clears the
  /// statistics; pair with train-mode forwards to estimate them.
  void reset_batch_norm_statistics(bool cumulative);

 private:
  explicit SpikingTransformer(ModelConfig cfg) : config_(std::move(cfg)) {}

  ModelConfig config_;
  SpsParams<R> sps_;
  std::vector<EncoderBlockParams<R>> blocks_;
  HeadParams<R> head_;
};

}  // namespace a2os2a
