#pragma once

// Call-local instrumentation for a forward pass. The model and the attention
// functions append to a ForwardTrace when one is passed in; nothing is shared
// between calls.

#include <cstdint>
#include <string>
#include <vector>

#include "a2os2a/kernels.hpp"
#include "a2os2a/neurons.hpp"

namespace a2os2a {

/// What a counted operation was.
enum class OpKind {
  weight_layer,       ///< convolution or linear layer
  attention_product,  ///< one of the two attention matrix products
  elementwise,        ///< scaling, residual additions, softmax, pooling
  neuron,             ///< threshold comparisons of a spiking layer
  head,               ///< classification head
};

std::string to_string(OpKind kind);

struct OpRecord {
  std::string layer;
  OpKind kind;
  std::uint64_t additions = 0;  ///< includes subtractions
  std::uint64_t multiplications = 0;
  std::uint64_t comparisons = 0;
};

/// Whether the tensor entering a weight layer was binary.
struct WeightInputProbe {
  std::string layer;
  bool in_encoder = false;
  bool binary = false;
};

struct FiringRecord {
  std::string layer;
  SpikeStats stats;
};

class ForwardTrace {
 public:
  void record_kernel(std::string layer, OpKind kind, const KernelStats& stats) {
    records_.push_back({std::move(layer), kind, stats.additions + stats.subtractions,
                        stats.multiplications, 0});
  }
  void record(OpRecord record) { records_.push_back(std::move(record)); }
  void record_neuron(std::string layer, const SpikeStats& stats) {
    records_.push_back({layer, OpKind::neuron, 0, 0, stats.comparisons});
    firing_.push_back({std::move(layer), stats});
  }
  void probe_weight_input(std::string layer, bool in_encoder, bool binary) {
    probes_.push_back({std::move(layer), in_encoder, binary});
  }

  const std::vector<OpRecord>& records() const { return records_; }
  const std::vector<WeightInputProbe>& probes() const { return probes_; }
  const std::vector<FiringRecord>& firing() const { return firing_; }

 private:
  std::vector<OpRecord> records_;
  std::vector<WeightInputProbe> probes_;
  std::vector<FiringRecord> firing_;
};

}  // namespace a2os2a
