#pragma once

// Representational capacity and operation accounting.
//
// Capacity of a value set is the log of its number of distinct states
// (maximum entropy under a uniform distribution), reported in bits:
//   binary     C·H·W
//   real b-bit b·C·H·W
//   ternary    log2(3)·C·H·W   (extension of the same counting argument)

#include <cstdint>
#include <string>
#include <vector>

#include "a2os2a/model.hpp"
#include "a2os2a/trace.hpp"

namespace a2os2a {

enum class ValueKind { binary, ternary, real };

struct CapacityQuery {
  ValueKind kind = ValueKind::binary;
  unsigned bits = 32;  ///< only for ValueKind::real
  std::vector<std::size_t> dims;

  void validate() const;
};

double capacity_bits(const CapacityQuery& query);

/// One row of a capacity comparison between attention operands.
struct CapacityRow {
  std::string variant;
  std::string tensor;
  std::string kind;  ///< "binary", "ternary (extension)", "real32"
  double bits = 0.0;
};

/// Capacity of one sample's Q, K and V (shape T×N×D) under VSSA and A2OS2A.
std::vector<CapacityRow> attention_capacity_table(const ModelConfig& cfg);

struct OpCountReport {
  std::vector<OpRecord> layers;

  OpRecord totals() const;
  OpRecord totals(OpKind kind) const;
  /// Multiplications inside attention products; zero for the spiking variants.
  std::uint64_t attention_product_multiplications() const {
    return totals(OpKind::attention_product).multiplications;
  }

  /// "layer.<name>.<field>=<n>" lines followed by "total.<field>=<n>".
  std::string to_key_value() const;
  /// One JSON object per layer, then one with "layer":"total".
  std::string to_jsonl() const;
};

OpCountReport make_report(const ForwardTrace& trace);

/// Eval-mode forward of `images` with every kernel instrumented.
template <typename R>
OpCountReport count_ops(SpikingTransformer<R>& model, const Tensor<R>& images);

}  // namespace a2os2a
