#pragma once

#include <vector>

#include "a2os2a/config.hpp"
#include "a2os2a/model.hpp"

namespace a2os2a {

/// Momentum SGD or AdamW over a fixed parameter list. Weight decay applies to
/// matrices only (rank >= 2), never to BN affine terms or biases.
template <typename R>
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& cfg, std::vector<NamedTensor<R>> params,
            std::size_t total_steps, std::size_t steps_per_epoch);

  /// Learning rate used for update number `step` (0-based).
  double learning_rate(std::size_t step) const;
  /// Applies one update from the accumulated gradients, then clears them.
  void step();
  std::size_t steps_taken() const { return step_; }

 private:
  OptimizerConfig cfg_;
  std::vector<NamedTensor<R>> params_;
  std::vector<std::vector<R>> m_, v_;
  std::size_t total_steps_, warmup_steps_;
  std::size_t step_ = 0;
};

}  // namespace a2os2a
