#include "a2os2a/optimizer.hpp"

#include <cmath>
#include <numbers>

namespace a2os2a {

template <typename R>
Optimizer<R>::Optimizer(const OptimizerConfig& cfg, std::vector<NamedTensor<R>> params,
                        std::size_t total_steps, std::size_t steps_per_epoch)
    : cfg_(cfg),
      params_(std::move(params)),
      total_steps_(std::max<std::size_t>(1, total_steps)),
      warmup_steps_(cfg.warmup_epochs * steps_per_epoch) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), R(0));
    if (cfg_.kind == OptimizerKind::adamw) v_.emplace_back(p.tensor.numel(), R(0));
  }
}

template <typename R>
double Optimizer<R>::learning_rate(std::size_t step) const {
  const double base = cfg_.learning_rate;
  if (step < warmup_steps_) return base * double(step + 1) / double(warmup_steps_);
  if (cfg_.schedule == Schedule::constant) return base;
  const double span = double(std::max<std::size_t>(1, total_steps_ - warmup_steps_));
  const double progress = std::min(1.0, double(step - warmup_steps_) / span);
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename R>
void Optimizer<R>::step() {
  const double lr = learning_rate(step_);
  ++step_;
  const double b1 = cfg_.momentum, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, double(step_));
  const double c2 = 1.0 - std::pow(b2, double(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& t = params_[i].tensor;
    auto w = t.mutable_values();
    auto g = t.mutable_grad();
    const double wd = t.rank() >= 2 ? cfg_.weight_decay : 0.0;
    auto& m = m_[i];
    if (cfg_.kind == OptimizerKind::sgd) {
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = R(b1 * m[j] + g[j] + wd * w[j]);
        w[j] -= R(lr * m[j]);
      }
    } else {
      auto& v = v_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = R(b1 * m[j] + (1.0 - b1) * g[j]);
        v[j] = R(b2 * v[j] + (1.0 - b2) * g[j] * g[j]);
        const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + 1e-8);
        w[j] -= R(lr * (update + wd * w[j]));
      }
    }
    std::fill(g.begin(), g.end(), R(0));
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace a2os2a
