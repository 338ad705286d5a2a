#include "a2os2a/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace a2os2a {

using detail::input_grad;
using detail::make_result;
using detail::Node;

namespace {

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a) + " vs " + shape_str(b));
  }
}

template <typename R, typename F>
Tensor<R> unary_map(const Tensor<R>& a, F forward, std::function<void(Node<R>&)> backward) {
  std::vector<R> out(a.numel());
  auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  return make_result<R>(a.shape(), std::move(out), {&a}, std::move(backward));
}

}  // namespace

// ---- elementwise ----------------------------------------------------------

template <typename R>
Tensor<R> add(const Tensor<R>& a, const Tensor<R>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  std::vector<R> out(a.numel());
  auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result<R>(a.shape(), std::move(out), {&a, &b}, [](Node<R>& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = input_grad(n, k)) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
      }
    }
  });
}

template <typename R>
Tensor<R> sub(const Tensor<R>& a, const Tensor<R>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  std::vector<R> out(a.numel());
  auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result<R>(a.shape(), std::move(out), {&a, &b}, [](Node<R>& n) {
    if (auto* g = input_grad(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
    }
    if (auto* g = input_grad(n, 1)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] -= n.grad[i];
    }
  });
}

template <typename R>
Tensor<R> mul(const Tensor<R>& a, const Tensor<R>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<R> out(a.numel());
  auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result<R>(a.shape(), std::move(out), {&a, &b}, [](Node<R>& n) {
    const auto& x = n.inputs[0]->value;
    const auto& y = n.inputs[1]->value;
    if (auto* g = input_grad(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * y[i];
    }
    if (auto* g = input_grad(n, 1)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * x[i];
    }
  });
}

template <typename R>
Tensor<R> scale(const Tensor<R>& a, R factor) {
  return unary_map<R>(a, [factor](R v) { return v * factor; }, [factor](Node<R>& n) {
    if (auto* g = input_grad(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * factor;
    }
  });
}

template <typename R>
Tensor<R> add_scalar(const Tensor<R>& a, R offset) {
  return unary_map<R>(a, [offset](R v) { return v + offset; }, [](Node<R>& n) {
    if (auto* g = input_grad(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
    }
  });
}

template <typename R>
Tensor<R> relu(const Tensor<R>& a) {
  return unary_map<R>(a, [](R v) { return v > R(0) ? v : R(0); }, [](Node<R>& n) {
    const auto& x = n.inputs[0]->value;
    if (auto* g = input_grad(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        if (x[i] > R(0)) (*g)[i] += n.grad[i];
      }
    }
  });
}

template <typename R>
Tensor<R> abs_value(const Tensor<R>& a) {
  return unary_map<R>(a, [](R v) { return std::abs(v); }, [](Node<R>& n) {
    const auto& x = n.inputs[0]->value;
    if (auto* g = input_grad(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        if (x[i] > R(0)) (*g)[i] += n.grad[i];
        else if (x[i] < R(0)) (*g)[i] -= n.grad[i];
      }
    }
  });
}

// ---- reductions -----------------------------------------------------------

template <typename R>
Tensor<R> sum(const Tensor<R>& a) {
  R total = 0;
  for (R v : a.values()) total += v;
  return make_result<R>(Shape{}, {total}, {&a}, [](Node<R>& n) {
    if (auto* g = input_grad(n, 0)) {
      for (R& v : *g) v += n.grad[0];
    }
  });
}

template <typename R>
Tensor<R> mean(const Tensor<R>& a) {
  R total = 0;
  for (R v : a.values()) total += v;
  const R inv = R(1) / static_cast<R>(a.numel());
  return make_result<R>(Shape{}, {total * inv}, {&a}, [inv](Node<R>& n) {
    if (auto* g = input_grad(n, 0)) {
      for (R& v : *g) v += n.grad[0] * inv;
    }
  });
}

template <typename R>
Tensor<R> mean_axis1(const Tensor<R>& x) {
  if (x.rank() != 3) throw DimensionError("mean_axis1 expects rank 3, got " + shape_str(x.shape()));
  const std::size_t a = x.dim(0), b = x.dim(1), c = x.dim(2);
  const R inv = R(1) / static_cast<R>(b);
  std::vector<R> out(a * c, R(0));
  auto in = x.values();
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const R* row = in.data() + (i * b + j) * c;
      for (std::size_t k = 0; k < c; ++k) out[i * c + k] += row[k];
    }
  }
  for (R& v : out) v *= inv;
  return make_result<R>(Shape{a, c}, std::move(out), {&x}, [a, b, c, inv](Node<R>& n) {
    if (auto* g = input_grad(n, 0)) {
      for (std::size_t i = 0; i < a; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
          R* row = g->data() + (i * b + j) * c;
          for (std::size_t k = 0; k < c; ++k) row[k] += n.grad[i * c + k] * inv;
        }
      }
    }
  });
}

// ---- layout ---------------------------------------------------------------

template <typename R>
Tensor<R> reshape(const Tensor<R>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<R> out(x.values().begin(), x.values().end());
  return make_result<R>(std::move(shape), std::move(out), {&x}, [](Node<R>& n) {
    if (auto* g = input_grad(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
    }
  });
}

namespace {

// Input offset of every output element, output enumerated row-major.
std::vector<std::size_t> permutation_offsets(const Shape& in_shape,
                                             const std::vector<std::size_t>& perm) {
  const std::size_t rank = in_shape.size();
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t d = rank; d-- > 1;) in_stride[d - 1] = in_stride[d] * in_shape[d];
  Shape out_shape(rank);
  std::vector<std::size_t> stride(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    out_shape[d] = in_shape[perm[d]];
    stride[d] = in_stride[perm[d]];
  }
  const std::size_t total = shape_numel(in_shape);
  std::vector<std::size_t> offsets(total);
  std::vector<std::size_t> index(rank, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < total; ++i) {
    offsets[i] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      offset += stride[d];
      if (++index[d] < out_shape[d]) break;
      offset -= stride[d] * out_shape[d];
      index[d] = 0;
    }
  }
  return offsets;
}

}  // namespace

template <typename R>
Tensor<R> permute(const Tensor<R>& x, const std::vector<std::size_t>& perm) {
  const std::size_t rank = x.rank();
  if (perm.size() != rank) throw DimensionError("permute: rank mismatch");
  std::vector<bool> seen(rank, false);
  for (std::size_t p : perm) {
    if (p >= rank || seen[p]) throw DimensionError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(rank);
  for (std::size_t d = 0; d < rank; ++d) out_shape[d] = x.dim(perm[d]);
  auto offsets = std::make_shared<std::vector<std::size_t>>(permutation_offsets(x.shape(), perm));
  std::vector<R> out(x.numel());
  auto in = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[(*offsets)[i]];
  return make_result<R>(std::move(out_shape), std::move(out), {&x}, [offsets](Node<R>& n) {
    if (auto* g = input_grad(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[(*offsets)[i]] += n.grad[i];
    }
  });
}

template <typename R>
Tensor<R> transpose_last2(const Tensor<R>& x) {
  if (x.rank() < 2) throw DimensionError("transpose_last2 needs rank >= 2");
  std::vector<std::size_t> perm(x.rank());
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[x.rank() - 1], perm[x.rank() - 2]);
  return permute(x, perm);
}

template <typename R>
Tensor<R> slice_first(const Tensor<R>& x, std::size_t index) {
  if (x.rank() == 0 || index >= x.dim(0)) throw DimensionError("slice_first: index out of range");
  Shape shape(x.shape().begin() + 1, x.shape().end());
  const std::size_t n = shape_numel(shape);
  auto in = x.values();
  std::vector<R> out(in.begin() + index * n, in.begin() + (index + 1) * n);
  return make_result<R>(std::move(shape), std::move(out), {&x}, [index, n](Node<R>& node) {
    if (auto* g = input_grad(node, 0)) {
      for (std::size_t i = 0; i < n; ++i) (*g)[index * n + i] += node.grad[i];
    }
  });
}

template <typename R>
Tensor<R> stack_first(const std::vector<Tensor<R>>& parts) {
  if (parts.empty()) throw DimensionError("stack_first: nothing to stack");
  const Shape& inner = parts.front().shape();
  const std::size_t n = parts.front().numel();
  std::vector<R> out;
  out.reserve(n * parts.size());
  for (const auto& p : parts) {
    require_same_shape(inner, p.shape(), "stack_first");
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  return make_result<R>(std::move(shape), std::move(out), parts, [n](Node<R>& node) {
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (auto* g = input_grad(node, k)) {
        for (std::size_t i = 0; i < n; ++i) (*g)[i] += node.grad[k * n + i];
      }
    }
  });
}

template <typename R>
Tensor<R> repeat_first(const Tensor<R>& x, std::size_t times) {
  if (x.rank() == 0) throw DimensionError("repeat_first needs rank >= 1");
  Shape shape = x.shape();
  shape[0] *= times;
  const std::size_t n = x.numel();
  std::vector<R> out;
  out.reserve(n * times);
  for (std::size_t t = 0; t < times; ++t) out.insert(out.end(), x.values().begin(), x.values().end());
  return make_result<R>(std::move(shape), std::move(out), {&x}, [n, times](Node<R>& node) {
    if (auto* g = input_grad(node, 0)) {
      for (std::size_t t = 0; t < times; ++t) {
        for (std::size_t i = 0; i < n; ++i) (*g)[i] += node.grad[t * n + i];
      }
    }
  });
}

// ---- linear algebra -------------------------------------------------------

template <typename R>
Tensor<R> matmul(const Tensor<R>& a, const Tensor<R>& b, KernelStats* stats) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<R> out(m * n);
  KernelStats s = dense_matmul<R>(a.values(), b.values(), out, m, k, n);
  if (stats) *stats += s;
  return make_result<R>(Shape{m, n}, std::move(out), {&a, &b}, [m, k, n](Node<R>& node) {
    const auto& av = node.inputs[0]->value;
    const auto& bv = node.inputs[1]->value;
    if (auto* g = input_grad(node, 0)) gemm_nt_accumulate<R>(node.grad, bv, *g, m, n, k);
    if (auto* g = input_grad(node, 1)) gemm_tn_accumulate<R>(av, node.grad, *g, k, m, n);
  });
}

template <typename R>
Tensor<R> linear(const Tensor<R>& x, const Tensor<R>& weight, const std::type_identity_t<Tensor<R>>* bias,
                 KernelStats* stats) {
  if (weight.rank() != 2 || x.rank() == 0 || x.shape().back() != weight.dim(0)) {
    throw DimensionError("linear " + shape_str(x.shape()) + " x " + shape_str(weight.shape()));
  }
  const std::size_t k = weight.dim(0), n = weight.dim(1);
  const std::size_t m = x.numel() / k;
  if (bias && (bias->rank() != 1 || bias->dim(0) != n)) {
    throw DimensionError("linear: bias shape " + shape_str(bias->shape()));
  }
  std::vector<R> out(m * n);
  KernelStats s = is_binary<R>(x.values())
                      ? addonly_matmul_binary<R>(x.values(), weight.values(), out, m, k, n)
                      : dense_matmul<R>(x.values(), weight.values(), out, m, k, n);
  if (bias) {
    auto bv = bias->values();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
    }
    s.additions += m * n;
  }
  if (stats) *stats += s;
  Shape shape = x.shape();
  shape.back() = n;
  auto backward = [m, k, n](Node<R>& node) {
    const auto& xv = node.inputs[0]->value;
    const auto& wv = node.inputs[1]->value;
    if (auto* g = input_grad(node, 0)) gemm_nt_accumulate<R>(node.grad, wv, *g, m, n, k);
    if (auto* g = input_grad(node, 1)) gemm_tn_accumulate<R>(xv, node.grad, *g, k, m, n);
    if (node.inputs.size() > 2) {
      if (auto* g = input_grad(node, 2)) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) (*g)[j] += node.grad[i * n + j];
        }
      }
    }
  };
  if (bias) return make_result<R>(std::move(shape), std::move(out), {&x, &weight, bias}, backward);
  return make_result<R>(std::move(shape), std::move(out), {&x, &weight}, backward);
}

template <typename R>
Tensor<R> batched_matmul(const Tensor<R>& a, const Tensor<R>& b, ProductKernel kernel,
                         KernelStats* stats) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw DimensionError("batched_matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t groups = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<R> out(groups * m * n);
  KernelStats s;
  auto av = a.values(), bv = b.values();
  for (std::size_t g = 0; g < groups; ++g) {
    auto as = av.subspan(g * m * k, m * k);
    auto bs = bv.subspan(g * k * n, k * n);
    std::span<R> cs(out.data() + g * m * n, m * n);
    switch (kernel) {
      case ProductKernel::dense: s += dense_matmul<R>(as, bs, cs, m, k, n); break;
      case ProductKernel::binary_left: s += addonly_matmul_binary<R>(as, bs, cs, m, k, n); break;
      case ProductKernel::ternary_right: s += addonly_matmul_ternary<R>(as, bs, cs, m, k, n); break;
    }
  }
  if (stats) *stats += s;
  return make_result<R>(Shape{groups, m, n}, std::move(out), {&a, &b},
                        [groups, m, k, n](Node<R>& node) {
    const std::span<const R> av = node.inputs[0]->value;
    const std::span<const R> bv = node.inputs[1]->value;
    const std::span<const R> dc = node.grad;
    auto* ga = input_grad(node, 0);
    auto* gb = input_grad(node, 1);
    for (std::size_t g = 0; g < groups; ++g) {
      auto dcs = dc.subspan(g * m * n, m * n);
      if (ga) {
        gemm_nt_accumulate<R>(dcs, bv.subspan(g * k * n, k * n),
                              std::span<R>(ga->data() + g * m * k, m * k), m, n, k);
      }
      if (gb) {
        gemm_tn_accumulate<R>(av.subspan(g * m * k, m * k), dcs,
                              std::span<R>(gb->data() + g * k * n, k * n), k, m, n);
      }
    }
  });
}

template <typename R>
Tensor<R> softmax_last(const Tensor<R>& x) {
  if (x.rank() == 0) throw DimensionError("softmax_last needs rank >= 1");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  std::vector<R> out(x.numel());
  auto in = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const R* xr = in.data() + r * n;
    R* yr = out.data() + r * n;
    const R mx = *std::max_element(xr, xr + n);
    R total = 0;
    for (std::size_t j = 0; j < n; ++j) total += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yr[j] /= total;
  }
  auto y = std::make_shared<std::vector<R>>(out);
  return make_result<R>(x.shape(), std::move(out), {&x}, [y, rows, n](Node<R>& node) {
    if (auto* g = input_grad(node, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const R* yr = y->data() + r * n;
        const R* dy = node.grad.data() + r * n;
        R dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += dy[j] * yr[j];
        for (std::size_t j = 0; j < n; ++j) (*g)[r * n + j] += yr[j] * (dy[j] - dot);
      }
    }
  });
}

// ---- normalisation --------------------------------------------------------

template <typename R>
Tensor<R> batch_norm(const Tensor<R>& x, const Tensor<R>& gamma, const Tensor<R>& beta,
                     BatchNormState<R>& state, Mode mode, double eps) {
  if (x.rank() == 0 || gamma.rank() != 1 || beta.rank() != 1 ||
      x.shape().back() != gamma.dim(0) || gamma.dim(0) != beta.dim(0)) {
    throw DimensionError("batch_norm: input " + shape_str(x.shape()) + ", gamma " +
                         shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));
  }
  const std::size_t c = gamma.dim(0);
  const std::size_t rows = x.numel() / c;
  auto in = x.values();
  auto gv = gamma.values(), bv = beta.values();

  std::vector<R> mu(c, R(0)), var(c, R(0));
  if (mode == Mode::train) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < c; ++j) mu[j] += in[r * c + j];
    }
    for (R& v : mu) v /= static_cast<R>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        const R d = in[r * c + j] - mu[j];
        var[j] += d * d;
      }
    }
    for (R& v : var) v /= static_cast<R>(rows);

    if (!state.initialized || state.running_mean.size() != c) {
      state.running_mean.assign(c, R(0));
      state.running_var.assign(c, R(1));
      state.initialized = true;
      state.updates = 0;
    }
    // The first update adopts the batch statistics outright.
    const double momentum = state.cumulative || state.updates == 0
                                ? 1.0 / static_cast<double>(state.updates + 1)
                                : state.momentum;
    const R unbias = rows > 1 ? static_cast<R>(rows) / static_cast<R>(rows - 1) : R(1);
    for (std::size_t j = 0; j < c; ++j) {
      state.running_mean[j] = static_cast<R>((1.0 - momentum) * state.running_mean[j] +
                                             momentum * mu[j]);
      state.running_var[j] = static_cast<R>((1.0 - momentum) * state.running_var[j] +
                                            momentum * var[j] * unbias);
    }
    ++state.updates;
  } else {
    if (!state.initialized || state.running_mean.size() != c) {
      throw StateError("batch_norm: eval mode with uninitialized running statistics");
    }
    mu = state.running_mean;
    var = state.running_var;
  }

  auto inv = std::make_shared<std::vector<R>>(c);
  for (std::size_t j = 0; j < c; ++j) (*inv)[j] = R(1) / std::sqrt(var[j] + static_cast<R>(eps));
  auto xhat = std::make_shared<std::vector<R>>(x.numel());
  std::vector<R> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t i = r * c + j;
      (*xhat)[i] = (in[i] - mu[j]) * (*inv)[j];
      out[i] = gv[j] * (*xhat)[i] + bv[j];
    }
  }

  const bool batch_stats = mode == Mode::train;
  return make_result<R>(x.shape(), std::move(out), {&x, &gamma, &beta},
                        [inv, xhat, rows, c, batch_stats](Node<R>& node) {
    const auto& gv = node.inputs[1]->value;
    const auto& dy = node.grad;
    std::vector<R> sum_dy(c, R(0)), sum_dy_xhat(c, R(0));
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        sum_dy[j] += dy[r * c + j];
        sum_dy_xhat[j] += dy[r * c + j] * (*xhat)[r * c + j];
      }
    }
    if (auto* g = input_grad(node, 1)) {
      for (std::size_t j = 0; j < c; ++j) (*g)[j] += sum_dy_xhat[j];
    }
    if (auto* g = input_grad(node, 2)) {
      for (std::size_t j = 0; j < c; ++j) (*g)[j] += sum_dy[j];
    }
    if (auto* g = input_grad(node, 0)) {
      const R inv_rows = R(1) / static_cast<R>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
          const std::size_t i = r * c + j;
          R d = dy[i];
          if (batch_stats) d -= (sum_dy[j] + (*xhat)[i] * sum_dy_xhat[j]) * inv_rows;
          (*g)[i] += gv[j] * (*inv)[j] * d;
        }
      }
    }
  });
}

// ---- convolution ----------------------------------------------------------

namespace {

template <typename R>
void im2col(const R* image, std::size_t h, std::size_t w, std::size_t c, std::size_t kernel,
            R* cols) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel / 2);
  const std::size_t row_len = kernel * kernel * c;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      R* row = cols + (y * w + x) * row_len;
      for (std::size_t ky = 0; ky < kernel; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - pad;
          R* dst = row + (ky * kernel + kx) * c;
          if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
              ix >= static_cast<std::ptrdiff_t>(w)) {
            std::fill(dst, dst + c, R(0));
          } else {
            const R* src = image + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c;
            std::copy(src, src + c, dst);
          }
        }
      }
    }
  }
}

template <typename R>
void col2im_accumulate(const R* cols, std::size_t h, std::size_t w, std::size_t c,
                       std::size_t kernel, R* image) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel / 2);
  const std::size_t row_len = kernel * kernel * c;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const R* row = cols + (y * w + x) * row_len;
      for (std::size_t ky = 0; ky < kernel; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - pad;
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const R* src = row + (ky * kernel + kx) * c;
          R* dst = image + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c;
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
}

}  // namespace

template <typename R>
Tensor<R> conv2d(const Tensor<R>& x, const Tensor<R>& weight, std::size_t kernel,
                 KernelStats* stats) {
  if (x.rank() != 4 || weight.rank() != 2 || kernel % 2 == 0 ||
      weight.dim(0) != kernel * kernel * x.dim(3)) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + ", weight " +
                         shape_str(weight.shape()) + ", kernel " + std::to_string(kernel));
  }
  const std::size_t batch = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t o = weight.dim(1);
  const std::size_t pixels = h * w, row_len = kernel * kernel * c;
  const bool binary = is_binary<R>(x.values());
  std::vector<R> out(batch * pixels * o);
  std::vector<R> cols(pixels * row_len);
  KernelStats s;
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x.values().data() + b * pixels * c, h, w, c, kernel, cols.data());
    std::span<R> dst(out.data() + b * pixels * o, pixels * o);
    s += binary ? addonly_matmul_binary_unchecked<R>(cols, weight.values(), dst, pixels, row_len, o)
                : dense_matmul<R>(cols, weight.values(), dst, pixels, row_len, o);
  }
  if (stats) *stats += s;
  return make_result<R>(Shape{batch, h, w, o}, std::move(out), {&x, &weight},
                        [batch, h, w, c, o, kernel, pixels, row_len](Node<R>& node) {
    const auto& xv = node.inputs[0]->value;
    const auto& wv = node.inputs[1]->value;
    auto* gx = input_grad(node, 0);
    auto* gw = input_grad(node, 1);
    std::vector<R> cols(pixels * row_len);
    std::vector<R> dcols(gx ? pixels * row_len : 0);
    for (std::size_t b = 0; b < batch; ++b) {
      std::span<const R> dy(node.grad.data() + b * pixels * o, pixels * o);
      if (gw) {
        im2col(xv.data() + b * pixels * c, h, w, c, kernel, cols.data());
        gemm_tn_accumulate<R>(cols, dy, *gw, row_len, pixels, o);
      }
      if (gx) {
        std::fill(dcols.begin(), dcols.end(), R(0));
        gemm_nt_accumulate<R>(dy, wv, dcols, pixels, o, row_len);
        col2im_accumulate(dcols.data(), h, w, c, kernel, gx->data() + b * pixels * c);
      }
    }
  });
}

template <typename R>
Tensor<R> max_pool2d(const Tensor<R>& x, std::size_t kernel, std::size_t stride,
                     std::size_t padding) {
  if (x.rank() != 4 || stride == 0 || kernel == 0) {
    throw DimensionError("max_pool2d: input " + shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h + 2 * padding < kernel || w + 2 * padding < kernel) {
    throw DimensionError("max_pool2d: window larger than padded input");
  }
  const std::size_t oh = (h + 2 * padding - kernel) / stride + 1;
  const std::size_t ow = (w + 2 * padding - kernel) / stride + 1;
  std::vector<R> out(batch * oh * ow * c);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  auto in = x.values();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          R best = -std::numeric_limits<R>::infinity();
          std::size_t best_i = 0;
          for (std::size_t ky = 0; ky < kernel; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * stride + ky) -
                                      static_cast<std::ptrdiff_t>(padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < kernel; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xo * stride + kx) -
                                        static_cast<std::ptrdiff_t>(padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const std::size_t i =
                  ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * c + ch;
              if (in[i] > best) {
                best = in[i];
                best_i = i;
              }
            }
          }
          const std::size_t o = ((b * oh + y) * ow + xo) * c + ch;
          out[o] = best;
          (*argmax)[o] = best_i;
        }
      }
    }
  }
  return make_result<R>(Shape{batch, oh, ow, c}, std::move(out), {&x}, [argmax](Node<R>& node) {
    if (auto* g = input_grad(node, 0)) {
      for (std::size_t i = 0; i < node.grad.size(); ++i) (*g)[(*argmax)[i]] += node.grad[i];
    }
  });
}

// ---- spike functions ------------------------------------------------------

template <typename R>
R surrogate_derivative(R distance, R alpha) {
  const R v = R(1) - std::abs(distance) / alpha;
  return v > R(0) ? v / alpha : R(0);
}

template <typename R>
R relaxed_step(R distance, R alpha) {
  if (distance <= -alpha) return R(0);
  if (distance >= alpha) return R(1);
  const R a2 = R(2) * alpha * alpha;
  if (distance < R(0)) return (distance + alpha) * (distance + alpha) / a2;
  return R(1) - (alpha - distance) * (alpha - distance) / a2;
}

template <typename R>
Tensor<R> spike_heaviside(const Tensor<R>& u, R v_th, const SurrogateSpec& surrogate) {
  const R alpha = static_cast<R>(surrogate.alpha);
  const bool relaxed = surrogate.relaxed_forward;
  return unary_map<R>(
      u,
      [v_th, alpha, relaxed](R v) {
        if (relaxed) return relaxed_step(v - v_th, alpha);
        return v - v_th >= R(0) ? R(1) : R(0);
      },
      [v_th, alpha](Node<R>& n) {
        const auto& x = n.inputs[0]->value;
        if (auto* g = input_grad(n, 0)) {
          for (std::size_t i = 0; i < n.grad.size(); ++i) {
            (*g)[i] += n.grad[i] * surrogate_derivative(x[i] - v_th, alpha);
          }
        }
      });
}

template <typename R>
Tensor<R> spike_ternary(const Tensor<R>& u, R v_th, const SurrogateSpec& surrogate) {
  const R alpha = static_cast<R>(surrogate.alpha);
  const bool relaxed = surrogate.relaxed_forward;
  return unary_map<R>(
      u,
      [v_th, alpha, relaxed](R v) {
        const R sign = v > R(0) ? R(1) : (v < R(0) ? R(-1) : R(0));
        if (relaxed) return sign * relaxed_step(std::abs(v) - v_th, alpha);
        return std::abs(v) - v_th >= R(0) ? sign : R(0);
      },
      [v_th, alpha](Node<R>& n) {
        const auto& x = n.inputs[0]->value;
        if (auto* g = input_grad(n, 0)) {
          for (std::size_t i = 0; i < n.grad.size(); ++i) {
            (*g)[i] += n.grad[i] * surrogate_derivative(std::abs(x[i]) - v_th, alpha);
          }
        }
      });
}

// ---- loss -----------------------------------------------------------------

template <typename R>
Tensor<R> cross_entropy(const Tensor<R>& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  auto probs = std::make_shared<std::vector<R>>(logits.numel());
  auto in = logits.values();
  R total = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw DataError("cross_entropy: label " + std::to_string(label) + " out of range");
    }
    const R* row = in.data() + b * classes;
    R* p = probs->data() + b * classes;
    const R mx = *std::max_element(row, row + classes);
    R z = 0;
    for (std::size_t j = 0; j < classes; ++j) z += (p[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < classes; ++j) p[j] /= z;
    total += -(row[label] - mx - std::log(z));
  }
  auto targets = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  return make_result<R>(Shape{}, {total / static_cast<R>(batch)}, {&logits},
                        [probs, targets, batch, classes](Node<R>& node) {
    if (auto* g = input_grad(node, 0)) {
      const R scale = node.grad[0] / static_cast<R>(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < classes; ++j) {
          R d = (*probs)[b * classes + j];
          if (static_cast<int>(j) == (*targets)[b]) d -= R(1);
          (*g)[b * classes + j] += scale * d;
        }
      }
    }
  });
}

#define A2OS2A_INSTANTIATE(R)                                                                   \
  template Tensor<R> add<R>(const Tensor<R>&, const Tensor<R>&);                                \
  template Tensor<R> sub<R>(const Tensor<R>&, const Tensor<R>&);                                \
  template Tensor<R> mul<R>(const Tensor<R>&, const Tensor<R>&);                                \
  template Tensor<R> scale<R>(const Tensor<R>&, R);                                             \
  template Tensor<R> add_scalar<R>(const Tensor<R>&, R);                                        \
  template Tensor<R> relu<R>(const Tensor<R>&);                                                 \
  template Tensor<R> abs_value<R>(const Tensor<R>&);                                            \
  template Tensor<R> sum<R>(const Tensor<R>&);                                                  \
  template Tensor<R> mean<R>(const Tensor<R>&);                                                 \
  template Tensor<R> mean_axis1<R>(const Tensor<R>&);                                           \
  template Tensor<R> reshape<R>(const Tensor<R>&, Shape);                                       \
  template Tensor<R> permute<R>(const Tensor<R>&, const std::vector<std::size_t>&);             \
  template Tensor<R> transpose_last2<R>(const Tensor<R>&);                                      \
  template Tensor<R> slice_first<R>(const Tensor<R>&, std::size_t);                             \
  template Tensor<R> stack_first<R>(const std::vector<Tensor<R>>&);                             \
  template Tensor<R> repeat_first<R>(const Tensor<R>&, std::size_t);                            \
  template Tensor<R> matmul<R>(const Tensor<R>&, const Tensor<R>&, KernelStats*);               \
  template Tensor<R> linear<R>(const Tensor<R>&, const Tensor<R>&, const Tensor<R>*,            \
                               KernelStats*);                                                   \
  template Tensor<R> batched_matmul<R>(const Tensor<R>&, const Tensor<R>&, ProductKernel,       \
                                       KernelStats*);                                           \
  template Tensor<R> softmax_last<R>(const Tensor<R>&);                                         \
  template Tensor<R> batch_norm<R>(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&,        \
                                   BatchNormState<R>&, Mode, double);                           \
  template Tensor<R> conv2d<R>(const Tensor<R>&, const Tensor<R>&, std::size_t, KernelStats*);  \
  template Tensor<R> max_pool2d<R>(const Tensor<R>&, std::size_t, std::size_t, std::size_t);    \
  template R surrogate_derivative<R>(R, R);                                                     \
  template R relaxed_step<R>(R, R);                                                             \
  template Tensor<R> spike_heaviside<R>(const Tensor<R>&, R, const SurrogateSpec&);             \
  template Tensor<R> spike_ternary<R>(const Tensor<R>&, R, const SurrogateSpec&);               \
  template Tensor<R> cross_entropy<R>(const Tensor<R>&, std::span<const int>);

A2OS2A_INSTANTIATE(float)
A2OS2A_INSTANTIATE(double)

#undef A2OS2A_INSTANTIATE

}  // namespace a2os2a
