#include "dfgp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace dfgp {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void check_finite(std::span<const double> values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": operand shapes differ");
  }
}

using ImplPtr = std::shared_ptr<detail::TensorImpl>;

Tensor wrap_result(Shape shape, std::vector<double> values, const char* op,
                   std::initializer_list<Tensor> inputs,
                   const std::function<std::function<void()>(const ImplPtr& out)>& make_backward) {
  check_finite(values, op);
  bool needs_grad = false;
  for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();

  Tensor out(std::move(shape), std::move(values), needs_grad);
  if (needs_grad && g_active_tape != nullptr) {
    out.impl()->tape = g_active_tape;
    std::vector<ImplPtr> input_impls;
    input_impls.reserve(inputs.size());
    for (const Tensor& t : inputs) input_impls.push_back(t.impl());
    g_active_tape->record(std::move(input_impls), out.impl(), make_backward(out.impl()));
  }
  return out;
}

// Accumulates `delta * scale` into the grad buffer of `target` if it wants one.
void bump(const ImplPtr& target, std::span<const double> delta, double scale = 1.0) {
  if (!target->requires_grad) return;
  target->ensure_grad();
  for (std::size_t i = 0; i < delta.size(); ++i) target->grad[i] += scale * delta[i];
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_product(shape) != values.size()) {
    throw ShapeError("tensor shape does not match value count");
  }
  check_finite(values, "tensor construction");
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(shape_product(shape), 0.0);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_product(shape), value);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{value}, requires_grad);
}

double Tensor::value() const {
  if (size() != 1) throw ShapeError("value() requires a scalar tensor");
  return impl_->values[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw ShapeError("at(row, col) requires a rank-2 tensor");
  return impl_->values[row * impl_->shape[1] + col];
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw TapeError("tensor has no gradient buffer");
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  impl_->ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty()) {
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }
}

Tensor Tensor::detached_copy() const {
  return Tensor(impl_->shape, impl_->values, false);
}

void Tape::record(std::vector<ImplPtr> inputs, ImplPtr output,
                  std::function<void()> backward_fn) {
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward requires a defined scalar loss");
  }
  if (loss.impl()->tape != this) {
    throw TapeError("backward on a tensor not recorded on this tape");
  }
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // nothing flowed here
    it->backward();
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

TapeSuspend::TapeSuspend() : previous_(g_active_tape) { g_active_tape = nullptr; }
TapeSuspend::~TapeSuspend() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  auto ai = a.impl(), bi = b.impl();
  return wrap_result(a.shape(), std::move(out), "add", {a, b}, [&](const ImplPtr& o) {
    return [ai, bi, o]() {
      bump(ai, o->grad);
      bump(bi, o->grad);
    };
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  auto ai = a.impl(), bi = b.impl();
  return wrap_result(a.shape(), std::move(out), "sub", {a, b}, [&](const ImplPtr& o) {
    return [ai, bi, o]() {
      bump(ai, o->grad);
      bump(bi, o->grad, -1.0);
    };
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  auto ai = a.impl(), bi = b.impl();
  return wrap_result(a.shape(), std::move(out), "mul", {a, b}, [&](const ImplPtr& o) {
    return [ai, bi, o]() {
      if (ai->requires_grad) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) ai->grad[i] += o->grad[i] * bi->values[i];
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) bi->grad[i] += o->grad[i] * ai->values[i];
      }
    };
  });
}

// Supported forms: (m,k)x(k,n) -> (m,n); (m,k)x(k) -> (m); (k)x(k,n) -> (n).
Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t ra = a.rank(), rb = b.rank();
  std::size_t m, k, n;
  Shape out_shape;
  if (ra == 2 && rb == 2) {
    m = a.dim(0); k = a.dim(1); n = b.dim(1);
    if (b.dim(0) != k) throw ShapeError("matmul: inner dimensions differ");
    out_shape = {m, n};
  } else if (ra == 2 && rb == 1) {
    m = a.dim(0); k = a.dim(1); n = 1;
    if (b.dim(0) != k) throw ShapeError("matmul: inner dimensions differ");
    out_shape = {m};
  } else if (ra == 1 && rb == 2) {
    m = 1; k = a.dim(0); n = b.dim(1);
    if (b.dim(0) != k) throw ShapeError("matmul: inner dimensions differ");
    out_shape = {n};
  } else {
    throw ShapeError("matmul: operands must be rank 1 or 2 (at least one rank 2)");
  }

  std::vector<double> out(m * n, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }

  auto ai = a.impl(), bi = b.impl();
  return wrap_result(std::move(out_shape), std::move(out), "matmul", {a, b},
                     [&, m, k, n](const ImplPtr& o) {
    return [ai, bi, o, m, k, n]() {
      // dA += G B^T, dB += A^T G, with G read as (m,n).
      if (ai->requires_grad) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              acc += o->grad[i * n + j] * bi->values[p * n + j];
            }
            ai->grad[i * k + p] += acc;
          }
        }
      }
      if (bi->requires_grad) {
        bi->ensure_grad();
        for (std::size_t p = 0; p < k; ++p) {
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
              acc += ai->values[i * k + p] * o->grad[i * n + j];
            }
            bi->grad[p * n + j] += acc;
          }
        }
      }
    };
  });
}

namespace {

Tensor unary_op(const Tensor& x, const char* name,
                const std::function<double(double)>& fwd,
                const std::function<double(double /*x*/, double /*y*/)>& dydx) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  auto xi = x.impl();
  return wrap_result(x.shape(), std::move(out), name, {x}, [&](const ImplPtr& o) {
    return [xi, o, dydx]() {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        xi->grad[i] += o->grad[i] * dydx(xi->values[i], o->values[i]);
      }
    };
  });
}

}  // namespace

Tensor tanh(const Tensor& x) {
  return unary_op(x, "tanh", [](double v) { return std::tanh(v); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(x, "sigmoid",
                  [](double v) {
                    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
                    const double e = std::exp(v);
                    return e / (1.0 + e);
                  },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary_op(x, "exp", [](double v) { return std::exp(v); },
                  [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_op(x, "log", [](double v) { return std::log(v); },
                  [](double v, double) { return 1.0 / v; });
}

Tensor softplus(const Tensor& x) {
  return unary_op(x, "softplus",
                  [](double v) {
                    return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
                  },
                  [](double v, double) {
                    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
                    const double e = std::exp(v);
                    return e / (1.0 + e);
                  });
}

Tensor softmax(const Tensor& x) {
  if (x.rank() != 1) throw ShapeError("softmax expects a rank-1 tensor");
  const double hi = *std::max_element(x.values().begin(), x.values().end());
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(x[i] - hi);
    total += out[i];
  }
  for (double& v : out) v /= total;
  auto xi = x.impl();
  return wrap_result(x.shape(), std::move(out), "softmax", {x}, [&](const ImplPtr& o) {
    return [xi, o]() {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      double dot = 0.0;
      for (std::size_t i = 0; i < o->grad.size(); ++i) dot += o->grad[i] * o->values[i];
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        xi->grad[i] += o->values[i] * (o->grad[i] - dot);
      }
    };
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  auto xi = x.impl();
  return wrap_result(Shape{1}, {total}, "sum", {x}, [&](const ImplPtr& o) {
    return [xi, o]() { bump(xi, std::vector<double>(xi->size(), o->grad[0])); };
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean of an empty tensor");
  double total = 0.0;
  for (double v : x.values()) total += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  auto xi = x.impl();
  return wrap_result(Shape{1}, {total * inv}, "mean", {x}, [&](const ImplPtr& o) {
    return [xi, o, inv]() { bump(xi, std::vector<double>(xi->size(), o->grad[0] * inv)); };
  });
}

Tensor slice(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0 || begin > end || end > x.dim(0)) {
    throw ShapeError("slice: range out of bounds");
  }
  std::size_t row = 1;
  for (std::size_t d = 1; d < x.rank(); ++d) row *= x.dim(d);
  Shape out_shape = x.shape();
  out_shape[0] = end - begin;
  std::vector<double> out(x.values().begin() + static_cast<std::ptrdiff_t>(begin * row),
                          x.values().begin() + static_cast<std::ptrdiff_t>(end * row));
  auto xi = x.impl();
  return wrap_result(std::move(out_shape), std::move(out), "slice", {x},
                     [&, begin, row](const ImplPtr& o) {
    return [xi, o, begin, row]() {
      if (!xi->requires_grad) return;
      xi->ensure_grad();
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        xi->grad[begin * row + i] += o->grad[i];
      }
    };
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  std::size_t rows = 0;
  for (const Tensor& t : parts) {
    if (t.rank() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 1; d < first.size(); ++d) {
      if (t.dim(d) != first[d]) throw ShapeError("concat: trailing dimensions differ");
    }
    rows += t.dim(0);
  }
  Shape out_shape = first;
  out_shape[0] = rows;
  std::vector<double> out;
  out.reserve(shape_product(out_shape));
  bool needs_grad = false;
  for (const Tensor& t : parts) {
    out.insert(out.end(), t.values().begin(), t.values().end());
    needs_grad = needs_grad || t.requires_grad();
  }
  check_finite(out, "concat");

  Tensor result(std::move(out_shape), std::move(out), needs_grad);
  if (needs_grad && active_tape() != nullptr) {
    result.impl()->tape = active_tape();
    std::vector<ImplPtr> input_impls;
    input_impls.reserve(parts.size());
    for (const Tensor& t : parts) input_impls.push_back(t.impl());
    auto o = result.impl();
    auto inputs_copy = input_impls;
    active_tape()->record(std::move(input_impls), o, [inputs_copy, o]() {
      std::size_t offset = 0;
      for (const auto& in : inputs_copy) {
        if (in->requires_grad) {
          in->ensure_grad();
          for (std::size_t i = 0; i < in->size(); ++i) in->grad[i] += o->grad[offset + i];
        }
        offset += in->size();
      }
    });
  }
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_product(shape) != x.size()) throw ShapeError("reshape: element count differs");
  std::vector<double> out(x.values().begin(), x.values().end());
  auto xi = x.impl();
  return wrap_result(std::move(shape), std::move(out), "reshape", {x}, [&](const ImplPtr& o) {
    return [xi, o]() { bump(xi, o->grad); };
  });
}

Tensor custom_gradient_node(const Tensor& forward_value, const std::vector<Tensor>& inputs,
                            CustomBackward backward_rule) {
  check_finite(forward_value.values(), "custom_gradient_node");
  bool needs_grad = false;
  for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();

  Tensor out(forward_value.shape(),
             std::vector<double>(forward_value.values().begin(), forward_value.values().end()),
             needs_grad);
  if (needs_grad && active_tape() != nullptr) {
    out.impl()->tape = active_tape();
    std::vector<ImplPtr> input_impls;
    input_impls.reserve(inputs.size());
    for (const Tensor& t : inputs) input_impls.push_back(t.impl());
    auto o = out.impl();
    auto ins = input_impls;
    auto rule = std::move(backward_rule);
    active_tape()->record(std::move(input_impls), o, [ins, o, rule]() {
      const std::vector<std::vector<double>> grads = rule(o->grad);
      if (grads.size() != ins.size()) {
        throw ShapeError("custom_gradient_node: rule returned wrong number of gradients");
      }
      for (std::size_t j = 0; j < ins.size(); ++j) {
        if (grads[j].size() != ins[j]->size()) {
          throw ShapeError("custom_gradient_node: gradient shape mismatch");
        }
        bump(ins[j], grads[j]);
      }
    });
  }
  return out;
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h) {
  if (!(h > 0.0)) throw DomainError("finite differences require h > 0");
  TapeSuspend suspend;
  std::vector<double> probe(x.values().begin(), x.values().end());
  std::vector<double> grad(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double saved = probe[j];
    probe[j] = saved + h;
    const double up = f(Tensor(x.shape(), probe));
    probe[j] = saved - h;
    const double down = f(Tensor(x.shape(), probe));
    probe[j] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite differences: non-finite probe evaluation");
    }
    grad[j] = (up - down) / (2.0 * h);
  }
  return Tensor(x.shape(), std::move(grad));
}

}  // namespace dfgp
