#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dfgp/errors.hpp"

namespace dfgp {

class Tape;

using Shape = std::vector<std::size_t>;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  const Tape* tape = nullptr;  // tape this value was recorded on, if any

  std::size_t size() const { return values.size(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

/// Dense 64-bit tensor, row-major, shared-buffer value semantics. Copying a
/// Tensor copies the handle; the buffer is shared so that tape nodes and the
/// optimizer see one another's updates.
class Tensor {
public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t size() const { return impl_->values.size(); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }

  std::span<const double> values() const { return impl_->values; }
  std::span<double> mutable_values() { return impl_->values; }

  /// Scalar convenience accessor; throws ShapeError unless size()==1.
  double value() const;
  double operator[](std::size_t i) const { return impl_->values[i]; }
  double at(std::size_t row, std::size_t col) const;

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Deep copy of values (fresh buffer, no grad, no tape association).
  Tensor detached_copy() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Record of a forward pass: every primitive applied while a TapeScope is
/// active appends one node. Replaying the nodes in reverse order propagates
/// gradients from a scalar loss to every requires_grad leaf. Single-writer,
/// single-threaded; independent tapes may run concurrently on shared
/// read-only parameter values.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Seeds d(loss)/d(loss)=1 and replays all nodes in reverse recording
  /// order. Gradients accumulate additively into every requires_grad tensor
  /// that participated. `loss` must be a scalar recorded on this tape.
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }

  /// Drops all nodes and the buffer references they hold.
  void clear() { nodes_.clear(); }

  void record(std::vector<std::shared_ptr<detail::TensorImpl>> inputs,
              std::shared_ptr<detail::TensorImpl> output,
              std::function<void()> backward_fn);

private:
  struct Node {
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
};

/// RAII guard making `tape` the active recording target for this thread.
class TapeScope {
public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

private:
  Tape* previous_;
};

/// RAII guard suspending recording (used while evaluating finite-difference
/// probes so they do not pollute an ambient tape).
class TapeSuspend {
public:
  TapeSuspend();
  ~TapeSuspend();
  TapeSuspend(const TapeSuspend&) = delete;
  TapeSuspend& operator=(const TapeSuspend&) = delete;

private:
  Tape* previous_;
};

Tape* active_tape();

// Primitive ops. Shapes must conform exactly (no broadcasting); every result
// is checked for non-finite entries and recorded on the active tape when any
// operand requires a gradient.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor softmax(const Tensor& x);  // 1-D only
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor slice(const Tensor& x, std::size_t begin, std::size_t end);  // axis 0
Tensor concat(const std::vector<Tensor>& parts);                    // axis 0
Tensor reshape(const Tensor& x, Shape shape);

/// Gradient rule for a custom node: maps the upstream gradient of the node's
/// output to one gradient buffer per input, each shaped like that input.
using CustomBackward =
    std::function<std::vector<std::vector<double>>(std::span<const double> out_grad)>;

/// Joins an externally computed forward value to the tape with a closed-form
/// backward rule, exactly as if it were a primitive. Lets expensive
/// factorizations contribute analytic gradients without being differentiated
/// through.
Tensor custom_gradient_node(const Tensor& forward_value,
                            const std::vector<Tensor>& inputs,
                            CustomBackward backward_rule);

/// Central finite differences (f(x+h e_j) - f(x-h e_j)) / 2h per coordinate.
/// Evaluations run with recording suspended.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h = 1e-5);

}  // namespace dfgp
