#include "demixkit/tensor.hpp"

#include <cmath>
#include <sstream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace demixkit {

namespace {
// Keep large tensor buffers on the regular heap so freed blocks are reused
// instead of being mmap'd and faulted in again on every training step.
struct MallocTuning {
  MallocTuning() {
#ifdef __GLIBC__
    mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
#endif
  }
};
const MallocTuning g_malloc_tuning;
}  // namespace

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
  impl_ = std::make_shared<TensorImpl>();
  impl_->value.assign(shape_product(shape), 0.0);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
  if (shape_product(shape) != values.size()) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape_to_string(shape));
  }
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->value = std::move(values);
  check_finite("tensor construction");
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  for (double& x : t.values()) x = v;
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::string Tensor::shape_str() const { return shape_to_string(impl_->shape); }

std::size_t Tensor::rows() const {
  if (impl_->shape.size() != 2) throw ShapeError("expected a 2-D tensor, got " + shape_str());
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (impl_->shape.size() != 2) throw ShapeError("expected a 2-D tensor, got " + shape_str());
  return impl_->shape[1];
}

double Tensor::operator()(std::size_t r, std::size_t c) const {
  return impl_->value[r * cols() + c];
}

double& Tensor::operator()(std::size_t r, std::size_t c) {
  return impl_->value[r * cols() + c];
}

double Tensor::item() const {
  if (!is_scalar()) throw ShapeError("item() called on non-scalar tensor " + shape_str());
  return impl_->value[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

void Tensor::check_finite(const char* what) const {
  for (double v : impl_->value) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + ": non-finite value encountered");
    }
  }
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() {
  previous_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::vector<std::shared_ptr<TensorImpl>> inputs,
                  std::shared_ptr<TensorImpl> output,
                  std::function<void()> backprop) {
  outputs_.insert(output.get());
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backprop)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) {
    throw Error("backward() already ran on this tape; build a new tape per step");
  }
  if (!loss.is_scalar()) {
    throw ShapeError("backward() needs a scalar loss, got " + loss.shape_str());
  }
  if (outputs_.find(loss.impl()) == outputs_.end()) {
    throw Error("backward(): loss tensor was not produced on this tape");
  }
  consumed_ = true;

  // Fresh gradients for everything the tape touched. Tensors recorded here
  // but disconnected from the loss therefore end up with exact zeros.
  std::unordered_set<const TensorImpl*> seen;
  auto reset = [&seen](const std::shared_ptr<TensorImpl>& t) {
    if (t->requires_grad && seen.insert(t.get()).second) {
      t->grad.assign(t->value.size(), 0.0);
    }
  };
  for (const Node& node : nodes_) {
    for (const auto& in : node.inputs) reset(in);
    reset(node.output);
  }

  loss.impl()->grad.assign(1, 1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backprop();
  }
  nodes_.clear();
  outputs_.clear();
}

}  // namespace demixkit
