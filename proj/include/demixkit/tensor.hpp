#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "demixkit/errors.hpp"

namespace demixkit {

struct TensorImpl {
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until backward() touches this tensor
  bool requires_grad = false;
};

// Dense row-major tensor of 64-bit floats. Copies share storage (cheap
// handles); a tensor that never sees a Tape is plain immutable data and may
// be read concurrently. Rank 0 (shape {}) is the scalar case used by losses.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor identity(std::size_t n);
  // [1 x n] row vector
  static Tensor row(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return impl_->shape; }
  std::size_t size() const { return impl_->value.size(); }
  bool is_scalar() const { return size() == 1; }
  std::string shape_str() const;

  // 2-D accessors; throw ShapeError if the rank disagrees.
  std::size_t rows() const;
  std::size_t cols() const;
  double operator()(std::size_t r, std::size_t c) const;
  double& operator()(std::size_t r, std::size_t c);

  double item() const;  // scalar fetch

  const std::vector<double>& values() const { return impl_->value; }
  std::vector<double>& values() { return impl_->value; }
  const std::vector<double>& grad() const { return impl_->grad; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  // Throws NumericError if any entry is not finite.
  void check_finite(const char* what) const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& handle() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);
std::string shape_to_string(const std::vector<std::size_t>& shape);

// Reverse-mode tape. Constructing a Tape makes it the active recorder for
// the current thread; ops record themselves while one is active and are
// silent otherwise (eval mode). backward() may run once per tape; a second
// call throws rather than silently double-accumulating.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::vector<std::shared_ptr<TensorImpl>> inputs,
              std::shared_ptr<TensorImpl> output,
              std::function<void()> backprop);

  // Zeroes the gradients of every tensor this tape touched, seeds the loss
  // gradient with 1 and replays the nodes in reverse topological order.
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    std::function<void()> backprop;
  };
  std::vector<Node> nodes_;
  std::unordered_set<const TensorImpl*> outputs_;
  bool consumed_ = false;
  Tape* previous_ = nullptr;
};

}  // namespace demixkit
