#pragma once

#include <cstddef>
#include <vector>

#include "demixkit/tensor.hpp"

namespace demixkit {

enum class Mode { kTrain, kEval };

// Running statistics owned by a batch-norm layer. Updated in train mode,
// read in eval mode.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = 1e-5;
  double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch

  explicit BatchNormState(std::size_t dim = 0)
      : running_mean(dim, 0.0), running_var(dim, 1.0) {}
};

// a[m x k] * b[k x n]
Tensor matmul(const Tensor& a, const Tensor& b);

// x[n x din] * w[din x dout] + bias[1 x dout] broadcast over rows
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// Valid (unpadded) frame splicing. Rows are treated as n_segments
// equal-length blocks; each block loses max(context) - min(context) rows.
// Output row t of a block concatenates input rows t + (offset - min) for
// every offset, in the order given.
Tensor tdnn_splice(const Tensor& x, const std::vector<int>& context,
                   std::size_t n_segments = 1);

// linear(tdnn_splice(x, context), w, bias) computed without materialising
// the spliced matrix. w has D * |context| rows, blocked per offset.
Tensor tdnn_linear(const Tensor& x, const Tensor& w, const Tensor& bias,
                   const std::vector<int>& context, std::size_t n_segments = 1);

Tensor relu(const Tensor& x);

// Per-column normalisation of x[b x d]. Train mode uses batch statistics
// (population variance) and updates `state`; eval mode applies the stored
// running statistics. Train mode needs at least two rows.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, Mode mode);

// Per-segment concatenation of column means and standard deviations
// (sqrt(population variance + 1e-10)): [n_segments*t x d] -> [n_segments x 2d].
Tensor stats_pool(const Tensor& x, std::size_t n_segments = 1);

// Column-wise concatenation of equal-height matrices.
Tensor concat(const Tensor& a, const Tensor& b);

// Stacks matrices with equal column counts along the row axis.
Tensor concat_rows(const std::vector<Tensor>& parts);

// Drops `head` leading and `tail` trailing rows of every segment.
Tensor crop_rows(const Tensor& x, std::size_t head, std::size_t tail,
                 std::size_t n_segments = 1);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Sum of all elements, as a scalar.
Tensor sum(const Tensor& x);

// Mean over all elements of |pred - target|.
Tensor mae_loss(const Tensor& pred, const Tensor& target);

// Mean negative log-softmax at the true class, max-shifted for stability.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Same values, detached from gradient flow.
Tensor detach(const Tensor& x);

// Row-wise softmax of plain values (no tape participation).
std::vector<double> softmax_row(const std::vector<double>& logits);

}  // namespace demixkit
