#pragma once

#include <string>
#include <vector>

#include "demixkit/ops.hpp"
#include "demixkit/rng.hpp"
#include "demixkit/tensor.hpp"

namespace demixkit {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct LinearLayer {
  Tensor weight;  // [in x out]
  Tensor bias;    // [1 x out]

  static LinearLayer init(std::size_t in, std::size_t out, double weight_std, Rng& rng);
  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

struct BatchNormLayer {
  Tensor gamma;  // ones at init
  Tensor beta;   // zeros at init
  BatchNormState state;

  static BatchNormLayer init(std::size_t dim);
  Tensor forward(const Tensor& x, Mode mode) {
    return batch_norm(x, gamma, beta, state, mode);
  }
  std::size_t dim() const { return gamma.cols(); }

  // Running statistics as tensors, for checkpointing.
  Tensor mean_tensor() const;
  Tensor var_tensor() const;
  void set_stats(const Tensor& mean, const Tensor& var);
};

// One TDNN layer: spliced affine -> batch norm -> ReLU.
struct TdnnLayer {
  std::vector<int> context;
  LinearLayer affine;  // [(in * |context|) x out]
  BatchNormLayer bn;

  static TdnnLayer init(std::vector<int> context, std::size_t in, std::size_t out,
                        Rng& rng);
  Tensor forward(const Tensor& x, Mode mode, std::size_t n_segments);
  std::size_t shrink() const;  // frames lost per segment
};

void append_params(std::vector<Tensor>& out, const LinearLayer& layer);
void append_params(std::vector<Tensor>& out, const BatchNormLayer& layer);
void append_params(std::vector<Tensor>& out, const TdnnLayer& layer);

}  // namespace demixkit
