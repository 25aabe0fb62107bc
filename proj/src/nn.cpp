#include "demixkit/nn.hpp"

#include <algorithm>

namespace demixkit {

LinearLayer LinearLayer::init(std::size_t in, std::size_t out, double weight_std,
                              Rng& rng) {
  LinearLayer layer;
  layer.weight = Tensor({in, out});
  for (double& v : layer.weight.values()) v = weight_std * normal(rng);
  layer.weight.set_requires_grad(true);
  layer.bias = Tensor({1, out});
  layer.bias.set_requires_grad(true);
  return layer;
}

BatchNormLayer BatchNormLayer::init(std::size_t dim) {
  BatchNormLayer layer;
  layer.gamma = Tensor::full({1, dim}, 1.0);
  layer.gamma.set_requires_grad(true);
  layer.beta = Tensor({1, dim});
  layer.beta.set_requires_grad(true);
  layer.state = BatchNormState(dim);
  return layer;
}

Tensor BatchNormLayer::mean_tensor() const {
  return Tensor({1, state.running_mean.size()}, state.running_mean);
}

Tensor BatchNormLayer::var_tensor() const {
  return Tensor({1, state.running_var.size()}, state.running_var);
}

void BatchNormLayer::set_stats(const Tensor& mean, const Tensor& var) {
  if (mean.size() != state.running_mean.size() || var.size() != state.running_var.size()) {
    throw ShapeError("batch norm stats " + mean.shape_str() + "/" + var.shape_str() +
                     " do not match dimension " + std::to_string(dim()));
  }
  state.running_mean = mean.values();
  state.running_var = var.values();
}

TdnnLayer TdnnLayer::init(std::vector<int> context, std::size_t in, std::size_t out,
                          Rng& rng) {
  TdnnLayer layer;
  const std::size_t fan_in = in * context.size();
  layer.affine = LinearLayer::init(fan_in, out, std::sqrt(2.0 / fan_in), rng);
  layer.bn = BatchNormLayer::init(out);
  layer.context = std::move(context);
  return layer;
}

Tensor TdnnLayer::forward(const Tensor& x, Mode mode, std::size_t n_segments) {
  Tensor h = tdnn_linear(x, affine.weight, affine.bias, context, n_segments);
  return relu(bn.forward(h, mode));
}

std::size_t TdnnLayer::shrink() const {
  const auto [lo, hi] = std::minmax_element(context.begin(), context.end());
  return static_cast<std::size_t>(*hi - *lo);
}

void append_params(std::vector<Tensor>& out, const LinearLayer& layer) {
  out.push_back(layer.weight);
  out.push_back(layer.bias);
}

void append_params(std::vector<Tensor>& out, const BatchNormLayer& layer) {
  out.push_back(layer.gamma);
  out.push_back(layer.beta);
}

void append_params(std::vector<Tensor>& out, const TdnnLayer& layer) {
  append_params(out, layer.affine);
  append_params(out, layer.bn);
}

}  // namespace demixkit
