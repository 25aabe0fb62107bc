#include "demixkit/adam.hpp"

#include <cmath>

namespace demixkit {

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& param = params_[p];
    const std::size_t n = param.size();
    if (!param.grad().empty() && param.grad().size() != n) {
      throw ShapeError("adam: gradient size " + std::to_string(param.grad().size()) +
                       " != parameter size " + std::to_string(n));
    }
    const double* g = param.grad().empty() ? nullptr : param.grad().data();
    double* value = param.values().data();
    double* m = m_[p].data();
    double* v = v_[p].data();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g ? g[i] : 0.0;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      value[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void Adam::restore(std::uint64_t step, std::vector<std::vector<double>> m,
                   std::vector<std::vector<double>> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw ShapeError("adam: restored state covers " + std::to_string(m.size()) +
                     " parameters, expected " + std::to_string(params_.size()));
  }
  for (std::size_t p = 0; p < params_.size(); ++p) {
    if (m[p].size() != params_[p].size() || v[p].size() != params_[p].size()) {
      throw ShapeError("adam: restored moment size mismatch at parameter " +
                       std::to_string(p));
    }
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace demixkit
