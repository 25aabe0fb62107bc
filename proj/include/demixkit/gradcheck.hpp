#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "demixkit/tensor.hpp"

namespace demixkit {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checks = 0;
};

// |a - b| / max(1, |a|, |b|): relative above 1, absolute below.
double grad_rel_err(double analytic, double numeric);

// Runs loss_fn once under a tape, backpropagates, then compares every
// gradient entry of `wrt` against central finite differences of loss_fn
// evaluated without a tape. loss_fn must be a pure function of the current
// tensor values.
GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn,
                                const std::vector<Tensor>& wrt, double h = 1e-5);

// The full finite-difference suite over every differentiable op and every
// de-mixing head graph, at 10 random points each. Prints one line per check
// to `out` and returns the number of failures (0 = all good). This is the
// gate behind the `gradcheck` CLI command.
int run_gradient_suite(std::ostream& out, double tolerance = 1e-4);

}  // namespace demixkit
