#include "demixkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include "demixkit/demix.hpp"
#include "demixkit/ops.hpp"
#include "demixkit/rng.hpp"

namespace demixkit {

double grad_rel_err(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn,
                                const std::vector<Tensor>& wrt, double h) {
  std::map<const TensorImpl*, std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = loss_fn();
    tape.backward(loss);
    for (const Tensor& t : wrt) {
      if (!t.requires_grad()) {
        throw ValueError("check_gradients: tensor does not require grad");
      }
      // A tensor the loss never touched keeps an empty grad buffer; that
      // counts as an all-zero gradient.
      analytic[t.impl()] =
          t.grad().empty() ? std::vector<double>(t.size(), 0.0) : t.grad();
    }
  }

  GradCheckResult result;
  for (const Tensor& t : wrt) {
    Tensor mutable_t = t;
    const auto& grad = analytic.at(t.impl());
    for (std::size_t i = 0; i < mutable_t.size(); ++i) {
      const double saved = mutable_t.values()[i];
      mutable_t.values()[i] = saved + h;
      const double up = loss_fn().item();
      mutable_t.values()[i] = saved - h;
      const double down = loss_fn().item();
      mutable_t.values()[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      result.max_rel_err = std::max(result.max_rel_err, grad_rel_err(grad[i], numeric));
      ++result.checks;
    }
  }
  return result;
}

namespace {

Tensor rand_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                   double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

// Entries in [-1, -0.1] or [0.1, 1]: keeps ReLU and |.| kinks at a safe
// distance from the finite-difference step.
Tensor rand_tensor_off_kink(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) {
    const double mag = uniform(rng, 0.1, 1.0);
    v = uniform(rng, 0.0, 1.0) < 0.5 ? -mag : mag;
  }
  return t;
}

// Smooth scalar readout: sum(out * fixed_random_weights).
Tensor weighted_sum(const Tensor& out, const Tensor& weights) {
  return sum(mul(out, weights));
}

struct Suite {
  std::ostream& out;
  double tolerance;
  int failures = 0;

  void run(const std::string& name, const std::function<GradCheckResult()>& check) {
    const GradCheckResult result = check();
    const bool ok = result.max_rel_err < tolerance;
    if (!ok) ++failures;
    out << "[gradcheck] " << (ok ? "PASS" : "FAIL") << " " << name
        << "  max_rel_err=" << result.max_rel_err << "  checks=" << result.checks
        << "\n";
  }
};

GradCheckResult merge(GradCheckResult a, const GradCheckResult& b) {
  a.max_rel_err = std::max(a.max_rel_err, b.max_rel_err);
  a.checks += b.checks;
  return a;
}

}  // namespace

int run_gradient_suite(std::ostream& out, double tolerance) {
  constexpr int kPoints = 10;
  constexpr double kH = 1e-5;
  Suite suite{out, tolerance};

  suite.run("matmul", [&] {
    GradCheckResult acc;
    for (int rep = 0; rep < kPoints; ++rep) {
      Rng rng(mix_seed(101, rep));
      Tensor a = rand_tensor({3, 4}, rng).set_requires_grad(true);
      Tensor b = rand_tensor({4, 2}, rng).set_requires_grad(true);
      Tensor r = rand_tensor({3, 2}, rng);
      acc = merge(acc, check_gradients([&] { return weighted_sum(matmul(a, b), r); },
                                       {a, b}, kH));
    }
    return acc;
  });

  suite.run("linear", [&] {
    GradCheckResult acc;
    for (int rep = 0; rep < kPoints; ++rep) {
      Rng rng(mix_seed(102, rep));
      Tensor x = rand_tensor({3, 4}, rng).set_requires_grad(true);
      Tensor w = rand_tensor({4, 5}, rng).set_requires_grad(true);
      Tensor b = rand_tensor({1, 5}, rng).set_requires_grad(true);
      Tensor r = rand_tensor({3, 5}, rng);
      acc = merge(acc, check_gradients([&] { return weighted_sum(linear(x, w, b), r); },
                                       {x, w, b}, kH));
    }
    return acc;
  });

  suite.run("tdnn_splice", [&] {
    GradCheckResult acc;
    const std::vector<int> context{-1, 0, 1};
    for (int rep = 0; rep < kPoints; ++rep) {
      Rng rng(mix_seed(103, rep));
      Tensor x = rand_tensor({7, 3}, rng).set_requires_grad(true);
      Tensor r = rand_tensor({5, 9}, rng);
      acc = merge(acc, check_gradients(
                           [&] { return weighted_sum(tdnn_splice(x, context), r); },
                           {x}, kH));
    }
    return acc;
  });

  suite.run("tdnn_linear", [&] {
    GradCheckResult acc;
    const std::vector<int> context{-2, -1, 0, 1, 2};
    for (int rep = 0; rep < kPoints; ++rep) {
      Rng rng(mix_seed(104, rep));
      Tensor x = rand_tensor({16, 3}, rng).set_requires_grad(true);  // 2 segments of 8
      Tensor w = rand_tensor({15, 4}, rng).set_requires_grad(true);
      Tensor b = rand_tensor({1, 4}, rng).set_requires_grad(true);
      Tensor r = rand_tensor({8, 4}, rng);
      acc = merge(acc, check_gradients(
                           [&] {
                             return weighted_sum(tdnn_linear(x, w, b, context, 2), r);
                           },
                           {x, w, b}, kH));
    }
    return acc;
  });

  suite.run("relu", [&] {
    GradCheckResult acc;
    for (int rep = 0; rep < kPoints; ++rep) {
      Rng rng(mix_seed(105, rep));
      Tensor x = rand_tensor_off_kink({4, 5}, rng).set_requires_grad(true);
      Tensor r = rand_tensor({4, 5}, rng);
      acc = merge(acc,
                  check_gradients([&] { return weighted_sum(relu(x), r); }, {x}, kH));
    }
    return acc;
  });

  suite.run("batch_norm(train)", [&] {
    GradCheckResult acc;
    for (int rep = 0; rep < kPoints; ++rep) {
      Rng rng(mix_seed(106, rep));
      Tensor x = rand_tensor({4, 3}, rng).set_requires_grad(true);
      Tensor gamma = rand_tensor_off_kink({1, 3}, rng).set_requires_grad(true);
      Tensor beta = rand_tensor({1, 3}, rng).set_requires_grad(true);
      Tensor r = rand_tensor({4, 3}, rng);
      BatchNormState state(3);
      acc = merge(acc, check_gradients(
                           [&] {
                             return weighted_sum(
                                 batch_norm(x, gamma, beta, state, Mode::kTrain), r);
                           },
                           {x, gamma, beta}, kH));
    }
    return acc;
  });

  suite.run("batch_norm(eval)", [&] {
    GradCheckResult acc;
    for (int rep = 0; rep < kPoints; ++rep) {
      Rng rng(mix_seed(107, rep));
      Tensor x = rand_tensor({4, 3}, rng).set_requires_grad(true);
      Tensor gamma = rand_tensor_off_kink({1, 3}, rng).set_requires_grad(true);
      Tensor beta = rand_tensor({1, 3}, rng).set_requires_grad(true);
      Tensor r = rand_tensor({4, 3}, rng);
      BatchNormState state(3);
      for (double& v : state.running_mean) v = uniform(rng, -0.5, 0.5);
      for (double& v : state.running_var) v = uniform(rng, 0.5, 2.0);
      acc = merge(acc, check_gradients(
                           [&] {
                             return weighted_sum(
                                 batch_norm(x, gamma, beta, state, Mode::kEval), r);
                           },
                           {x, gamma, beta}, kH));
    }
    return acc;
  });

  suite.run("stats_pool", [&] {
    GradCheckResult acc;
    for (int rep = 0; rep < kPoints; ++rep) {
      Rng rng(mix_seed(108, rep));
      Tensor x = rand_tensor({12, 3}, rng).set_requires_grad(true);  // 2 segments of 6
      Tensor r = rand_tensor({2, 6}, rng);
      acc = merge(acc, check_gradients(
                           [&] { return weighted_sum(stats_pool(x, 2), r); }, {x}, kH));
    }
    return acc;
  });

  suite.run("concat", [&] {
    GradCheckResult acc;
    for (int rep = 0; rep < kPoints; ++rep) {
      Rng rng(mix_seed(109, rep));
      Tensor a = rand_tensor({3, 4}, rng).set_requires_grad(true);
      Tensor b = rand_tensor({3, 2}, rng).set_requires_grad(true);
      Tensor r = rand_tensor({3, 6}, rng);
      acc = merge(acc, check_gradients([&] { return weighted_sum(concat(a, b), r); },
                                       {a, b}, kH));
    }
    return acc;
  });

  suite.run("concat_rows", [&] {
    GradCheckResult acc;
    for (int rep = 0; rep < kPoints; ++rep) {
      Rng rng(mix_seed(110, rep));
      Tensor a = rand_tensor({2, 3}, rng).set_requires_grad(true);
      Tensor b = rand_tensor({3, 3}, rng).set_requires_grad(true);
      Tensor r = rand_tensor({5, 3}, rng);
      acc = merge(acc, check_gradients(
                           [&] { return weighted_sum(concat_rows({a, b}), r); }, {a, b},
                           kH));
    }
    return acc;
  });

  suite.run("crop_rows", [&] {
    GradCheckResult acc;
    for (int rep = 0; rep < kPoints; ++rep) {
      Rng rng(mix_seed(111, rep));
      Tensor x = rand_tensor({12, 3}, rng).set_requires_grad(true);
      Tensor r = rand_tensor({4, 3}, rng);
      acc = merge(acc, check_gradients(
                           [&] { return weighted_sum(crop_rows(x, 2, 2, 2), r); }, {x},
                           kH));
    }
    return acc;
  });

  suite.run("add/sub/mul", [&] {
    GradCheckResult acc;
    for (int rep = 0; rep < kPoints; ++rep) {
      Rng rng(mix_seed(112, rep));
      Tensor a = rand_tensor({3, 4}, rng).set_requires_grad(true);
      Tensor b = rand_tensor({3, 4}, rng).set_requires_grad(true);
      Tensor r = rand_tensor({3, 4}, rng);
      acc = merge(acc, check_gradients([&] { return weighted_sum(add(a, b), r); },
                                       {a, b}, kH));
      acc = merge(acc, check_gradients([&] { return weighted_sum(sub(a, b), r); },
                                       {a, b}, kH));
      acc = merge(acc, check_gradients([&] { return weighted_sum(mul(a, b), r); },
                                       {a, b}, kH));
    }
    return acc;
  });

  suite.run("sum", [&] {
    GradCheckResult acc;
    for (int rep = 0; rep < kPoints; ++rep) {
      Rng rng(mix_seed(113, rep));
      Tensor x = rand_tensor({3, 4}, rng).set_requires_grad(true);
      acc = merge(acc, check_gradients([&] { return sum(x); }, {x}, kH));
    }
    return acc;
  });

  suite.run("mae_loss", [&] {
    GradCheckResult acc;
    for (int rep = 0; rep < kPoints; ++rep) {
      Rng rng(mix_seed(114, rep));
      // pred - target stays away from the |.| kink
      Tensor pred = rand_tensor({3, 4}, rng, 1.0, 2.0).set_requires_grad(true);
      Tensor target = rand_tensor({3, 4}, rng, -1.0, 0.5).set_requires_grad(true);
      acc = merge(acc,
                  check_gradients([&] { return mae_loss(pred, target); },
                                  {pred, target}, kH));
    }
    return acc;
  });

  suite.run("softmax_cross_entropy", [&] {
    GradCheckResult acc;
    for (int rep = 0; rep < kPoints; ++rep) {
      Rng rng(mix_seed(115, rep));
      Tensor logits = rand_tensor({3, 5}, rng).set_requires_grad(true);
      std::vector<int> labels;
      for (int i = 0; i < 3; ++i) labels.push_back(static_cast<int>(uniform_index(rng, 5)));
      acc = merge(acc, check_gradients(
                           [&] { return softmax_cross_entropy(logits, labels); },
                           {logits}, kH));
    }
    return acc;
  });

  // Composite residual TDNN block at small width: splice -> affine -> BN ->
  // ReLU -> affine -> BN -> add cropped skip -> ReLU -> stats pool -> affine
  // -> cross entropy.
  suite.run("composite-tdnn-block", [&] {
    GradCheckResult acc;
    const std::vector<int> context{-2, -1, 0, 1, 2};
    for (int rep = 0; rep < kPoints; ++rep) {
      Rng rng(mix_seed(116, rep));
      const std::size_t d = 4, t = 12, segs = 2;
      Tensor x = rand_tensor({segs * t, d}, rng).set_requires_grad(true);
      Tensor w5 = rand_tensor({5 * d, d}, rng, -0.5, 0.5).set_requires_grad(true);
      Tensor b5 = rand_tensor({1, d}, rng, -0.1, 0.1).set_requires_grad(true);
      Tensor g5 = rand_tensor_off_kink({1, d}, rng).set_requires_grad(true);
      Tensor be5 = rand_tensor({1, d}, rng).set_requires_grad(true);
      Tensor w1 = rand_tensor({d, d}, rng, -0.5, 0.5).set_requires_grad(true);
      Tensor b1 = rand_tensor({1, d}, rng, -0.1, 0.1).set_requires_grad(true);
      Tensor g1 = rand_tensor_off_kink({1, d}, rng).set_requires_grad(true);
      Tensor be1 = rand_tensor({1, d}, rng).set_requires_grad(true);
      Tensor wo = rand_tensor({2 * d, 3}, rng, -0.5, 0.5).set_requires_grad(true);
      Tensor bo = rand_tensor({1, 3}, rng, -0.1, 0.1).set_requires_grad(true);
      const std::vector<int> labels{1, 2};
      BatchNormState s5(d), s1(d);
      auto loss_fn = [&] {
        Tensor h = tdnn_linear(x, w5, b5, context, segs);
        h = relu(batch_norm(h, g5, be5, s5, Mode::kTrain));
        h = batch_norm(linear(h, w1, b1), g1, be1, s1, Mode::kTrain);
        h = relu(add(h, crop_rows(x, 2, 2, segs)));
        Tensor pooled = stats_pool(h, segs);
        return softmax_cross_entropy(linear(pooled, wo, bo), labels);
      };
      acc = merge(acc, check_gradients(
                           loss_fn, {x, w5, b5, g5, be5, w1, b1, g1, be1, wo, bo}, kH));
    }
    return acc;
  });

  // End-to-end de-mixing graphs at full width, against the MAE objective.
  // Finite differences run on a deterministic sample of entries per tensor.
  for (DemixVariant variant : kAllVariants) {
    suite.run("demix-graph(" + to_string(variant) + ")", [&] {
      GradCheckResult acc;
      for (int rep = 0; rep < kPoints; ++rep) {
        Rng rng(mix_seed(117 + static_cast<int>(variant), rep));
        DemixHead head = DemixHead::init(variant, rng);
        Tensor e_mix =
            rand_tensor({2, kEmbeddingDim}, rng).set_requires_grad(true);
        Tensor e_known = rand_tensor({2, kEmbeddingDim}, rng);
        Tensor target = rand_tensor({2, kEmbeddingDim}, rng, 2.0, 3.0);
        auto loss_fn = [&] { return mae_loss(head.forward(e_mix, e_known), target); };

        // Analytic pass over everything, then spot-check a sample.
        std::map<const TensorImpl*, std::vector<double>> analytic;
        std::vector<Tensor> wrt = head.trainable();
        wrt.push_back(e_mix);
        {
          Tape tape;
          Tensor loss = loss_fn();
          tape.backward(loss);
          for (const Tensor& p : wrt) analytic[p.impl()] = p.grad();
        }
        for (Tensor& p : wrt) {
          const auto& grad = analytic.at(p.impl());
          const std::size_t n_checks = std::min<std::size_t>(p.size(), 8);
          for (std::size_t c = 0; c < n_checks; ++c) {
            const std::size_t i = uniform_index(rng, p.size());
            const double saved = p.values()[i];
            p.values()[i] = saved + kH;
            const double up = loss_fn().item();
            p.values()[i] = saved - kH;
            const double down = loss_fn().item();
            p.values()[i] = saved;
            const double numeric = (up - down) / (2.0 * kH);
            acc.max_rel_err = std::max(acc.max_rel_err, grad_rel_err(grad[i], numeric));
            ++acc.checks;
          }
        }
      }
      return acc;
    });
  }

  out << "[gradcheck] " << (suite.failures == 0 ? "all checks passed" : "FAILURES: ")
      << (suite.failures ? std::to_string(suite.failures) : "") << "\n";
  return suite.failures;
}

}  // namespace demixkit
