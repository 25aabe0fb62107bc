#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "demixkit/adam.hpp"
#include "demixkit/gradcheck.hpp"
#include "demixkit/ops.hpp"
#include "demixkit/rng.hpp"

using namespace demixkit;

TEST_CASE("matmul identity and hand arithmetic") {
  Tensor x = Tensor::matrix(2, 2, {3, 4, 5, 6});
  Tensor out = matmul(Tensor::identity(2), x);
  CHECK(out.values() == x.values());  // exact for small integers

  Tensor a = Tensor::matrix(1, 2, {1, 2});
  Tensor b = Tensor::matrix(2, 1, {3, 4});
  CHECK(matmul(a, b).item() == doctest::Approx(11.0).epsilon(1e-12));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a({2, 3});
  Tensor b({2, 3});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(42);
  Tensor a({3, 4}), b({4, 2});
  for (double& v : a.values()) v = uniform(rng, -1.0, 1.0);
  for (double& v : b.values()) v = uniform(rng, -1.0, 1.0);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  const auto result =
      check_gradients([&] { return sum(matmul(a, b)); }, {a, b}, 1e-5);
  CHECK(result.max_rel_err < 1e-6);
}

TEST_CASE("tdnn_splice identity context") {
  Tensor x({5, 2}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor out = tdnn_splice(x, {0});
  CHECK(out.shape() == x.shape());
  CHECK(out.values() == x.values());
}

TEST_CASE("tdnn_splice symmetric context") {
  Tensor x({5, 2}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor out = tdnn_splice(x, {-1, 0, 1});
  REQUIRE(out.rows() == 3);
  REQUIRE(out.cols() == 6);
  // row 0 concatenates input rows 0, 1, 2
  const std::vector<double> expected{0, 1, 2, 3, 4, 5};
  for (std::size_t j = 0; j < 6; ++j) CHECK(out(0, j) == expected[j]);
}

TEST_CASE("tdnn_splice segment too short") {
  Tensor x({3, 2});
  CHECK_THROWS_AS(tdnn_splice(x, {-2, -1, 0, 1, 2}), ValueError);
}

TEST_CASE("tdnn_linear equals linear over splice") {
  Rng rng(7);
  const std::vector<int> context{-2, 0, 1};
  Tensor x({14, 3});
  for (double& v : x.values()) v = uniform(rng, -1.0, 1.0);
  Tensor w({9, 4});
  for (double& v : w.values()) v = uniform(rng, -1.0, 1.0);
  Tensor b({1, 4});
  for (double& v : b.values()) v = uniform(rng, -1.0, 1.0);
  Tensor fused = tdnn_linear(x, w, b, context, 2);
  Tensor reference = linear(tdnn_splice(x, context, 2), w, b);
  REQUIRE(fused.shape() == reference.shape());
  for (std::size_t i = 0; i < fused.size(); ++i) {
    CHECK(fused.values()[i] == doctest::Approx(reference.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("linear identity and hand arithmetic") {
  Tensor x = Tensor::matrix(1, 2, {1, 1});
  Tensor out = linear(x, Tensor::identity(2), Tensor::row({2, 3}));
  CHECK(out(0, 0) == doctest::Approx(3.0));
  CHECK(out(0, 1) == doctest::Approx(4.0));

  Tensor same = linear(x, Tensor::identity(2), Tensor::zeros({1, 2}));
  CHECK(same.values() == x.values());
}

TEST_CASE("relu forward") {
  Tensor x = Tensor::row({-1, 0, 2});
  Tensor out = relu(x);
  CHECK(out.values() == std::vector<double>{0, 0, 2});

  Tensor pos = Tensor::row({0.5, 1.5});
  CHECK(relu(pos).values() == pos.values());
}

TEST_CASE("batch_norm normalizes and rejects degenerate batches") {
  Rng rng(3);
  Tensor x({8, 3});
  for (double& v : x.values()) v = uniform(rng, -2.0, 2.0);
  Tensor gamma = Tensor::full({1, 3}, 1.0);
  Tensor beta({1, 3});
  BatchNormState state(3);
  Tensor out = batch_norm(x, gamma, beta, state, Mode::kTrain);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < 8; ++i) mean += out(i, j);
    mean /= 8;
    for (std::size_t i = 0; i < 8; ++i) var += (out(i, j) - mean) * (out(i, j) - mean);
    var /= 8;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }

  Tensor single({1, 3});
  BatchNormState s2(3);
  CHECK_THROWS_AS(batch_norm(single, gamma, beta, s2, Mode::kTrain), ValueError);
}

TEST_CASE("batch_norm is near-identity on whitened input") {
  // columns with mean 0 and variance 1
  Tensor x({4, 2}, {1, -1, -1, 1, 1, -1, -1, 1});
  Tensor gamma = Tensor::full({1, 2}, 1.0);
  Tensor beta({1, 2});
  BatchNormState state(2);
  Tensor out = batch_norm(x, gamma, beta, state, Mode::kTrain);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-4));
  }
}

TEST_CASE("stats_pool constant and hand arithmetic") {
  Tensor constant = Tensor::full({5, 2}, 3.0);
  Tensor out = stats_pool(constant);
  CHECK(out(0, 0) == doctest::Approx(3.0));
  CHECK(out(0, 1) == doctest::Approx(3.0));
  CHECK(out(0, 2) == doctest::Approx(std::sqrt(1e-10)).epsilon(1e-9));
  CHECK(out(0, 3) == doctest::Approx(std::sqrt(1e-10)).epsilon(1e-9));

  Tensor two({2, 1}, {0, 2});
  Tensor pooled = stats_pool(two);
  CHECK(pooled(0, 0) == doctest::Approx(1.0));           // mean
  CHECK(pooled(0, 1) == doctest::Approx(1.0).epsilon(1e-9));  // population std
}

TEST_CASE("stats_pool is permutation invariant over frames") {
  Rng rng(11);
  Tensor x({6, 3});
  for (double& v : x.values()) v = uniform(rng, -1.0, 1.0);
  Tensor pooled = stats_pool(x);
  // reverse the rows
  Tensor reversed({6, 3});
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 3; ++j) reversed(i, j) = x(5 - i, j);
  }
  Tensor pooled2 = stats_pool(reversed);
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    CHECK(pooled.values()[i] == doctest::Approx(pooled2.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("concat basics and shapes") {
  Tensor out = concat(Tensor::row({1}), Tensor::row({2}));
  CHECK(out.values() == std::vector<double>{1, 2});

  Tensor a({2, 512}), b({2, 512});
  CHECK(concat(a, b).cols() == 1024);

  CHECK_THROWS_AS(concat(Tensor({2, 3}), Tensor({3, 3})), ShapeError);
}

TEST_CASE("concat backward splits the gradient exactly") {
  Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4}).set_requires_grad(true);
  Tensor b = Tensor::matrix(2, 1, {5, 6}).set_requires_grad(true);
  Tensor weights = Tensor::matrix(2, 3, {10, 20, 30, 40, 50, 60});
  Tape tape;
  Tensor loss = sum(mul(concat(a, b), weights));
  tape.backward(loss);
  CHECK(a.grad() == std::vector<double>{10, 20, 40, 50});
  CHECK(b.grad() == std::vector<double>{30, 60});
}

TEST_CASE("elementwise ops") {
  Tensor x = Tensor::row({1.5, -2.0, 3.0});
  Tensor zero = sub(x, x);
  CHECK(zero.values() == std::vector<double>{0, 0, 0});

  Tensor product = mul(Tensor::row({2, 3}), Tensor::row({4, 5}));
  CHECK(product.values() == std::vector<double>{8, 15});

  CHECK_THROWS_AS(add(Tensor({1, 2}), Tensor({2, 1})), ShapeError);
}

TEST_CASE("mae_loss values") {
  Tensor p = Tensor::row({1, 3});
  CHECK(mae_loss(p, p).item() == 0.0);
  CHECK(mae_loss(p, Tensor::row({2, 1})).item() == doctest::Approx(1.5));
  CHECK_THROWS_AS(mae_loss(p, Tensor::row({1, 2, 3})), ShapeError);
}

TEST_CASE("softmax_cross_entropy closed form and monotonicity") {
  const std::size_t c = 630;
  Tensor logits({1, c});  // uniform (all zero)
  CHECK(softmax_cross_entropy(logits, {17}).item() ==
        doctest::Approx(std::log(630.0)).epsilon(1e-9));
  CHECK(std::log(630.0) == doctest::Approx(6.4457).epsilon(1e-4));

  // loss decreases monotonically as the true-class logit grows
  double previous = softmax_cross_entropy(logits, {0}).item();
  for (double margin : {1.0, 4.0, 16.0, 64.0}) {
    Tensor shifted({1, c});
    shifted.values()[0] = margin;
    const double loss = softmax_cross_entropy(shifted, {0}).item();
    CHECK(loss < previous);
    previous = loss;
  }

  CHECK_THROWS_AS(softmax_cross_entropy(Tensor({1, 4}), {4}), ValueError);
  CHECK_THROWS_AS(softmax_cross_entropy(Tensor({1, 4}), {-1}), ValueError);
}

TEST_CASE("backward: sum gives ones, reuse is an error, non-scalar rejected") {
  Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4}).set_requires_grad(true);
  Tape tape;
  Tensor loss = sum(x);
  tape.backward(loss);
  CHECK(x.grad() == std::vector<double>{1, 1, 1, 1});
  CHECK_THROWS_AS(tape.backward(loss), Error);

  Tensor y = Tensor::matrix(2, 2, {1, 2, 3, 4}).set_requires_grad(true);
  Tape tape2;
  Tensor big = add(y, y);
  CHECK_THROWS_AS(tape2.backward(big), ShapeError);
}

TEST_CASE("backward zeroes stale gradients and leaves unused parameters at zero") {
  Tensor used = Tensor::row({1, 2}).set_requires_grad(true);
  Tensor unused = Tensor::row({3, 4}).set_requires_grad(true);
  {
    Tape tape;
    Tensor loss = sum(add(used, unused));
    tape.backward(loss);
  }
  CHECK(used.grad() == std::vector<double>{1, 1});
  {
    Tape tape;
    Tensor touched_but_disconnected = mul(unused, unused);  // recorded, not in loss
    Tensor loss = sum(mul(used, used));
    tape.backward(loss);
  }
  CHECK(used.grad() == std::vector<double>{2, 4});
  CHECK(unused.grad() == std::vector<double>{0, 0});
}

TEST_CASE("loss not on tape is rejected") {
  Tensor x = Tensor::scalar(2.0).set_requires_grad(true);
  Tape tape;
  CHECK_THROWS_AS(tape.backward(x), Error);
}

TEST_CASE("non-finite values are an operation-level error") {
  CHECK_THROWS_AS(Tensor({1, 2}, {1.0, std::nan("")}), NumericError);
  Tensor big = Tensor::full({1, 2}, 1e308);
  CHECK_THROWS_AS(add(big, big), NumericError);
}

TEST_CASE("adam: zero gradient is a fixed point") {
  Tensor p = Tensor::row({1.0, -2.0, 3.0}).set_requires_grad(true);
  const std::vector<double> before = p.values();
  Adam opt({p});
  opt.step();
  opt.step();
  CHECK(p.values() == before);
}

TEST_CASE("adam: bias-corrected first step has magnitude ~ learning_rate") {
  Tensor p = Tensor::scalar(0.0).set_requires_grad(true);
  Adam opt({p});
  {
    Tape tape;
    Tensor loss = mul(p, Tensor::scalar(0.5));  // d loss / d p = 0.5
    tape.backward(loss);
  }
  opt.step();
  // m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps) ~ lr
  CHECK(std::abs(p.values()[0] + 1e-3) < 1e-9);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam: identical runs are bit-identical") {
  auto run = [] {
    Tensor p = Tensor::row({0.3, -0.7}).set_requires_grad(true);
    Adam opt({p});
    for (int i = 0; i < 25; ++i) {
      Tape tape;
      Tensor loss = sum(mul(p, p));
      tape.backward(loss);
      opt.step();
    }
    return p.values();
  };
  CHECK(run() == run());
}

TEST_CASE("adam default configuration matches the training setup") {
  AdamConfig config;
  CHECK(config.beta1 == 0.95);
  CHECK(config.beta2 == 0.999);
  CHECK(config.epsilon == 1e-8);
  CHECK(config.learning_rate == 1e-3);
}

TEST_CASE("tape replay determinism on a small graph") {
  auto run = [] {
    Rng rng(99);
    Tensor x({4, 3});
    for (double& v : x.values()) v = uniform(rng, -1.0, 1.0);
    Tensor w({3, 2});
    for (double& v : w.values()) v = uniform(rng, -1.0, 1.0);
    w.set_requires_grad(true);
    Tensor b = Tensor::zeros({1, 2}).set_requires_grad(true);
    Adam opt({w, b});
    std::vector<double> losses;
    for (int step = 0; step < 10; ++step) {
      Tape tape;
      Tensor loss = mae_loss(linear(x, w, b), Tensor::full({4, 2}, 0.5));
      losses.push_back(loss.item());
      tape.backward(loss);
      opt.step();
    }
    return losses;
  };
  CHECK(run() == run());
}

TEST_CASE("detach blocks gradient flow") {
  Tensor x = Tensor::row({1, 2}).set_requires_grad(true);
  Tape tape;
  Tensor through = detach(mul(x, x));
  CHECK_FALSE(through.requires_grad());
  Tensor loss = sum(add(through, mul(x, x)));
  tape.backward(loss);
  CHECK(x.grad() == std::vector<double>{2, 4});  // only the live branch
}
