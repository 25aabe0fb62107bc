#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "demixkit/adam.hpp"
#include "demixkit/demix.hpp"
#include "demixkit/extractor.hpp"

using namespace demixkit;

namespace {

FeatureMatrix random_features(std::size_t t, Rng& rng) {
  FeatureMatrix f;
  f.num_frames = t;
  f.frames.resize(t * FeatureMatrix::kNumCoeffs);
  for (double& v : f.frames) v = uniform(rng, -1.0, 1.0);
  return f;
}

SpeakerEmbedding random_embedding(Rng& rng) {
  SpeakerEmbedding e;
  e.values.resize(kEmbeddingDim);
  for (double& v : e.values) v = uniform(rng, -1.0, 1.0);
  return e;
}

}  // namespace

TEST_CASE("extractor parameter count matches a shape walk over the architecture") {
  // Independent accounting straight off the layer table: width 512 frame
  // stack, 1500 pre-pool, 3000 pooled, 512 segment and embedding layers.
  auto affine = [](std::size_t in, std::size_t out) { return in * out + out; };
  auto bn = [](std::size_t d) { return 2 * d; };
  std::size_t expected = 0;
  expected += affine(3 * 20, 512) + bn(512);        // TDNN layer 1, context +-1
  expected += affine(512, 512) + bn(512);           // TDNN layer 2
  for (int block = 0; block < 3; ++block) {
    expected += affine(5 * 512, 512) + bn(512);     // residual 5-tap conv
    expected += affine(512, 512) + bn(512);         // residual 1-tap conv
  }
  expected += affine(512, 1500) + bn(1500);         // TDNN layer 3
  expected += affine(3000, 512) + bn(512);          // segment layer
  expected += affine(512, 512);                     // embedding layer, no BN

  Rng rng(1);
  const Extractor net = Extractor::init(rng);
  std::size_t actual = 0;
  for (const Tensor& p : net.trainable()) actual += p.size();
  CHECK(actual == expected);
}

TEST_CASE("extractor widths and temporal shrink") {
  Rng rng(2);
  Extractor net = Extractor::init(rng);
  net.validate();
  CHECK(Extractor::context_shrink() == 14);
  CHECK(Extractor::min_frames() == 15);

  FeatureMatrix shortest = random_features(Extractor::min_frames(), rng);
  const SpeakerEmbedding e = extract_embedding(net, shortest, Mode::kEval);
  CHECK(e.values.size() == kEmbeddingDim);

  FeatureMatrix too_short = random_features(Extractor::min_frames() - 1, rng);
  CHECK_THROWS_AS(extract_embedding(net, too_short, Mode::kEval), ValueError);
}

TEST_CASE("eval-mode extraction is a pure function of params and input") {
  Rng rng(3);
  Extractor net = Extractor::init(rng);
  FeatureMatrix f = random_features(40, rng);
  const SpeakerEmbedding a = extract_embedding(net, f, Mode::kEval);
  const SpeakerEmbedding b = extract_embedding(net, f, Mode::kEval);
  CHECK(a.values == b.values);  // bitwise
}

TEST_CASE("batched eval extraction matches one-at-a-time extraction") {
  Rng rng(4);
  Extractor net = Extractor::init(rng);
  std::vector<FeatureMatrix> segments;
  for (int i = 0; i < 5; ++i) segments.push_back(random_features(30, rng));
  const auto batched = extract_embeddings(net, segments, 3);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const SpeakerEmbedding single = extract_embedding(net, segments[i], Mode::kEval);
    REQUIRE(batched[i].values.size() == single.values.size());
    for (std::size_t j = 0; j < single.values.size(); ++j) {
      CHECK(batched[i].values[j] == doctest::Approx(single.values[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("residual block: zero weights and bypassed batch norm give the skip path") {
  Rng rng(5);
  ResidualBlock block = ResidualBlock::init(rng);
  for (Tensor p : {block.conv5.affine.weight, block.conv5.affine.bias,
                   block.conv1.weight, block.conv1.bias}) {
    for (double& v : p.values()) v = 0.0;
  }
  // Bypass both batch norms: gamma = sqrt(running_var + eps) makes the
  // eval-mode affine an identity.
  for (BatchNormLayer* layer : {&block.conv5.bn, &block.bn1}) {
    for (std::size_t j = 0; j < layer->dim(); ++j) {
      layer->gamma.values()[j] =
          std::sqrt(layer->state.running_var[j] + layer->state.eps);
      layer->beta.values()[j] = 0.0;
      layer->state.running_mean[j] = 0.0;
    }
  }
  Tensor x({9, kFrameWidth});
  for (double& v : x.values()) v = uniform(rng, 0.1, 1.0);  // positive: ReLU-safe
  Tensor out = block.forward(x, Mode::kEval, 1);
  Tensor skip = crop_rows(x, 2, 2, 1);
  REQUIRE(out.shape() == skip.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.values()[i] == doctest::Approx(skip.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("classifier probabilities: simplex, uniform at zero weights, shift invariance") {
  Rng rng(6);
  Classifier c = Classifier::init(12, rng);
  SpeakerEmbedding e = random_embedding(rng);
  const auto probs = classify(c, e);
  REQUIRE(probs.size() == 12);
  double total = 0.0;
  for (double p : probs) {
    CHECK(p >= 0.0);
    total += p;
  }
  CHECK(std::abs(total - 1.0) < 1e-9);

  // zero output layer -> uniform distribution
  for (double& v : c.output.weight.values()) v = 0.0;
  for (double& v : c.output.bias.values()) v = 0.0;
  const auto uniform_probs = classify(c, e);
  for (double p : uniform_probs) CHECK(p == doctest::Approx(1.0 / 12).epsilon(1e-12));

  // argmax is invariant to a shared logit shift
  Rng rng2(7);
  Classifier c2 = Classifier::init(5, rng2);
  const auto before = classify(c2, e);
  const auto arg = std::max_element(before.begin(), before.end()) - before.begin();
  for (double& v : c2.output.bias.values()) v += 3.25;
  const auto after = classify(c2, e);
  CHECK(std::max_element(after.begin(), after.end()) - after.begin() == arg);
}

TEST_CASE("demix: Sub with identity weights reduces to e_mix - e_known") {
  Rng rng(8);
  DemixHead head = DemixHead::init(DemixVariant::kSub, rng);
  Tensor w = head.param("W");
  w.values() = Tensor::identity(kEmbeddingDim).values();
  Tensor b = head.param("b");
  for (double& v : b.values()) v = 0.0;
  const SpeakerEmbedding mix = random_embedding(rng);
  const SpeakerEmbedding known = random_embedding(rng);
  const SpeakerEmbedding out = demix(head, mix, known);
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
    CHECK(out.values[i] ==
          doctest::Approx(mix.values[i] - known.values[i]).epsilon(1e-12));
  }
}

TEST_CASE("demix: Mul with all-ones known embedding is the identity on e_mix") {
  Rng rng(9);
  DemixHead head = DemixHead::init(DemixVariant::kMul, rng);
  Tensor w = head.param("W");
  w.values() = Tensor::identity(kEmbeddingDim).values();
  Tensor b = head.param("b");
  for (double& v : b.values()) v = 0.0;
  const SpeakerEmbedding mix = random_embedding(rng);
  SpeakerEmbedding ones;
  ones.values.assign(kEmbeddingDim, 1.0);
  const SpeakerEmbedding out = demix(head, mix, ones);
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
    CHECK(out.values[i] == doctest::Approx(mix.values[i]).epsilon(1e-12));
  }
}

TEST_CASE("demix: every variant maps (512, 512) -> 512") {
  Rng rng(10);
  const SpeakerEmbedding mix = random_embedding(rng);
  const SpeakerEmbedding known = random_embedding(rng);
  for (DemixVariant variant : kAllVariants) {
    DemixHead head = DemixHead::init(variant, rng);
    head.validate();
    const SpeakerEmbedding out = demix(head, mix, known);
    CHECK(out.values.size() == kEmbeddingDim);
  }
  SpeakerEmbedding bad;
  bad.values.assign(100, 0.5);
  DemixHead sub = DemixHead::init(DemixVariant::kSub, rng);
  CHECK_THROWS_AS(demix(sub, bad, known), ShapeError);
}

TEST_CASE("unknown variant names are rejected") {
  CHECK_THROWS_AS(parse_variant("concat3"), ValueError);
  for (const char* name : {"sub", "mul", "concat1", "concat2", "share-concat",
                           "separate-concat"}) {
    CHECK(to_string(parse_variant(name)) == name);
  }
}

namespace {

// Swaps the top and bottom halves of the rows of a [2d x d] matrix.
void swap_row_blocks(Tensor& w) {
  const std::size_t half = w.rows() / 2;
  for (std::size_t i = 0; i < half; ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      std::swap(w(i, j), w(half + i, j));
    }
  }
}

}  // namespace

TEST_CASE("share-concat: swapping inputs equals swapping the W1 row blocks") {
  Rng rng(11);
  DemixHead head = DemixHead::init(DemixVariant::kShareConcat, rng);
  const SpeakerEmbedding a = random_embedding(rng);
  const SpeakerEmbedding b = random_embedding(rng);
  const SpeakerEmbedding swapped_inputs = demix(head, b, a);

  Tensor w1 = head.param("W1");
  swap_row_blocks(w1);
  const SpeakerEmbedding swapped_weights = demix(head, a, b);
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
    CHECK(swapped_inputs.values[i] ==
          doctest::Approx(swapped_weights.values[i]).epsilon(1e-10));
  }
}

TEST_CASE("share-concat branches stay tied through an optimizer step") {
  Rng rng(12);
  DemixHead head = DemixHead::init(DemixVariant::kShareConcat, rng);
  Adam opt(head.trainable());
  Tensor e_mix({2, kEmbeddingDim}), e_known({2, kEmbeddingDim}),
      target({2, kEmbeddingDim});
  for (Tensor* t : {&e_mix, &e_known, &target}) {
    for (double& v : t->values()) v = uniform(rng, -1.0, 1.0);
  }
  {
    Tape tape;
    Tensor loss = mae_loss(head.forward(e_mix, e_known), target);
    tape.backward(loss);
    opt.step();
  }
  // Both branches read the same storage, so swapping inputs must still be
  // equivalent to swapping the W1 row blocks after the update.
  const SpeakerEmbedding a{std::vector<double>(e_mix.values().begin(),
                                               e_mix.values().begin() + kEmbeddingDim),
                           ""};
  const SpeakerEmbedding b{
      std::vector<double>(e_known.values().begin(),
                          e_known.values().begin() + kEmbeddingDim),
      ""};
  const SpeakerEmbedding swapped_inputs = demix(head, b, a);
  Tensor w1 = head.param("W1");
  swap_row_blocks(w1);
  const SpeakerEmbedding swapped_weights = demix(head, a, b);
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
    CHECK(swapped_inputs.values[i] ==
          doctest::Approx(swapped_weights.values[i]).epsilon(1e-10));
  }
}

TEST_CASE("separate-concat uses distinct branch parameters") {
  Rng rng(13);
  DemixHead head = DemixHead::init(DemixVariant::kSeparateConcat, rng);
  CHECK(head.param("W00").impl() != head.param("W01").impl());
  // share-concat really shares storage
  DemixHead shared = DemixHead::init(DemixVariant::kShareConcat, rng);
  CHECK(shared.param("W0").impl() == shared.param("W0").impl());
  CHECK(shared.params.size() == 4);
}

TEST_CASE("final activation switch: relu clamps, none passes negatives") {
  Rng rng(14);
  const SpeakerEmbedding mix = random_embedding(rng);
  const SpeakerEmbedding known = random_embedding(rng);
  DemixHead with_relu = DemixHead::init(DemixVariant::kSeparateConcat, rng,
                                        FinalActivation::kRelu);
  DemixHead without = with_relu;
  without.final_activation = FinalActivation::kNone;
  const SpeakerEmbedding clamped = demix(with_relu, mix, known);
  const SpeakerEmbedding open = demix(without, mix, known);
  bool saw_negative = false;
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
    CHECK(clamped.values[i] >= 0.0);
    CHECK(clamped.values[i] == doctest::Approx(std::max(0.0, open.values[i])));
    saw_negative = saw_negative || open.values[i] < 0.0;
  }
  CHECK(saw_negative);  // the switch actually matters on random inputs
}

TEST_CASE("frozen extractor: step-two loss has no gradient path into it") {
  Rng rng(15);
  Extractor net = Extractor::init(rng);
  FeatureMatrix f = random_features(30, rng);
  // e_mix is computed outside any tape, exactly as step two does it.
  const SpeakerEmbedding e_mix = extract_embedding(net, f, Mode::kEval);

  DemixHead head = DemixHead::init(DemixVariant::kSub, rng);
  Tensor mix_rows = embedding_to_tensor(e_mix);
  Tensor known_rows = embedding_to_tensor(random_embedding(rng));
  Tensor target_rows = embedding_to_tensor(random_embedding(rng));
  Tape tape;
  Tensor loss = mae_loss(head.forward(mix_rows, known_rows), target_rows);
  tape.backward(loss);

  for (const Tensor& p : net.trainable()) {
    CHECK(p.grad().empty());  // never touched by this tape
  }
  CHECK_FALSE(head.param("W").grad().empty());
}
