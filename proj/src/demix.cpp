#include "demixkit/demix.hpp"

#include <cmath>

namespace demixkit {

std::string to_string(DemixVariant variant) {
  switch (variant) {
    case DemixVariant::kSub: return "sub";
    case DemixVariant::kMul: return "mul";
    case DemixVariant::kConcat1: return "concat1";
    case DemixVariant::kConcat2: return "concat2";
    case DemixVariant::kShareConcat: return "share-concat";
    case DemixVariant::kSeparateConcat: return "separate-concat";
  }
  throw ValueError("unknown de-mixing variant");
}

DemixVariant parse_variant(const std::string& name) {
  for (DemixVariant v : kAllVariants) {
    if (to_string(v) == name) return v;
  }
  throw ValueError("unknown de-mixing variant '" + name +
                   "' (expected sub, mul, concat1, concat2, share-concat or "
                   "separate-concat)");
}

std::string to_string(FinalActivation a) {
  return a == FinalActivation::kRelu ? "relu" : "none";
}

FinalActivation parse_final_activation(const std::string& name) {
  if (name == "relu") return FinalActivation::kRelu;
  if (name == "none") return FinalActivation::kNone;
  throw ValueError("unknown final activation '" + name + "' (expected relu or none)");
}

std::string to_string(Direction d) {
  return d == Direction::kKnownInterferer ? "known-interferer" : "known-target";
}

Direction parse_direction(const std::string& name) {
  if (name == "known-interferer") return Direction::kKnownInterferer;
  if (name == "known-target") return Direction::kKnownTarget;
  throw ValueError("unknown direction '" + name +
                   "' (expected known-interferer or known-target)");
}

namespace {

constexpr std::size_t d = kEmbeddingDim;

NamedTensor make_weight(const std::string& name, std::size_t in, std::size_t out,
                        double std_dev, Rng& rng) {
  Tensor w({in, out});
  for (double& v : w.values()) v = std_dev * normal(rng);
  w.set_requires_grad(true);
  return {name, w};
}

NamedTensor make_bias(const std::string& name, std::size_t out) {
  Tensor b({1, out});
  b.set_requires_grad(true);
  return {name, b};
}

}  // namespace

DemixHead DemixHead::init(DemixVariant variant, Rng& rng,
                          FinalActivation final_activation) {
  DemixHead head;
  head.variant = variant;
  head.final_activation = final_activation;
  const double hidden_std = std::sqrt(2.0 / d);
  const double out_std = std::sqrt(1.0 / d);
  const double out2_std = std::sqrt(1.0 / (2 * d));
  switch (variant) {
    case DemixVariant::kSub:
    case DemixVariant::kMul:
      head.params.push_back(make_weight("W", d, d, out_std, rng));
      head.params.push_back(make_bias("b", d));
      break;
    case DemixVariant::kConcat1:
      head.params.push_back(make_weight("W", 2 * d, d, out2_std, rng));
      head.params.push_back(make_bias("b", d));
      break;
    case DemixVariant::kConcat2:
      head.params.push_back(make_weight("W0", 2 * d, d, std::sqrt(2.0 / (2 * d)), rng));
      head.params.push_back(make_bias("b0", d));
      head.params.push_back(make_weight("W1", d, d, out_std, rng));
      head.params.push_back(make_bias("b1", d));
      break;
    case DemixVariant::kShareConcat:
      // One shared branch transform: both inputs go through the same storage.
      head.params.push_back(make_weight("W0", d, d, hidden_std, rng));
      head.params.push_back(make_bias("b0", d));
      head.params.push_back(make_weight("W1", 2 * d, d, out2_std, rng));
      head.params.push_back(make_bias("b1", d));
      break;
    case DemixVariant::kSeparateConcat:
      head.params.push_back(make_weight("W00", d, d, hidden_std, rng));
      head.params.push_back(make_bias("b00", d));
      head.params.push_back(make_weight("W01", d, d, hidden_std, rng));
      head.params.push_back(make_bias("b01", d));
      head.params.push_back(make_weight("W2", 2 * d, d, out2_std, rng));
      head.params.push_back(make_bias("b2", d));
      break;
  }
  head.validate();
  return head;
}

const Tensor& DemixHead::param(const std::string& name) const {
  for (const NamedTensor& p : params) {
    if (p.name == name) return p.tensor;
  }
  throw ValueError("de-mixing head has no parameter '" + name + "'");
}

std::vector<Tensor> DemixHead::trainable() const {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const NamedTensor& p : params) out.push_back(p.tensor);
  return out;
}

void DemixHead::validate() const {
  auto expect = [this](const std::string& name, std::size_t rows, std::size_t cols) {
    const Tensor& t = param(name);
    if (t.rows() != rows || t.cols() != cols) {
      throw ShapeError("de-mixing head " + to_string(variant) + ": parameter " + name +
                       " has shape " + t.shape_str() + ", expected [" +
                       std::to_string(rows) + "x" + std::to_string(cols) + "]");
    }
  };
  switch (variant) {
    case DemixVariant::kSub:
    case DemixVariant::kMul:
      expect("W", d, d);
      expect("b", 1, d);
      break;
    case DemixVariant::kConcat1:
      expect("W", 2 * d, d);
      expect("b", 1, d);
      break;
    case DemixVariant::kConcat2:
      expect("W0", 2 * d, d);
      expect("b0", 1, d);
      expect("W1", d, d);
      expect("b1", 1, d);
      break;
    case DemixVariant::kShareConcat:
      expect("W0", d, d);
      expect("b0", 1, d);
      expect("W1", 2 * d, d);
      expect("b1", 1, d);
      break;
    case DemixVariant::kSeparateConcat:
      expect("W00", d, d);
      expect("b00", 1, d);
      expect("W01", d, d);
      expect("b01", 1, d);
      expect("W2", 2 * d, d);
      expect("b2", 1, d);
      break;
  }
}

Tensor DemixHead::forward(const Tensor& e_mix, const Tensor& e_known) const {
  if (e_mix.cols() != d || e_known.cols() != d || e_mix.rows() != e_known.rows()) {
    throw ShapeError("demix: inputs " + e_mix.shape_str() + " and " +
                     e_known.shape_str() + " must both be [b x " + std::to_string(d) +
                     "]");
  }
  auto finish = [this](Tensor pre) {
    return final_activation == FinalActivation::kRelu ? relu(pre) : pre;
  };
  switch (variant) {
    case DemixVariant::kSub:
      return linear(sub(e_mix, e_known), param("W"), param("b"));
    case DemixVariant::kMul:
      return linear(mul(e_mix, e_known), param("W"), param("b"));
    case DemixVariant::kConcat1:
      return linear(concat(e_mix, e_known), param("W"), param("b"));
    case DemixVariant::kConcat2: {
      Tensor h = relu(linear(concat(e_mix, e_known), param("W0"), param("b0")));
      return linear(h, param("W1"), param("b1"));
    }
    case DemixVariant::kShareConcat: {
      Tensor k_mix = relu(linear(e_mix, param("W0"), param("b0")));
      Tensor k_known = relu(linear(e_known, param("W0"), param("b0")));
      return finish(linear(concat(k_mix, k_known), param("W1"), param("b1")));
    }
    case DemixVariant::kSeparateConcat: {
      Tensor k_mix = relu(linear(e_mix, param("W00"), param("b00")));
      Tensor k_known = relu(linear(e_known, param("W01"), param("b01")));
      return finish(linear(concat(k_mix, k_known), param("W2"), param("b2")));
    }
  }
  throw ValueError("unknown de-mixing variant");
}

SpeakerEmbedding DemixHead::apply(const SpeakerEmbedding& e_mix,
                                  const SpeakerEmbedding& e_known) const {
  Tensor out = forward(embedding_to_tensor(e_mix), embedding_to_tensor(e_known));
  SpeakerEmbedding e;
  e.values = out.values();
  return e;
}

SpeakerEmbedding demix(const DemixHead& head, const SpeakerEmbedding& e_mix,
                       const SpeakerEmbedding& e_known) {
  return head.apply(e_mix, e_known);
}

}  // namespace demixkit
