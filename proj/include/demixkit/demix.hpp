#pragma once

#include <string>
#include <vector>

#include "demixkit/extractor.hpp"
#include "demixkit/nn.hpp"

namespace demixkit {

// The six de-mixing functions. All map a (mixture embedding, known clean
// embedding) pair to an estimate of the other speaker's embedding.
enum class DemixVariant {
  kSub,
  kMul,
  kConcat1,
  kConcat2,
  kShareConcat,
  kSeparateConcat,
};

constexpr DemixVariant kAllVariants[] = {
    DemixVariant::kSub,           DemixVariant::kMul,
    DemixVariant::kConcat1,       DemixVariant::kConcat2,
    DemixVariant::kShareConcat,   DemixVariant::kSeparateConcat,
};

std::string to_string(DemixVariant variant);
DemixVariant parse_variant(const std::string& name);

// Activation after the last layer of Share-Concat / Separate-Concat. The
// published equations apply ReLU there even though clean embeddings can be
// negative; kRelu keeps that behaviour, kNone drops it.
enum class FinalActivation { kRelu, kNone };

std::string to_string(FinalActivation a);
FinalActivation parse_final_activation(const std::string& name);

// Which clean embedding the head receives, and which one it must predict.
enum class Direction {
  kKnownInterferer,  // input e2 (interferer), predict e1 (target)
  kKnownTarget,      // input e1 (target), predict e2 (interferer)
};

std::string to_string(Direction d);
Direction parse_direction(const std::string& name);

struct DemixHead {
  DemixVariant variant = DemixVariant::kSub;
  FinalActivation final_activation = FinalActivation::kRelu;
  std::vector<NamedTensor> params;

  static DemixHead init(DemixVariant variant, Rng& rng,
                        FinalActivation final_activation = FinalActivation::kRelu);

  // e_mix, e_known: [b x 512] -> [b x 512]. Differentiable when taped.
  Tensor forward(const Tensor& e_mix, const Tensor& e_known) const;

  SpeakerEmbedding apply(const SpeakerEmbedding& e_mix,
                         const SpeakerEmbedding& e_known) const;

  const Tensor& param(const std::string& name) const;
  std::vector<Tensor> trainable() const;
  void validate() const;  // shape audit over the variant's parameter table
};

// demix(variant semantics): spelled as a free function to match usage.
SpeakerEmbedding demix(const DemixHead& head, const SpeakerEmbedding& e_mix,
                       const SpeakerEmbedding& e_known);

}  // namespace demixkit
