#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "demixkit/adam.hpp"
#include "demixkit/dataset.hpp"
#include "demixkit/demix.hpp"
#include "demixkit/mixer.hpp"
#include "demixkit/store.hpp"

namespace demixkit {

// ---- step one: extractor + classifier on clean speech ----

struct StepOneConfig {
  int epochs = 20;
  int batch_size = 32;
  int crop_frames = 200;  // 2 s at a 10 ms frame shift
  int crops_per_utterance = 1;
  std::uint64_t seed = 1;
  AdamConfig adam;
  // When set, the classifier is re-initialised after joint training and
  // fitted as a linear probe on detached embeddings.
  bool linear_probe = false;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double holdout_accuracy = 0.0;
};

struct StepOneResult {
  EmbeddingModel model;
  std::vector<EpochRecord> log;
};

StepOneResult train_step_one(const Dataset& data, const StepOneConfig& config);

// Held-out clean-segment identification accuracy on the test split, one
// deterministic crop per utterance.
double holdout_accuracy(EmbeddingModel& model, const Dataset& data, int crop_frames,
                        std::uint64_t seed);

// ---- clean embedding bank ----

EmbeddingBank build_bank(Extractor& extractor, const Dataset& data,
                         int segments_per_speaker, int crop_frames,
                         std::uint64_t seed, const std::string& extractor_checksum);

// ---- step two: one de-mixing head ----

struct StepTwoConfig {
  DemixVariant variant = DemixVariant::kSeparateConcat;
  double snr_db = 0.0;
  Direction direction = Direction::kKnownInterferer;
  int epochs = 12;
  // Optimization passes over each epoch's pair set. Extraction of e_mix
  // dominates an epoch; extra passes over the cached embeddings are cheap.
  int passes_per_epoch = 4;
  int batch_size = 32;
  int crop_frames = 200;
  std::uint64_t seed = 3;
  AdamConfig adam;
  FinalActivation final_activation = FinalActivation::kRelu;
};

// Memoises mixture embeddings keyed by (target, interferer, snr, crop).
// The crop offset is derived from the pair itself, so the same pair always
// maps to the same embedding and can be shared across heads, directions and
// evaluation runs against the same extractor.
class MixtureEmbeddingCache {
 public:
  // Computes (and caches) e_mix for every given pair. Returned pointers stay
  // valid for the cache's lifetime.
  std::vector<const std::vector<double>*> get_all(Extractor& extractor,
                                                  const Dataset& data,
                                                  const std::vector<MixSpec>& pairs,
                                                  int crop_frames);
  std::size_t size() const { return cache_.size(); }

 private:
  std::map<std::string, std::vector<double>> cache_;
};

// The speaker whose clean embedding the head receives / must predict.
std::string known_speaker(const CorpusManifest& manifest, const MixSpec& pair,
                          Direction direction);
std::string predicted_speaker(const CorpusManifest& manifest, const MixSpec& pair,
                              Direction direction);

struct StepTwoResult {
  TrainedHead trained;
  std::vector<double> epoch_mae;
};

// Trains one head against the frozen extractor and bank. Pairs are
// re-sampled every epoch: each training utterance appears once as the
// target, mixed with a random other-speaker utterance of the same split.
StepTwoResult train_step_two(Extractor& extractor, const EmbeddingBank& bank,
                             const Dataset& data, const StepTwoConfig& config,
                             MixtureEmbeddingCache& cache);

}  // namespace demixkit
