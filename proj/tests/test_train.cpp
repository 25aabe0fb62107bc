#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "demixkit/config.hpp"
#include "demixkit/store.hpp"
#include "demixkit/train.hpp"

using namespace demixkit;
namespace fs = std::filesystem;

namespace {

// Small shared corpus: 3 speakers x 4 utterances x 1.2 s.
const Dataset& micro_corpus() {
  static const Dataset data = [] {
    const fs::path dir = fs::temp_directory_path() / "demixkit_train_micro";
    fs::remove_all(dir);
    SynthConfig config{3, 4, 1.2, 21};
    synth_corpus(config, dir);
    return Dataset::open(dir / "manifest.json");
  }();
  return data;
}

StepOneConfig micro_step_one(int epochs) {
  StepOneConfig config;
  config.epochs = epochs;
  config.batch_size = 6;
  config.crop_frames = 80;
  config.seed = 5;
  return config;
}

}  // namespace

TEST_CASE("zero epochs is a valid no-op that still yields a checkpoint") {
  StepOneResult result = train_step_one(micro_corpus(), micro_step_one(0));
  CHECK(result.log.empty());
  const fs::path dir = fs::temp_directory_path() / "demixkit_train_noop";
  fs::create_directories(dir);
  const std::string checksum =
      save_embedding_model(dir / "init.ckpt", result.model);
  CHECK(!checksum.empty());
  CHECK(load_embedding_model(dir / "init.ckpt").classifier.n_speakers() == 3);
}

TEST_CASE("step one: loss decreases and the log is well-formed") {
  StepOneResult result = train_step_one(micro_corpus(), micro_step_one(4));
  REQUIRE(result.log.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(result.log[i].epoch == i + 1);
    CHECK(result.log[i].holdout_accuracy >= 0.0);
    CHECK(result.log[i].holdout_accuracy <= 1.0);
  }
  CHECK(result.log.back().loss < result.log.front().loss);
}

TEST_CASE("step one: same seed gives an identical loss trajectory and parameters") {
  StepOneResult a = train_step_one(micro_corpus(), micro_step_one(2));
  StepOneResult b = train_step_one(micro_corpus(), micro_step_one(2));
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].loss == b.log[i].loss);  // bitwise
  }
  const auto ta = a.model.extractor.named_tensors();
  const auto tb = b.model.extractor.named_tensors();
  REQUIRE(ta.size() == tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CHECK(ta[i].tensor.values() == tb[i].tensor.values());
  }
}

TEST_CASE("linear probe mode refits the classifier without touching the extractor") {
  StepOneConfig config = micro_step_one(1);
  StepOneResult joint = train_step_one(micro_corpus(), config);
  config.linear_probe = true;
  StepOneResult probed = train_step_one(micro_corpus(), config);
  // same extractor trajectory, different classifier
  const auto ta = joint.model.extractor.named_tensors();
  const auto tb = probed.model.extractor.named_tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CHECK(ta[i].tensor.values() == tb[i].tensor.values());
  }
  bool classifier_differs = false;
  const auto ca = joint.model.classifier.named_tensors();
  const auto cb = probed.model.classifier.named_tensors();
  for (std::size_t i = 0; i < ca.size(); ++i) {
    classifier_differs = classifier_differs ||
                         ca[i].tensor.values() != cb[i].tensor.values();
  }
  CHECK(classifier_differs);
}

TEST_CASE("bank: averaging identical segments returns that embedding") {
  // 2 utterances per speaker -> exactly one training utterance; with the
  // crop spanning the whole utterance every sampled segment is identical.
  const fs::path dir = fs::temp_directory_path() / "demixkit_bank_identity";
  fs::remove_all(dir);
  synth_corpus(SynthConfig{2, 2, 1.0, 31}, dir);
  const Dataset data = Dataset::open(dir / "manifest.json");

  Rng rng(1);
  Extractor net = Extractor::init(rng);
  const int full_length =
      static_cast<int>(data.features(data.manifest().entries[0].utterance_id).num_frames);
  const EmbeddingBank bank = build_bank(net, data, 4, full_length, 7, "chk");

  for (const std::string& speaker : data.manifest().speakers) {
    const auto train = data.manifest().speaker_entries(speaker, Split::kTrain);
    REQUIRE(train.size() == 1);
    const SpeakerEmbedding direct = extract_embedding(
        net, data.features(train[0]->utterance_id), Mode::kEval);
    const auto& entry = bank.at(speaker);
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
      CHECK(entry[i] == doctest::Approx(direct.values[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("bank: seed determinism and missing-speaker error") {
  Rng rng(2);
  Extractor net = Extractor::init(rng);
  const EmbeddingBank a = build_bank(net, micro_corpus(), 3, 80, 7, "chk");
  const EmbeddingBank b = build_bank(net, micro_corpus(), 3, 80, 7, "chk");
  CHECK(a.entries == b.entries);
  CHECK(a.entries.size() == 3);

  CHECK_THROWS_AS(build_bank(net, micro_corpus(), 3, 100000, 7, "chk"), ValueError);
}

TEST_CASE("mixture embedding cache: dedupe and determinism") {
  Rng rng(3);
  Extractor net = Extractor::init(rng);
  const auto& data = micro_corpus();
  const auto pairs = sample_pairs(data.manifest(), Split::kTrain, 6, 0.0, 9);
  MixtureEmbeddingCache cache;
  const auto first = cache.get_all(net, data, pairs, 80);
  const std::size_t unique = cache.size();
  const auto second = cache.get_all(net, data, pairs, 80);
  CHECK(cache.size() == unique);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(*first[i] == *second[i]);
  }
}

TEST_CASE("step two: MAE decreases, seed-deterministic, frozen extractor") {
  const auto& data = micro_corpus();
  Rng rng(4);
  Extractor net = Extractor::init(rng);
  const EmbeddingBank bank = build_bank(net, data, 3, 80, 7, "chk");

  const fs::path dir = fs::temp_directory_path() / "demixkit_step_two";
  fs::create_directories(dir);
  EmbeddingModel model{net, Classifier::init(3, rng), 0};
  const std::string before = save_embedding_model(dir / "before.ckpt", model);

  StepTwoConfig config;
  config.variant = DemixVariant::kSub;
  config.snr_db = 0.0;
  config.direction = Direction::kKnownInterferer;
  config.epochs = 4;
  config.batch_size = 6;
  config.crop_frames = 80;
  config.seed = 13;

  MixtureEmbeddingCache cache;
  StepTwoResult first = train_step_two(net, bank, data, config, cache);
  REQUIRE(first.epoch_mae.size() == 4);
  CHECK(first.epoch_mae.back() < first.epoch_mae.front());

  MixtureEmbeddingCache cache2;
  StepTwoResult second = train_step_two(net, bank, data, config, cache2);
  for (std::size_t i = 0; i < first.trained.head.params.size(); ++i) {
    CHECK(first.trained.head.params[i].tensor.values() ==
          second.trained.head.params[i].tensor.values());
  }

  // freeze audit: extractor bytes unchanged by step two
  const std::string after = save_embedding_model(dir / "after.ckpt", model);
  CHECK(before == after);
}

TEST_CASE("step two: missing bank entry is an error") {
  const auto& data = micro_corpus();
  Rng rng(5);
  Extractor net = Extractor::init(rng);
  EmbeddingBank bank = build_bank(net, data, 2, 80, 7, "chk");
  bank.entries.erase(bank.entries.begin());  // drop one speaker

  StepTwoConfig config;
  config.variant = DemixVariant::kMul;
  config.epochs = 1;
  config.batch_size = 4;
  config.crop_frames = 80;
  MixtureEmbeddingCache cache;
  CHECK_THROWS_AS(train_step_two(net, bank, data, config, cache), ValueError);
}

TEST_CASE("experiment config: defaults match the published setup, json round trip") {
  const ExperimentConfig defaults;
  CHECK(defaults.bank_segments_per_speaker == 200);
  CHECK(defaults.step_one.adam.beta1 == 0.95);
  CHECK(defaults.step_one.adam.beta2 == 0.999);
  CHECK(defaults.step_one.adam.epsilon == 1e-8);
  CHECK(defaults.step_one.adam.learning_rate == 1e-3);
  CHECK(defaults.step_one.crop_frames == 200);
  CHECK(defaults.snrs_db == std::vector<double>{-5.0, 0.0, 5.0});
  CHECK(defaults.variants.size() == 6);
  CHECK(defaults.directions.size() == 2);
  CHECK(defaults.step_two.final_activation == FinalActivation::kRelu);

  const ExperimentConfig back =
      ExperimentConfig::from_json_text(defaults.to_json_text());
  CHECK(back.to_json_text() == defaults.to_json_text());

  const ExperimentConfig partial = ExperimentConfig::from_json_text(
      R"({"step_two": {"variants": ["sub"], "snrs_db": [0], "epochs": 2}})");
  CHECK(partial.variants == std::vector<DemixVariant>{DemixVariant::kSub});
  CHECK(partial.step_two.epochs == 2);
  CHECK(partial.bank_segments_per_speaker == 200);  // untouched default
}
