#include "demixkit/train.hpp"

#include <algorithm>
#include <cmath>

#include "demixkit/threading.hpp"

namespace demixkit {

namespace {

// Fisher-Yates with our pinned rng helpers.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(items[i - 1], items[j]);
  }
}

std::uint64_t fnv_of(const std::string& s) {
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    hash ^= c;
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

std::vector<const ManifestEntry*> usable_entries(const Dataset& data, Split split,
                                                 int crop_frames) {
  std::vector<const ManifestEntry*> out;
  for (const ManifestEntry* e : data.manifest().split_entries(split)) {
    if (data.features(e->utterance_id).num_frames >=
        static_cast<std::size_t>(crop_frames)) {
      out.push_back(e);
    }
  }
  return out;
}

Tensor stack_crops(const Dataset& data, const std::vector<const ManifestEntry*>& batch,
                   const std::vector<FeatureMatrix>& crops) {
  const std::size_t t = crops.front().num_frames;
  Tensor frames({batch.size() * t, FeatureMatrix::kNumCoeffs});
  double* dst = frames.values().data();
  for (std::size_t i = 0; i < crops.size(); ++i) {
    std::copy(crops[i].frames.begin(), crops[i].frames.end(),
              dst + i * t * FeatureMatrix::kNumCoeffs);
  }
  return frames;
}

}  // namespace

double holdout_accuracy(EmbeddingModel& model, const Dataset& data, int crop_frames,
                        std::uint64_t seed) {
  const auto entries = usable_entries(data, Split::kTest, crop_frames);
  if (entries.empty()) return 0.0;
  std::vector<FeatureMatrix> crops;
  std::vector<int> labels;
  crops.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Rng rng(mix_seed(seed, 0xA01D0 + i));
    crops.push_back(sample_segment(data.features(entries[i]->utterance_id),
                                   crop_frames, rng));
    labels.push_back(data.manifest().speaker_label(entries[i]->speaker_id));
  }
  const auto embeddings = extract_embeddings(model.extractor, crops);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const auto probs = classify(model.classifier, embeddings[i]);
    const auto best = std::max_element(probs.begin(), probs.end());
    if (static_cast<int>(best - probs.begin()) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / entries.size();
}

StepOneResult train_step_one(const Dataset& data, const StepOneConfig& config) {
  if (config.epochs < 0 || config.batch_size < 2 || config.crop_frames < 1 ||
      config.crops_per_utterance < 1) {
    throw ValueError("train_step_one: invalid hyperparameters");
  }
  const auto train_entries = usable_entries(data, Split::kTrain, config.crop_frames);
  if (train_entries.empty()) {
    throw ValueError("train_step_one: no training utterance is at least " +
                     std::to_string(config.crop_frames) + " frames long");
  }

  Rng init_rng(mix_seed(config.seed, 0x1217));
  StepOneResult result;
  result.model.seed = config.seed;
  result.model.extractor = Extractor::init(init_rng);
  result.model.classifier =
      Classifier::init(data.manifest().speakers.size(), init_rng);

  std::vector<Tensor> params = result.model.extractor.trainable();
  for (const Tensor& p : result.model.classifier.trainable()) params.push_back(p);
  Adam optimizer(params, config.adam);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng epoch_rng(mix_seed(config.seed, 0xE60C0 + epoch));
    std::vector<const ManifestEntry*> order;
    for (int rep = 0; rep < config.crops_per_utterance; ++rep) {
      order.insert(order.end(), train_entries.begin(), train_entries.end());
    }
    shuffle(order, epoch_rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t at = 0; at < order.size(); at += config.batch_size) {
      const std::size_t take =
          std::min<std::size_t>(config.batch_size, order.size() - at);
      if (take < 2) break;  // batch norm needs at least two segments
      std::vector<const ManifestEntry*> batch(order.begin() + at,
                                              order.begin() + at + take);
      std::vector<FeatureMatrix> crops;
      std::vector<int> labels;
      crops.reserve(take);
      for (const ManifestEntry* e : batch) {
        crops.push_back(sample_segment(data.features(e->utterance_id),
                                       config.crop_frames, epoch_rng));
        labels.push_back(data.manifest().speaker_label(e->speaker_id));
      }
      Tensor frames = stack_crops(data, batch, crops);

      Tape tape;
      Tensor embeddings = result.model.extractor.forward(frames, Mode::kTrain, take);
      Tensor logits = result.model.classifier.forward(embeddings, Mode::kTrain);
      Tensor loss = softmax_cross_entropy(logits, labels);
      loss_sum += loss.item();
      ++batches;
      tape.backward(loss);
      optimizer.step();
    }

    EpochRecord record;
    record.epoch = epoch;
    record.loss = batches ? loss_sum / batches : 0.0;
    record.holdout_accuracy =
        holdout_accuracy(result.model, data, config.crop_frames, config.seed);
    result.log.push_back(record);
  }

  if (config.linear_probe) {
    // Re-fit the classifier on frozen embeddings.
    Rng probe_rng(mix_seed(config.seed, 0x9806E));
    result.model.classifier =
        Classifier::init(data.manifest().speakers.size(), probe_rng);
    Adam probe_opt(result.model.classifier.trainable(), config.adam);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
      Rng epoch_rng(mix_seed(config.seed, 0x9806E00 + epoch));
      std::vector<const ManifestEntry*> order = train_entries;
      shuffle(order, epoch_rng);
      for (std::size_t at = 0; at < order.size(); at += config.batch_size) {
        const std::size_t take =
            std::min<std::size_t>(config.batch_size, order.size() - at);
        if (take < 2) break;
        std::vector<const ManifestEntry*> batch(order.begin() + at,
                                                order.begin() + at + take);
        std::vector<FeatureMatrix> crops;
        std::vector<int> labels;
        for (const ManifestEntry* e : batch) {
          crops.push_back(sample_segment(data.features(e->utterance_id),
                                         config.crop_frames, epoch_rng));
          labels.push_back(data.manifest().speaker_label(e->speaker_id));
        }
        Tensor frames = stack_crops(data, batch, crops);
        Tensor embeddings =
            result.model.extractor.forward(frames, Mode::kEval, take);
        Tape tape;
        Tensor logits =
            result.model.classifier.forward(detach(embeddings), Mode::kTrain);
        Tensor loss = softmax_cross_entropy(logits, labels);
        tape.backward(loss);
        probe_opt.step();
      }
    }
  }
  return result;
}

EmbeddingBank build_bank(Extractor& extractor, const Dataset& data,
                         int segments_per_speaker, int crop_frames,
                         std::uint64_t seed, const std::string& extractor_checksum) {
  if (segments_per_speaker < 1) throw ValueError("build_bank: need at least 1 segment");
  EmbeddingBank bank;
  bank.segments_per_speaker = segments_per_speaker;
  bank.seed = seed;
  bank.extractor_checksum = extractor_checksum;

  for (std::size_t s = 0; s < data.manifest().speakers.size(); ++s) {
    const std::string& speaker = data.manifest().speakers[s];
    std::vector<const ManifestEntry*> usable;
    for (const ManifestEntry* e : data.manifest().speaker_entries(speaker, Split::kTrain)) {
      if (data.features(e->utterance_id).num_frames >=
          static_cast<std::size_t>(crop_frames)) {
        usable.push_back(e);
      }
    }
    if (usable.empty()) {
      throw ValueError("build_bank: speaker '" + speaker +
                       "' has no usable training segments of " +
                       std::to_string(crop_frames) + " frames");
    }
    Rng rng(mix_seed(seed, 0xBA9C + s));
    std::vector<FeatureMatrix> crops;
    crops.reserve(segments_per_speaker);
    for (int i = 0; i < segments_per_speaker; ++i) {
      const ManifestEntry* e = usable[uniform_index(rng, usable.size())];
      crops.push_back(sample_segment(data.features(e->utterance_id), crop_frames, rng));
    }
    const auto embeddings = extract_embeddings(extractor, crops);
    std::vector<double> mean(kEmbeddingDim, 0.0);
    for (const SpeakerEmbedding& e : embeddings) {
      for (std::size_t j = 0; j < kEmbeddingDim; ++j) mean[j] += e.values[j];
    }
    for (double& v : mean) v /= embeddings.size();
    bank.entries[speaker] = std::move(mean);
  }
  return bank;
}

std::string known_speaker(const CorpusManifest& manifest, const MixSpec& pair,
                          Direction direction) {
  const std::string& utt = direction == Direction::kKnownInterferer
                               ? pair.interferer_utt
                               : pair.target_utt;
  return manifest.entry(utt).speaker_id;
}

std::string predicted_speaker(const CorpusManifest& manifest, const MixSpec& pair,
                              Direction direction) {
  const std::string& utt = direction == Direction::kKnownInterferer
                               ? pair.target_utt
                               : pair.interferer_utt;
  return manifest.entry(utt).speaker_id;
}

std::vector<const std::vector<double>*> MixtureEmbeddingCache::get_all(
    Extractor& extractor, const Dataset& data, const std::vector<MixSpec>& pairs,
    int crop_frames) {
  // Pass 1: compute features for the pairs we have not seen yet.
  std::vector<std::string> keys(pairs.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const MixSpec& p = pairs[i];
    const long mdb = std::lround(p.snr_db * 1000.0);
    keys[i] = p.target_utt + "|" + p.interferer_utt + "|" + std::to_string(mdb) + "|" +
              std::to_string(crop_frames);
    if (cache_.find(keys[i]) == cache_.end()) {
      cache_.emplace(keys[i], std::vector<double>());  // reserve slot
      missing.push_back(i);
    }
  }

  std::vector<FeatureMatrix> features(missing.size());
  parallel_for(missing.size(), [&](std::size_t j) {
    const MixSpec& p = pairs[missing[j]];
    const MixResult mixed = mix_at_snr(data.waveform(p.target_utt),
                                       data.waveform(p.interferer_utt), p.snr_db);
    FeatureMatrix f = mfcc(mixed.mixture);
    if (f.num_frames > static_cast<std::size_t>(crop_frames)) {
      // Crop offset derived from the pair key so every pass sees the same crop.
      Rng rng(mix_seed(fnv_of(keys[missing[j]]), 0xC809));
      f = sample_segment(f, crop_frames, rng);
    }
    features[j] = std::move(f);
  });

  if (!missing.empty()) {
    const auto embeddings = extract_embeddings(extractor, features);
    for (std::size_t j = 0; j < missing.size(); ++j) {
      cache_[keys[missing[j]]] = embeddings[j].values;
    }
  }

  std::vector<const std::vector<double>*> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) out[i] = &cache_.at(keys[i]);
  return out;
}

StepTwoResult train_step_two(Extractor& extractor, const EmbeddingBank& bank,
                             const Dataset& data, const StepTwoConfig& config,
                             MixtureEmbeddingCache& cache) {
  if (config.epochs < 1 || config.batch_size < 1 || config.passes_per_epoch < 1) {
    throw ValueError("train_step_two: invalid hyperparameters");
  }
  const auto train_entries = data.manifest().split_entries(Split::kTrain);
  std::vector<std::string> speakers;
  for (const ManifestEntry* e : train_entries) {
    if (std::find(speakers.begin(), speakers.end(), e->speaker_id) == speakers.end()) {
      speakers.push_back(e->speaker_id);
    }
  }
  if (speakers.size() < 2) {
    throw ValueError("train_step_two: need at least 2 training speakers");
  }

  Rng init_rng(mix_seed(config.seed, 0xDE817));
  StepTwoResult result;
  result.trained.head =
      DemixHead::init(config.variant, init_rng, config.final_activation);
  result.trained.snr_db = config.snr_db;
  result.trained.direction = config.direction;
  result.trained.seed = config.seed;
  Adam optimizer(result.trained.head.trainable(), config.adam);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng epoch_rng(mix_seed(config.seed, 0xE7000 + epoch));
    std::vector<const ManifestEntry*> targets = train_entries;
    shuffle(targets, epoch_rng);
    std::vector<MixSpec> pairs;
    pairs.reserve(targets.size());
    for (const ManifestEntry* target : targets) {
      const ManifestEntry* other;
      do {
        other = train_entries[uniform_index(epoch_rng, train_entries.size())];
      } while (other->speaker_id == target->speaker_id);
      pairs.push_back(MixSpec{target->utterance_id, other->utterance_id, config.snr_db});
    }
    const auto mix_embeddings =
        cache.get_all(extractor, data, pairs, config.crop_frames);

    double mae_sum = 0.0;
    std::size_t batches = 0;
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int pass = 0; pass < config.passes_per_epoch; ++pass) {
      shuffle(order, epoch_rng);
      for (std::size_t at = 0; at < order.size(); at += config.batch_size) {
        const std::size_t take =
            std::min<std::size_t>(config.batch_size, order.size() - at);
        Tensor e_mix({take, kEmbeddingDim});
        Tensor e_known({take, kEmbeddingDim});
        Tensor e_target({take, kEmbeddingDim});
        for (std::size_t i = 0; i < take; ++i) {
          const MixSpec& pair = pairs[order[at + i]];
          std::copy(mix_embeddings[order[at + i]]->begin(),
                    mix_embeddings[order[at + i]]->end(),
                    e_mix.values().begin() + i * kEmbeddingDim);
          const auto& known =
              bank.at(known_speaker(data.manifest(), pair, config.direction));
          const auto& target =
              bank.at(predicted_speaker(data.manifest(), pair, config.direction));
          std::copy(known.begin(), known.end(),
                    e_known.values().begin() + i * kEmbeddingDim);
          std::copy(target.begin(), target.end(),
                    e_target.values().begin() + i * kEmbeddingDim);
        }
        Tape tape;
        Tensor predicted = result.trained.head.forward(e_mix, e_known);
        Tensor loss = mae_loss(predicted, e_target);
        mae_sum += loss.item();
        ++batches;
        tape.backward(loss);
        optimizer.step();
      }
    }
    result.epoch_mae.push_back(batches ? mae_sum / batches : 0.0);
  }
  result.trained.final_mae = result.epoch_mae.back();
  return result;
}

}  // namespace demixkit
