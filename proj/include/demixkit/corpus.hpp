#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "demixkit/rng.hpp"
#include "demixkit/wav.hpp"

namespace demixkit {

enum class Split { kTrain, kTest };

std::string to_string(Split split);
Split parse_split(const std::string& s);

struct ManifestEntry {
  std::string utterance_id;
  std::string speaker_id;
  std::string path;  // relative to the manifest's directory
  Split split = Split::kTrain;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> speakers;  // sorted; position = integer label
  std::vector<std::string> warnings;

  // Validates entries (unique utterance ids), derives the speaker index and
  // records a warning for every speaker missing from one of the splits.
  static CorpusManifest build(std::vector<ManifestEntry> entries);

  int speaker_label(const std::string& speaker_id) const;
  const ManifestEntry& entry(const std::string& utterance_id) const;
  std::vector<const ManifestEntry*> split_entries(Split split) const;
  std::vector<const ManifestEntry*> speaker_entries(const std::string& speaker_id,
                                                    Split split) const;

  void save(const std::filesystem::path& path) const;
  static CorpusManifest load(const std::filesystem::path& path);
};

// Synthetic speaker corpus: every speaker gets a fixed seed-derived voice
// recipe (three resonant formants plus a one-pole filtered noise floor);
// every utterance varies pitch contour and amplitude envelope under that
// recipe. Utterances are split roughly 3:1 train/test per speaker, the way
// a 6+2 per-speaker corpus would be.
struct SynthConfig {
  int n_speakers = 20;
  int utts_per_speaker = 8;
  double duration_s = 3.0;
  std::uint64_t seed = 7;
};

// Writes <out_dir>/wav/*.wav plus <out_dir>/manifest.json and returns the
// manifest. Same config and seed produce byte-identical output.
CorpusManifest synth_corpus(const SynthConfig& config,
                            const std::filesystem::path& out_dir);

// The per-utterance waveform synthesis, exposed for tests.
Waveform synth_utterance(std::uint64_t corpus_seed, int speaker, int utterance,
                         double duration_s);

}  // namespace demixkit
