#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "demixkit/corpus.hpp"
#include "demixkit/wav.hpp"

namespace demixkit {

// One two-speaker mixture: a target utterance plus an interfering utterance
// from a different speaker of the same split, combined at snr_db
// (target-to-interferer power ratio).
struct MixSpec {
  std::string target_utt;
  std::string interferer_utt;
  double snr_db = 0.0;
};

struct MixResult {
  Waveform mixture;
  double scale = 1.0;   // gain applied to the interferer
  bool clipped = false; // any |sample| > 1 in the float-domain sum
};

// Crops both signals to the shorter length, scales the interferer so that
// 10*log10(P_target / P_interferer) == snr_db over the cropped region, and
// returns the plain sum. No renormalisation afterwards.
MixResult mix_at_snr(const Waveform& target, const Waveform& interferer, double snr_db);

// 10*log10(mean(x1^2) / mean(x2^2)); the verification oracle for mix_at_snr.
double measure_snr(const Waveform& x1, const Waveform& scaled_x2);

// Uniformly random target utterances from `split`, each paired with a
// uniformly random utterance of a different speaker in the same split.
std::vector<MixSpec> sample_pairs(const CorpusManifest& manifest, Split split,
                                  std::size_t count, double snr_db,
                                  std::uint64_t seed);

void save_pairs(const std::filesystem::path& path, const std::vector<MixSpec>& pairs);
std::vector<MixSpec> load_pairs(const std::filesystem::path& path);

}  // namespace demixkit
