#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "demixkit/corpus.hpp"
#include "demixkit/train.hpp"

namespace demixkit {

// Whole-experiment description for `run-grid`. Defaults reproduce the
// published setup: 200 bank segments per speaker, Adam with beta1 0.95 /
// beta2 0.999 / epsilon 1e-8 / lr 1e-3, the -5/0/5 dB grid, both de-mixing
// directions and all six variants.
struct ExperimentConfig {
  // Exactly one of synthetic / manifest_path is used.
  std::optional<SynthConfig> synthetic = SynthConfig{};
  std::string manifest_path;

  StepOneConfig step_one;

  int bank_segments_per_speaker = 200;
  std::uint64_t bank_seed = 2;

  std::vector<DemixVariant> variants{kAllVariants, kAllVariants + 6};
  std::vector<double> snrs_db{-5.0, 0.0, 5.0};
  std::vector<Direction> directions{Direction::kKnownInterferer,
                                    Direction::kKnownTarget};
  StepTwoConfig step_two;  // variant/snr/direction fields are overridden per head

  int eval_pairs_per_snr = 200;
  std::uint64_t eval_seed = 4;

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  std::string to_json_text() const;
};

}  // namespace demixkit
