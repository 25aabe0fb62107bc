#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "demixkit/corpus.hpp"
#include "demixkit/mfcc.hpp"

namespace demixkit {

// A manifest plus eagerly decoded waveforms and MFCC features for every
// utterance. Construction does all the work (feature extraction runs in
// parallel across utterances); afterwards the dataset is read-only.
class Dataset {
 public:
  Dataset(CorpusManifest manifest, std::filesystem::path root);
  static Dataset open(const std::filesystem::path& manifest_path);

  const CorpusManifest& manifest() const { return manifest_; }
  const std::filesystem::path& root() const { return root_; }
  const Waveform& waveform(const std::string& utterance_id) const;
  const FeatureMatrix& features(const std::string& utterance_id) const;

 private:
  CorpusManifest manifest_;
  std::filesystem::path root_;
  std::map<std::string, Waveform> waveforms_;
  std::map<std::string, FeatureMatrix> features_;
};

}  // namespace demixkit
