#include "demixkit/dataset.hpp"

#include <vector>

#include "demixkit/errors.hpp"
#include "demixkit/threading.hpp"

namespace demixkit {

Dataset::Dataset(CorpusManifest manifest, std::filesystem::path root)
    : manifest_(std::move(manifest)), root_(std::move(root)) {
  std::vector<Waveform> waves(manifest_.entries.size());
  std::vector<FeatureMatrix> feats(manifest_.entries.size());
  parallel_for(manifest_.entries.size(), [&](std::size_t i) {
    waves[i] = read_wav(root_ / manifest_.entries[i].path);
    feats[i] = mfcc(waves[i]);
  });
  for (std::size_t i = 0; i < manifest_.entries.size(); ++i) {
    const std::string& id = manifest_.entries[i].utterance_id;
    waveforms_[id] = std::move(waves[i]);
    features_[id] = std::move(feats[i]);
  }
}

Dataset Dataset::open(const std::filesystem::path& manifest_path) {
  return Dataset(CorpusManifest::load(manifest_path), manifest_path.parent_path());
}

const Waveform& Dataset::waveform(const std::string& utterance_id) const {
  const auto it = waveforms_.find(utterance_id);
  if (it == waveforms_.end()) {
    throw ValueError("dataset has no waveform for '" + utterance_id + "'");
  }
  return it->second;
}

const FeatureMatrix& Dataset::features(const std::string& utterance_id) const {
  const auto it = features_.find(utterance_id);
  if (it == features_.end()) {
    throw ValueError("dataset has no features for '" + utterance_id + "'");
  }
  return it->second;
}

}  // namespace demixkit
