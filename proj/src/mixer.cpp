#include "demixkit/mixer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "demixkit/errors.hpp"
#include "demixkit/rng.hpp"

namespace demixkit {

namespace {

double mean_power(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc / static_cast<double>(n);
}

}  // namespace

MixResult mix_at_snr(const Waveform& target, const Waveform& interferer, double snr_db) {
  if (target.sample_rate != interferer.sample_rate) {
    throw ValueError("mix_at_snr: sample rates differ (" +
                     std::to_string(target.sample_rate) + " vs " +
                     std::to_string(interferer.sample_rate) + ")");
  }
  const std::size_t n = std::min(target.samples.size(), interferer.samples.size());
  if (n == 0) throw ValueError("mix_at_snr: empty signal");
  const double p1 = mean_power(target.samples.data(), n);
  const double p2 = mean_power(interferer.samples.data(), n);
  if (p1 <= 0.0 || p2 <= 0.0) {
    throw ValueError("mix_at_snr: zero-power input over the mixed region");
  }

  MixResult result;
  result.scale = std::sqrt(p1 / (p2 * std::pow(10.0, snr_db / 10.0)));
  result.mixture.sample_rate = target.sample_rate;
  result.mixture.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = target.samples[i] + result.scale * interferer.samples[i];
    result.mixture.samples[i] = v;
    if (std::abs(v) > 1.0) result.clipped = true;
  }
  return result;
}

double measure_snr(const Waveform& x1, const Waveform& scaled_x2) {
  if (x1.samples.size() != scaled_x2.samples.size()) {
    throw ValueError("measure_snr: lengths differ (" +
                     std::to_string(x1.samples.size()) + " vs " +
                     std::to_string(scaled_x2.samples.size()) + ")");
  }
  const double p1 = mean_power(x1.samples.data(), x1.samples.size());
  const double p2 = mean_power(scaled_x2.samples.data(), scaled_x2.samples.size());
  if (p1 <= 0.0 || p2 <= 0.0) throw ValueError("measure_snr: zero-power input");
  return 10.0 * std::log10(p1 / p2);
}

std::vector<MixSpec> sample_pairs(const CorpusManifest& manifest, Split split,
                                  std::size_t count, double snr_db,
                                  std::uint64_t seed) {
  const auto entries = manifest.split_entries(split);
  std::vector<std::string> speakers;
  for (const ManifestEntry* e : entries) {
    if (std::find(speakers.begin(), speakers.end(), e->speaker_id) == speakers.end()) {
      speakers.push_back(e->speaker_id);
    }
  }
  if (speakers.size() < 2) {
    throw ValueError("sample_pairs: split '" + to_string(split) + "' has " +
                     std::to_string(speakers.size()) + " speakers, need at least 2");
  }

  Rng rng(mix_seed(seed, 0xA11CE5));
  std::vector<MixSpec> pairs;
  pairs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const ManifestEntry* target = entries[uniform_index(rng, entries.size())];
    const ManifestEntry* other;
    do {
      other = entries[uniform_index(rng, entries.size())];
    } while (other->speaker_id == target->speaker_id);
    pairs.push_back(MixSpec{target->utterance_id, other->utterance_id, snr_db});
  }
  return pairs;
}

void save_pairs(const std::filesystem::path& path, const std::vector<MixSpec>& pairs) {
  nlohmann::json doc = nlohmann::json::array();
  for (const MixSpec& p : pairs) {
    doc.push_back({{"target_utt", p.target_utt},
                   {"interferer_utt", p.interferer_utt},
                   {"snr_db", p.snr_db}});
  }
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw IoError("cannot write pair list: " + path.string());
  file << doc.dump(2) << "\n";
}

std::vector<MixSpec> load_pairs(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw IoError("cannot open pair list: " + path.string());
  nlohmann::json doc;
  try {
    file >> doc;
    std::vector<MixSpec> pairs;
    for (const auto& item : doc) {
      pairs.push_back(MixSpec{item.at("target_utt").get<std::string>(),
                              item.at("interferer_utt").get<std::string>(),
                              item.at("snr_db").get<double>()});
    }
    return pairs;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed pair list " + path.string() + ": " + e.what());
  }
}

}  // namespace demixkit
