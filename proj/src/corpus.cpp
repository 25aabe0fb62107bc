#include "demixkit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "demixkit/errors.hpp"

namespace demixkit {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr int kSampleRate = 16000;
}

std::string to_string(Split split) {
  return split == Split::kTrain ? "train" : "test";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw ValueError("unknown split '" + s + "' (expected train or test)");
}

CorpusManifest CorpusManifest::build(std::vector<ManifestEntry> entries) {
  CorpusManifest m;
  m.entries = std::move(entries);

  std::set<std::string> ids;
  std::map<std::string, std::set<Split>> splits_seen;
  for (const ManifestEntry& e : m.entries) {
    if (!ids.insert(e.utterance_id).second) {
      throw ValueError("duplicate utterance id '" + e.utterance_id + "' in manifest");
    }
    splits_seen[e.speaker_id].insert(e.split);
  }
  for (const auto& [speaker, splits] : splits_seen) {
    m.speakers.push_back(speaker);
    if (splits.size() < 2) {
      m.warnings.push_back("speaker '" + speaker + "' appears only in the " +
                           to_string(*splits.begin()) + " split");
    }
  }
  std::sort(m.speakers.begin(), m.speakers.end());
  return m;
}

int CorpusManifest::speaker_label(const std::string& speaker_id) const {
  const auto it = std::lower_bound(speakers.begin(), speakers.end(), speaker_id);
  if (it == speakers.end() || *it != speaker_id) {
    throw ValueError("unknown speaker '" + speaker_id + "'");
  }
  return static_cast<int>(it - speakers.begin());
}

const ManifestEntry& CorpusManifest::entry(const std::string& utterance_id) const {
  for (const ManifestEntry& e : entries) {
    if (e.utterance_id == utterance_id) return e;
  }
  throw ValueError("unknown utterance '" + utterance_id + "'");
}

std::vector<const ManifestEntry*> CorpusManifest::split_entries(Split split) const {
  std::vector<const ManifestEntry*> out;
  for (const ManifestEntry& e : entries) {
    if (e.split == split) out.push_back(&e);
  }
  return out;
}

std::vector<const ManifestEntry*> CorpusManifest::speaker_entries(
    const std::string& speaker_id, Split split) const {
  std::vector<const ManifestEntry*> out;
  for (const ManifestEntry& e : entries) {
    if (e.split == split && e.speaker_id == speaker_id) out.push_back(&e);
  }
  return out;
}

void CorpusManifest::save(const std::filesystem::path& path) const {
  nlohmann::json doc;
  doc["speakers"] = speakers;
  doc["warnings"] = warnings;
  auto& list = doc["entries"] = nlohmann::json::array();
  for (const ManifestEntry& e : entries) {
    list.push_back({{"utterance_id", e.utterance_id},
                    {"speaker_id", e.speaker_id},
                    {"path", e.path},
                    {"split", to_string(e.split)}});
  }
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw IoError("cannot write manifest: " + path.string());
  file << doc.dump(2) << "\n";
}

CorpusManifest CorpusManifest::load(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw IoError("cannot open manifest: " + path.string());
  nlohmann::json doc;
  try {
    file >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  std::vector<ManifestEntry> entries;
  try {
    for (const auto& item : doc.at("entries")) {
      ManifestEntry e;
      e.utterance_id = item.at("utterance_id").get<std::string>();
      e.speaker_id = item.at("speaker_id").get<std::string>();
      e.path = item.at("path").get<std::string>();
      e.split = parse_split(item.at("split").get<std::string>());
      entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  return build(std::move(entries));
}

namespace {

// Fixed per-speaker voice recipe drawn from the corpus seed.
struct VoiceRecipe {
  double f0_base;
  double formant_hz[3];
  double formant_bw[3];
  double formant_gain[3];
  double noise_pole;
  double noise_gain;
};

// Low-discrepancy placement over each voice dimension: speaker s lands at
// frac(s * irrational + seed offset), so recipes spread out evenly for any
// speaker count instead of occasionally colliding the way iid draws do.
double spread(std::uint64_t corpus_seed, int speaker, int dimension) {
  static const double kStride[] = {0.6180339887498949, 0.5545497337543953,
                                   0.3819660112501051, 0.7548776662466927,
                                   0.2914855048582242, 0.8566748838545029,
                                   0.4608900361826955, 0.1883099186086936};
  Rng rng(mix_seed(corpus_seed, 9000017ULL + static_cast<std::uint64_t>(dimension)));
  const double offset = uniform(rng, 0.0, 1.0);
  const double x = offset + speaker * kStride[dimension % 8];
  return x - std::floor(x);
}

VoiceRecipe speaker_recipe(std::uint64_t corpus_seed, int speaker) {
  Rng rng(mix_seed(corpus_seed, 1000003ULL + static_cast<std::uint64_t>(speaker)));
  VoiceRecipe r;
  r.f0_base = 85.0 + 170.0 * spread(corpus_seed, speaker, 0);
  r.formant_hz[0] = 300.0 + 550.0 * spread(corpus_seed, speaker, 1);
  r.formant_hz[1] = 950.0 + 1350.0 * spread(corpus_seed, speaker, 2);
  r.formant_hz[2] = 2400.0 + 900.0 * spread(corpus_seed, speaker, 3);
  r.formant_bw[0] = 60.0 + 60.0 * spread(corpus_seed, speaker, 4);
  r.formant_bw[1] = 80.0 + 80.0 * spread(corpus_seed, speaker, 5);
  r.formant_bw[2] = 120.0 + 120.0 * uniform(rng, 0.0, 1.0);
  r.formant_gain[0] = 1.0;
  r.formant_gain[1] = 0.4 + 0.5 * spread(corpus_seed, speaker, 6);
  r.formant_gain[2] = 0.2 + 0.4 * uniform(rng, 0.0, 1.0);
  r.noise_pole = 0.90 + 0.09 * spread(corpus_seed, speaker, 7);
  r.noise_gain = uniform(rng, 0.02, 0.06);
  return r;
}

// Two-pole resonator state.
struct Resonator {
  double c1, c2, y1 = 0.0, y2 = 0.0;
  Resonator(double hz, double bw) {
    const double r = std::exp(-kPi * bw / kSampleRate);
    c1 = 2.0 * r * std::cos(2.0 * kPi * hz / kSampleRate);
    c2 = -r * r;
  }
  double tick(double x) {
    const double y = x + c1 * y1 + c2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

Waveform synth_utterance(std::uint64_t corpus_seed, int speaker, int utterance,
                         double duration_s) {
  const VoiceRecipe recipe = speaker_recipe(corpus_seed, speaker);
  Rng rng(mix_seed(corpus_seed, 2000003ULL * (speaker + 1) +
                                    static_cast<std::uint64_t>(utterance)));

  // Per-utterance variation: pitch contour and a syllable-like envelope.
  const double vib_hz = uniform(rng, 0.8, 2.5);
  const double vib_phase = uniform(rng, 0.0, 2.0 * kPi);
  const double vib_depth = uniform(rng, 0.05, 0.15);  // octaves
  const double drift_hz = uniform(rng, 0.1, 0.4);
  const double drift_phase = uniform(rng, 0.0, 2.0 * kPi);
  const double drift_depth = uniform(rng, 0.05, 0.12);
  const double syllable_hz = uniform(rng, 2.0, 5.0);
  const double syllable_phase = uniform(rng, 0.0, 2.0 * kPi);

  const std::size_t n = static_cast<std::size_t>(duration_s * kSampleRate);
  Waveform w;
  w.sample_rate = kSampleRate;
  w.samples.assign(n, 0.0);

  Resonator res[3] = {{recipe.formant_hz[0], recipe.formant_bw[0]},
                      {recipe.formant_hz[1], recipe.formant_bw[1]},
                      {recipe.formant_hz[2], recipe.formant_bw[2]}};
  double phase = uniform(rng, 0.0, 1.0);
  double noise_state = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    const double octaves = vib_depth * std::sin(2.0 * kPi * vib_hz * t + vib_phase) +
                           drift_depth * std::sin(2.0 * kPi * drift_hz * t + drift_phase);
    const double f0 = recipe.f0_base * std::pow(2.0, octaves);
    phase += f0 / kSampleRate;
    double pulse = 0.0;
    if (phase >= 1.0) {
      phase -= 1.0;
      pulse = 1.0;
    }
    double voiced = 0.0;
    for (int f = 0; f < 3; ++f) voiced += recipe.formant_gain[f] * res[f].tick(pulse);

    const double white = uniform(rng, -1.0, 1.0);
    noise_state = recipe.noise_pole * noise_state + (1.0 - recipe.noise_pole) * white;

    const double syl = std::pow(
        std::abs(std::sin(kPi * syllable_hz * t + syllable_phase)), 0.7);
    const double envelope = 0.15 + 0.85 * syl;
    w.samples[i] = envelope * (voiced + recipe.noise_gain * noise_state);
  }

  // Normalize to a fixed RMS so mixing SNRs start from comparable levels.
  double power = 0.0;
  for (double s : w.samples) power += s * s;
  const double rms = std::sqrt(power / n);
  const double gain = rms > 0.0 ? 0.08 / rms : 1.0;
  double peak = 0.0;
  for (double& s : w.samples) {
    s *= gain;
    peak = std::max(peak, std::abs(s));
  }
  if (peak > 0.97) {
    const double shrink = 0.97 / peak;
    for (double& s : w.samples) s *= shrink;
  }
  return w;
}

CorpusManifest synth_corpus(const SynthConfig& config,
                            const std::filesystem::path& out_dir) {
  if (config.n_speakers < 2) {
    throw ValueError("synth_corpus: need at least 2 speakers, got " +
                     std::to_string(config.n_speakers));
  }
  if (config.utts_per_speaker < 2) {
    throw ValueError("synth_corpus: need at least 2 utterances per speaker, got " +
                     std::to_string(config.utts_per_speaker));
  }
  if (config.duration_s <= 0.1) {
    throw ValueError("synth_corpus: duration too short");
  }

  std::filesystem::create_directories(out_dir / "wav");
  const int n_test = std::max(1, config.utts_per_speaker / 4);

  std::vector<ManifestEntry> entries;
  for (int s = 0; s < config.n_speakers; ++s) {
    char speaker_id[16];
    std::snprintf(speaker_id, sizeof(speaker_id), "spk%03d", s);
    for (int u = 0; u < config.utts_per_speaker; ++u) {
      ManifestEntry e;
      e.speaker_id = speaker_id;
      e.utterance_id = std::string(speaker_id) + "_utt" + std::to_string(u);
      e.path = "wav/" + e.utterance_id + ".wav";
      e.split = u < config.utts_per_speaker - n_test ? Split::kTrain : Split::kTest;
      write_wav(out_dir / e.path, synth_utterance(config.seed, s, u, config.duration_s));
      entries.push_back(std::move(e));
    }
  }
  CorpusManifest manifest = CorpusManifest::build(std::move(entries));
  manifest.save(out_dir / "manifest.json");
  return manifest;
}

}  // namespace demixkit
