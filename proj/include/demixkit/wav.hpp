#pragma once

#include <filesystem>
#include <vector>

namespace demixkit {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Reads a PCM 16-bit WAV file. Stereo is downmixed by averaging; samples
// are scaled by 1/32768. Anything other than 16-bit integer PCM is rejected.
Waveform read_wav(const std::filesystem::path& path);

// Writes mono PCM 16-bit. Samples are clamped to [-1, 1] and rounded.
void write_wav(const std::filesystem::path& path, const Waveform& w);

}  // namespace demixkit
