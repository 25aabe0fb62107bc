#pragma once

#include <cstddef>
#include <vector>

#include "demixkit/rng.hpp"
#include "demixkit/wav.hpp"

namespace demixkit {

// T x 20 MFCC frames for one utterance or segment.
struct FeatureMatrix {
  std::vector<double> frames;  // row-major, num_frames x kNumCoeffs
  std::size_t num_frames = 0;
  double frame_shift_ms = 10.0;
  double frame_length_ms = 25.0;

  static constexpr std::size_t kNumCoeffs = 20;

  double at(std::size_t t, std::size_t c) const { return frames[t * kNumCoeffs + c]; }
  const double* row(std::size_t t) const { return frames.data() + t * kNumCoeffs; }
};

// 20-dimensional MFCC: 25 ms Hann-windowed frames every 10 ms, 512-point
// magnitude FFT, 40 triangular mel filters over 20-7600 Hz, log energies
// floored at 1e-10, orthonormal DCT-II keeping coefficients 0-19, then
// per-utterance cepstral mean subtraction. Requires 16 kHz input.
FeatureMatrix mfcc(const Waveform& w);

// Same analysis without the final mean subtraction. Speaker-level spectral
// envelope statistics live here; mfcc() is this plus per-column centering.
FeatureMatrix mfcc_without_mean_subtraction(const Waveform& w);

// Uniformly random contiguous crop of exactly length_frames rows.
FeatureMatrix sample_segment(const FeatureMatrix& f, std::size_t length_frames, Rng& rng);

// Frame count the analysis window layout yields for n samples at 16 kHz.
std::size_t mfcc_frame_count(std::size_t n_samples);

namespace detail {
// In-place iterative radix-2 FFT over interleaved complex values.
void fft_radix2(std::vector<double>& re, std::vector<double>& im);
}  // namespace detail

}  // namespace demixkit
