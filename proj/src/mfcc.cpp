#include "demixkit/mfcc.hpp"

#include <cmath>

#include "demixkit/errors.hpp"

namespace demixkit {

namespace {

constexpr int kSampleRate = 16000;
constexpr std::size_t kFrameLen = 400;  // 25 ms
constexpr std::size_t kFrameShift = 160;  // 10 ms
constexpr std::size_t kFftSize = 512;
constexpr std::size_t kNumBins = kFftSize / 2 + 1;
constexpr std::size_t kNumFilters = 40;
constexpr double kMelLow = 20.0;
constexpr double kMelHigh = 7600.0;
constexpr double kLogFloor = 1e-10;
constexpr double kPi = 3.14159265358979323846;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// 40 triangles over 42 mel-equidistant points, weights evaluated at the FFT
// bin centre frequencies.
const std::vector<std::vector<double>>& mel_filterbank() {
  static const std::vector<std::vector<double>> bank = [] {
    std::vector<double> points(kNumFilters + 2);
    const double mel_lo = hz_to_mel(kMelLow);
    const double mel_hi = hz_to_mel(kMelHigh);
    for (std::size_t i = 0; i < points.size(); ++i) {
      points[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (kNumFilters + 1));
    }
    std::vector<std::vector<double>> filters(kNumFilters,
                                             std::vector<double>(kNumBins, 0.0));
    for (std::size_t m = 0; m < kNumFilters; ++m) {
      const double lo = points[m], mid = points[m + 1], hi = points[m + 2];
      for (std::size_t k = 0; k < kNumBins; ++k) {
        const double f = static_cast<double>(k) * kSampleRate / kFftSize;
        if (f <= lo || f >= hi) continue;
        filters[m][k] = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      }
    }
    return filters;
  }();
  return bank;
}

const std::vector<double>& hann_window() {
  static const std::vector<double> window = [] {
    std::vector<double> w(kFrameLen);
    for (std::size_t n = 0; n < kFrameLen; ++n) {
      w[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * n / (kFrameLen - 1));
    }
    return w;
  }();
  return window;
}

// DCT-II with orthonormal scaling, rows = output coefficients.
const std::vector<double>& dct_matrix() {
  static const std::vector<double> dct = [] {
    std::vector<double> m(FeatureMatrix::kNumCoeffs * kNumFilters);
    for (std::size_t j = 0; j < FeatureMatrix::kNumCoeffs; ++j) {
      const double scale =
          std::sqrt((j == 0 ? 1.0 : 2.0) / static_cast<double>(kNumFilters));
      for (std::size_t k = 0; k < kNumFilters; ++k) {
        m[j * kNumFilters + k] =
            scale * std::cos(kPi * j * (k + 0.5) / kNumFilters);
      }
    }
    return m;
  }();
  return dct;
}

}  // namespace

namespace detail {

void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
  const std::size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0 || im.size() != n) {
    throw ValueError("fft_radix2: length must be a power of two");
  }
  // bit reversal
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * kPi / static_cast<double>(len);
    const double wr = std::cos(angle), wi = std::sin(angle);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::size_t a = i + j, b = i + j + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

}  // namespace detail

std::size_t mfcc_frame_count(std::size_t n_samples) {
  if (n_samples < kFrameLen) return 0;
  return (n_samples - kFrameLen) / kFrameShift + 1;
}

FeatureMatrix mfcc_without_mean_subtraction(const Waveform& w) {
  if (w.sample_rate != kSampleRate) {
    throw ValueError("mfcc: expected " + std::to_string(kSampleRate) +
                     " Hz input, got " + std::to_string(w.sample_rate));
  }
  const std::size_t t = mfcc_frame_count(w.samples.size());
  if (t == 0) {
    throw ValueError("mfcc: signal of " + std::to_string(w.samples.size()) +
                     " samples is shorter than one 25 ms frame");
  }

  const auto& window = hann_window();
  const auto& filters = mel_filterbank();
  const auto& dct = dct_matrix();

  FeatureMatrix out;
  out.num_frames = t;
  out.frames.assign(t * FeatureMatrix::kNumCoeffs, 0.0);

  std::vector<double> re(kFftSize), im(kFftSize);
  std::vector<double> magnitude(kNumBins), energies(kNumFilters);
  for (std::size_t frame = 0; frame < t; ++frame) {
    const double* src = w.samples.data() + frame * kFrameShift;
    for (std::size_t n = 0; n < kFrameLen; ++n) re[n] = src[n] * window[n];
    std::fill(re.begin() + kFrameLen, re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    detail::fft_radix2(re, im);
    for (std::size_t k = 0; k < kNumBins; ++k) {
      magnitude[k] = std::sqrt(re[k] * re[k] + im[k] * im[k]);
    }
    for (std::size_t m = 0; m < kNumFilters; ++m) {
      const auto& filt = filters[m];
      double acc = 0.0;
      for (std::size_t k = 0; k < kNumBins; ++k) acc += filt[k] * magnitude[k];
      energies[m] = std::log(std::max(acc, kLogFloor));
    }
    double* row = out.frames.data() + frame * FeatureMatrix::kNumCoeffs;
    for (std::size_t j = 0; j < FeatureMatrix::kNumCoeffs; ++j) {
      const double* basis = dct.data() + j * kNumFilters;
      double acc = 0.0;
      for (std::size_t m = 0; m < kNumFilters; ++m) acc += basis[m] * energies[m];
      row[j] = acc;
    }
  }

  return out;
}

FeatureMatrix mfcc(const Waveform& w) {
  FeatureMatrix out = mfcc_without_mean_subtraction(w);
  const std::size_t t = out.num_frames;
  for (std::size_t j = 0; j < FeatureMatrix::kNumCoeffs; ++j) {
    double mean = 0.0;
    for (std::size_t frame = 0; frame < t; ++frame) {
      mean += out.frames[frame * FeatureMatrix::kNumCoeffs + j];
    }
    mean /= static_cast<double>(t);
    for (std::size_t frame = 0; frame < t; ++frame) {
      out.frames[frame * FeatureMatrix::kNumCoeffs + j] -= mean;
    }
  }
  return out;
}

FeatureMatrix sample_segment(const FeatureMatrix& f, std::size_t length_frames, Rng& rng) {
  if (length_frames == 0) throw ValueError("sample_segment: zero-length crop");
  if (f.num_frames < length_frames) {
    throw ValueError("sample_segment: utterance of " + std::to_string(f.num_frames) +
                     " frames is shorter than the requested " +
                     std::to_string(length_frames));
  }
  const std::size_t start = uniform_index(rng, f.num_frames - length_frames + 1);
  FeatureMatrix crop;
  crop.num_frames = length_frames;
  crop.frame_shift_ms = f.frame_shift_ms;
  crop.frame_length_ms = f.frame_length_ms;
  crop.frames.assign(f.frames.begin() + start * FeatureMatrix::kNumCoeffs,
                     f.frames.begin() + (start + length_frames) * FeatureMatrix::kNumCoeffs);
  return crop;
}

}  // namespace demixkit
