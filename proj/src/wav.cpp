#include "demixkit/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "demixkit/errors.hpp"

namespace demixkit {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(v & 0xFF);
  out.push_back((v >> 8) & 0xFF);
  out.push_back((v >> 16) & 0xFF);
  out.push_back((v >> 24) & 0xFF);
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(v & 0xFF);
  out.push_back((v >> 8) & 0xFF);
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open WAV file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(file)),
                                   std::istreambuf_iterator<char>());

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError("malformed WAV header in " + path.string());
  }

  int sample_rate = 0;
  int channels = 0;
  int bits = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t at = 12;
  while (at + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + at);
    const std::uint32_t len = read_u32(bytes.data() + at + 4);
    if (at + 8 + len > bytes.size()) {
      throw IoError("truncated chunk '" + std::string(id, 4) + "' in " + path.string());
    }
    const unsigned char* body = bytes.data() + at + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw IoError("malformed fmt chunk in " + path.string());
      const std::uint16_t format = read_u16(body);
      channels = read_u16(body + 2);
      sample_rate = static_cast<int>(read_u32(body + 4));
      bits = read_u16(body + 14);
      if (format != 1) {
        throw IoError("unsupported WAV encoding " + std::to_string(format) +
                      " in " + path.string() + " (PCM only)");
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = body;
      data_len = len;
    }
    at += 8 + len + (len & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data == nullptr) {
    throw IoError("malformed WAV file (missing fmt/data chunk): " + path.string());
  }
  if (bits != 16) {
    throw IoError("unsupported WAV bit depth " + std::to_string(bits) + " in " +
                  path.string() + " (16-bit PCM only)");
  }
  if (channels != 1 && channels != 2) {
    throw IoError("unsupported channel count " + std::to_string(channels) + " in " +
                  path.string());
  }
  if (sample_rate <= 0) throw IoError("invalid sample rate in " + path.string());
  const std::size_t n_values = data_len / 2;
  const std::size_t n_frames = n_values / channels;
  if (n_frames == 0) throw IoError("empty audio in " + path.string());

  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = data + 2 * (i * channels + c);
      const std::int16_t s = static_cast<std::int16_t>(p[0] | (p[1] << 8));
      acc += static_cast<double>(s);
    }
    w.samples[i] = acc / channels / 32768.0;
  }
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  if (w.samples.empty()) throw ValueError("write_wav: empty waveform");
  std::vector<unsigned char> out;
  const std::uint32_t data_len = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate * 2));  // byte rate
  put_u16(out, 2);   // block align
  put_u16(out, 16);  // bits
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_len);
  for (double sample : w.samples) {
    const double clamped = std::clamp(sample, -1.0, 1.0);
    const double scaled = std::round(clamped * 32767.0);
    const std::int16_t s = static_cast<std::int16_t>(scaled);
    put_u16(out, static_cast<std::uint16_t>(s));
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write WAV file: " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("short write to " + path.string());
}

}  // namespace demixkit
