#include "kws/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

#include "kws/error.hpp"

namespace kws::audio {
namespace {

constexpr double kPi = 3.14159265358979323846;

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (uint32_t(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v),
                              static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

// Iterative radix-2 FFT over 512 complex points, tables built once.
class Fft512 {
 public:
  Fft512() {
    for (int i = 0; i < kFftSize / 2; ++i) {
      const double a = -2.0 * kPi * i / kFftSize;
      tw_[i] = {std::cos(a), std::sin(a)};
    }
    for (int i = 0; i < kFftSize; ++i) {
      int r = 0;
      for (int bit = 0; bit < 9; ++bit) r |= ((i >> bit) & 1) << (8 - bit);
      rev_[i] = r;
    }
  }

  // In: 512 reals. Out: 257 magnitudes (bins 0..256).
  void magnitude(const double* in, double* out_mag) const {
    std::array<std::complex<double>, kFftSize> a;
    for (int i = 0; i < kFftSize; ++i) a[rev_[i]] = {in[i], 0.0};
    for (int len = 2; len <= kFftSize; len <<= 1) {
      const int step = kFftSize / len;
      for (int i = 0; i < kFftSize; i += len) {
        for (int j = 0; j < len / 2; ++j) {
          const auto w = tw_[j * step];
          const auto u = a[i + j];
          const auto v = a[i + j + len / 2] * w;
          a[i + j] = u + v;
          a[i + j + len / 2] = u - v;
        }
      }
    }
    for (int b = 0; b <= kFftSize / 2; ++b) out_mag[b] = std::abs(a[b]);
  }

 private:
  std::array<std::complex<double>, kFftSize / 2> tw_;
  std::array<int, kFftSize> rev_;
};

const Fft512& fft() {
  static const Fft512 f;
  return f;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// kMelBins + 2 edge frequencies, uniform on the mel scale.
std::vector<double> filter_edges_hz() {
  std::vector<double> edges(kMelBins + 2);
  const double lo = hz_to_mel(kMelLoHz), hi = hz_to_mel(kMelHiHz);
  for (int i = 0; i < kMelBins + 2; ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * i / (kMelBins + 1));
  }
  return edges;
}

// Triangular filter weights per (filter, fft bin).
const std::vector<std::vector<float>>& filterbank() {
  static const std::vector<std::vector<float>> fb = [] {
    const auto edges = filter_edges_hz();
    std::vector<std::vector<float>> out(kMelBins,
                                        std::vector<float>(kFftSize / 2 + 1, 0.0f));
    for (int m = 0; m < kMelBins; ++m) {
      const double lo = edges[m], c = edges[m + 1], hi = edges[m + 2];
      for (int b = 0; b <= kFftSize / 2; ++b) {
        const double f = static_cast<double>(b) * kSampleRate / kFftSize;
        double w = 0.0;
        if (f > lo && f < c) {
          w = (f - lo) / (c - lo);
        } else if (f >= c && f < hi) {
          w = (hi - f) / (hi - c);
        }
        out[m][b] = static_cast<float>(w);
      }
    }
    return out;
  }();
  return fb;
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open wav file: " + path);

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) throw Error(path + ": not a RIFF file");
  read_u32(in);  // riff size
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) throw Error(path + ": not a WAVE file");

  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<int16_t> pcm;
  bool have_data = false;

  while (in.read(tag, 4)) {
    const uint32_t size = read_u32(in);
    if (!in) break;
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_u16(in);
      channels = read_u16(in);
      rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      pcm.resize(size / 2);
      in.read(reinterpret_cast<char*>(pcm.data()), size & ~1u);
      if (size & 1) in.seekg(1, std::ios::cur);  // pad byte
      have_data = true;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!have_fmt || !have_data) throw Error(path + ": missing fmt or data chunk");
  if (format != 1 || bits != 16) throw Error(path + ": expected PCM16 encoding");
  if (channels != 1) throw Error(path + ": expected mono, got " + std::to_string(channels) + " channels");
  if (rate != kSampleRate) throw Error(path + ": expected 16000 Hz, got " + std::to_string(rate) + " Hz");

  Waveform w;
  w.samples.resize(pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i) {
    w.samples[i] = static_cast<float>(pcm[i]) / 32768.0f;
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write wav file: " + path);
  const uint32_t data_bytes = static_cast<uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, kSampleRate);
  write_u32(out, kSampleRate * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (float s : w.samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    const int v = static_cast<int>(std::lrint(c * 32767.0f));
    write_u16(out, static_cast<uint16_t>(static_cast<int16_t>(v)));
  }
  if (!out) throw Error("short write: " + path);
}

int mel_frame_count(int64_t num_samples) {
  if (num_samples < kWindowSamples) return 0;
  return static_cast<int>((num_samples - kWindowSamples) / kHopSamples) + 1;
}

nn::Tensor<float> compute_log_mel(const Waveform& w) {
  if (w.sample_rate != kSampleRate) throw Error("compute_log_mel: expected 16000 Hz");
  const int frames = mel_frame_count(static_cast<int64_t>(w.samples.size()));
  if (frames <= 0) {
    throw Error("compute_log_mel: waveform shorter than one 400-sample window");
  }

  // Periodic Hann.
  static const std::array<double, kWindowSamples> hann = [] {
    std::array<double, kWindowSamples> h{};
    for (int i = 0; i < kWindowSamples; ++i) {
      h[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / kWindowSamples);
    }
    return h;
  }();

  nn::Tensor<float> mel(std::vector<int>{frames, kMelBins});
  std::array<double, kFftSize> buf;
  std::array<double, kFftSize / 2 + 1> mag;
  const auto& fb = filterbank();

  for (int t = 0; t < frames; ++t) {
    const float* src = w.samples.data() + static_cast<size_t>(t) * kHopSamples;
    for (int i = 0; i < kWindowSamples; ++i) buf[i] = src[i] * hann[i];
    std::fill(buf.begin() + kWindowSamples, buf.end(), 0.0);
    fft().magnitude(buf.data(), mag.data());
    for (int m = 0; m < kMelBins; ++m) {
      double e = 0.0;
      const auto& weights = fb[m];
      for (int b = 0; b <= kFftSize / 2; ++b) e += weights[b] * mag[b];
      mel.at(t, m) = static_cast<float>(std::log(std::max(e, kLogFloor)));
    }
  }
  return mel;
}

std::vector<double> mel_filter_centers_hz() {
  const auto edges = filter_edges_hz();
  return {edges.begin() + 1, edges.end() - 1};
}

Waveform mix_noise(const Waveform& w, const Waveform& noise, double snr_db) {
  if (!std::isfinite(snr_db)) throw Error("mix_noise: snr_db must be finite");
  if (noise.samples.empty()) throw Error("mix_noise: empty noise");
  double p_sig = 0.0, p_noise = 0.0;
  for (float s : w.samples) p_sig += static_cast<double>(s) * s;
  p_sig /= std::max<size_t>(w.samples.size(), 1);
  if (p_sig <= 0.0) throw Error("mix_noise: signal has zero power");
  for (size_t i = 0; i < w.samples.size(); ++i) {
    const float n = noise.samples[i % noise.samples.size()];
    p_noise += static_cast<double>(n) * n;
  }
  p_noise /= std::max<size_t>(w.samples.size(), 1);
  if (p_noise <= 0.0) throw Error("mix_noise: noise has zero power");

  const double gain = std::sqrt(p_sig / (p_noise * std::pow(10.0, snr_db / 10.0)));
  Waveform out;
  out.samples.resize(w.samples.size());
  for (size_t i = 0; i < w.samples.size(); ++i) {
    const double v = w.samples[i] +
                     gain * noise.samples[i % noise.samples.size()];
    out.samples[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return out;
}

}  // namespace kws::audio
