#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "kws/audio.hpp"
#include "kws/error.hpp"
#include "kws/rng.hpp"

using namespace kws;
using audio::Waveform;

namespace {

Waveform sine(double freq_hz, int samples, float amp = 0.5f) {
  Waveform w;
  w.samples.resize(static_cast<size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    w.samples[static_cast<size_t>(i)] =
        amp * static_cast<float>(std::sin(2.0 * 3.14159265358979 * freq_hz * i / 16000.0));
  }
  return w;
}

// Hand-built WAV with arbitrary header fields, for reader error paths.
void write_raw_wav(const std::string& path, uint16_t channels, uint32_t rate,
                   uint16_t bits, const std::vector<int16_t>& pcm) {
  std::ofstream out(path, std::ios::binary);
  const auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  const auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  const uint32_t data_bytes = static_cast<uint32_t>(pcm.size() * 2);
  out.write("RIFF", 4);
  u32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(1);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(static_cast<uint16_t>(channels * bits / 8));
  u16(bits);
  out.write("data", 4);
  u32(data_bytes);
  out.write(reinterpret_cast<const char*>(pcm.data()), data_bytes);
}

}  // namespace

TEST_CASE("wav round-trip is lossless for PCM16") {
  Waveform w = sine(440.0, 16000);
  audio::write_wav("audio_tmp_roundtrip.wav", w);
  const Waveform r = audio::read_wav("audio_tmp_roundtrip.wav");
  REQUIRE(r.samples.size() == 16000);  // 1 s file -> 16000 samples
  for (size_t i = 0; i < r.samples.size(); i += 997) {
    CHECK(std::abs(r.samples[i] - w.samples[i]) <= 1.0f / 32768.0f + 1e-6f);
  }
}

TEST_CASE("wav reader rejects wrong formats") {
  write_raw_wav("audio_tmp_stereo.wav", 2, 16000, 16, std::vector<int16_t>(800, 0));
  CHECK_THROWS_WITH_AS(audio::read_wav("audio_tmp_stereo.wav"),
                       doctest::Contains("expected mono"), Error);

  write_raw_wav("audio_tmp_8k.wav", 1, 8000, 16, std::vector<int16_t>(800, 0));
  CHECK_THROWS_WITH_AS(audio::read_wav("audio_tmp_8k.wav"),
                       doctest::Contains("expected 16000 Hz"), Error);

  std::ofstream("audio_tmp_junk.wav") << "not a riff file at all";
  CHECK_THROWS_AS(audio::read_wav("audio_tmp_junk.wav"), Error);
  CHECK_THROWS_AS(audio::read_wav("audio_tmp_missing.wav"), Error);
}

TEST_CASE("mel frame count formula") {
  CHECK(audio::mel_frame_count(16000) == 98);  // floor((16000-400)/160)+1
  CHECK(audio::mel_frame_count(400) == 1);
  CHECK(audio::mel_frame_count(399) == 0);

  // Formula holds against the actual feature matrix across lengths.
  Rng rng(3);
  for (int trial = 0; trial < 60; ++trial) {
    const int len = 400 + static_cast<int>(rng.uniform_int(47601));
    Waveform w = sine(300.0, len);
    const auto mel = audio::compute_log_mel(w);
    CHECK(mel.shape[0] == audio::mel_frame_count(len));
    CHECK(mel.shape[1] == 40);
  }
}

TEST_CASE("log-mel of silence sits on the floor") {
  Waveform w;
  w.samples.assign(1600, 0.0f);
  const auto mel = audio::compute_log_mel(w);
  const float floor_log = std::log(1e-12f);
  for (float v : mel.data) CHECK(v == doctest::Approx(floor_log));
}

TEST_CASE("log-mel rejects too-short input") {
  Waveform w;
  w.samples.assign(399, 0.1f);
  CHECK_THROWS_AS(audio::compute_log_mel(w), Error);
}

TEST_CASE("pure 1 kHz tone lands in the filter nearest 1 kHz") {
  const auto centers = audio::mel_filter_centers_hz();
  int expected_bin = 0;
  for (size_t m = 1; m < centers.size(); ++m) {
    if (std::abs(centers[m] - 1000.0) < std::abs(centers[static_cast<size_t>(expected_bin)] - 1000.0)) {
      expected_bin = static_cast<int>(m);
    }
  }
  const auto mel = audio::compute_log_mel(sine(1000.0, 8000));
  for (int t = 0; t < mel.shape[0]; ++t) {
    int best = 0;
    for (int m = 1; m < 40; ++m) {
      if (mel.at(t, m) > mel.at(t, best)) best = m;
    }
    CHECK(best == expected_bin);
  }
}

TEST_CASE("log-mel is deterministic bit for bit") {
  Waveform w = sine(523.0, 4000);
  const auto a = audio::compute_log_mel(w);
  const auto b = audio::compute_log_mel(w);
  CHECK(a.data == b.data);
}

TEST_CASE("scaling the waveform never decreases log-mel values") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Waveform w;
    const int len = 400 + static_cast<int>(rng.uniform_int(4000));
    w.samples.resize(static_cast<size_t>(len));
    for (auto& s : w.samples) s = static_cast<float>(rng.uniform(-0.2, 0.2));
    const double c = rng.uniform(1.0, 4.0);
    Waveform scaled = w;
    for (auto& s : scaled.samples) s = static_cast<float>(s * c);
    const auto a = audio::compute_log_mel(w);
    const auto b = audio::compute_log_mel(scaled);
    for (size_t i = 0; i < a.data.size(); ++i) {
      CHECK(b.data[i] >= a.data[i] - 1e-5f);
    }
  }
}

TEST_CASE("mix_noise hits the requested SNR") {
  Waveform sig = sine(440.0, 4000, 0.4f);
  Waveform noise = sine(3100.0, 4000, 0.4f);

  SUBCASE("equal-power inputs at 0 dB keep the noise unscaled") {
    const auto mixed = audio::mix_noise(sig, noise, 0.0);
    for (size_t i = 0; i < mixed.samples.size(); ++i) {
      const float expect = std::clamp(sig.samples[i] + noise.samples[i], -1.0f, 1.0f);
      CHECK(mixed.samples[i] == doctest::Approx(expect).epsilon(1e-4));
    }
  }

  SUBCASE("snr -10 dB with equal unit powers scales noise by sqrt(10)") {
    const auto mixed = audio::mix_noise(sig, noise, -10.0);
    const double g = std::sqrt(10.0);
    for (size_t i = 0; i < mixed.samples.size(); i += 37) {
      const double expect =
          std::clamp(static_cast<double>(sig.samples[i]) + g * noise.samples[i], -1.0, 1.0);
      CHECK(mixed.samples[i] == doctest::Approx(expect).epsilon(1e-3));
    }
  }

  SUBCASE("very high snr returns the signal nearly unchanged") {
    const auto mixed = audio::mix_noise(sig, noise, 100.0);
    for (size_t i = 0; i < mixed.samples.size(); i += 17) {
      CHECK(std::abs(mixed.samples[i] - sig.samples[i]) < 1e-4f);
    }
  }

  SUBCASE("noise shorter than the signal loops") {
    Waveform short_noise = sine(3100.0, 1000, 0.4f);
    const auto mixed = audio::mix_noise(sig, short_noise, 0.0);
    CHECK(mixed.samples.size() == sig.samples.size());
  }

  SUBCASE("silent signal is an error") {
    Waveform silent;
    silent.samples.assign(4000, 0.0f);
    CHECK_THROWS_AS(audio::mix_noise(silent, noise, 0.0), Error);
  }
}
