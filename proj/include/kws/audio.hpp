#pragma once

#include <string>
#include <vector>

#include "kws/tensor.hpp"

namespace kws::audio {

inline constexpr int kSampleRate = 16000;
inline constexpr int kWindowSamples = 400;  // 25 ms
inline constexpr int kHopSamples = 160;     // 10 ms
inline constexpr int kFftSize = 512;
inline constexpr int kMelBins = 40;
inline constexpr double kMelLoHz = 20.0;
inline constexpr double kMelHiHz = 7600.0;
inline constexpr double kLogFloor = 1e-12;

struct Waveform {
  std::vector<float> samples;  // PCM16 decoded to [-1, 1]
  int sample_rate = kSampleRate;
};

// Strict PCM16 mono 16 kHz reader; anything else is an error (no silent
// resampling).
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

int mel_frame_count(int64_t num_samples);

// T x 40 natural-log mel filterbank energies: Hann window of 400 samples,
// hop 160, 512-point transform, 40 triangular HTK-mel filters spanning
// 20 Hz - 7600 Hz, log floor 1e-12.
nn::Tensor<float> compute_log_mel(const Waveform& w);

// Filter center frequencies in Hz (for tests and tooling).
std::vector<double> mel_filter_centers_hz();

// Scale `noise` so that 10*log10(P_signal/P_noise) == snr_db, add, clip to
// [-1, 1]. Noise shorter than the signal is looped.
Waveform mix_noise(const Waveform& w, const Waveform& noise, double snr_db);

}  // namespace kws::audio
