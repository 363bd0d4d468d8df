#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kws/audio.hpp"
#include "kws/tensor.hpp"

namespace kws::model {

// Frozen speech embedder: 775 ms windows, 80 ms hop, 96-dim outputs. No
// gradient ever flows into an embedder; implementations must be
// deterministic.
class SpeechEmbedder {
 public:
  static constexpr int kWindowSamples = 12400;  // 775 ms at 16 kHz
  static constexpr int kHopSamples = 1280;      // 80 ms
  static constexpr int kOutDim = 96;

  virtual ~SpeechEmbedder() = default;

  // `id` identifies the utterance for file-backed implementations; the
  // stub ignores it.
  virtual nn::Tensor<float> embed(const audio::Waveform& w,
                                  const std::string& id) const = 0;
};

// floor((n - 12400)/1280) + 1 after padding n up to one window.
int pretrained_frame_count(int64_t num_samples);

// Deterministic stand-in for a real pre-trained embedder: per window, the
// mean of the window's log-mel frames projected by a frozen seed-derived
// 40x96 matrix and tanh-squashed.
class StubEmbedder final : public SpeechEmbedder {
 public:
  explicit StubEmbedder(uint64_t seed);

  nn::Tensor<float> embed(const audio::Waveform& w,
                          const std::string& id) const override;

  const nn::Tensor<float>& projection() const { return proj_; }
  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  nn::Tensor<float> proj_;  // [40, 96], frozen
};

// Precomputed per-window embeddings loaded from a manifest, so real
// embedder outputs can be plugged in. Manifest JSON:
//   {"dim": 96, "data": "<bin file relative to manifest>",
//    "entries": [{"id": "...", "frames": N, "offset": <bytes>}]}
// The payload is little-endian float32, frames x dim per entry.
class FileEmbedder final : public SpeechEmbedder {
 public:
  explicit FileEmbedder(const std::string& manifest_path);

  nn::Tensor<float> embed(const audio::Waveform& w,
                          const std::string& id) const override;

  static void write(
      const std::string& manifest_path,
      const std::vector<std::pair<std::string, nn::Tensor<float>>>& entries);

 private:
  std::unordered_map<std::string, nn::Tensor<float>> by_id_;
};

}  // namespace kws::model
