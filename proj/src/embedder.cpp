#include "kws/embedder.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "kws/error.hpp"
#include "kws/rng.hpp"

namespace kws::model {
namespace {

// Reflect-pad at the tail (no edge repeat) until `target` samples.
audio::Waveform reflect_pad(const audio::Waveform& w, size_t target) {
  if (w.samples.size() >= target) return w;
  if (w.samples.size() < 2) throw Error("embedder: waveform too short to pad");
  audio::Waveform out = w;
  out.samples.reserve(target);
  const size_t n = w.samples.size();
  size_t period = 2 * (n - 1);
  for (size_t i = n; out.samples.size() < target; ++i) {
    size_t m = i % period;
    if (m >= n) m = period - m;
    out.samples.push_back(w.samples[m]);
  }
  return out;
}

}  // namespace

int pretrained_frame_count(int64_t num_samples) {
  if (num_samples < SpeechEmbedder::kWindowSamples) return 1;
  return static_cast<int>((num_samples - SpeechEmbedder::kWindowSamples) /
                          SpeechEmbedder::kHopSamples) +
         1;
}

StubEmbedder::StubEmbedder(uint64_t seed)
    : seed_(seed), proj_(std::vector<int>{audio::kMelBins, kOutDim}) {
  Rng rng(mix_seed(seed, "stub_embedder"));
  const float scale = 1.0f / std::sqrt(static_cast<float>(audio::kMelBins));
  for (auto& v : proj_.data) v = static_cast<float>(rng.normal()) * scale;
}

nn::Tensor<float> StubEmbedder::embed(const audio::Waveform& w,
                                      const std::string&) const {
  const audio::Waveform padded = reflect_pad(w, kWindowSamples);
  const int frames = pretrained_frame_count(static_cast<int64_t>(padded.samples.size()));
  const nn::Tensor<float> mel = audio::compute_log_mel(padded);

  // A 775 ms window covers exactly 76 mel frames starting at frame 8*t
  // (hop ratio 1280/160 == 8).
  constexpr int kFramesPerWindow =
      (SpeechEmbedder::kWindowSamples - audio::kWindowSamples) / audio::kHopSamples + 1;

  nn::Tensor<float> out(std::vector<int>{frames, kOutDim});
  std::vector<float> mean(audio::kMelBins);
  for (int t = 0; t < frames; ++t) {
    const int f0 = t * (kHopSamples / audio::kHopSamples);
    std::fill(mean.begin(), mean.end(), 0.0f);
    for (int f = f0; f < f0 + kFramesPerWindow; ++f) {
      for (int m = 0; m < audio::kMelBins; ++m) mean[m] += mel.at(f, m);
    }
    for (auto& v : mean) v /= static_cast<float>(kFramesPerWindow);
    for (int o = 0; o < kOutDim; ++o) {
      float acc = 0.0f;
      for (int m = 0; m < audio::kMelBins; ++m) acc += mean[m] * proj_.at(m, o);
      out.at(t, o) = std::tanh(acc);
    }
  }
  return out;
}

FileEmbedder::FileEmbedder(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error("cannot open embedding manifest: " + manifest_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("embedding manifest " + manifest_path + ": " + e.what());
  }
  const int dim = j.value("dim", 0);
  if (dim != kOutDim) {
    throw Error("embedding manifest: expected dim 96, got " + std::to_string(dim));
  }
  const std::string data_rel = j.value("data", "");
  const auto data_path = std::filesystem::path(manifest_path).parent_path() / data_rel;
  std::ifstream bin(data_path, std::ios::binary);
  if (!bin) throw Error("cannot open embedding payload: " + data_path.string());

  for (const auto& e : j.at("entries")) {
    const std::string id = e.at("id").get<std::string>();
    const int frames = e.at("frames").get<int>();
    const int64_t offset = e.at("offset").get<int64_t>();
    if (frames < 1) throw Error("embedding manifest: bad frame count for " + id);
    nn::Tensor<float> emb(std::vector<int>{frames, kOutDim});
    bin.seekg(offset);
    bin.read(reinterpret_cast<char*>(emb.data.data()),
             static_cast<std::streamsize>(emb.data.size() * sizeof(float)));
    if (!bin) throw Error("embedding payload truncated for id: " + id);
    if (!by_id_.emplace(id, std::move(emb)).second) {
      throw Error("embedding manifest: duplicate id " + id);
    }
  }
}

nn::Tensor<float> FileEmbedder::embed(const audio::Waveform&,
                                      const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw Error("no precomputed embedding for id: " + id);
  return it->second;
}

void FileEmbedder::write(
    const std::string& manifest_path,
    const std::vector<std::pair<std::string, nn::Tensor<float>>>& entries) {
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  const std::string bin_name =
      std::filesystem::path(manifest_path).stem().string() + ".bin";
  std::ofstream bin(dir / bin_name, std::ios::binary);
  if (!bin) throw Error("cannot write embedding payload");

  nlohmann::json j;
  j["dim"] = kOutDim;
  j["data"] = bin_name;
  j["entries"] = nlohmann::json::array();
  int64_t offset = 0;
  for (const auto& [id, emb] : entries) {
    if (emb.rank() != 2 || emb.shape[1] != kOutDim) {
      throw Error("embedding for " + id + " must be [frames, 96]");
    }
    bin.write(reinterpret_cast<const char*>(emb.data.data()),
              static_cast<std::streamsize>(emb.data.size() * sizeof(float)));
    j["entries"].push_back(
        {{"id", id}, {"frames", emb.shape[0]}, {"offset", offset}});
    offset += static_cast<int64_t>(emb.data.size() * sizeof(float));
  }
  std::ofstream out(manifest_path);
  if (!out) throw Error("cannot write embedding manifest: " + manifest_path);
  out << j.dump(2) << "\n";
}

}  // namespace kws::model
