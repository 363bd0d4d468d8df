#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kws/audio.hpp"
#include "kws/embedder.hpp"
#include "kws/g2p.hpp"
#include "kws/tensor.hpp"

namespace kws::data {

struct ManifestEntry {
  std::string id;
  std::string audio_path;
  std::string transcript;
};

// JSON-lines, fields `id`, `audio`, `transcript`. Order preserving;
// duplicate ids and missing fields are errors with line numbers.
std::vector<ManifestEntry> load_manifest(const std::string& path);

struct TrialPair {
  ManifestEntry entry;
  std::string keyword;
  int y_utt = 0;
  std::vector<int> y_phon;        // per keyword phoneme position
  double phoneme_distance = 0.0;  // normalized Levenshtein, keyword vs transcript
};

// Each utterance paired with every vocabulary keyword: one positive (its
// own transcript) and |vocab|-1 negatives. Transcripts must be in vocab.
std::vector<TrialPair> build_closed_vocab_trials(
    const std::vector<ManifestEntry>& entries,
    const std::vector<std::string>& vocabulary, const g2p::Lexicon& lex);

// Per anchor: its positive pair plus `negatives_per_anchor` keywords drawn
// (seeded, without replacement) from the other distinct transcripts.
std::vector<TrialPair> build_training_pairs(
    const std::vector<ManifestEntry>& entries, int negatives_per_anchor,
    uint64_t seed, const g2p::Lexicon& lex);

// Zero-padded batch with per-item valid lengths. Padded mel rows are zero;
// padded phoneme slots hold PAD (0) and are excluded from the phoneme loss.
struct Batch {
  nn::Tensor<float> mel;              // [B, T_mel_max, 40]
  std::vector<int> mel_len;           // per item
  std::vector<std::vector<int>> phonemes_padded;  // [B][T_t_max]
  std::vector<int> phon_len;
  std::vector<std::string> ids;
  std::vector<int> y_utt;
  std::vector<std::vector<int>> y_phon;  // real (unpadded) labels
  int batch_size() const { return static_cast<int>(mel_len.size()); }
};

Batch pad_batch(const std::vector<TrialPair>& trials,
                const std::vector<nn::Tensor<float>>& mels,
                const std::vector<g2p::PhonemeSequence>& keyword_phonemes);

// Inverse of pad_batch for item i: the original mel and phoneme sequence.
nn::Tensor<float> unpad_mel(const Batch& batch, int i);
std::vector<int> unpad_phonemes(const Batch& batch, int i);

struct SynthSpec {
  std::vector<std::string> keywords;
  int utterances_per_keyword = 10;
  uint64_t seed = 1;
};

// Renders each keyword as a chain of per-phoneme 120 ms sinusoid-chord
// templates with seeded +-20% amplitude/duration jitter, writes WAVs, a
// JSON-lines manifest, and a spec.json echoing the generator parameters.
// Returns the manifest path.
std::string synth_dataset(const SynthSpec& spec, const std::string& out_dir,
                          const g2p::Lexicon& lex);

// Deterministic 120 ms template for one phoneme (pre-jitter), for tests.
std::vector<float> phoneme_template(int phoneme_id);

// Utterances decoded and featurized once, reused across epochs.
struct LoadedUtterance {
  ManifestEntry entry;
  nn::Tensor<float> mel;
  nn::Tensor<float> pre_emb;
  g2p::PhonemeSequence transcript_phonemes;
};

struct LoadedDataset {
  std::vector<LoadedUtterance> utterances;
  int index_of(const std::string& id) const;
};

// Optional SNR-mixing hook: each utterance is mixed with a seeded random
// pick from `noise` at a seeded SNR drawn uniformly from [snr_min, snr_max]
// before features are computed.
struct NoiseAugment {
  std::vector<ManifestEntry> noise;
  double snr_min = 5.0;
  double snr_max = 15.0;
  uint64_t seed = 1;
};

LoadedDataset load_dataset(const std::vector<ManifestEntry>& entries,
                           const g2p::Lexicon& lex,
                           const model::SpeechEmbedder& embedder,
                           const NoiseAugment* augment = nullptr);

}  // namespace kws::data
