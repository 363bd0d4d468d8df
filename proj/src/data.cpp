#include "kws/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "kws/criterion.hpp"
#include "kws/error.hpp"
#include "kws/rng.hpp"

namespace kws::data {
namespace {

constexpr double kPi = 3.14159265358979323846;

TrialPair make_trial(const ManifestEntry& entry, const std::string& keyword,
                     const g2p::Lexicon& lex) {
  TrialPair t;
  t.entry = entry;
  t.keyword = keyword;
  t.y_utt = criterion::utterance_label(keyword, entry.transcript);
  const auto kw_ph = g2p::convert(keyword, lex);
  const auto sp_ph = g2p::convert(entry.transcript, lex);
  t.y_phon = criterion::phoneme_labels(kw_ph, sp_ph);
  t.phoneme_distance = g2p::normalized_levenshtein(kw_ph, sp_ph);
  return t;
}

}  // namespace

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest: " + path);
  std::vector<ManifestEntry> out;
  std::unordered_set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error("manifest " + path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    for (const char* field : {"id", "audio", "transcript"}) {
      if (!j.contains(field)) {
        throw Error("manifest " + path + " line " + std::to_string(line_no) +
                    ": missing field '" + field + "'");
      }
    }
    ManifestEntry e{j["id"].get<std::string>(), j["audio"].get<std::string>(),
                    j["transcript"].get<std::string>()};
    // Relative audio paths are relative to the manifest itself.
    if (!e.audio_path.empty() && !std::filesystem::path(e.audio_path).is_absolute()) {
      e.audio_path = (std::filesystem::path(path).parent_path() / e.audio_path).string();
    }
    if (!seen.insert(e.id).second) {
      throw Error("manifest " + path + " line " + std::to_string(line_no) +
                  ": duplicate id '" + e.id + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<TrialPair> build_closed_vocab_trials(
    const std::vector<ManifestEntry>& entries,
    const std::vector<std::string>& vocabulary, const g2p::Lexicon& lex) {
  if (vocabulary.empty()) throw Error("closed-vocab trials: empty vocabulary");
  std::set<std::string> vocab_norm;
  for (const auto& k : vocabulary) vocab_norm.insert(g2p::normalize_text(k));
  std::vector<TrialPair> out;
  out.reserve(entries.size() * vocabulary.size());
  for (const auto& e : entries) {
    if (!vocab_norm.count(g2p::normalize_text(e.transcript))) {
      throw Error("closed-vocab trials: transcript '" + e.transcript +
                  "' (id " + e.id + ") is not in the vocabulary");
    }
    for (const auto& k : vocabulary) out.push_back(make_trial(e, k, lex));
  }
  return out;
}

std::vector<TrialPair> build_training_pairs(
    const std::vector<ManifestEntry>& entries, int negatives_per_anchor,
    uint64_t seed, const g2p::Lexicon& lex) {
  if (negatives_per_anchor < 0) throw Error("training pairs: negative count < 0");
  std::set<std::string> distinct;
  for (const auto& e : entries) distinct.insert(g2p::normalize_text(e.transcript));
  if (distinct.size() < 2 && negatives_per_anchor > 0) {
    throw Error("training pairs: need at least 2 distinct transcripts");
  }

  Rng rng(mix_seed(seed, "training_pairs"));
  std::vector<TrialPair> out;
  for (const auto& e : entries) {
    out.push_back(make_trial(e, e.transcript, lex));
    if (negatives_per_anchor == 0) continue;
    std::vector<std::string> pool;
    const std::string own = g2p::normalize_text(e.transcript);
    for (const auto& k : distinct) {
      if (k != own) pool.push_back(k);
    }
    if (static_cast<int>(pool.size()) < negatives_per_anchor) {
      throw Error("training pairs: only " + std::to_string(pool.size()) +
                  " distinct negatives available, need " +
                  std::to_string(negatives_per_anchor));
    }
    rng.shuffle(pool);
    for (int n = 0; n < negatives_per_anchor; ++n) {
      out.push_back(make_trial(e, pool[static_cast<size_t>(n)], lex));
    }
  }
  return out;
}

Batch pad_batch(const std::vector<TrialPair>& trials,
                const std::vector<nn::Tensor<float>>& mels,
                const std::vector<g2p::PhonemeSequence>& keyword_phonemes) {
  if (trials.empty()) throw Error("pad_batch: empty trial list");
  if (mels.size() != trials.size() || keyword_phonemes.size() != trials.size()) {
    throw Error("pad_batch: input length mismatch");
  }
  const int b = static_cast<int>(trials.size());
  int t_mel_max = 0, t_t_max = 0;
  for (int i = 0; i < b; ++i) {
    if (mels[static_cast<size_t>(i)].rank() != 2) throw Error("pad_batch: mel must be 2-D");
    t_mel_max = std::max(t_mel_max, mels[static_cast<size_t>(i)].shape[0]);
    t_t_max = std::max(t_t_max, static_cast<int>(keyword_phonemes[static_cast<size_t>(i)].size()));
  }

  Batch batch;
  batch.mel = nn::Tensor<float>(std::vector<int>{b, t_mel_max, audio::kMelBins});
  for (int i = 0; i < b; ++i) {
    const auto& m = mels[static_cast<size_t>(i)];
    batch.mel_len.push_back(m.shape[0]);
    for (int t = 0; t < m.shape[0]; ++t) {
      for (int c = 0; c < audio::kMelBins; ++c) batch.mel.at(i, t, c) = m.at(t, c);
    }
    const auto& ph = keyword_phonemes[static_cast<size_t>(i)];
    std::vector<int> padded(static_cast<size_t>(t_t_max), g2p::kPadIndex);
    std::copy(ph.ids.begin(), ph.ids.end(), padded.begin());
    batch.phonemes_padded.push_back(std::move(padded));
    batch.phon_len.push_back(static_cast<int>(ph.size()));
    batch.ids.push_back(trials[static_cast<size_t>(i)].entry.id);
    batch.y_utt.push_back(trials[static_cast<size_t>(i)].y_utt);
    batch.y_phon.push_back(trials[static_cast<size_t>(i)].y_phon);
  }
  return batch;
}

nn::Tensor<float> unpad_mel(const Batch& batch, int i) {
  const int len = batch.mel_len[static_cast<size_t>(i)];
  nn::Tensor<float> out(std::vector<int>{len, audio::kMelBins});
  for (int t = 0; t < len; ++t) {
    for (int c = 0; c < audio::kMelBins; ++c) out.at(t, c) = batch.mel.at(i, t, c);
  }
  return out;
}

std::vector<int> unpad_phonemes(const Batch& batch, int i) {
  const auto& padded = batch.phonemes_padded[static_cast<size_t>(i)];
  return {padded.begin(), padded.begin() + batch.phon_len[static_cast<size_t>(i)]};
}

namespace {

// Chord at phoneme-indexed frequencies rendered over an arbitrary duration.
// Duration jitter changes the length only; the frequencies stay fixed so a
// phoneme keeps its spectral identity across jittered utterances.
std::vector<float> render_phoneme(int phoneme_id, int samples, double amp) {
  // fundamentals spread 300-3030 Hz so neighbours land in distinct mel bins
  const double f1 = 300.0 + 70.0 * phoneme_id;
  const double f2 = std::min(2.0 * f1 + 150.0, 7400.0);
  std::vector<float> out(static_cast<size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    const double t = static_cast<double>(i) / audio::kSampleRate;
    double v = 0.55 * std::sin(2.0 * kPi * f1 * t) + 0.35 * std::sin(2.0 * kPi * f2 * t);
    // 5 ms cosine ramps against clicks at segment joins
    const int ramp = 80;
    if (i < ramp) v *= 0.5 * (1.0 - std::cos(kPi * i / ramp));
    if (i >= samples - ramp) {
      v *= 0.5 * (1.0 - std::cos(kPi * (samples - 1 - i) / ramp));
    }
    out[static_cast<size_t>(i)] = static_cast<float>(amp * 0.35 * v);
  }
  return out;
}

}  // namespace

std::vector<float> phoneme_template(int phoneme_id) {
  return render_phoneme(phoneme_id, 1920, 1.0);  // 120 ms reference
}

std::string synth_dataset(const SynthSpec& spec, const std::string& out_dir,
                          const g2p::Lexicon& lex) {
  if (spec.keywords.empty()) throw Error("synth: no keywords");
  if (spec.utterances_per_keyword < 1) throw Error("synth: utterances_per_keyword < 1");
  std::filesystem::create_directories(out_dir);

  const std::string manifest_path = out_dir + "/manifest.jsonl";
  std::ofstream manifest(manifest_path);
  if (!manifest) throw Error("synth: cannot write " + manifest_path);

  for (size_t k = 0; k < spec.keywords.size(); ++k) {
    const auto& keyword = spec.keywords[k];
    bool oov = false;
    const auto phonemes = g2p::convert(keyword, lex, &oov);
    for (int u = 0; u < spec.utterances_per_keyword; ++u) {
      Rng rng(mix_seed(spec.seed, keyword + "#" + std::to_string(u)));
      audio::Waveform w;
      w.samples.assign(640, 0.0f);  // 40 ms lead-in
      for (int ph : phonemes.ids) {
        const double dur_jitter = 1.0 + 0.2 * rng.uniform(-1.0, 1.0);
        const double amp_jitter = 1.0 + 0.2 * rng.uniform(-1.0, 1.0);
        const int samples = static_cast<int>(1920 * dur_jitter);
        const auto seg = render_phoneme(ph, samples, amp_jitter);
        w.samples.insert(w.samples.end(), seg.begin(), seg.end());
      }
      w.samples.insert(w.samples.end(), 640, 0.0f);  // tail pad

      char name[64];
      std::snprintf(name, sizeof(name), "kw%03zu_u%03d", k, u);
      const std::string wav_rel = std::string(name) + ".wav";
      audio::write_wav(out_dir + "/" + wav_rel, w);
      nlohmann::json j = {{"id", name}, {"audio", wav_rel}, {"transcript", keyword}};
      manifest << j.dump() << "\n";
    }
  }
  manifest.close();

  nlohmann::json echo = {{"keywords", spec.keywords},
                         {"utterances_per_keyword", spec.utterances_per_keyword},
                         {"seed", spec.seed}};
  std::ofstream spec_out(out_dir + "/spec.json");
  spec_out << echo.dump(2) << "\n";
  return manifest_path;
}

int LoadedDataset::index_of(const std::string& id) const {
  for (size_t i = 0; i < utterances.size(); ++i) {
    if (utterances[i].entry.id == id) return static_cast<int>(i);
  }
  throw Error("dataset: unknown utterance id " + id);
}

LoadedDataset load_dataset(const std::vector<ManifestEntry>& entries,
                           const g2p::Lexicon& lex,
                           const model::SpeechEmbedder& embedder,
                           const NoiseAugment* augment) {
  if (augment && augment->noise.empty()) {
    throw Error("dataset: noise augmentation enabled with an empty noise list");
  }
  std::vector<audio::Waveform> noise_waves;
  if (augment) {
    noise_waves.reserve(augment->noise.size());
    for (const auto& n : augment->noise) noise_waves.push_back(audio::read_wav(n.audio_path));
  }

  LoadedDataset out;
  out.utterances.reserve(entries.size());
  for (const auto& e : entries) {
    LoadedUtterance u;
    u.entry = e;
    audio::Waveform w = audio::read_wav(e.audio_path);
    if (augment) {
      Rng rng(mix_seed(augment->seed, "noise." + e.id));
      const auto& noise = noise_waves[rng.uniform_int(static_cast<uint32_t>(noise_waves.size()))];
      const double snr = rng.uniform(augment->snr_min, augment->snr_max);
      w = audio::mix_noise(w, noise, snr);
    }
    u.mel = audio::compute_log_mel(w);
    u.pre_emb = embedder.embed(w, e.id);
    u.transcript_phonemes = g2p::convert(e.transcript, lex);
    out.utterances.push_back(std::move(u));
  }
  return out;
}

}  // namespace kws::data
