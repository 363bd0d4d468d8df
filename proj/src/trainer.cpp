#include "kws/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "kws/checkpoint.hpp"
#include "kws/criterion.hpp"
#include "kws/error.hpp"
#include "kws/metrics.hpp"
#include "kws/rng.hpp"

namespace kws::trainer {
namespace {

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("config: key '" + key + "' expects true/false, got '" + v + "'");
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void validate(const TrainConfig& cfg) {
  if (cfg.lr <= 0) throw Error("config: lr must be > 0");
  if (cfg.batch_size < 2) throw Error("config: batch_size must be >= 2");
  if (cfg.epochs < 0) throw Error("config: epochs must be >= 0");
  if (cfg.eval_every < 1) throw Error("config: eval_every must be >= 1");
  if (cfg.val_fraction < 0.0 || cfg.val_fraction > 0.9) {
    throw Error("config: val_fraction must be in [0, 0.9]");
  }
  if (cfg.negatives_per_anchor < 0) throw Error("config: negatives_per_anchor must be >= 0");
  if (cfg.noise_snr_min > cfg.noise_snr_max) {
    throw Error("config: noise_snr_min must be <= noise_snr_max");
  }
  if (cfg.phoneme_label_rule != "index") {
    throw Error("config: phoneme_label_rule '" + cfg.phoneme_label_rule +
                "' is not implemented; only 'index'");
  }
  if (cfg.phoneme_loss && !cfg.phoneme_head) {
    throw Error("config: phoneme_loss needs phoneme_head enabled");
  }
}

class KeywordPhonemes {
 public:
  explicit KeywordPhonemes(const g2p::Lexicon& lex) : lex_(lex) {}
  const g2p::PhonemeSequence& get(const std::string& keyword) {
    auto it = cache_.find(keyword);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(keyword, g2p::convert(keyword, lex_)).first->second;
  }

 private:
  const g2p::Lexicon& lex_;
  std::unordered_map<std::string, g2p::PhonemeSequence> cache_;
};

std::unordered_map<std::string, int> build_index(const data::LoadedDataset& dataset) {
  std::unordered_map<std::string, int> idx;
  for (size_t i = 0; i < dataset.utterances.size(); ++i) {
    idx.emplace(dataset.utterances[i].entry.id, static_cast<int>(i));
  }
  return idx;
}

// Batch trials through pad_batch/unpad so the padding contract stays on the
// training path.
std::vector<model::Model<float>::ItemInput> batch_inputs(
    const data::LoadedDataset& dataset,
    const std::unordered_map<std::string, int>& utt_index,
    const std::vector<data::TrialPair>& chunk, KeywordPhonemes& kw_cache) {
  std::vector<nn::Tensor<float>> mels;
  std::vector<g2p::PhonemeSequence> phonemes;
  mels.reserve(chunk.size());
  phonemes.reserve(chunk.size());
  for (const auto& t : chunk) {
    mels.push_back(dataset.utterances[static_cast<size_t>(utt_index.at(t.entry.id))].mel);
    phonemes.push_back(kw_cache.get(t.keyword));
  }
  const data::Batch batch = data::pad_batch(chunk, mels, phonemes);

  std::vector<model::Model<float>::ItemInput> items(chunk.size());
  for (size_t i = 0; i < chunk.size(); ++i) {
    items[i].mel = data::unpad_mel(batch, static_cast<int>(i));
    items[i].phonemes = data::unpad_phonemes(batch, static_cast<int>(i));
    items[i].pre_emb =
        dataset.utterances[static_cast<size_t>(utt_index.at(batch.ids[i]))].pre_emb;
  }
  return items;
}

std::vector<double> scores_for(model::Model<float>& m,
                               const data::LoadedDataset& dataset,
                               const std::unordered_map<std::string, int>& utt_index,
                               const std::vector<data::TrialPair>& trials,
                               KeywordPhonemes& kw_cache, int batch_size) {
  std::vector<double> scores;
  scores.reserve(trials.size());
  for (size_t at = 0; at < trials.size(); at += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(trials.size(), at + static_cast<size_t>(batch_size));
    const std::vector<data::TrialPair> chunk(trials.begin() + static_cast<long>(at),
                                             trials.begin() + static_cast<long>(end));
    const auto items = batch_inputs(dataset, utt_index, chunk, kw_cache);
    nn::Tape<float> tape;
    const auto nodes = m.forward(tape, items, /*train=*/false);
    for (const auto& n : nodes) {
      scores.push_back(static_cast<double>(tape.val(n.p_utt).data[0]));
    }
  }
  return scores;
}

}  // namespace

model::ModelConfig TrainConfig::model_config(int mel_dim) const {
  model::ModelConfig mc;
  mc.mel_dim = mel_dim;
  mc.pretrained_stream_enabled = pretrained_stream;
  mc.trainable_stream_enabled = trainable_stream;
  mc.self_attention_enabled = self_attention;
  mc.phoneme_loss_enabled = phoneme_loss;
  mc.phoneme_head_enabled = phoneme_head;
  mc.seed = seed;
  return mc;
}

TrainConfig parse_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path);
  TrainConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("config " + path + " line " + std::to_string(line_no) +
                  ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "lr") cfg.lr = std::stod(value);
      else if (key == "epochs") cfg.epochs = std::stoi(value);
      else if (key == "batch_size") cfg.batch_size = std::stoi(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "eval_every") cfg.eval_every = std::stoi(value);
      else if (key == "val_fraction") cfg.val_fraction = std::stod(value);
      else if (key == "negatives_per_anchor") cfg.negatives_per_anchor = std::stoi(value);
      else if (key == "early_stop_train_loss") cfg.early_stop_train_loss = std::stod(value);
      else if (key == "noise_manifest") cfg.noise_manifest = value;
      else if (key == "noise_snr_min") cfg.noise_snr_min = std::stod(value);
      else if (key == "noise_snr_max") cfg.noise_snr_max = std::stod(value);
      else if (key == "pretrained_stream") cfg.pretrained_stream = parse_bool(value, key);
      else if (key == "trainable_stream") cfg.trainable_stream = parse_bool(value, key);
      else if (key == "self_attention") cfg.self_attention = parse_bool(value, key);
      else if (key == "phoneme_loss") cfg.phoneme_loss = parse_bool(value, key);
      else if (key == "phoneme_head") cfg.phoneme_head = parse_bool(value, key);
      else if (key == "phoneme_label_rule") cfg.phoneme_label_rule = value;
      else {
        throw Error("config " + path + " line " + std::to_string(line_no) +
                    ": unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw Error("config " + path + " line " + std::to_string(line_no) +
                  ": bad value for '" + key + "'");
    } catch (const std::out_of_range&) {
      throw Error("config " + path + " line " + std::to_string(line_no) +
                  ": value out of range for '" + key + "'");
    }
  }
  validate(cfg);
  return cfg;
}

std::string config_to_string(const TrainConfig& cfg) {
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof(buf),
                "lr=%g\nepochs=%d\nbatch_size=%d\nseed=%llu\neval_every=%d\n"
                "val_fraction=%g\nnegatives_per_anchor=%d\nearly_stop_train_loss=%g\n",
                cfg.lr, cfg.epochs, cfg.batch_size,
                static_cast<unsigned long long>(cfg.seed), cfg.eval_every,
                cfg.val_fraction, cfg.negatives_per_anchor, cfg.early_stop_train_loss);
  out += buf;
  std::snprintf(buf, sizeof(buf),
                "noise_manifest=%s\nnoise_snr_min=%g\nnoise_snr_max=%g\n"
                "pretrained_stream=%s\ntrainable_stream=%s\nself_attention=%s\n"
                "phoneme_loss=%s\nphoneme_head=%s\nphoneme_label_rule=%s\n",
                cfg.noise_manifest.c_str(), cfg.noise_snr_min, cfg.noise_snr_max,
                cfg.pretrained_stream ? "true" : "false",
                cfg.trainable_stream ? "true" : "false",
                cfg.self_attention ? "true" : "false",
                cfg.phoneme_loss ? "true" : "false",
                cfg.phoneme_head ? "true" : "false", cfg.phoneme_label_rule.c_str());
  out += buf;
  return out;
}

nlohmann::json report_to_json(const TrainReport& report) {
  nlohmann::json j;
  j["initial_checkpoint"] = report.initial_checkpoint;
  j["best_checkpoint"] = report.best_checkpoint;
  j["best_epoch"] = report.best_epoch;
  j["best_val_eer"] = report.best_val_eer;
  j["stopped_early"] = report.stopped_early;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : report.epochs) {
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"total", e.total},
                           {"utt", e.utt},
                           {"phon", e.phon},
                           {"val_eer", e.val_eer},
                           {"val_auc", e.val_auc},
                           {"checkpoint", e.checkpoint}});
  }
  return j;
}

std::vector<double> score_trials(model::Model<float>& m,
                                 const data::LoadedDataset& dataset,
                                 const std::vector<data::TrialPair>& trials,
                                 const g2p::Lexicon& lex, int batch_size) {
  if (batch_size < 1) throw Error("score_trials: batch_size must be >= 1");
  const auto utt_index = build_index(dataset);
  KeywordPhonemes kw_cache(lex);
  return scores_for(m, dataset, utt_index, trials, kw_cache, batch_size);
}

TrainReport train(model::Model<float>& m, const data::LoadedDataset& dataset,
                  const std::vector<data::TrialPair>& trials,
                  const g2p::Lexicon& lex, const TrainConfig& cfg,
                  const std::string& out_dir) {
  validate(cfg);
  if (trials.empty()) throw Error("train: no trials");
  std::filesystem::create_directories(out_dir);
  const auto utt_index = build_index(dataset);
  KeywordPhonemes kw_cache(lex);

  // Seeded validation split over trials.
  std::vector<size_t> order(trials.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(mix_seed(cfg.seed, "val_split"));
  split_rng.shuffle(order);
  const size_t n_val =
      static_cast<size_t>(cfg.val_fraction * static_cast<double>(trials.size()));
  std::vector<data::TrialPair> val_trials, train_trials;
  for (size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? val_trials : train_trials).push_back(trials[order[i]]);
  }
  if (train_trials.empty()) throw Error("train: validation split left no training trials");

  nn::Adam<float> adam(static_cast<float>(cfg.lr));
  TrainReport report;

  char name[512];
  std::snprintf(name, sizeof(name), "%s/ckpt_epoch%04d.kws", out_dir.c_str(), 0);
  checkpoint::save(name, m, &adam);
  report.initial_checkpoint = name;
  report.best_checkpoint = name;

  const auto run_eval = [&](int epoch, EpochStats& stats) {
    if (!val_trials.empty()) {
      const auto scores =
          scores_for(m, dataset, utt_index, val_trials, kw_cache, cfg.batch_size);
      std::vector<metrics::ScoredTrial> scored(val_trials.size());
      for (size_t i = 0; i < val_trials.size(); ++i) scored[i] = {val_trials[i], scores[i]};
      try {
        stats.val_eer = metrics::compute_eer(scored);
        stats.val_auc = metrics::compute_auc(scored);
      } catch (const Error&) {
        // single-class validation split; leave metrics unset
      }
    }
    std::snprintf(name, sizeof(name), "%s/ckpt_epoch%04d.kws", out_dir.c_str(), epoch);
    checkpoint::save(name, m, &adam);
    stats.checkpoint = name;
    if (stats.val_eer >= 0.0 &&
        (report.best_val_eer < 0.0 || stats.val_eer < report.best_val_eer)) {
      report.best_val_eer = stats.val_eer;
      report.best_epoch = epoch;
      report.best_checkpoint = name;
    }
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<size_t> idx(train_trials.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng shuffle_rng(mix_seed(cfg.seed, "shuffle.epoch" + std::to_string(epoch)));
    shuffle_rng.shuffle(idx);

    double sum_total = 0.0, sum_utt = 0.0, sum_phon = 0.0;
    size_t seen = 0;
    int batch_id = 0;
    for (size_t at = 0; at < idx.size();
         at += static_cast<size_t>(cfg.batch_size), ++batch_id) {
      const size_t end = std::min(idx.size(), at + static_cast<size_t>(cfg.batch_size));
      std::vector<data::TrialPair> chunk;
      chunk.reserve(end - at);
      for (size_t i = at; i < end; ++i) chunk.push_back(train_trials[idx[i]]);

      try {
        const auto items = batch_inputs(dataset, utt_index, chunk, kw_cache);
        std::vector<int> y_utt(chunk.size());
        std::vector<std::vector<int>> y_phon(chunk.size());
        for (size_t i = 0; i < chunk.size(); ++i) {
          y_utt[i] = chunk[i].y_utt;
          y_phon[i] = chunk[i].y_phon;
        }

        nn::Tape<float> tape;
        const auto nodes = m.forward(tape, items, /*train=*/true);
        std::vector<int> p_utt_ids(nodes.size()), p_phon_ids(nodes.size());
        for (size_t i = 0; i < nodes.size(); ++i) {
          p_utt_ids[i] = nodes[i].p_utt;
          p_phon_ids[i] = nodes[i].p_phon;
        }
        const auto loss = criterion::total_loss(tape, p_utt_ids, y_utt, p_phon_ids,
                                                y_phon, m.config().phoneme_loss_enabled);

        // The loss decomposition must be exactly additive on every batch.
        {
          const float total = tape.val(loss.total).data[0];
          const float utt = tape.val(loss.utt).data[0];
          const float phon = loss.phon >= 0 ? tape.val(loss.phon).data[0] : 0.0f;
          if (total != utt + phon) {
            throw Error("train: loss decomposition is not additive");
          }
        }

        tape.backward(loss.total);

        std::vector<nn::Parameter<float>*> params;
        std::vector<const nn::Tensor<float>*> grads;
        for (const auto& [param, node] : m.injected()) {
          params.push_back(param);
          grads.push_back(&tape.grad(node));
        }
        adam.step(params, grads);

        const auto bd = criterion::breakdown(tape, loss);
        const double w = static_cast<double>(chunk.size());
        sum_total += bd.total * w;
        sum_utt += bd.utt * w;
        sum_phon += bd.phon * w;
        seen += chunk.size();
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " [epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_id) + "]");
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.total = sum_total / static_cast<double>(seen);
    stats.utt = sum_utt / static_cast<double>(seen);
    stats.phon = sum_phon / static_cast<double>(seen);

    const bool stopping =
        cfg.early_stop_train_loss > 0.0 && stats.total < cfg.early_stop_train_loss;
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs || stopping) {
      run_eval(epoch, stats);
    }
    report.epochs.push_back(stats);
    if (stopping) {
      report.stopped_early = true;
      break;
    }
  }
  return report;
}

}  // namespace kws::trainer
