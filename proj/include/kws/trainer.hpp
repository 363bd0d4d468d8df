#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "kws/data.hpp"
#include "kws/model.hpp"

namespace kws::trainer {

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 100;
  int batch_size = 32;
  uint64_t seed = 1;
  int eval_every = 5;
  double val_fraction = 0.1;
  int negatives_per_anchor = 2;
  // stop once an epoch's mean train loss drops below this (0 disables)
  double early_stop_train_loss = 0.0;
  std::string noise_manifest;  // empty: augmentation off
  double noise_snr_min = 5.0;
  double noise_snr_max = 15.0;
  bool pretrained_stream = true;
  bool trainable_stream = true;
  bool self_attention = true;
  bool phoneme_loss = true;
  bool phoneme_head = true;
  std::string phoneme_label_rule = "index";

  model::ModelConfig model_config(int mel_dim = 40) const;
};

// Flat key=value file, `#` comments; every TrainConfig field has a key and
// unknown keys are errors.
TrainConfig parse_train_config(const std::string& path);
std::string config_to_string(const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double total = 0.0;
  double utt = 0.0;
  double phon = 0.0;
  double val_eer = -1.0;  // -1: not evaluated this epoch
  double val_auc = -1.0;
  std::string checkpoint;  // non-empty when one was written
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::string initial_checkpoint;
  std::string best_checkpoint;
  int best_epoch = 0;
  double best_val_eer = -1.0;
  bool stopped_early = false;
};

nlohmann::json report_to_json(const TrainReport& report);

// Deterministic given cfg.seed (single-threaded). Writes an initial
// checkpoint, one per evaluation, and selects the best by validation EER
// (ties go to the earlier epoch). NaN loss aborts with the offending
// batch id (kws::NumericError).
TrainReport train(model::Model<float>& m, const data::LoadedDataset& dataset,
                  const std::vector<data::TrialPair>& trials,
                  const g2p::Lexicon& lex, const TrainConfig& cfg,
                  const std::string& out_dir);

// Inference-mode P_utt for each trial, batched.
std::vector<double> score_trials(model::Model<float>& m,
                                 const data::LoadedDataset& dataset,
                                 const std::vector<data::TrialPair>& trials,
                                 const g2p::Lexicon& lex, int batch_size = 32);

}  // namespace kws::trainer
