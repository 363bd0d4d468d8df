#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kws/ops.hpp"
#include "kws/optimizer.hpp"
#include "kws/tape.hpp"

namespace kws::model {

struct ModelConfig {
  int embed_dim = 128;
  int mel_dim = 40;
  int phoneme_vocab = 40;  // 39 phonemes + PAD
  bool pretrained_stream_enabled = true;
  bool trainable_stream_enabled = true;
  bool self_attention_enabled = true;  // false: cross-attention ablation
  bool phoneme_loss_enabled = true;
  bool phoneme_head_enabled = true;
  uint64_t seed = 1;
};

// Length of the 20 ms embedding grid for a given mel frame count.
inline int audio_frames(int mel_frames) { return (mel_frames + 1) / 2; }

// Two-stream audio encoder, phoneme text encoder, attention pattern
// extractor, GRU pattern discriminator. One instance owns its parameters;
// forward() builds per-item subgraphs on a tape, pooling batch-norm
// statistics across the batch items' valid frames.
template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  struct ItemInput {
    nn::Tensor<T> mel;      // [T_mel, 40]
    nn::Tensor<T> pre_emb;  // [T_pre, 96] frozen embedder output
    std::vector<int> phonemes;
  };

  struct ItemNodes {
    int p_utt = -1;   // [1,1]
    int p_phon = -1;  // [T_t,1], -1 when the phoneme head is disabled
    int e_a = -1;     // [T_a,128]
    int e_t = -1;     // [T_t,128]
    int e_j = -1;     // joint embedding after attention
    int t_a = 0;
  };

  std::vector<ItemNodes> forward(nn::Tape<T>& tape,
                                 const std::vector<ItemInput>& items,
                                 bool train);

  // Parameter nodes injected by the most recent forward(); the gradient of
  // each parameter lives at its node after backward().
  const std::vector<std::pair<nn::Parameter<T>*, int>>& injected() const {
    return injected_;
  }

  std::vector<nn::Parameter<T>*> parameters();
  std::vector<const nn::Parameter<T>*> parameters() const;
  int64_t count_parameters() const;  // trainable elements only

  struct StateEntry {
    std::string name;
    nn::Tensor<T>* tensor;
    bool trainable;
  };

  // Parameters plus batch-norm running statistics, for checkpointing.
  std::vector<StateEntry> state_entries();

  const ModelConfig& config() const { return cfg_; }

 private:
  int inject(nn::Tape<T>& tape, nn::Parameter<T>& p, bool train);

  ModelConfig cfg_;
  std::vector<std::pair<nn::Parameter<T>*, int>> injected_;

  nn::Parameter<T> text_embed_, text_fc_w_, text_fc_b_;
  nn::Parameter<T> conv1_k_, conv1_b_, bn1_gamma_, bn1_beta_;
  nn::Parameter<T> conv2_k_, conv2_b_, bn2_gamma_, bn2_beta_;
  nn::Parameter<T> tconv_k_, tconv_b_, pre_fc_w_, pre_fc_b_;
  nn::Parameter<T> gru_wx_, gru_uzr_, gru_uh_, gru_b_;
  nn::Parameter<T> utt_w_, utt_b_;
  nn::Parameter<T> phon_w_, phon_b_;

  nn::BatchNormState<T> bn1_state_, bn2_state_;
};

}  // namespace kws::model
