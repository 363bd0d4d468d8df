#include "kws/model.hpp"

#include <cmath>
#include <unordered_map>

#include "kws/embedder.hpp"
#include "kws/g2p.hpp"
#include "kws/rng.hpp"

namespace kws::model {

using nn::Tape;
using nn::Tensor;

namespace {

// Each parameter draws from its own named stream so ablations that drop a
// stream leave every remaining parameter bit-identical.
template <typename T>
nn::Parameter<T> glorot(uint64_t seed, const std::string& name,
                        std::vector<int> shape, int fan_in, int fan_out) {
  Rng rng(mix_seed(seed, name));
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  nn::Parameter<T> p{name, Tensor<T>(std::move(shape)), true};
  for (auto& v : p.value.data) v = static_cast<T>(rng.uniform(-limit, limit));
  return p;
}

template <typename T>
nn::Parameter<T> zeros_param(const std::string& name, std::vector<int> shape) {
  return nn::Parameter<T>{name, Tensor<T>(std::move(shape)), true};
}

template <typename T>
nn::Parameter<T> const_param(const std::string& name, std::vector<int> shape, T fill) {
  return nn::Parameter<T>{name, Tensor<T>(std::move(shape), fill), true};
}

// Orthogonalize a seeded normal matrix with modified Gram-Schmidt.
template <typename T>
Tensor<T> orthogonal(uint64_t seed, const std::string& name, int n) {
  Rng rng(mix_seed(seed, name));
  std::vector<std::vector<double>> rows(n, std::vector<double>(n));
  for (auto& r : rows) {
    for (auto& v : r) v = rng.normal();
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      double d = 0;
      for (int k = 0; k < n; ++k) d += rows[i][k] * rows[j][k];
      for (int k = 0; k < n; ++k) rows[i][k] -= d * rows[j][k];
    }
    double norm = 0;
    for (int k = 0; k < n; ++k) norm += rows[i][k] * rows[i][k];
    norm = std::sqrt(norm);
    for (int k = 0; k < n; ++k) rows[i][k] /= norm;
  }
  Tensor<T> out(std::vector<int>{n, n});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out.at(i, j) = static_cast<T>(rows[i][j]);
  }
  return out;
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& cfg)
    : cfg_(cfg),
      bn1_state_(cfg.embed_dim),
      bn2_state_(cfg.embed_dim) {
  if (!cfg.pretrained_stream_enabled && !cfg.trainable_stream_enabled) {
    throw Error("model: both audio streams disabled");
  }
  const int e = cfg.embed_dim;
  const int mel = cfg.mel_dim;
  const int v = cfg.phoneme_vocab;
  const uint64_t s = cfg.seed;
  constexpr int kPre = SpeechEmbedder::kOutDim;

  text_embed_ = glorot<T>(s, "text.embed", {v, e}, v, e);
  text_fc_w_ = glorot<T>(s, "text.fc.w", {e, e}, e, e);
  text_fc_b_ = zeros_param<T>("text.fc.b", {e});

  conv1_k_ = glorot<T>(s, "enc.conv1.k", {3, mel, e}, 3 * mel, 3 * e);
  conv1_b_ = zeros_param<T>("enc.conv1.b", {e});
  bn1_gamma_ = const_param<T>("enc.bn1.gamma", {e}, T(1));
  bn1_beta_ = zeros_param<T>("enc.bn1.beta", {e});
  conv2_k_ = glorot<T>(s, "enc.conv2.k", {3, e, e}, 3 * e, 3 * e);
  conv2_b_ = zeros_param<T>("enc.conv2.b", {e});
  bn2_gamma_ = const_param<T>("enc.bn2.gamma", {e}, T(1));
  bn2_beta_ = zeros_param<T>("enc.bn2.beta", {e});

  tconv_k_ = glorot<T>(s, "pre.tconv.k", {5, kPre, kPre}, 5 * kPre, 5 * kPre);
  tconv_b_ = zeros_param<T>("pre.tconv.b", {kPre});
  pre_fc_w_ = glorot<T>(s, "pre.fc.w", {e, kPre}, kPre, e);
  pre_fc_b_ = zeros_param<T>("pre.fc.b", {e});

  gru_wx_ = glorot<T>(s, "gru.wx", {3 * e, e}, e, e);
  gru_b_ = zeros_param<T>("gru.b", {3 * e});
  {
    Tensor<T> uz = orthogonal<T>(s, "gru.uz", e);
    Tensor<T> ur = orthogonal<T>(s, "gru.ur", e);
    Tensor<T> stacked(std::vector<int>{2 * e, e});
    std::copy(uz.data.begin(), uz.data.end(), stacked.data.begin());
    std::copy(ur.data.begin(), ur.data.end(), stacked.data.begin() + uz.data.size());
    gru_uzr_ = nn::Parameter<T>{"gru.uzr", std::move(stacked), true};
    gru_uh_ = nn::Parameter<T>{"gru.uh", orthogonal<T>(s, "gru.uh", e), true};
  }

  utt_w_ = glorot<T>(s, "head.utt.w", {1, e}, e, 1);
  utt_b_ = zeros_param<T>("head.utt.b", {1});
  if (cfg.phoneme_head_enabled) {
    phon_w_ = glorot<T>(s, "head.phon.w", {1, e}, e, 1);
    phon_b_ = zeros_param<T>("head.phon.b", {1});
  }
}

template <typename T>
std::vector<nn::Parameter<T>*> Model<T>::parameters() {
  std::vector<nn::Parameter<T>*> out;
  out.push_back(&text_embed_);
  out.push_back(&text_fc_w_);
  out.push_back(&text_fc_b_);
  if (cfg_.trainable_stream_enabled) {
    out.push_back(&conv1_k_);
    out.push_back(&conv1_b_);
    out.push_back(&bn1_gamma_);
    out.push_back(&bn1_beta_);
    out.push_back(&conv2_k_);
    out.push_back(&conv2_b_);
    out.push_back(&bn2_gamma_);
    out.push_back(&bn2_beta_);
  }
  if (cfg_.pretrained_stream_enabled) {
    out.push_back(&tconv_k_);
    out.push_back(&tconv_b_);
    out.push_back(&pre_fc_w_);
    out.push_back(&pre_fc_b_);
  }
  out.push_back(&gru_wx_);
  out.push_back(&gru_uzr_);
  out.push_back(&gru_uh_);
  out.push_back(&gru_b_);
  out.push_back(&utt_w_);
  out.push_back(&utt_b_);
  if (cfg_.phoneme_head_enabled) {
    out.push_back(&phon_w_);
    out.push_back(&phon_b_);
  }
  return out;
}

template <typename T>
std::vector<const nn::Parameter<T>*> Model<T>::parameters() const {
  auto mutable_params = const_cast<Model<T>*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

template <typename T>
int64_t Model<T>::count_parameters() const {
  int64_t n = 0;
  for (const auto* p : parameters()) {
    if (p->trainable) n += p->value.numel();
  }
  return n;
}

template <typename T>
std::vector<typename Model<T>::StateEntry> Model<T>::state_entries() {
  std::vector<StateEntry> out;
  for (auto* p : parameters()) out.push_back({p->name, &p->value, p->trainable});
  if (cfg_.trainable_stream_enabled) {
    out.push_back({"enc.bn1.running_mean", &bn1_state_.running_mean, false});
    out.push_back({"enc.bn1.running_var", &bn1_state_.running_var, false});
    out.push_back({"enc.bn2.running_mean", &bn2_state_.running_mean, false});
    out.push_back({"enc.bn2.running_var", &bn2_state_.running_var, false});
  }
  return out;
}

template <typename T>
int Model<T>::inject(Tape<T>& tape, nn::Parameter<T>& p, bool train) {
  const int id = tape.input(p.value, train && p.trainable);
  injected_.emplace_back(&p, id);
  return id;
}

template <typename T>
std::vector<typename Model<T>::ItemNodes> Model<T>::forward(
    Tape<T>& tape, const std::vector<ItemInput>& items, bool train) {
  if (items.empty()) throw Error("model: empty batch");
  injected_.clear();
  const int e = cfg_.embed_dim;
  const size_t batch = items.size();

  for (const auto& item : items) {
    if (item.mel.rank() != 2 || item.mel.shape[1] != cfg_.mel_dim) {
      throw Error("model: mel input must be [T_mel, " +
                  std::to_string(cfg_.mel_dim) + "], got " + item.mel.shape_str());
    }
    if (item.mel.shape[0] < 2) throw Error("model: need at least 2 mel frames");
    if (item.phonemes.empty()) throw Error("model: empty phoneme sequence");
    for (int id : item.phonemes) {
      if (id == g2p::kPadIndex) throw Error("model: PAD phoneme in sequence");
      if (id < 0 || id >= cfg_.phoneme_vocab) throw Error("model: phoneme id out of range");
    }
    if (cfg_.pretrained_stream_enabled &&
        (item.pre_emb.rank() != 2 || item.pre_emb.shape[1] != SpeechEmbedder::kOutDim ||
         item.pre_emb.shape[0] < 1)) {
      throw Error("model: pre_emb must be [T_pre, 96], got " + item.pre_emb.shape_str());
    }
  }

  // Shared parameter nodes.
  const int w_te = inject(tape, text_embed_, train);
  const int w_tw = inject(tape, text_fc_w_, train);
  const int w_tb = inject(tape, text_fc_b_, train);
  int k1 = -1, b1 = -1, g1 = -1, be1 = -1, k2 = -1, b2 = -1, g2 = -1, be2 = -1;
  if (cfg_.trainable_stream_enabled) {
    k1 = inject(tape, conv1_k_, train);
    b1 = inject(tape, conv1_b_, train);
    g1 = inject(tape, bn1_gamma_, train);
    be1 = inject(tape, bn1_beta_, train);
    k2 = inject(tape, conv2_k_, train);
    b2 = inject(tape, conv2_b_, train);
    g2 = inject(tape, bn2_gamma_, train);
    be2 = inject(tape, bn2_beta_, train);
  }
  int kt = -1, bt = -1, w_pw = -1, w_pb = -1;
  if (cfg_.pretrained_stream_enabled) {
    kt = inject(tape, tconv_k_, train);
    bt = inject(tape, tconv_b_, train);
    w_pw = inject(tape, pre_fc_w_, train);
    w_pb = inject(tape, pre_fc_b_, train);
  }
  nn::GruWeights<T> gw{inject(tape, gru_wx_, train), inject(tape, gru_uzr_, train),
                       inject(tape, gru_uh_, train), inject(tape, gru_b_, train)};
  const int w_uw = inject(tape, utt_w_, train);
  const int w_ub = inject(tape, utt_b_, train);
  int w_pw2 = -1, w_pb2 = -1;
  if (cfg_.phoneme_head_enabled) {
    w_pw2 = inject(tape, phon_w_, train);
    w_pb2 = inject(tape, phon_b_, train);
  }

  std::vector<int> t_a(batch);
  for (size_t i = 0; i < batch; ++i) t_a[i] = audio_frames(items[i].mel.shape[0]);

  // Trainable stream. Batch statistics pool over every item's frames, so
  // batch norm sees only real (unpadded) rows.
  std::vector<int> trainable_out(batch, -1);
  if (cfg_.trainable_stream_enabled) {
    std::vector<int> stage1(batch);
    for (size_t i = 0; i < batch; ++i) {
      const int mel_in = tape.input(items[i].mel, false);
      stage1[i] = add_rowvec(tape, conv1d(tape, mel_in, k1, 2), b1);
    }
    const int cat1 = concat_rows(tape, stage1);
    const int bn1 = nn::batchnorm(tape, cat1, g1, be1, bn1_state_, train);
    std::vector<int> stage2(batch);
    int row = 0;
    for (size_t i = 0; i < batch; ++i) {
      const int h = relu(tape, slice_rows(tape, bn1, row, row + t_a[i]));
      row += t_a[i];
      stage2[i] = add_rowvec(tape, conv1d(tape, h, k2, 1), b2);
    }
    const int cat2 = concat_rows(tape, stage2);
    const int bn2 = nn::batchnorm(tape, cat2, g2, be2, bn2_state_, train);
    row = 0;
    for (size_t i = 0; i < batch; ++i) {
      trainable_out[i] = relu(tape, slice_rows(tape, bn2, row, row + t_a[i]));
      row += t_a[i];
    }
  }

  std::vector<ItemNodes> out(batch);
  for (size_t i = 0; i < batch; ++i) {
    const auto& item = items[i];
    const int ta = t_a[i];
    const int tt = static_cast<int>(item.phonemes.size());

    // Audio encoder: sum of the enabled streams on the 20 ms grid.
    int e_a = -1;
    if (cfg_.pretrained_stream_enabled) {
      const int pre_in = tape.input(item.pre_emb, false);
      const int up = add_rowvec(tape, tconv1d(tape, pre_in, kt, 4), bt);
      const int proj = relu(tape, fc(tape, up, w_pw, w_pb));
      const int raw_len = tape.val(proj).shape[0];
      const int fitted = raw_len >= ta ? slice_rows(tape, proj, 0, ta)
                                       : pad_rows(tape, proj, ta);
      e_a = fitted;
    }
    if (cfg_.trainable_stream_enabled) {
      e_a = e_a < 0 ? trainable_out[i] : add(tape, e_a, trainable_out[i]);
    }

    // Text encoder.
    const int emb = embedding(tape, item.phonemes, w_te);
    const int e_t = relu(tape, fc(tape, emb, w_tw, w_tb));

    // Pattern extractor.
    int e_j, phon_rows, gru_in;
    if (cfg_.self_attention_enabled) {
      const int e_c = concat_rows(tape, {e_a, e_t});
      e_j = attention(tape, e_c, e_c, e_c, nn::lower_triangular_mask<T>(ta + tt));
      phon_rows = slice_rows(tape, e_j, ta, ta + tt);
      gru_in = e_j;
    } else {
      // Cross-attention ablation: text queries attend over audio; the
      // discriminator sees only the T_t fused rows.
      e_j = attention(tape, e_t, e_a, e_a, nn::zero_mask<T>(tt, ta));
      phon_rows = e_j;
      gru_in = e_j;
    }

    // Pattern discriminator.
    const int h0 = constant(tape, Tensor<T>(std::vector<int>{1, e}));
    const auto [gru_all, gru_last] = nn::gru(tape, gru_in, h0, gw);
    (void)gru_all;
    const int p_utt = nn::sigmoid(tape, fc(tape, gru_last, w_uw, w_ub));

    ItemNodes nodes;
    nodes.p_utt = p_utt;
    if (cfg_.phoneme_head_enabled) {
      nodes.p_phon = nn::sigmoid(tape, fc(tape, phon_rows, w_pw2, w_pb2));
    }
    nodes.e_a = e_a;
    nodes.e_t = e_t;
    nodes.e_j = e_j;
    nodes.t_a = cfg_.self_attention_enabled ? ta : 0;
    out[i] = nodes;
  }
  return out;
}

template class Model<float>;
template class Model<double>;

}  // namespace kws::model
