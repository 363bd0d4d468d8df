#include "kws/criterion.hpp"

#include "kws/error.hpp"
#include "kws/ops.hpp"

namespace kws::criterion {

int utterance_label(const std::string& keyword, const std::string& transcript) {
  if (keyword.empty() || transcript.empty()) {
    throw Error("utterance_label: empty input");
  }
  return g2p::normalize_text(keyword) == g2p::normalize_text(transcript) ? 1 : 0;
}

std::vector<int> phoneme_labels(const g2p::PhonemeSequence& keyword_ph,
                                const g2p::PhonemeSequence& speech_ph) {
  if (keyword_ph.empty()) throw Error("phoneme_labels: empty keyword sequence");
  std::vector<int> y(keyword_ph.size(), 0);
  for (size_t p = 0; p < keyword_ph.size(); ++p) {
    if (p < speech_ph.size() && keyword_ph.ids[p] == speech_ph.ids[p]) y[p] = 1;
  }
  return y;
}

template <typename T>
LossNodes total_loss(nn::Tape<T>& tape, const std::vector<int>& p_utt_nodes,
                     const std::vector<int>& y_utt,
                     const std::vector<int>& p_phon_nodes,
                     const std::vector<std::vector<int>>& y_phon,
                     bool phoneme_loss_enabled) {
  if (p_utt_nodes.empty()) throw Error("total_loss: empty batch");
  if (p_utt_nodes.size() != y_utt.size()) {
    throw Error("total_loss: utterance label count mismatch");
  }

  const int p_utt_all = nn::concat_rows(tape, p_utt_nodes);  // [B,1]
  nn::Tensor<T> y_u(std::vector<int>{static_cast<int>(y_utt.size()), 1});
  for (size_t i = 0; i < y_utt.size(); ++i) y_u.data[i] = static_cast<T>(y_utt[i]);

  LossNodes nodes;
  nodes.utt = nn::bce(tape, p_utt_all, y_u);

  if (!phoneme_loss_enabled) {
    nodes.total = nodes.utt;
    return nodes;
  }

  if (p_phon_nodes.size() != p_utt_nodes.size() || y_phon.size() != p_utt_nodes.size()) {
    throw Error("total_loss: phoneme prediction/label count mismatch");
  }
  size_t positions = 0;
  for (size_t i = 0; i < p_phon_nodes.size(); ++i) {
    if (p_phon_nodes[i] < 0) throw Error("total_loss: phoneme head output missing");
    const auto& v = tape.val(p_phon_nodes[i]);
    if (static_cast<size_t>(v.shape[0]) != y_phon[i].size()) {
      throw Error("total_loss: phoneme label length mismatch");
    }
    positions += y_phon[i].size();
  }
  if (positions == 0) throw Error("total_loss: no real phoneme positions");

  const int p_phon_all = nn::concat_rows(tape, p_phon_nodes);  // [sum T_t, 1]
  nn::Tensor<T> y_p(std::vector<int>{static_cast<int>(positions), 1});
  size_t at = 0;
  for (const auto& labels : y_phon) {
    for (int v : labels) y_p.data[at++] = static_cast<T>(v);
  }
  nodes.phon = nn::bce(tape, p_phon_all, y_p);
  nodes.total = nn::add(tape, nodes.utt, nodes.phon);
  return nodes;
}

template <typename T>
LossBreakdown breakdown(const nn::Tape<T>& tape, const LossNodes& nodes) {
  LossBreakdown out;
  out.total = static_cast<double>(tape.val(nodes.total).data[0]);
  out.utt = static_cast<double>(tape.val(nodes.utt).data[0]);
  out.phon = nodes.phon >= 0 ? static_cast<double>(tape.val(nodes.phon).data[0]) : 0.0;
  return out;
}

template LossNodes total_loss<float>(nn::Tape<float>&, const std::vector<int>&,
                                     const std::vector<int>&, const std::vector<int>&,
                                     const std::vector<std::vector<int>>&, bool);
template LossNodes total_loss<double>(nn::Tape<double>&, const std::vector<int>&,
                                      const std::vector<int>&, const std::vector<int>&,
                                      const std::vector<std::vector<int>>&, bool);
template LossBreakdown breakdown<float>(const nn::Tape<float>&, const LossNodes&);
template LossBreakdown breakdown<double>(const nn::Tape<double>&, const LossNodes&);

}  // namespace kws::criterion
