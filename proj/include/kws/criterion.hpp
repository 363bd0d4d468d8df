#pragma once

#include <string>
#include <vector>

#include "kws/g2p.hpp"
#include "kws/tape.hpp"

namespace kws::criterion {

// 1 iff keyword and transcript match after case/punctuation normalization.
int utterance_label(const std::string& keyword, const std::string& transcript);

// Index-wise comparison over the keyword positions: y_p = 1 iff
// p <= len(speech) and keyword[p] == speech[p]. No alignment.
std::vector<int> phoneme_labels(const g2p::PhonemeSequence& keyword_ph,
                                const g2p::PhonemeSequence& speech_ph);

struct LossNodes {
  int total = -1;
  int utt = -1;
  int phon = -1;  // -1 when the phoneme loss is disabled
};

struct LossBreakdown {
  double total = 0.0;
  double utt = 0.0;
  double phon = 0.0;
};

// Detection loss over a batch: utterance BCE over the stacked per-item
// P_utt values plus (when enabled) phoneme BCE over every real phoneme
// position pooled across the batch. total = utt + phon by construction.
//
// p_utt_nodes[i] is a [1,1] node; p_phon_nodes[i] a [T_t,1] node (ignored
// when disabled); y_phon[i] the per-position labels of item i.
template <typename T>
LossNodes total_loss(nn::Tape<T>& tape, const std::vector<int>& p_utt_nodes,
                     const std::vector<int>& y_utt,
                     const std::vector<int>& p_phon_nodes,
                     const std::vector<std::vector<int>>& y_phon,
                     bool phoneme_loss_enabled);

template <typename T>
LossBreakdown breakdown(const nn::Tape<T>& tape, const LossNodes& nodes);

}  // namespace kws::criterion
