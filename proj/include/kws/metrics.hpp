#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "kws/data.hpp"

namespace kws::metrics {

struct ScoredTrial {
  data::TrialPair trial;
  double score = 0.0;  // P_utt
};

struct RocSummary {
  double eer = 0.0;
  double auc = 0.0;
  double threshold_at_eer = 0.0;
};

// Threshold sweep over all distinct scores (accept iff score >= threshold)
// with linear interpolation between the bracketing thresholds where the
// false-accept and false-reject rates cross. Needs at least one positive
// and one negative.
double compute_eer(const std::vector<ScoredTrial>& scored,
                   double* threshold_at_eer = nullptr);

// Pairwise-comparison statistic (#(pos>neg) + 0.5*#(pos==neg)) / (np*nn),
// computed by the tie-averaged rank method.
double compute_auc(const std::vector<ScoredTrial>& scored);

RocSummary roc_summary(const std::vector<ScoredTrial>& scored);

// Predict positive iff score >= threshold; fraction of correct trials.
double accuracy_at_threshold(const std::vector<ScoredTrial>& scored,
                             double threshold = 0.8);

struct DistanceBin {
  double center = 0.0;
  double mse = 0.0;
  int64_t count = 0;
};

// Mean squared error of (score - label) binned by the trials' normalized
// phoneme edit distance over uniform bins spanning (0,1); trials at
// distance exactly 0 or 1 are excluded.
std::vector<DistanceBin> mse_by_distance(const std::vector<ScoredTrial>& scored,
                                         int bins = 20);

// CSV contract between `evaluate` and `report`:
// trial_id,keyword,label,score,phoneme_distance
void write_scores_csv(const std::string& path,
                      const std::vector<ScoredTrial>& scored);
std::vector<ScoredTrial> read_scores_csv(const std::string& path);

nlohmann::json report_json(const std::vector<ScoredTrial>& scored, int bins,
                           double accuracy_threshold = 0.8);

}  // namespace kws::metrics
