#include "kws/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "kws/error.hpp"

namespace kws::metrics {
namespace {

void split_scores(const std::vector<ScoredTrial>& scored, std::vector<double>* pos,
                  std::vector<double>* neg) {
  for (const auto& s : scored) {
    if (!std::isfinite(s.score) || s.score < 0.0 || s.score > 1.0) {
      throw Error("metrics: score out of [0,1] for trial " + s.trial.entry.id);
    }
    (s.trial.y_utt ? pos : neg)->push_back(s.score);
  }
  if (pos->empty() || neg->empty()) {
    throw Error("metrics: need at least one positive and one negative trial");
  }
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  return out + "\"";
}

std::vector<std::string> csv_split(const std::string& line, int line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw Error("scores csv line " + std::to_string(line_no) + ": unterminated quote");
  out.push_back(std::move(field));
  return out;
}

}  // namespace

double compute_eer(const std::vector<ScoredTrial>& scored, double* threshold_at_eer) {
  std::vector<double> pos, neg;
  split_scores(scored, &pos, &neg);
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());

  // Candidate thresholds: sentinels below/above everything plus every
  // distinct score, ascending. Accept iff score >= threshold.
  std::vector<double> cand;
  cand.reserve(pos.size() + neg.size() + 2);
  for (double s : pos) cand.push_back(s);
  for (double s : neg) cand.push_back(s);
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  cand.insert(cand.begin(), cand.front() - 1.0);
  cand.push_back(cand.back() + 1.0);

  const auto far_at = [&](double th) {
    const auto it = std::lower_bound(neg.begin(), neg.end(), th);
    return static_cast<double>(neg.end() - it) / nn;
  };
  const auto frr_at = [&](double th) {
    const auto it = std::lower_bound(pos.begin(), pos.end(), th);
    return static_cast<double>(it - pos.begin()) / np;
  };

  double prev_far = far_at(cand[0]), prev_frr = frr_at(cand[0]);
  double prev_th = cand[0];
  for (size_t i = 1; i < cand.size(); ++i) {
    const double far = far_at(cand[i]);
    const double frr = frr_at(cand[i]);
    if (frr >= far) {
      if (frr == far) {
        if (threshold_at_eer) *threshold_at_eer = cand[i];
        return far;
      }
      // Crossing lies between the previous candidate (frr < far there)
      // and this one; intersect the segment with the diagonal.
      const double d1 = prev_far - prev_frr;          // > 0
      const double d2 = (far - prev_far) - (frr - prev_frr);
      const double t = d2 != 0.0 ? d1 / -d2 : 0.0;
      const double eer = prev_far + t * (far - prev_far);
      if (threshold_at_eer) *threshold_at_eer = prev_th + t * (cand[i] - prev_th);
      return eer;
    }
    prev_far = far;
    prev_frr = frr;
    prev_th = cand[i];
  }
  throw Error("compute_eer: no crossing found");  // unreachable: sentinel guarantees one
}

double compute_auc(const std::vector<ScoredTrial>& scored) {
  std::vector<double> pos, neg;
  split_scores(scored, &pos, &neg);

  // Tie-averaged ranks over the pooled scores.
  std::vector<std::pair<double, int>> all;  // (score, is_positive)
  all.reserve(pos.size() + neg.size());
  for (double s : pos) all.emplace_back(s, 1);
  for (double s : neg) all.emplace_back(s, 0);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < all.size()) {
    size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k) {
      if (all[k].second) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

RocSummary roc_summary(const std::vector<ScoredTrial>& scored) {
  RocSummary out;
  out.eer = compute_eer(scored, &out.threshold_at_eer);
  out.auc = compute_auc(scored);
  return out;
}

double accuracy_at_threshold(const std::vector<ScoredTrial>& scored, double threshold) {
  if (scored.empty()) throw Error("accuracy: no trials");
  int64_t correct = 0;
  for (const auto& s : scored) {
    const int pred = s.score >= threshold ? 1 : 0;
    if (pred == s.trial.y_utt) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scored.size());
}

std::vector<DistanceBin> mse_by_distance(const std::vector<ScoredTrial>& scored, int bins) {
  if (bins < 1) throw Error("mse_by_distance: bins < 1");
  std::vector<DistanceBin> out(static_cast<size_t>(bins));
  std::vector<double> sums(static_cast<size_t>(bins), 0.0);
  for (int i = 0; i < bins; ++i) {
    out[static_cast<size_t>(i)].center = (i + 0.5) / bins;
  }
  for (const auto& s : scored) {
    const double d = s.trial.phoneme_distance;
    if (d <= 0.0 || d >= 1.0) continue;  // range is open: (0, 1)
    const int b = std::min(bins - 1, static_cast<int>(d * bins));
    const double err = s.score - static_cast<double>(s.trial.y_utt);
    sums[static_cast<size_t>(b)] += err * err;
    ++out[static_cast<size_t>(b)].count;
  }
  for (int i = 0; i < bins; ++i) {
    if (out[static_cast<size_t>(i)].count > 0) {
      out[static_cast<size_t>(i)].mse =
          sums[static_cast<size_t>(i)] / static_cast<double>(out[static_cast<size_t>(i)].count);
    }
  }
  return out;
}

void write_scores_csv(const std::string& path, const std::vector<ScoredTrial>& scored) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write scores csv: " + path);
  out << "trial_id,keyword,label,score,phoneme_distance\n";
  char buf[64];
  for (const auto& s : scored) {
    out << csv_escape(s.trial.entry.id) << ',' << csv_escape(s.trial.keyword) << ','
        << s.trial.y_utt << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", s.score);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", s.trial.phoneme_distance);
    out << buf << '\n';
  }
  if (!out) throw Error("short write: " + path);
}

std::vector<ScoredTrial> read_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scores csv: " + path);
  std::vector<ScoredTrial> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line_no == 1 && line.rfind("trial_id", 0) == 0)) continue;
    const auto fields = csv_split(line, line_no);
    if (fields.size() != 5) {
      throw Error("scores csv line " + std::to_string(line_no) + ": expected 5 fields, got " +
                  std::to_string(fields.size()));
    }
    ScoredTrial s;
    s.trial.entry.id = fields[0];
    s.trial.keyword = fields[1];
    try {
      s.trial.y_utt = std::stoi(fields[2]);
      s.score = std::stod(fields[3]);
      s.trial.phoneme_distance = std::stod(fields[4]);
    } catch (const std::exception&) {
      throw Error("scores csv line " + std::to_string(line_no) + ": bad number");
    }
    if (s.trial.y_utt != 0 && s.trial.y_utt != 1) {
      throw Error("scores csv line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::json report_json(const std::vector<ScoredTrial>& scored, int bins,
                           double accuracy_threshold) {
  const RocSummary roc = roc_summary(scored);
  int64_t positives = 0;
  for (const auto& s : scored) positives += s.trial.y_utt;
  nlohmann::json j;
  j["num_trials"] = scored.size();
  j["num_positive"] = positives;
  j["eer"] = roc.eer;
  // nominal range is [0, 0.5]; larger values mean anti-correlated scores
  j["eer_above_chance"] = roc.eer > 0.5;
  j["auc"] = roc.auc;
  j["threshold_at_eer"] = roc.threshold_at_eer;
  j["accuracy_threshold"] = accuracy_threshold;
  j["accuracy"] = accuracy_at_threshold(scored, accuracy_threshold);
  j["mse_by_distance"] = nlohmann::json::array();
  for (const auto& b : mse_by_distance(scored, bins)) {
    j["mse_by_distance"].push_back(
        {{"center", b.center}, {"mse", b.mse}, {"count", b.count}});
  }
  return j;
}

}  // namespace kws::metrics
