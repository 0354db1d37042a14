#pragma once

#include <vector>

namespace mdfsc {

struct ScoredLabel {
  double score = 0.0;
  int label = 0;  // 0 normal, 1 anomalous
};

// Mann-Whitney statistic via rank sums: P(s+ > s-) + 1/2 P(s+ = s-).
// Identical to trapezoidal ROC integration; ties handled exactly.
double roc_auc(const std::vector<ScoredLabel>& items);

// AP = sum over distinct thresholds of (R_n - R_{n-1}) * P_n, descending
// scores, ties grouped at one threshold.
double average_precision(const std::vector<ScoredLabel>& items);

struct RocPoint {
  double threshold, fpr, tpr;
};
std::vector<RocPoint> roc_points(const std::vector<ScoredLabel>& items);

}  // namespace mdfsc
