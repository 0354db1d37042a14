#include "mdfsc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mdfsc/errors.hpp"

namespace mdfsc {

namespace {

void check_finite(const std::vector<ScoredLabel>& items) {
  for (const auto& it : items) {
    if (!std::isfinite(it.score)) throw MetricError("non-finite score");
    if (it.label != 0 && it.label != 1) throw MetricError("label must be 0/1");
  }
}

}  // namespace

double roc_auc(const std::vector<ScoredLabel>& items) {
  check_finite(items);
  std::size_t n_pos = 0;
  for (const auto& it : items) n_pos += it.label;
  const std::size_t n_neg = items.size() - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw MetricError("roc_auc undefined: need both classes");

  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return items[a].score < items[b].score;
  });

  // midranks over tie groups, then rank-sum of positives
  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && items[idx[j]].score == items[idx[i]].score) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k)
      if (items[idx[k]].label == 1) rank_sum_pos += midrank;
    i = j;
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double average_precision(const std::vector<ScoredLabel>& items) {
  check_finite(items);
  std::size_t n_pos = 0;
  for (const auto& it : items) n_pos += it.label;
  if (n_pos == 0) throw MetricError("average_precision undefined: no positives");

  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return items[a].score > items[b].score;
  });

  double ap = 0;
  std::size_t tp = 0, seen = 0, i = 0;
  double prev_recall = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < idx.size() && items[idx[j]].score == items[idx[i]].score) {
      group_pos += items[idx[j]].label;
      ++j;
    }
    tp += group_pos;
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

std::vector<RocPoint> roc_points(const std::vector<ScoredLabel>& items) {
  check_finite(items);
  std::size_t n_pos = 0;
  for (const auto& it : items) n_pos += it.label;
  const std::size_t n_neg = items.size() - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw MetricError("roc_points undefined: need both classes");

  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return items[a].score > items[b].score;
  });

  std::vector<RocPoint> pts;
  pts.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && items[idx[j]].score == items[idx[i]].score) {
      if (items[idx[j]].label == 1)
        ++tp;
      else
        ++fp;
      ++j;
    }
    pts.push_back({items[idx[i]].score,
                   static_cast<double>(fp) / static_cast<double>(n_neg),
                   static_cast<double>(tp) / static_cast<double>(n_pos)});
    i = j;
  }
  return pts;
}

}  // namespace mdfsc
