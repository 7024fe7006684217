#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "weft/error.hpp"

namespace weft {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

using LabelAssignment = std::set<std::string>;

inline std::map<std::string, ConfusionCounts>
confusion_counts(const std::vector<LabelAssignment>& golds,
                 const std::vector<LabelAssignment>& preds,
                 const std::vector<std::string>& label_set) {
  if (golds.size() != preds.size())
    throw integrity_error("confusion_counts: golds and preds differ in length");
  std::map<std::string, ConfusionCounts> counts;
  for (const auto& label : label_set) counts[label];
  for (std::size_t i = 0; i < golds.size(); ++i) {
    for (const auto& label : label_set) {
      const bool in_gold = golds[i].count(label) > 0;
      const bool in_pred = preds[i].count(label) > 0;
      auto& c = counts[label];
      if (in_gold && in_pred) ++c.tp;
      else if (!in_gold && in_pred) ++c.fp;
      else if (in_gold && !in_pred) ++c.fn;
    }
  }
  return counts;
}

// Unweighted mean of per-label F1 over label_set. A label with an empty
// denominator (never predicted, never gold) scores 0 and still counts in
// the mean. Works for both single-class (singleton assignments) and
// multi-label (arbitrary subsets) predictions.
inline double macro_f1(const std::vector<LabelAssignment>& golds,
                       const std::vector<LabelAssignment>& preds,
                       const std::vector<std::string>& label_set) {
  if (label_set.empty()) throw integrity_error("macro_f1: empty label set");
  const auto counts = confusion_counts(golds, preds, label_set);
  double sum = 0.0;
  for (const auto& label : label_set) {
    const auto& c = counts.at(label);
    const std::int64_t denom = 2 * c.tp + c.fp + c.fn;
    sum += denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
  }
  return sum / static_cast<double>(label_set.size());
}

struct McNemarResult {
  double statistic = 0.0; // continuity-corrected chi-squared
  double p_value = 1.0;
  std::int64_t n01 = 0; // a correct, b wrong
  std::int64_t n10 = 0; // a wrong, b correct
  bool exact = false;   // true when the binomial branch was used
};

namespace detail {

// C(n, k) in exact integer arithmetic; n stays small (< 64) here.
inline std::uint64_t binomial_coefficient(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  std::uint64_t c = 1;
  for (std::int64_t i = 1; i <= k; ++i) {
    c = c * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  }
  return c;
}

// Two-sided exact binomial test with p = 1/2: 2 * P[X >= max(k, n-k)].
// The tail mass is an integer count over 2^n, so the double result is exact
// for the n < 25 regime this branch serves.
inline double binomial_two_sided_half(std::int64_t k, std::int64_t n) {
  const std::int64_t hi = std::max(k, n - k);
  std::uint64_t tail = 0;
  for (std::int64_t j = hi; j <= n; ++j) tail += binomial_coefficient(n, j);
  const double p = 2.0 * static_cast<double>(tail) /
                   std::ldexp(1.0, static_cast<int>(n));
  return std::min(1.0, p);
}

// Survival function of chi-squared with one degree of freedom.
inline double chi2_sf_1df(double x) {
  return std::erfc(std::sqrt(x / 2.0));
}

} // namespace detail

// McNemar's paired test over discordant predictions. Below 25 discordant
// pairs the exact two-sided binomial is used, otherwise the continuity-
// corrected chi-squared approximation.
inline McNemarResult mcnemar_from_counts(std::int64_t n01, std::int64_t n10) {
  McNemarResult r;
  r.n01 = n01;
  r.n10 = n10;
  const std::int64_t n = n01 + n10;
  if (n == 0) {
    r.statistic = 0.0;
    r.p_value = 1.0;
    return r;
  }
  const double diff = std::abs(static_cast<double>(n01 - n10)) - 1.0;
  r.statistic = diff * diff / static_cast<double>(n);
  if (n < 25) {
    r.exact = true;
    r.p_value = detail::binomial_two_sided_half(n01, n);
  } else {
    r.p_value = detail::chi2_sf_1df(r.statistic);
  }
  return r;
}

inline McNemarResult mcnemar_test(const std::vector<LabelAssignment>& preds_a,
                                  const std::vector<LabelAssignment>& preds_b,
                                  const std::vector<LabelAssignment>& golds) {
  if (preds_a.size() != golds.size() || preds_b.size() != golds.size())
    throw integrity_error("mcnemar_test: prediction lists misaligned with golds");
  std::int64_t n01 = 0, n10 = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const bool a_ok = preds_a[i] == golds[i];
    const bool b_ok = preds_b[i] == golds[i];
    if (a_ok && !b_ok) ++n01;
    if (!a_ok && b_ok) ++n10;
  }
  return mcnemar_from_counts(n01, n10);
}

} // namespace weft
