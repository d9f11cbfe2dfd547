#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "sevalign/data.hpp"

// Reference implementations working directly on the label lists.
namespace reference {

inline double accuracy(const std::vector<sevalign::Severity>& t, const std::vector<sevalign::Severity>& p) {
  double hits = 0;
  for (std::size_t i = 0; i < t.size(); ++i) hits += t[i] == p[i] ? 1.0 : 0.0;
  return hits / static_cast<double>(t.size());
}

inline double macro_f1(const std::vector<sevalign::Severity>& t, const std::vector<sevalign::Severity>& p,
                       int K) {
  double total = 0;
  for (int k = 1; k <= K; ++k) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const bool is_t = t[i].value() == k, is_p = p[i].value() == k;
      tp += is_t && is_p;
      fp += !is_t && is_p;
      fn += is_t && !is_p;
    }
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    total += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
  return total / K;
}

/// Pairwise form: 1 - sum_i (t_i - p_i)^2 / ((1/N) sum_i sum_j (t_i - p_j)^2).
inline std::optional<double> qwk(const std::vector<sevalign::Severity>& t,
                                 const std::vector<sevalign::Severity>& p) {
  const double n = static_cast<double>(t.size());
  double observed = 0, expected = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    observed += std::pow(t[i].value() - p[i].value(), 2);
    for (std::size_t j = 0; j < p.size(); ++j) expected += std::pow(t[i].value() - p[j].value(), 2);
  }
  expected /= n;
  if (expected == 0) return std::nullopt;
  return 1.0 - observed / expected;
}

}  // namespace reference
