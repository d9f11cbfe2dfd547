#pragma once

#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "sevalign/data.hpp"
#include "sevalign/numerics.hpp"

namespace sevalign {

/// K x K counts, rows = true class, columns = predicted class.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return num_classes_; }
  long long at(Severity truth, Severity predicted) const;
  void add(Severity truth, Severity predicted);
  long long total() const;
  long long row_total(int truth_index) const;
  long long col_total(int pred_index) const;
  /// 0-based access.
  long long cell(int truth_index, int pred_index) const {
    return counts_[static_cast<std::size_t>(truth_index * num_classes_ + pred_index)];
  }

 private:
  int num_classes_;
  std::vector<long long> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const Severity> y_true,
                                 std::span<const Severity> y_pred, int num_classes);

struct AccuracyF1 {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
};

/// Classes with precision + recall = 0 contribute F1 = 0 and stay in the mean.
AccuracyF1 accuracy_macro_f1(const ConfusionMatrix& cm);

/// Quadratic weighted kappa with weights (i-j)^2 / (K-1)^2. Empty when the
/// chance-agreement term vanishes (kappa undefined).
std::optional<double> qwk(const ConfusionMatrix& cm);

struct EvalReport {
  ConfusionMatrix confusion{2};
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> qwk;
  long long count = 0;
};

EvalReport make_report(std::span<const Severity> y_true, std::span<const Severity> y_pred,
                       int num_classes);

/// {"confusion": [[...]], "accuracy", "macro_f1", "qwk" (null if undefined), "count"}.
nlohmann::json report_to_json(const EvalReport& report);

// ---------------------------------------------------------------------------

struct PcaProjection {
  Matrix coordinates;  // dims x n, one column per sample
  Matrix components;   // D x dims, unit principal directions
  Vector eigenvalues;  // descending, length dims
  bool rank_deficient = false;
};

/// Projects mean-centred samples (columns) onto the top `dims` principal
/// directions. Each direction's first non-zero loading is made positive.
/// Directions beyond the data rank yield zero coordinates and set the flag.
PcaProjection pca_project(const Matrix& samples, int dims = 2);

struct AlignmentScore {
  std::vector<std::optional<double>> per_class;  // centroid distance; empty if excluded
  std::vector<int> excluded_classes;             // 1-based severities
  double mean = 0.0;
};

/// Euclidean distance between per-class domain centroids, averaged over the
/// classes present in both domains. Element k-1 of each list holds the
/// embeddings (columns) of class k.
AlignmentScore alignment_score(const std::vector<Matrix>& source_by_class,
                               const std::vector<Matrix>& target_by_class);

}  // namespace sevalign
