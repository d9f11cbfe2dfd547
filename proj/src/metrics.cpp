#include "sevalign/metrics.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "sevalign/errors.hpp"

namespace sevalign {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes),
      counts_(static_cast<std::size_t>(num_classes * num_classes), 0) {
  if (num_classes < 1) throw ValidationError("confusion matrix needs K >= 1");
}

long long ConfusionMatrix::at(Severity truth, Severity predicted) const {
  return cell(truth.value() - 1, predicted.value() - 1);
}

void ConfusionMatrix::add(Severity truth, Severity predicted) {
  auto check = [&](Severity s, const char* what) {
    if (s.value() < 1 || s.value() > num_classes_) {
      throw ValidationError(std::string("confusion matrix: ") + what + " label " +
                            std::to_string(s.value()) + " outside 1.." +
                            std::to_string(num_classes_));
    }
  };
  check(truth, "true");
  check(predicted, "predicted");
  counts_[static_cast<std::size_t>((truth.value() - 1) * num_classes_ + predicted.value() - 1)] += 1;
}

long long ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), 0LL);
}

long long ConfusionMatrix::row_total(int t) const {
  long long s = 0;
  for (int p = 0; p < num_classes_; ++p) s += cell(t, p);
  return s;
}

long long ConfusionMatrix::col_total(int p) const {
  long long s = 0;
  for (int t = 0; t < num_classes_; ++t) s += cell(t, p);
  return s;
}

ConfusionMatrix confusion_matrix(std::span<const Severity> y_true,
                                 std::span<const Severity> y_pred, int num_classes) {
  if (y_true.size() != y_pred.size()) {
    throw ValidationError("confusion matrix: label lists differ in length");
  }
  if (y_true.empty()) throw ValidationError("confusion matrix: no samples");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < y_true.size(); ++i) cm.add(y_true[i], y_pred[i]);
  return cm;
}

AccuracyF1 accuracy_macro_f1(const ConfusionMatrix& cm) {
  const long long n = cm.total();
  if (n == 0) throw ValidationError("accuracy/F1 of an empty confusion matrix");
  const int K = cm.num_classes();
  AccuracyF1 out;
  long long correct = 0;
  for (int k = 0; k < K; ++k) correct += cm.cell(k, k);
  out.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  for (int k = 0; k < K; ++k) {
    const double tp = static_cast<double>(cm.cell(k, k));
    const double predicted = static_cast<double>(cm.col_total(k));
    const double actual = static_cast<double>(cm.row_total(k));
    const double precision = predicted > 0 ? tp / predicted : 0.0;
    const double recall = actual > 0 ? tp / actual : 0.0;
    const double f1 =
        precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    out.per_class_f1.push_back(f1);
  }
  out.macro_f1 = std::accumulate(out.per_class_f1.begin(), out.per_class_f1.end(), 0.0) / K;
  return out;
}

std::optional<double> qwk(const ConfusionMatrix& cm) {
  const int K = cm.num_classes();
  if (K < 2) throw ValidationError("qwk needs K >= 2");
  const double n = static_cast<double>(cm.total());
  if (n == 0) throw ValidationError("qwk of an empty confusion matrix");
  const double norm = static_cast<double>((K - 1) * (K - 1));
  double observed = 0.0;
  double expected = 0.0;
  for (int i = 0; i < K; ++i) {
    const double row = static_cast<double>(cm.row_total(i));
    for (int j = 0; j < K; ++j) {
      const double w = static_cast<double>((i - j) * (i - j)) / norm;
      observed += w * static_cast<double>(cm.cell(i, j));
      expected += w * row * static_cast<double>(cm.col_total(j)) / n;
    }
  }
  if (expected == 0.0) return std::nullopt;
  return 1.0 - observed / expected;
}

EvalReport make_report(std::span<const Severity> y_true, std::span<const Severity> y_pred,
                       int num_classes) {
  EvalReport r;
  r.confusion = confusion_matrix(y_true, y_pred, num_classes);
  const auto af = accuracy_macro_f1(r.confusion);
  r.accuracy = af.accuracy;
  r.macro_f1 = af.macro_f1;
  r.qwk = qwk(r.confusion);
  r.count = r.confusion.total();
  return r;
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  const int K = report.confusion.num_classes();
  for (int t = 0; t < K; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (int p = 0; p < K; ++p) row.push_back(report.confusion.cell(t, p));
    rows.push_back(std::move(row));
  }
  return {{"confusion", std::move(rows)},
          {"accuracy", report.accuracy},
          {"macro_f1", report.macro_f1},
          {"qwk", report.qwk ? nlohmann::json(*report.qwk) : nlohmann::json(nullptr)},
          {"count", report.count}};
}

// ---------------------------------------------------------------------------

PcaProjection pca_project(const Matrix& samples, int dims) {
  if (dims < 1) throw ValidationError("pca: dims must be >= 1");
  if (samples.cols() < dims) {
    throw ValidationError("pca: need at least " + std::to_string(dims) + " samples");
  }
  if (!samples.allFinite()) throw ValidationError("pca: non-finite sample");
  const Index D = samples.rows();
  const Vector mean = samples.rowwise().mean();
  const Matrix centred = samples.colwise() - mean;
  const Matrix cov = centred * centred.transpose() / std::max<double>(1.0, samples.cols() - 1.0);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) throw ValidationError("pca: eigen-decomposition failed");

  PcaProjection out;
  out.components = Matrix::Zero(D, dims);
  out.eigenvalues = Vector::Zero(dims);
  const Vector& values = solver.eigenvalues();  // ascending
  const double top = std::max(values.maxCoeff(), 0.0);
  const double floor = 1e-12 * std::max(top, 1.0);
  for (int c = 0; c < dims; ++c) {
    const Index src = D - 1 - c;
    if (src < 0 || values[src] <= floor) {
      out.rank_deficient = true;
      continue;
    }
    Vector dir = solver.eigenvectors().col(src);
    for (Index r = 0; r < D; ++r) {
      if (std::abs(dir[r]) > 1e-12) {
        if (dir[r] < 0) dir = -dir;
        break;
      }
    }
    out.components.col(c) = dir;
    out.eigenvalues[c] = values[src];
  }
  out.coordinates = out.components.transpose() * centred;
  return out;
}

AlignmentScore alignment_score(const std::vector<Matrix>& source_by_class,
                               const std::vector<Matrix>& target_by_class) {
  if (source_by_class.size() != target_by_class.size()) {
    throw ValidationError("alignment_score: class lists differ in length");
  }
  AlignmentScore out;
  double sum = 0.0;
  int shared = 0;
  for (std::size_t k = 0; k < source_by_class.size(); ++k) {
    const Matrix& s = source_by_class[k];
    const Matrix& t = target_by_class[k];
    if (s.cols() == 0 || t.cols() == 0) {
      out.per_class.push_back(std::nullopt);
      out.excluded_classes.push_back(static_cast<int>(k) + 1);
      continue;
    }
    if (s.rows() != t.rows()) throw ShapeError("alignment_score: embedding dimensions differ");
    const double dist = (s.rowwise().mean() - t.rowwise().mean()).norm();
    out.per_class.push_back(dist);
    sum += dist;
    ++shared;
  }
  if (shared == 0) throw ValidationError("alignment_score: no class present in both domains");
  out.mean = sum / shared;
  return out;
}

}  // namespace sevalign
