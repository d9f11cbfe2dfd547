#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sevalign/numerics.hpp"

namespace sevalign {

/// Ordinal severity class, 1-based internally (1 = mildest, K = most severe).
/// Files store the clinical 0-based value; see to_clinical/from_clinical.
class Severity {
 public:
  constexpr Severity() = default;
  explicit constexpr Severity(int value) : value_(value) {}

  constexpr int value() const { return value_; }
  constexpr int to_clinical() const { return value_ - 1; }
  static constexpr Severity from_clinical(int clinical) { return Severity(clinical + 1); }

  friend constexpr auto operator<=>(Severity, Severity) = default;

 private:
  int value_ = 1;
};

enum class Domain { source, target };

std::string_view to_string(Domain domain);
Domain parse_domain(std::string_view text);

struct Instance {
  std::string id;
  Vector features;
  std::optional<Severity> label;
};

struct Bag {
  std::string bag_id;
  Domain domain = Domain::source;
  std::vector<Instance> instances;
  Severity bag_label;
};

struct DomainDataset {
  Domain domain = Domain::source;
  int num_classes = 4;
  int input_dim = 0;
  std::vector<Bag> bags;

  std::size_t instance_count() const;
};

/// Maximum severity in a non-empty list.
Severity bag_label_from_instances(std::span<const Severity> labels);

/// Checks every dataset invariant; throws ValidationError (or ShapeError for
/// feature-length problems) naming the offending bag or instance.
void validate_dataset(const DomainDataset& ds);

/// Copy of `ds` with every instance label removed. Target-domain training
/// only ever sees this view.
DomainDataset without_instance_labels(const DomainDataset& ds);

// ---------------------------------------------------------------------------
// Synthetic domain shift
// ---------------------------------------------------------------------------

/// Source class k is drawn from N(mu_k, spread^2 I) with mu_k = (k-1) * spacing
/// on the first axis. The target applies x -> scale * R x + translation to the
/// same generative process, where R composes plane rotations: angle i rotates
/// coordinates (2i, 2i+1).
struct ShiftConfig {
  int input_dim = 16;
  int num_classes = 4;
  double centroid_spacing = 2.5;
  double spread = 1.0;
  std::vector<double> rotation_degrees{60.0};
  std::vector<double> translation{};  // empty means zero
  double scale = 1.0;
  int min_bag_size = 4;
  int max_bag_size = 30;
  /// Relative frequency of each class among the non-forced instances of a bag;
  /// an instance in a bag labelled Y is drawn from classes 1..Y.
  std::vector<double> instance_class_weights{1.0, 1.0, 1.0, 1.0};
  int bags_per_domain = 300;
  std::uint64_t seed = 0;
};

void validate_shift_config(const ShiftConfig& cfg);

struct DomainPair {
  DomainDataset source;
  DomainDataset target;
};

DomainPair generate_synthetic_domains(const ShiftConfig& cfg);

/// Duplicate-to-max class balancing: every class is topped up (sampling with
/// replacement inside the class) to the largest class count, then the whole
/// index list is shuffled.
std::vector<std::size_t> oversample_indices(std::span<const int> labels, std::uint64_t seed);

// ---------------------------------------------------------------------------
// JSON Lines dataset files
// ---------------------------------------------------------------------------

void save_dataset(const DomainDataset& ds, const std::filesystem::path& path);
DomainDataset load_dataset(const std::filesystem::path& path);

}  // namespace sevalign
