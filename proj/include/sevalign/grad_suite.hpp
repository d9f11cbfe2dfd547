#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace sevalign {

/// Result of checking one loss over many random small configurations.
struct GradSuiteEntry {
  std::string loss;
  int configurations = 0;
  double max_rel_error = 0.0;
  int worst_configuration = -1;
  std::string worst_probe;  // which parameterization produced the maximum
  bool passed = false;
};

struct GradSuiteOptions {
  std::uint64_t seed = 0;
  int configurations = 10;
  double step = 1e-5;
  double tolerance = 1e-4;
};

/// Central-difference checks of loss_instance_krank, loss_bag, loss_disc,
/// loss_enc, loss_triplet and loss_target_total, both on raw inputs and
/// through the encoders/heads that feed them. Configurations use d_in <= 8,
/// d <= 6, K in {3, 4} and at most 4 bags; configurations within 1e-3 of a
/// hinge or gating boundary are redrawn.
std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteOptions& options);

nlohmann::json grad_suite_to_json(const std::vector<GradSuiteEntry>& entries);

}  // namespace sevalign
