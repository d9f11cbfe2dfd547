#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sevalign/data.hpp"
#include "sevalign/metrics.hpp"
#include "sevalign/model.hpp"
#include "sevalign/train_config.hpp"

namespace sevalign {

struct EpochRecord {
  int epoch = 0;
  std::map<std::string, double> losses;  // mean per batch
  std::optional<double> validation_qwk;  // stage 1 only
};

struct TrainLog {
  std::string stage;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  bool early_stopped = false;
  double wall_clock_seconds = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

/// Omits wall_clock_seconds so logs stay byte-reproducible; the CLI records
/// timings in the run manifest instead.
nlohmann::json train_log_to_json(const TrainLog& log);

/// FNV-1a hash (hex) of the canonical JSON form of `cfg`.
std::string config_hash(const TrainConfig& cfg);

struct TrainResult {
  ModelState state;
  TrainLog log;
};

/// Stage 1. Holds out `validation_fraction` of the source bags (stratified by
/// bag label), alternates one instance-loss step and one bag-loss step per
/// batch on oversampled indices, and early-stops on validation bag-level QWK.
/// Returns the best-validation snapshot; its target encoder is a copy of the
/// source encoder.
TrainResult pretrain_source(const TrainConfig& cfg, const DomainDataset& source);

struct AdaptResult {
  ModelState state;
  TrainLog log;
  PrototypeSet prototypes;
};

/// Stage 2. Trains only the target encoder (and the discriminator) for exactly
/// cfg.adapt_epochs epochs. Target instance labels are stripped before use.
AdaptResult adapt_target(const TrainConfig& cfg, const ModelState& pretrained,
                         const DomainDataset& source, const DomainDataset& target);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Encoder matching the dataset's domain.
const Mlp& encoder_for(const ModelState& state, Domain domain);

/// Instance-level report over every labelled instance of `ds`; predictions use
/// the source instance head on the domain's encoder.
EvalReport evaluate_instances(const ModelState& state, const DomainDataset& ds);

/// Bag-level report using the shared tokens and bag heads.
EvalReport evaluate_bags(const ModelState& state, const DomainDataset& ds);

/// Per-class centroid distance between source embeddings (source encoder) and
/// target embeddings (target encoder), grouped by ground-truth labels.
AlignmentScore measure_alignment(const ModelState& state, const DomainDataset& source,
                                 const DomainDataset& target);

/// Writes `domain,bag_id,instance_id,true_label,pred_label,pc1,pc2` rows for
/// both domains, projected with a PCA fitted on the union of embeddings.
/// Labels use the clinical 0-based convention; missing labels are empty.
void export_pca_csv(const ModelState& state, const DomainDataset& source,
                    const DomainDataset& target, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

enum class Variant { full, no_triplet, adv_only, source_only };

inline constexpr std::array<Variant, 4> kAllVariants{Variant::full, Variant::no_triplet,
                                                     Variant::adv_only, Variant::source_only};

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

/// The config with its ablation switches set for `v`.
TrainConfig configure_variant(TrainConfig cfg, Variant v);

struct VariantRun {
  Variant variant = Variant::full;
  std::uint64_t seed = 0;
  EvalReport target_instances;
  EvalReport target_bags;
  AlignmentScore alignment;
  bool frozen_groups_unchanged = true;
};

struct VariantSummary {
  Variant variant = Variant::full;
  double mean_accuracy = 0.0;
  double mean_macro_f1 = 0.0;
  double mean_qwk = 0.0;  // over seeds where QWK is defined
  double mean_alignment = 0.0;
};

struct AblationTable {
  std::vector<VariantRun> runs;  // seed-major, variants in request order
  std::vector<VariantSummary> summary;
};

using DataProvider = std::function<DomainPair(std::uint64_t seed)>;

struct AblationOptions {
  std::vector<Variant> variants{kAllVariants.begin(), kAllVariants.end()};
  std::vector<std::uint64_t> seeds{0};
  /// When set, PCA exports are written as `<dir>/seed<S>_<variant>.csv`.
  std::optional<std::filesystem::path> pca_dir;
};

/// One pretrained state per seed is shared by every variant of that seed.
AblationTable run_ablation(const TrainConfig& cfg, const DataProvider& data,
                           const AblationOptions& options);

nlohmann::json ablation_to_json(const AblationTable& table);

}  // namespace sevalign
