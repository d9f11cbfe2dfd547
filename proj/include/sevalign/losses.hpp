#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sevalign/data.hpp"
#include "sevalign/model.hpp"
#include "sevalign/numerics.hpp"

namespace sevalign {

/// How per-sample terms are combined. `mean` keeps learning rates and the
/// triplet weight independent of bag size; `sum` follows the literal
/// summation form of the objectives.
enum class Reduction { mean, sum };

struct LossWeights {
  double alpha = 0.01;  // triplet weight in the target objective
  double margin = 1.0;  // triplet margin
};

// ---------------------------------------------------------------------------
// Primitive losses. Each optionally returns the gradient w.r.t. its inputs.
// ---------------------------------------------------------------------------

/// Binary cross-entropy of sigmoid(logits) against 0/1 targets, reduced over
/// every (rank, instance) entry. Columns are instances.
double loss_instance_krank(const Matrix& logits, const Matrix& targets,
                           Matrix* d_logits = nullptr, Reduction reduction = Reduction::mean);

/// loss_instance_krank over bag logits with targets krank_encode_label(Y).
double loss_bag(const Matrix& bag_logits, std::span<const Severity> bag_labels,
                Matrix* d_logits = nullptr, Reduction reduction = Reduction::mean);

struct AdversarialGrads {
  Mlp discriminator;  // d loss / d discriminator params
  Matrix source;      // d loss / d source embeddings
  Matrix target;      // d loss / d target embeddings
};

/// -sum log d(e_s) - sum log(1 - d(e_t)), divided by n_s + n_t under `mean`.
double loss_disc(const Mlp& discriminator, const Matrix& source_embeddings,
                 const Matrix& target_embeddings, AdversarialGrads* grads = nullptr,
                 Reduction reduction = Reduction::mean);

/// -sum log d(e_t), divided by n_t under `mean`.
double loss_enc(const Mlp& discriminator, const Matrix& target_embeddings,
                AdversarialGrads* grads = nullptr, Reduction reduction = Reduction::mean);

/// A target instance predicted more severe than its bag allows.
struct TripletGate {
  std::size_t bag_index = 0;
  std::size_t instance_index = 0;
  Severity bag_label;
  Severity predicted;

  friend bool operator==(const TripletGate&, const TripletGate&) = default;
};

/// Instances with Y <= K-1 and predicted > Y, in instance order.
std::vector<TripletGate> select_triplet_anchors(std::size_t bag_index, Severity bag_label,
                                                std::span<const Severity> predicted,
                                                int num_classes);

/// Hinge max(|e - p+| - |e - p-| + margin, 0) per column; 0 for no anchors.
double loss_triplet(const Matrix& anchors, const Matrix& positives, const Matrix& negatives,
                    double margin, Matrix* d_anchors = nullptr,
                    Reduction reduction = Reduction::mean);

double loss_target_total(double l_bag, double l_enc, double l_triplet, const LossWeights& weights);

// ---------------------------------------------------------------------------
// Model-level objectives. Gradients are accumulated into `grads` (a buffer
// from zero_grads_like) for every group the objective depends on.
// ---------------------------------------------------------------------------

using BagRefs = std::vector<const Bag*>;

struct InstanceBatch {
  Matrix features;  // d_in x n
  std::vector<Severity> labels;
};

/// Stage 1 instance objective through the source encoder and k-rank head.
double source_instance_objective(const ModelState& state, const InstanceBatch& batch,
                                 ModelState* grads, Reduction reduction = Reduction::mean);

/// Stage 1 bag objective through the source encoder, tokens and bag heads.
double source_bag_objective(const ModelState& state, const BagRefs& bags, ModelState* grads,
                            Reduction reduction = Reduction::mean);

/// Discriminator objective on source-encoded and target-encoded instances.
double discriminator_objective(const ModelState& state, const Matrix& source_features,
                               const Matrix& target_features, ModelState* grads,
                               Reduction reduction = Reduction::mean);

struct TargetTerms {
  bool bag = true;          // shared (frozen) aggregation tokens
  bool adversarial = true;  // encoder confusion loss
  bool triplet = true;      // max-severity triplet loss
};

struct TargetLossBreakdown {
  double bag = 0.0;
  double enc = 0.0;
  double triplet = 0.0;
  double total = 0.0;
  std::size_t anchors = 0;
};

/// Stage 2 target-encoder objective L_bag + L_enc + alpha L_triplet over a
/// batch of target bags. Only bag labels are read; anchors are gated with the
/// source instance head on the current target embeddings.
TargetLossBreakdown target_objective(const ModelState& state, const BagRefs& target_bags,
                                     const PrototypeSet& prototypes, const TargetTerms& terms,
                                     const LossWeights& weights, ModelState* grads,
                                     Reduction reduction = Reduction::mean);

/// Stacks the instances of `bags` column-wise; `offsets` receives the first
/// column of each bag plus a final end offset.
Matrix stack_bag_features(const BagRefs& bags, std::vector<Index>* offsets = nullptr);

}  // namespace sevalign
