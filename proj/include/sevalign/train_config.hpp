#pragma once

#include <cstdint>
#include <vector>

#include "sevalign/losses.hpp"

namespace sevalign {

/// Small learning rates suited to fine-tuning a pretrained image backbone;
/// selected with TrainConfig::use_reference_rates.
struct ReferenceRates {
  double pretrain_encoder = 3e-6;
  double pretrain_instance_head = 3e-6;
  double pretrain_bag = 1e-5;
  double adapt_discriminator = 1e-4;
  double adapt_encoder = 1e-6;
};

struct TrainConfig {
  // Architecture. d_in and K come from the data.
  int embed_dim = 8;
  std::vector<int> encoder_hidden{32};
  std::vector<int> discriminator_hidden{32};

  // Stage 1: source pre-training.
  double pretrain_lr_encoder = 1e-3;
  double pretrain_lr_instance_head = 1e-3;
  double pretrain_lr_bag = 1e-3;  // aggregation tokens and bag heads
  int pretrain_max_epochs = 1500;
  int patience = 100;
  double validation_fraction = 0.2;

  // Stage 2: target adaptation.
  double adapt_lr_discriminator = 1e-3;
  double adapt_lr_encoder = 1e-4;
  int adapt_epochs = 150;

  int batch_size = 16;  // bags per mini-batch
  LossWeights weights{};
  Reduction reduction = Reduction::mean;
  std::uint64_t seed = 0;

  // Ablation switches.
  bool use_adv = true;
  bool use_shared_tokens = true;
  bool use_triplet = true;

  bool use_reference_rates = false;
  ReferenceRates reference_rates{};
};

/// Learning rates actually used by the trainer after applying
/// use_reference_rates.
struct EffectiveRates {
  double pretrain_encoder;
  double pretrain_instance_head;
  double pretrain_bag;
  double adapt_discriminator;
  double adapt_encoder;
};

EffectiveRates effective_rates(const TrainConfig& cfg);

/// Throws ConfigError naming the first invalid field.
void validate_train_config(const TrainConfig& cfg);

}  // namespace sevalign
