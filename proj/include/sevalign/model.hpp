#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sevalign/data.hpp"
#include "sevalign/numerics.hpp"

namespace sevalign {

/// Probabilities that reach a logarithm are clamped to [kProbClamp, 1 - kProbClamp].
inline constexpr double kProbClamp = 1e-7;

/// Ordinal instance classifier: K-1 logits sharing one weight vector,
/// logit_k = w . e + b_k.
struct KRankHead {
  Vector weight;
  Vector thresholds;
};

/// K-1 learnable query vectors, one per rank task; row k is token a_{k+1}.
struct AggregationTokens {
  Matrix tokens;
};

/// One linear scorer per token over that token's pooled bag embedding.
struct BagHeads {
  Matrix weights;  // (K-1) x d
  Vector biases;   // K-1
};

/// Per-class mean source embedding. Column k-1 holds the prototype of class k.
struct PrototypeSet {
  Matrix prototypes;
  std::vector<std::size_t> counts;

  int num_classes() const { return static_cast<int>(counts.size()); }
  Vector prototype(Severity k) const;
};

enum class ParamGroup {
  source_encoder,
  target_encoder,
  instance_head,
  tokens,
  bag_heads,
  discriminator,
};

inline constexpr std::size_t kGroupCount = 6;
inline constexpr std::array<ParamGroup, kGroupCount> kAllGroups{
    ParamGroup::source_encoder, ParamGroup::target_encoder, ParamGroup::instance_head,
    ParamGroup::tokens,         ParamGroup::bag_heads,      ParamGroup::discriminator};

std::string_view to_string(ParamGroup group);

struct ModelDims {
  int input_dim = 16;
  int embed_dim = 8;
  int num_classes = 4;
  std::vector<int> encoder_hidden{32};
  std::vector<int> discriminator_hidden{32};
};

/// Every trainable parameter of the method plus per-group freeze flags.
struct ModelState {
  int num_classes = 0;
  int input_dim = 0;
  int embed_dim = 0;
  Mlp source_encoder;
  Mlp target_encoder;
  KRankHead instance_head;
  AggregationTokens tokens;
  BagHeads bag_heads;
  Mlp discriminator;
  std::array<bool, kGroupCount> frozen{};

  bool is_frozen(ParamGroup g) const { return frozen[static_cast<std::size_t>(g)]; }
  void set_frozen(ParamGroup g, bool value) { frozen[static_cast<std::size_t>(g)] = value; }
};

/// Random initialization from `seed`. The target encoder starts as an exact
/// copy of the source encoder.
ModelState init_model(const ModelDims& dims, std::uint64_t seed);

/// Gradient buffer with the same shapes as `state`, all zeros.
ModelState zero_grads_like(const ModelState& state);

/// Throws ShapeError if any group disagrees with (K, d_in, d).
void validate_model(const ModelState& state);

Index group_size(const ModelState& state, ParamGroup group);
Vector pack_groups(const ModelState& state, std::span<const ParamGroup> groups);
void unpack_groups(ModelState& state, std::span<const ParamGroup> groups, const Vector& flat);

// ---------------------------------------------------------------------------
// Forward semantics
// ---------------------------------------------------------------------------

/// Extended binary targets: component k (0-based) is 1 iff y > k+1.
Vector krank_encode_label(Severity y, int num_classes);

/// 1 + number of rank probabilities strictly above 0.5.
Severity krank_decode(const Vector& probabilities);

Vector instance_logits(const KRankHead& head, const Vector& embedding);
/// Batched form; columns of `embeddings` are instances, result is (K-1) x n.
Matrix instance_logits(const KRankHead& head, const Matrix& embeddings);

/// Predicted severity per column of `embeddings`.
std::vector<Severity> predict_instances(const KRankHead& head, const Matrix& embeddings);

/// softmax_j(a . e_j / sqrt(d)) over the columns of `embeddings`.
Vector bag_attention(const Vector& token, const Matrix& embeddings);

/// Attention-weighted sum of the columns of `embeddings`.
Vector bag_embedding(const Vector& weights, const Matrix& embeddings);

/// logit_k = head_k(bag_embedding(bag_attention(a_k, E), E)) for each token.
Vector bag_logits(const AggregationTokens& tokens, const BagHeads& heads,
                  const Matrix& embeddings);

/// Reverse pass of bag_logits. Token/head gradients are accumulated into the
/// non-null outputs; returns dL/dE.
Matrix bag_logits_backward(const AggregationTokens& tokens, const BagHeads& heads,
                           const Matrix& embeddings, const Vector& d_logits,
                           AggregationTokens* d_tokens, BagHeads* d_heads);

Severity predict_bag(const AggregationTokens& tokens, const BagHeads& heads,
                     const Matrix& embeddings);

/// Columns are the encoded instances of `bag`.
Matrix encode_bag(const Mlp& encoder, const Bag& bag);

/// Per-class mean of source embeddings. Throws naming any class without
/// labelled source instances.
PrototypeSet compute_prototypes(const DomainDataset& source, const Mlp& source_encoder);

/// Clamped sigmoid of the discriminator output: probability that `embedding`
/// comes from the source domain.
double discriminate(const Mlp& discriminator, const Vector& embedding);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Canonical JSON text of one parameter group. Byte-stable: equal parameters
/// always produce equal strings.
std::string serialize_group(const ModelState& state, ParamGroup group);

std::string serialize_checkpoint(const ModelState& state);
ModelState parse_checkpoint(std::string_view text);

void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace sevalign
