#include "sevalign/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sevalign/errors.hpp"

namespace sevalign {

namespace {

double reduce_scale(Reduction reduction, double count) {
  return reduction == Reduction::mean ? 1.0 / count : 1.0;
}

/// Clamped probability and the derivative of the clamp-aware -log terms.
struct DiscOutput {
  Vector prob;
  Vector inside;  // 1 where sigmoid(z) lies strictly inside the clamp range
};

DiscOutput disc_probabilities(const Matrix& logits) {
  DiscOutput out{Vector(logits.cols()), Vector(logits.cols())};
  for (Index j = 0; j < logits.cols(); ++j) {
    const double p = sigmoid(logits(0, j));
    const double c = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    out.prob[j] = c;
    out.inside[j] = (c == p) ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace

double loss_instance_krank(const Matrix& logits, const Matrix& targets, Matrix* d_logits,
                           Reduction reduction) {
  if (logits.cols() == 0 || logits.rows() == 0) throw ValidationError("k-rank loss: empty batch");
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw ShapeError("k-rank loss: logits and targets differ in shape");
  }
  const double scale = reduce_scale(reduction, static_cast<double>(logits.size()));
  double total = 0.0;
  if (d_logits) d_logits->resize(logits.rows(), logits.cols());
  for (Index j = 0; j < logits.cols(); ++j) {
    for (Index k = 0; k < logits.rows(); ++k) {
      const double z = logits(k, j);
      const double t = targets(k, j);
      // -t log s(z) - (1-t) log(1-s(z)) = softplus(z) - t z
      total += softplus(z) - t * z;
      if (d_logits) (*d_logits)(k, j) = scale * (sigmoid(z) - t);
    }
  }
  return scale * total;
}

double loss_bag(const Matrix& bag_logits, std::span<const Severity> bag_labels, Matrix* d_logits,
                Reduction reduction) {
  if (bag_labels.size() != static_cast<std::size_t>(bag_logits.cols())) {
    throw ShapeError("bag loss: " + std::to_string(bag_labels.size()) + " labels for " +
                     std::to_string(bag_logits.cols()) + " bags");
  }
  Matrix targets(bag_logits.rows(), bag_logits.cols());
  const int K = static_cast<int>(bag_logits.rows()) + 1;
  for (std::size_t b = 0; b < bag_labels.size(); ++b) {
    targets.col(static_cast<Index>(b)) = krank_encode_label(bag_labels[b], K);
  }
  return loss_instance_krank(bag_logits, targets, d_logits, reduction);
}

double loss_disc(const Mlp& discriminator, const Matrix& source_embeddings,
                 const Matrix& target_embeddings, AdversarialGrads* grads, Reduction reduction) {
  const Index ns = source_embeddings.cols();
  const Index nt = target_embeddings.cols();
  if (ns == 0 || nt == 0) throw ValidationError("loss_disc: both domains need embeddings");
  if (source_embeddings.rows() != target_embeddings.rows()) {
    throw ShapeError("loss_disc: source and target embedding dimensions differ");
  }
  Matrix all(source_embeddings.rows(), ns + nt);
  all << source_embeddings, target_embeddings;
  MlpTrace trace;
  const Matrix logits = mlp_forward(discriminator, all, grads ? &trace : nullptr);
  const DiscOutput d = disc_probabilities(logits);
  const double scale = reduce_scale(reduction, static_cast<double>(ns + nt));

  double total = 0.0;
  Matrix d_logits(1, ns + nt);
  for (Index j = 0; j < ns + nt; ++j) {
    const double p = d.prob[j];
    if (j < ns) {
      total -= std::log(p);
      d_logits(0, j) = scale * d.inside[j] * (p - 1.0);
    } else {
      total -= std::log(1.0 - p);
      d_logits(0, j) = scale * d.inside[j] * p;
    }
  }
  if (grads) {
    if (grads->discriminator.layers.empty()) grads->discriminator = zeros_like(discriminator);
    const Matrix d_all = mlp_backward(discriminator, trace, d_logits, &grads->discriminator);
    grads->source = d_all.leftCols(ns);
    grads->target = d_all.rightCols(nt);
  }
  return scale * total;
}

double loss_enc(const Mlp& discriminator, const Matrix& target_embeddings,
                AdversarialGrads* grads, Reduction reduction) {
  const Index nt = target_embeddings.cols();
  if (nt == 0) throw ValidationError("loss_enc: no target embeddings");
  MlpTrace trace;
  const Matrix logits = mlp_forward(discriminator, target_embeddings, grads ? &trace : nullptr);
  const DiscOutput d = disc_probabilities(logits);
  const double scale = reduce_scale(reduction, static_cast<double>(nt));
  double total = 0.0;
  Matrix d_logits(1, nt);
  for (Index j = 0; j < nt; ++j) {
    total -= std::log(d.prob[j]);
    d_logits(0, j) = scale * d.inside[j] * (d.prob[j] - 1.0);
  }
  if (grads) {
    if (grads->discriminator.layers.empty()) grads->discriminator = zeros_like(discriminator);
    grads->target = mlp_backward(discriminator, trace, d_logits, &grads->discriminator);
    grads->source.resize(target_embeddings.rows(), 0);
  }
  return scale * total;
}

std::vector<TripletGate> select_triplet_anchors(std::size_t bag_index, Severity bag_label,
                                                std::span<const Severity> predicted,
                                                int num_classes) {
  std::vector<TripletGate> gates;
  if (bag_label.value() > num_classes - 1) return gates;
  for (std::size_t j = 0; j < predicted.size(); ++j) {
    if (predicted[j] > bag_label) gates.push_back({bag_index, j, bag_label, predicted[j]});
  }
  return gates;
}

double loss_triplet(const Matrix& anchors, const Matrix& positives, const Matrix& negatives,
                    double margin, Matrix* d_anchors, Reduction reduction) {
  if (!(margin >= 0)) throw ValidationError("loss_triplet: margin must be >= 0");
  if (positives.rows() != anchors.rows() || negatives.rows() != anchors.rows() ||
      positives.cols() != anchors.cols() || negatives.cols() != anchors.cols()) {
    throw ShapeError("loss_triplet: anchors, positives and negatives differ in shape");
  }
  if (d_anchors) d_anchors->setZero(anchors.rows(), anchors.cols());
  const Index m = anchors.cols();
  if (m == 0) return 0.0;
  const double scale = reduce_scale(reduction, static_cast<double>(m));
  double total = 0.0;
  for (Index j = 0; j < m; ++j) {
    const Vector to_pos = anchors.col(j) - positives.col(j);
    const Vector to_neg = anchors.col(j) - negatives.col(j);
    const double dp = to_pos.norm();
    const double dn = to_neg.norm();
    const double hinge = dp - dn + margin;
    if (hinge <= 0) continue;
    total += hinge;
    if (d_anchors) {
      if (dp > 0) d_anchors->col(j) += scale * to_pos / dp;
      if (dn > 0) d_anchors->col(j) -= scale * to_neg / dn;
    }
  }
  return scale * total;
}

double loss_target_total(double l_bag, double l_enc, double l_triplet, const LossWeights& weights) {
  return l_bag + l_enc + weights.alpha * l_triplet;
}

// ---------------------------------------------------------------------------

Matrix stack_bag_features(const BagRefs& bags, std::vector<Index>* offsets) {
  Index total = 0;
  Index dim = 0;
  for (const Bag* bag : bags) {
    if (bag->instances.empty()) throw ValidationError("bag '" + bag->bag_id + "' is empty");
    total += static_cast<Index>(bag->instances.size());
    dim = bag->instances.front().features.size();
  }
  Matrix x(dim, total);
  if (offsets) offsets->assign(1, 0);
  Index col = 0;
  for (const Bag* bag : bags) {
    for (const auto& inst : bag->instances) {
      if (inst.features.size() != dim) throw ShapeError("bag '" + bag->bag_id + "': ragged features");
      x.col(col++) = inst.features;
    }
    if (offsets) offsets->push_back(col);
  }
  return x;
}

double source_instance_objective(const ModelState& state, const InstanceBatch& batch,
                                 ModelState* grads, Reduction reduction) {
  const Index n = batch.features.cols();
  if (static_cast<std::size_t>(n) != batch.labels.size()) {
    throw ShapeError("instance batch: feature/label count mismatch");
  }
  MlpTrace trace;
  const Matrix emb = mlp_forward(state.source_encoder, batch.features, grads ? &trace : nullptr);
  const Matrix logits = instance_logits(state.instance_head, emb);
  Matrix targets(logits.rows(), n);
  for (Index j = 0; j < n; ++j) {
    targets.col(j) = krank_encode_label(batch.labels[static_cast<std::size_t>(j)], state.num_classes);
  }
  Matrix d_logits;
  const double value = loss_instance_krank(logits, targets, grads ? &d_logits : nullptr, reduction);
  if (grads) {
    // logit_kj = w . e_j + b_k
    grads->instance_head.thresholds += d_logits.rowwise().sum();
    const Eigen::RowVectorXd d_scores = d_logits.colwise().sum();
    grads->instance_head.weight += emb * d_scores.transpose();
    const Matrix d_emb = state.instance_head.weight * d_scores;
    mlp_backward(state.source_encoder, trace, d_emb, &grads->source_encoder);
  }
  return value;
}

namespace {

/// Bag loss through `encoder` and the (shared) tokens and heads. Gradients for
/// the encoder go to `d_encoder`; token/head gradients to `grads`.
double bag_objective(const ModelState& state, const Mlp& encoder, const BagRefs& bags,
                     Mlp* d_encoder, ModelState* grads, Reduction reduction) {
  if (bags.empty()) throw ValidationError("bag objective: empty batch");
  std::vector<Index> offsets;
  const Matrix x = stack_bag_features(bags, &offsets);
  MlpTrace trace;
  const Matrix emb = mlp_forward(encoder, x, d_encoder ? &trace : nullptr);
  const Index B = static_cast<Index>(bags.size());
  Matrix logits(state.num_classes - 1, B);
  std::vector<Severity> labels;
  labels.reserve(bags.size());
  for (Index b = 0; b < B; ++b) {
    logits.col(b) = bag_logits(state.tokens, state.bag_heads,
                               emb.middleCols(offsets[b], offsets[b + 1] - offsets[b]));
    labels.push_back(bags[static_cast<std::size_t>(b)]->bag_label);
  }
  Matrix d_logits;
  const double value = loss_bag(logits, labels, (d_encoder || grads) ? &d_logits : nullptr, reduction);
  if (d_encoder || grads) {
    Matrix d_emb(emb.rows(), emb.cols());
    for (Index b = 0; b < B; ++b) {
      const Index len = offsets[b + 1] - offsets[b];
      d_emb.middleCols(offsets[b], len) = bag_logits_backward(
          state.tokens, state.bag_heads, emb.middleCols(offsets[b], len), d_logits.col(b),
          grads ? &grads->tokens : nullptr, grads ? &grads->bag_heads : nullptr);
    }
    if (d_encoder) mlp_backward(encoder, trace, d_emb, d_encoder);
  }
  return value;
}

}  // namespace

double source_bag_objective(const ModelState& state, const BagRefs& bags, ModelState* grads,
                            Reduction reduction) {
  return bag_objective(state, state.source_encoder, bags,
                       grads ? &grads->source_encoder : nullptr, grads, reduction);
}

double discriminator_objective(const ModelState& state, const Matrix& source_features,
                               const Matrix& target_features, ModelState* grads,
                               Reduction reduction) {
  MlpTrace src_trace, tgt_trace;
  const Matrix es = mlp_forward(state.source_encoder, source_features, grads ? &src_trace : nullptr);
  const Matrix et = mlp_forward(state.target_encoder, target_features, grads ? &tgt_trace : nullptr);
  if (!grads) return loss_disc(state.discriminator, es, et, nullptr, reduction);
  AdversarialGrads g;
  g.discriminator = zeros_like(state.discriminator);
  const double value = loss_disc(state.discriminator, es, et, &g, reduction);
  for (std::size_t l = 0; l < g.discriminator.layers.size(); ++l) {
    grads->discriminator.layers[l].weight += g.discriminator.layers[l].weight;
    grads->discriminator.layers[l].bias += g.discriminator.layers[l].bias;
  }
  mlp_backward(state.source_encoder, src_trace, g.source, &grads->source_encoder);
  mlp_backward(state.target_encoder, tgt_trace, g.target, &grads->target_encoder);
  return value;
}

TargetLossBreakdown target_objective(const ModelState& state, const BagRefs& target_bags,
                                     const PrototypeSet& prototypes, const TargetTerms& terms,
                                     const LossWeights& weights, ModelState* grads,
                                     Reduction reduction) {
  if (target_bags.empty()) throw ValidationError("target objective: empty batch");
  std::vector<Index> offsets;
  const Matrix x = stack_bag_features(target_bags, &offsets);
  MlpTrace trace;
  const Matrix emb = mlp_forward(state.target_encoder, x, grads ? &trace : nullptr);
  Matrix d_emb = Matrix::Zero(emb.rows(), emb.cols());
  const Index B = static_cast<Index>(target_bags.size());

  TargetLossBreakdown out;
  if (terms.bag) {
    Matrix logits(state.num_classes - 1, B);
    std::vector<Severity> labels;
    for (Index b = 0; b < B; ++b) {
      logits.col(b) = bag_logits(state.tokens, state.bag_heads,
                                 emb.middleCols(offsets[b], offsets[b + 1] - offsets[b]));
      labels.push_back(target_bags[static_cast<std::size_t>(b)]->bag_label);
    }
    Matrix d_logits;
    out.bag = loss_bag(logits, labels, grads ? &d_logits : nullptr, reduction);
    if (grads) {
      for (Index b = 0; b < B; ++b) {
        const Index len = offsets[b + 1] - offsets[b];
        // Tokens and heads are shared with the source model and stay frozen;
        // only the embedding gradient is used.
        d_emb.middleCols(offsets[b], len) += bag_logits_backward(
            state.tokens, state.bag_heads, emb.middleCols(offsets[b], len), d_logits.col(b),
            nullptr, nullptr);
      }
    }
  }

  if (terms.adversarial) {
    AdversarialGrads g;
    out.enc = loss_enc(state.discriminator, emb, grads ? &g : nullptr, reduction);
    if (grads) d_emb += g.target;
  }

  if (terms.triplet) {
    const std::vector<Severity> predicted = predict_instances(state.instance_head, emb);
    std::vector<TripletGate> gates;
    for (Index b = 0; b < B; ++b) {
      const auto begin = predicted.begin() + offsets[b];
      const auto bag_gates = select_triplet_anchors(
          static_cast<std::size_t>(b), target_bags[static_cast<std::size_t>(b)]->bag_label,
          std::span<const Severity>(&*begin, static_cast<std::size_t>(offsets[b + 1] - offsets[b])),
          state.num_classes);
      gates.insert(gates.end(), bag_gates.begin(), bag_gates.end());
    }
    const Index m = static_cast<Index>(gates.size());
    Matrix anchors(emb.rows(), m), pos(emb.rows(), m), neg(emb.rows(), m);
    std::vector<Index> columns(gates.size());
    for (Index a = 0; a < m; ++a) {
      const auto& gate = gates[static_cast<std::size_t>(a)];
      const Index col = offsets[static_cast<Index>(gate.bag_index)] + static_cast<Index>(gate.instance_index);
      columns[static_cast<std::size_t>(a)] = col;
      anchors.col(a) = emb.col(col);
      pos.col(a) = prototypes.prototype(gate.bag_label);
      neg.col(a) = prototypes.prototype(gate.predicted);
    }
    Matrix d_anchors;
    out.triplet = loss_triplet(anchors, pos, neg, weights.margin, grads ? &d_anchors : nullptr, reduction);
    out.anchors = gates.size();
    if (grads) {
      for (Index a = 0; a < m; ++a) {
        d_emb.col(columns[static_cast<std::size_t>(a)]) += weights.alpha * d_anchors.col(a);
      }
    }
  }

  out.total = loss_target_total(out.bag, out.enc, out.triplet, weights);
  if (grads) mlp_backward(state.target_encoder, trace, d_emb, &grads->target_encoder);
  return out;
}

}  // namespace sevalign
