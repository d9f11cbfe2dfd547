#include "sevalign/grad_suite.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "sevalign/losses.hpp"
#include "sevalign/model.hpp"
#include "sevalign/numerics.hpp"

namespace sevalign {

namespace {

// Redraw anything this close to a hinge or a gating decision.
constexpr double kBoundaryGap = 1e-3;

struct Probe {
  std::string name;
  Objective fn;
  Vector params;
};

Matrix random_matrix(Index rows, Index cols, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

/// Small random problem: a perturbed model plus labelled source and target bags.
struct SmallProblem {
  ModelState state;
  std::vector<Bag> source_bags;
  std::vector<Bag> target_bags;
  PrototypeSet prototypes;
  Reduction reduction = Reduction::mean;

  BagRefs source_refs() const {
    BagRefs r;
    for (const auto& b : source_bags) r.push_back(&b);
    return r;
  }
  BagRefs target_refs() const {
    BagRefs r;
    for (const auto& b : target_bags) r.push_back(&b);
    return r;
  }
};

std::vector<Bag> random_bags(int count, int d_in, int K, Domain domain, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size_dist(1, 5);
  std::uniform_int_distribution<int> label_dist(1, K);
  std::vector<Bag> bags;
  for (int b = 0; b < count; ++b) {
    Bag bag;
    bag.bag_id = "b" + std::to_string(b);
    bag.domain = domain;
    const int n = size_dist(rng);
    int worst = 1;
    for (int j = 0; j < n; ++j) {
      Instance inst;
      inst.id = bag.bag_id + "_" + std::to_string(j);
      inst.features = random_matrix(d_in, 1, 1.5, rng).col(0);
      const int y = label_dist(rng);
      inst.label = Severity(y);
      worst = std::max(worst, y);
      bag.instances.push_back(std::move(inst));
    }
    bag.bag_label = Severity(worst);
    bags.push_back(std::move(bag));
  }
  return bags;
}

SmallProblem make_problem(std::mt19937_64& rng, int index) {
  std::uniform_int_distribution<int> d_in_dist(2, 8), d_dist(2, 6), k_dist(3, 4), bags_dist(1, 4),
      hidden_dist(3, 6);
  ModelDims dims;
  dims.input_dim = d_in_dist(rng);
  dims.embed_dim = d_dist(rng);
  dims.num_classes = k_dist(rng);
  dims.encoder_hidden = {hidden_dist(rng)};
  dims.discriminator_hidden = {hidden_dist(rng)};

  SmallProblem p;
  p.state = init_model(dims, rng());
  p.reduction = index % 2 == 0 ? Reduction::mean : Reduction::sum;
  // Move every group off its initialization so zero biases and the shared
  // encoder copy do not hide mistakes.
  for (auto g : kAllGroups) {
    const std::array<ParamGroup, 1> group{g};
    Vector v = pack_groups(p.state, group);
    v += random_matrix(v.size(), 1, 0.3, rng).col(0);
    unpack_groups(p.state, group, v);
  }
  p.source_bags = random_bags(bags_dist(rng), dims.input_dim, dims.num_classes, Domain::source, rng);
  p.target_bags = random_bags(bags_dist(rng), dims.input_dim, dims.num_classes, Domain::target, rng);
  p.prototypes.prototypes = random_matrix(dims.embed_dim, dims.num_classes, 1.0, rng);
  p.prototypes.counts.assign(static_cast<std::size_t>(dims.num_classes), 1);
  return p;
}

/// Objective over the packed parameters of `groups`.
template <typename F>
Probe model_probe(std::string name, const ModelState& state, std::vector<ParamGroup> groups, F f) {
  Probe probe;
  probe.name = std::move(name);
  probe.params = pack_groups(state, groups);
  probe.fn = [state, groups, f](const Vector& params, Vector* grad) {
    ModelState s = state;
    unpack_groups(s, groups, params);
    if (!grad) return f(s, nullptr);
    ModelState g = zero_grads_like(s);
    const double value = f(s, &g);
    *grad = pack_groups(g, groups);
    return value;
  };
  return probe;
}

/// Objective over the entries of one matrix argument.
Probe matrix_probe(std::string name, const Matrix& m,
                   std::function<double(const Matrix&, Matrix*)> f) {
  Probe probe;
  probe.name = std::move(name);
  probe.params = m.reshaped();
  const Index rows = m.rows(), cols = m.cols();
  probe.fn = [rows, cols, f](const Vector& params, Vector* grad) {
    const Matrix x = params.reshaped(rows, cols);
    if (!grad) return f(x, nullptr);
    Matrix g;
    const double value = f(x, &g);
    *grad = g.reshaped();
    return value;
  };
  return probe;
}

bool near_gate(const SmallProblem& p) {
  const Matrix emb = mlp_forward(p.state.target_encoder, stack_bag_features(p.target_refs()));
  const Matrix logits = instance_logits(p.state.instance_head, emb);
  return (logits.array().abs() < kBoundaryGap).any();
}

/// Hinge arguments of the anchors target_objective would select.
bool near_target_hinge(const SmallProblem& p, double margin) {
  std::vector<Index> offsets;
  const Matrix emb = mlp_forward(p.state.target_encoder, stack_bag_features(p.target_refs(), &offsets));
  const auto predicted = predict_instances(p.state.instance_head, emb);
  for (std::size_t b = 0; b < p.target_bags.size(); ++b) {
    for (Index c = offsets[b]; c < offsets[b + 1]; ++c) {
      const Severity y = p.target_bags[b].bag_label;
      const Severity yhat = predicted[static_cast<std::size_t>(c)];
      if (y.value() >= p.state.num_classes || yhat <= y) continue;
      const double arg = (emb.col(c) - p.prototypes.prototype(y)).norm() -
                         (emb.col(c) - p.prototypes.prototype(yhat)).norm() + margin;
      if (std::abs(arg) < kBoundaryGap) return true;
    }
  }
  return false;
}

std::vector<Probe> probes_for(const std::string& loss, std::mt19937_64& rng, int index) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (;;) {
    SmallProblem p = make_problem(rng, index);
    const int K = p.state.num_classes;
    const Reduction red = p.reduction;
    std::vector<Probe> probes;

    if (loss == "loss_instance_krank") {
      const int n = static_cast<int>(1 + rng() % 12);
      const Matrix logits = random_matrix(K - 1, n, 2.0, rng);
      Matrix targets(K - 1, n);
      for (Index j = 0; j < n; ++j)
        targets.col(j) = krank_encode_label(Severity(static_cast<int>(1 + rng() % K)), K);
      probes.push_back(matrix_probe("logits", logits, [targets, red](const Matrix& x, Matrix* g) {
        return loss_instance_krank(x, targets, g, red);
      }));
      InstanceBatch batch;
      batch.features = stack_bag_features(p.source_refs());
      for (const auto& bag : p.source_bags)
        for (const auto& inst : bag.instances) batch.labels.push_back(*inst.label);
      probes.push_back(model_probe("source_encoder+instance_head", p.state,
                                   {ParamGroup::source_encoder, ParamGroup::instance_head},
                                   [batch, red](const ModelState& s, ModelState* g) {
                                     return source_instance_objective(s, batch, g, red);
                                   }));
    } else if (loss == "loss_bag") {
      const int B = static_cast<int>(1 + rng() % 4);
      const Matrix logits = random_matrix(K - 1, B, 2.0, rng);
      std::vector<Severity> labels;
      for (int b = 0; b < B; ++b) labels.push_back(Severity(static_cast<int>(1 + rng() % K)));
      probes.push_back(matrix_probe("bag_logits", logits, [labels, red](const Matrix& x, Matrix* g) {
        return loss_bag(x, labels, g, red);
      }));
      auto bags = std::make_shared<std::vector<Bag>>(p.source_bags);
      probes.push_back(model_probe("source_encoder+tokens+bag_heads", p.state,
                                   {ParamGroup::source_encoder, ParamGroup::tokens, ParamGroup::bag_heads},
                                   [bags, red](const ModelState& s, ModelState* g) {
                                     BagRefs refs;
                                     for (const auto& b : *bags) refs.push_back(&b);
                                     return source_bag_objective(s, refs, g, red);
                                   }));
    } else if (loss == "loss_disc") {
      const Matrix xs = stack_bag_features(p.source_refs());
      const Matrix xt = stack_bag_features(p.target_refs());
      const Matrix es = random_matrix(p.state.embed_dim, xs.cols(), 1.0, rng);
      const Matrix et = random_matrix(p.state.embed_dim, xt.cols(), 1.0, rng);
      const Mlp disc = p.state.discriminator;
      probes.push_back(matrix_probe("source_embeddings", es, [disc, et, red](const Matrix& x, Matrix* g) {
        AdversarialGrads ag;
        ag.discriminator = zeros_like(disc);
        const double v = loss_disc(disc, x, et, g ? &ag : nullptr, red);
        if (g) *g = ag.source;
        return v;
      }));
      probes.push_back(model_probe("discriminator+encoders", p.state,
                                   {ParamGroup::discriminator, ParamGroup::source_encoder,
                                    ParamGroup::target_encoder},
                                   [xs, xt, red](const ModelState& s, ModelState* g) {
                                     return discriminator_objective(s, xs, xt, g, red);
                                   }));
    } else if (loss == "loss_enc") {
      const Matrix xt = stack_bag_features(p.target_refs());
      const Matrix et = random_matrix(p.state.embed_dim, xt.cols(), 1.0, rng);
      const Mlp disc = p.state.discriminator;
      probes.push_back(matrix_probe("target_embeddings", et, [disc, red](const Matrix& x, Matrix* g) {
        AdversarialGrads ag;
        ag.discriminator = zeros_like(disc);
        const double v = loss_enc(disc, x, g ? &ag : nullptr, red);
        if (g) *g = ag.target;
        return v;
      }));
      auto bags = std::make_shared<std::vector<Bag>>(p.target_bags);
      const PrototypeSet protos = p.prototypes;
      probes.push_back(model_probe("target_encoder", p.state, {ParamGroup::target_encoder},
                                   [bags, protos, red](const ModelState& s, ModelState* g) {
                                     BagRefs refs;
                                     for (const auto& b : *bags) refs.push_back(&b);
                                     return target_objective(s, refs, protos, {false, true, false},
                                                             LossWeights{}, g, red)
                                         .total;
                                   }));
    } else if (loss == "loss_triplet") {
      const double margin = 0.5 + unit(rng);
      const int n = static_cast<int>(1 + rng() % 6);
      const int d = p.state.embed_dim;
      const Matrix anchors = random_matrix(d, n, 1.0, rng);
      const Matrix pos = random_matrix(d, n, 1.0, rng);
      const Matrix neg = random_matrix(d, n, 1.0, rng);
      bool near = false;
      for (Index j = 0; j < n; ++j) {
        const double arg = (anchors.col(j) - pos.col(j)).norm() - (anchors.col(j) - neg.col(j)).norm() + margin;
        near |= std::abs(arg) < kBoundaryGap;
      }
      if (near || near_gate(p) || near_target_hinge(p, margin)) continue;
      probes.push_back(matrix_probe("anchors", anchors, [pos, neg, margin, red](const Matrix& x, Matrix* g) {
        return loss_triplet(x, pos, neg, margin, g, red);
      }));
      auto bags = std::make_shared<std::vector<Bag>>(p.target_bags);
      const PrototypeSet protos = p.prototypes;
      const LossWeights w{1.0, margin};
      probes.push_back(model_probe("target_encoder", p.state, {ParamGroup::target_encoder},
                                   [bags, protos, w, red](const ModelState& s, ModelState* g) {
                                     BagRefs refs;
                                     for (const auto& b : *bags) refs.push_back(&b);
                                     return target_objective(s, refs, protos, {false, false, true}, w, g, red)
                                         .total;
                                   }));
    } else if (loss == "loss_target_total") {
      const LossWeights w{0.05 + unit(rng), 0.5 + unit(rng)};
      if (near_gate(p) || near_target_hinge(p, w.margin)) continue;
      auto bags = std::make_shared<std::vector<Bag>>(p.target_bags);
      const PrototypeSet protos = p.prototypes;
      probes.push_back(model_probe("target_encoder", p.state, {ParamGroup::target_encoder},
                                   [bags, protos, w, red](const ModelState& s, ModelState* g) {
                                     BagRefs refs;
                                     for (const auto& b : *bags) refs.push_back(&b);
                                     return target_objective(s, refs, protos, {true, true, true}, w, g, red)
                                         .total;
                                   }));
    } else {
      throw std::invalid_argument("unknown loss '" + loss + "'");
    }
    return probes;
  }
}

}  // namespace

std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteOptions& options) {
  static const char* const kLosses[] = {"loss_instance_krank", "loss_bag",     "loss_disc",
                                        "loss_enc",            "loss_triplet", "loss_target_total"};
  std::vector<GradSuiteEntry> out;
  std::uint64_t stream = 0;
  for (const char* loss : kLosses) {
    std::mt19937_64 rng(derive_seed(options.seed, ++stream));
    GradSuiteEntry entry;
    entry.loss = loss;
    entry.configurations = options.configurations;
    for (int c = 0; c < options.configurations; ++c) {
      for (const auto& probe : probes_for(loss, rng, c)) {
        const auto report = grad_check(probe.fn, probe.params, options.step, options.tolerance);
        if (entry.worst_configuration < 0 || report.max_rel_error > entry.max_rel_error) {
          entry.max_rel_error = report.max_rel_error;
          entry.worst_configuration = c;
          entry.worst_probe = probe.name;
        }
      }
    }
    entry.passed = entry.max_rel_error < options.tolerance;
    out.push_back(std::move(entry));
  }
  return out;
}

nlohmann::json grad_suite_to_json(const std::vector<GradSuiteEntry>& entries) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : entries) {
    out.push_back({{"loss", e.loss},
                   {"configurations", e.configurations},
                   {"max_rel_error", e.max_rel_error},
                   {"worst_configuration", e.worst_configuration},
                   {"worst_probe", e.worst_probe},
                   {"passed", e.passed}});
  }
  return out;
}

}  // namespace sevalign
