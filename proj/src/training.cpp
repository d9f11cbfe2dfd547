#include "sevalign/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>

#include "sevalign/config.hpp"
#include "sevalign/errors.hpp"
#include "sevalign/losses.hpp"

namespace sevalign {

using json = nlohmann::json;

namespace {

// Sub-stream identifiers for derive_seed.
constexpr std::uint64_t kSplitStream = 11;
constexpr std::uint64_t kInstanceOrderStream = 1'000'000;
constexpr std::uint64_t kBagOrderStream = 2'000'000;
constexpr std::uint64_t kTargetOrderStream = 3'000'000;
constexpr std::uint64_t kSourceOrderStream = 4'000'000;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Adam update of one parameter group. Frozen groups are never touched.
void step_group(ModelState& state, const ModelState& grads, ParamGroup group, AdamState& adam,
                double lr) {
  if (state.is_frozen(group)) {
    throw std::logic_error("attempted to update frozen group " + std::string(to_string(group)));
  }
  const std::array<ParamGroup, 1> groups{group};
  Vector params = pack_groups(state, groups);
  adam_step(params, pack_groups(grads, groups), adam, lr);
  unpack_groups(state, groups, params);
}

/// Running mean of named loss components over the batches of one epoch.
class EpochAccumulator {
 public:
  void add(const std::string& name, double value) {
    auto& [sum, n] = totals_[name];
    sum += value;
    n += 1;
  }
  std::map<std::string, double> means() const {
    std::map<std::string, double> out;
    for (const auto& [name, total] : totals_) out[name] = total.first / total.second;
    return out;
  }

 private:
  std::map<std::string, std::pair<double, int>> totals_;
};

void require_all_classes(const DomainDataset& source) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(source.num_classes), 0);
  for (const auto& bag : source.bags) {
    for (const auto& inst : bag.instances) {
      if (!inst.label) {
        throw ValidationError("source instance '" + inst.id + "' in bag '" + bag.bag_id +
                              "' has no label");
      }
      counts[static_cast<std::size_t>(inst.label->value() - 1)] += 1;
    }
  }
  for (int k = 0; k < source.num_classes; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0) {
      throw ValidationError("source data has no instances of severity class " +
                            std::to_string(k + 1) + " (clinical " + std::to_string(k) + ")");
    }
  }
}

/// Stratified hold-out by bag label: returns (train, validation) bag indices.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_bags(
    const DomainDataset& ds, double fraction, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t b = 0; b < ds.bags.size(); ++b) by_label[ds.bags[b].bag_label.value()].push_back(b);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train, val;
  for (auto& [label, idx] : by_label) {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t n_val = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size())));
    if (fraction > 0 && n_val == 0 && idx.size() >= 2) n_val = 1;
    n_val = std::min(n_val, idx.size() - 1);
    val.insert(val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {train, val};
}

std::optional<double> bag_qwk(const ModelState& state, const DomainDataset& ds,
                              const std::vector<std::size_t>& bags) {
  std::vector<Severity> truth, pred;
  const Mlp& enc = encoder_for(state, ds.domain);
  for (auto b : bags) {
    truth.push_back(ds.bags[b].bag_label);
    pred.push_back(predict_bag(state.tokens, state.bag_heads, encode_bag(enc, ds.bags[b])));
  }
  return qwk(confusion_matrix(truth, pred, state.num_classes));
}

void check_compatible(const ModelState& state, const DomainDataset& ds) {
  if (ds.num_classes != state.num_classes || ds.input_dim != state.input_dim) {
    throw ValidationError(std::string(to_string(ds.domain)) + " data has K=" +
                          std::to_string(ds.num_classes) + ", d_in=" +
                          std::to_string(ds.input_dim) + " but the model expects K=" +
                          std::to_string(state.num_classes) + ", d_in=" +
                          std::to_string(state.input_dim));
  }
}

}  // namespace

std::string config_hash(const TrainConfig& cfg) {
  const std::string text = train_config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json train_log_to_json(const TrainLog& log) {
  json epochs = json::array();
  for (const auto& e : log.epochs) {
    json rec{{"epoch", e.epoch}, {"losses", e.losses}};
    if (e.validation_qwk) rec["validation_qwk"] = *e.validation_qwk;
    epochs.push_back(std::move(rec));
  }
  return {{"stage", log.stage},
          {"epochs", std::move(epochs)},
          {"best_epoch", log.best_epoch},
          {"early_stopped", log.early_stopped},
          {"seed", log.seed},
          {"config_hash", log.config_hash}};
}

// ---------------------------------------------------------------------------
// Stage 1
// ---------------------------------------------------------------------------

TrainResult pretrain_source(const TrainConfig& cfg, const DomainDataset& source) {
  validate_train_config(cfg);
  validate_dataset(source);
  if (source.domain != Domain::source) throw ValidationError("pretrain_source needs source-domain data");
  require_all_classes(source);
  const Stopwatch clock;
  const EffectiveRates rates = effective_rates(cfg);

  ModelDims dims;
  dims.input_dim = source.input_dim;
  dims.embed_dim = cfg.embed_dim;
  dims.num_classes = source.num_classes;
  dims.encoder_hidden = cfg.encoder_hidden;
  dims.discriminator_hidden = cfg.discriminator_hidden;
  ModelState state = init_model(dims, cfg.seed);

  auto [train_bags, val_bags] = split_bags(source, cfg.validation_fraction,
                                           derive_seed(cfg.seed, kSplitStream));
  if (val_bags.empty()) val_bags = train_bags;

  // Flattened training instances.
  std::vector<const Instance*> instances;
  std::vector<int> instance_labels;
  std::vector<int> bag_labels;
  for (auto b : train_bags) {
    bag_labels.push_back(source.bags[b].bag_label.value());
    for (const auto& inst : source.bags[b].instances) {
      instances.push_back(&inst);
      instance_labels.push_back(inst.label->value());
    }
  }

  AdamState adam_encoder(group_size(state, ParamGroup::source_encoder));
  AdamState adam_head(group_size(state, ParamGroup::instance_head));
  AdamState adam_tokens(group_size(state, ParamGroup::tokens));
  AdamState adam_bag_heads(group_size(state, ParamGroup::bag_heads));

  TrainResult result;
  result.log.stage = "pretrain";
  result.log.seed = cfg.seed;
  result.log.config_hash = config_hash(cfg);
  ModelState best = state;
  double best_score = -std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();
  BagRefs val_refs;
  for (auto b : val_bags) val_refs.push_back(&source.bags[b]);
  int stale_epochs = 0;
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.pretrain_max_epochs; ++epoch) {
    const auto inst_order = oversample_indices(
        instance_labels, derive_seed(cfg.seed, kInstanceOrderStream + static_cast<std::uint64_t>(epoch)));
    const auto bag_order = oversample_indices(
        bag_labels, derive_seed(cfg.seed, kBagOrderStream + static_cast<std::uint64_t>(epoch)));
    const std::size_t steps = (bag_order.size() + batch - 1) / batch;
    const std::size_t inst_chunk = (inst_order.size() + steps - 1) / steps;
    EpochAccumulator acc;

    for (std::size_t s = 0; s < steps; ++s) {
      // Instance k-rank step.
      const std::size_t i0 = s * inst_chunk;
      const std::size_t i1 = std::min(inst_order.size(), i0 + inst_chunk);
      if (i0 < i1) {
        InstanceBatch ib;
        ib.features.resize(source.input_dim, static_cast<Index>(i1 - i0));
        for (std::size_t i = i0; i < i1; ++i) {
          const Instance* inst = instances[inst_order[i]];
          ib.features.col(static_cast<Index>(i - i0)) = inst->features;
          ib.labels.push_back(*inst->label);
        }
        ModelState grads = zero_grads_like(state);
        acc.add("instance", source_instance_objective(state, ib, &grads, cfg.reduction));
        step_group(state, grads, ParamGroup::source_encoder, adam_encoder, rates.pretrain_encoder);
        step_group(state, grads, ParamGroup::instance_head, adam_head, rates.pretrain_instance_head);
      }

      // Bag step through the aggregation tokens.
      BagRefs bags;
      for (std::size_t b = s * batch; b < std::min(bag_order.size(), (s + 1) * batch); ++b) {
        bags.push_back(&source.bags[train_bags[bag_order[b]]]);
      }
      ModelState grads = zero_grads_like(state);
      acc.add("bag", source_bag_objective(state, bags, &grads, cfg.reduction));
      step_group(state, grads, ParamGroup::source_encoder, adam_encoder, rates.pretrain_encoder);
      step_group(state, grads, ParamGroup::tokens, adam_tokens, rates.pretrain_bag);
      step_group(state, grads, ParamGroup::bag_heads, adam_bag_heads, rates.pretrain_bag);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.losses = acc.means();
    record.validation_qwk = bag_qwk(state, source, val_bags);

    // QWK saturates on small validation splits; equal QWK falls back to the
    // validation bag loss.
    const double val_loss = source_bag_objective(state, val_refs, nullptr, cfg.reduction);
    record.losses["validation_bag"] = val_loss;
    result.log.epochs.push_back(record);
    const double score = record.validation_qwk.value_or(-std::numeric_limits<double>::infinity());
    if (epoch == 0 || score > best_score || (score == best_score && val_loss < best_loss)) {
      best_score = score;
      best_loss = val_loss;
      best = state;
      result.log.best_epoch = epoch;
      stale_epochs = 0;
    } else if (++stale_epochs > cfg.patience) {
      result.log.early_stopped = true;
      break;
    }
  }

  best.target_encoder = best.source_encoder;
  result.state = std::move(best);
  result.log.wall_clock_seconds = clock.seconds();
  return result;
}

// ---------------------------------------------------------------------------
// Stage 2
// ---------------------------------------------------------------------------

AdaptResult adapt_target(const TrainConfig& cfg, const ModelState& pretrained,
                         const DomainDataset& source, const DomainDataset& target) {
  validate_train_config(cfg);
  validate_model(pretrained);
  validate_dataset(source);
  validate_dataset(target);
  if (source.domain != Domain::source || target.domain != Domain::target) {
    throw ValidationError("adapt_target needs one source and one target dataset");
  }
  check_compatible(pretrained, source);
  check_compatible(pretrained, target);
  const Stopwatch clock;
  const EffectiveRates rates = effective_rates(cfg);

  AdaptResult result;
  ModelState& state = result.state;
  state = pretrained;
  state.target_encoder = state.source_encoder;
  for (auto g : {ParamGroup::source_encoder, ParamGroup::instance_head, ParamGroup::tokens,
                 ParamGroup::bag_heads}) {
    state.set_frozen(g, true);
  }
  state.set_frozen(ParamGroup::target_encoder, false);
  state.set_frozen(ParamGroup::discriminator, false);

  // Training only ever sees bag labels on the target side.
  const DomainDataset target_view = without_instance_labels(target);
  result.prototypes = compute_prototypes(source, state.source_encoder);
  const PrototypeSet& prototypes = result.prototypes;

  std::vector<Matrix> source_embeddings;
  std::vector<int> source_labels;
  for (const auto& bag : source.bags) {
    source_embeddings.push_back(encode_bag(state.source_encoder, bag));
    source_labels.push_back(bag.bag_label.value());
  }
  std::vector<int> target_labels;
  for (const auto& bag : target_view.bags) target_labels.push_back(bag.bag_label.value());

  const TargetTerms terms{cfg.use_shared_tokens, cfg.use_adv, cfg.use_triplet};
  const bool train_encoder = terms.bag || terms.adversarial || terms.triplet;
  AdamState adam_encoder(group_size(state, ParamGroup::target_encoder));
  AdamState adam_disc(group_size(state, ParamGroup::discriminator));
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);

  result.log.stage = "adapt";
  result.log.seed = cfg.seed;
  result.log.config_hash = config_hash(cfg);

  for (int epoch = 0; epoch < cfg.adapt_epochs; ++epoch) {
    const auto t_order = oversample_indices(
        target_labels, derive_seed(cfg.seed, kTargetOrderStream + static_cast<std::uint64_t>(epoch)));
    const auto s_order = oversample_indices(
        source_labels, derive_seed(cfg.seed, kSourceOrderStream + static_cast<std::uint64_t>(epoch)));
    const std::size_t steps = (t_order.size() + batch - 1) / batch;
    EpochAccumulator acc;

    for (std::size_t s = 0; s < steps; ++s) {
      BagRefs bags;
      for (std::size_t b = s * batch; b < std::min(t_order.size(), (s + 1) * batch); ++b) {
        bags.push_back(&target_view.bags[t_order[b]]);
      }

      if (terms.adversarial) {
        std::vector<const Matrix*> src;
        Index cols = 0;
        for (std::size_t b = 0; b < batch; ++b) {
          src.push_back(&source_embeddings[s_order[(s * batch + b) % s_order.size()]]);
          cols += src.back()->cols();
        }
        Matrix es(state.embed_dim, cols);
        Index c = 0;
        for (const Matrix* m : src) {
          es.middleCols(c, m->cols()) = *m;
          c += m->cols();
        }
        const Matrix et = mlp_forward(state.target_encoder, stack_bag_features(bags));
        AdversarialGrads ag;
        ag.discriminator = zeros_like(state.discriminator);
        acc.add("disc", loss_disc(state.discriminator, es, et, &ag, cfg.reduction));
        ModelState grads = zero_grads_like(state);
        grads.discriminator = std::move(ag.discriminator);
        step_group(state, grads, ParamGroup::discriminator, adam_disc, rates.adapt_discriminator);
      }

      if (train_encoder) {
        ModelState grads = zero_grads_like(state);
        const TargetLossBreakdown parts =
            target_objective(state, bags, prototypes, terms, cfg.weights, &grads, cfg.reduction);
        acc.add("bag", parts.bag);
        acc.add("enc", parts.enc);
        acc.add("triplet", parts.triplet);
        acc.add("total", parts.total);
        acc.add("anchors", static_cast<double>(parts.anchors));
        step_group(state, grads, ParamGroup::target_encoder, adam_encoder, rates.adapt_encoder);
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.losses = acc.means();
    result.log.epochs.push_back(std::move(record));
  }
  result.log.best_epoch = cfg.adapt_epochs - 1;
  result.log.wall_clock_seconds = clock.seconds();
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

const Mlp& encoder_for(const ModelState& state, Domain domain) {
  return domain == Domain::source ? state.source_encoder : state.target_encoder;
}

EvalReport evaluate_instances(const ModelState& state, const DomainDataset& ds) {
  check_compatible(state, ds);
  std::vector<Severity> truth, pred;
  const Mlp& enc = encoder_for(state, ds.domain);
  for (const auto& bag : ds.bags) {
    const auto predicted = predict_instances(state.instance_head, encode_bag(enc, bag));
    for (std::size_t j = 0; j < bag.instances.size(); ++j) {
      if (!bag.instances[j].label) continue;
      truth.push_back(*bag.instances[j].label);
      pred.push_back(predicted[j]);
    }
  }
  if (truth.empty()) throw ValidationError("evaluate_instances: dataset has no instance labels");
  return make_report(truth, pred, state.num_classes);
}

EvalReport evaluate_bags(const ModelState& state, const DomainDataset& ds) {
  check_compatible(state, ds);
  std::vector<Severity> truth, pred;
  const Mlp& enc = encoder_for(state, ds.domain);
  for (const auto& bag : ds.bags) {
    truth.push_back(bag.bag_label);
    pred.push_back(predict_bag(state.tokens, state.bag_heads, encode_bag(enc, bag)));
  }
  return make_report(truth, pred, state.num_classes);
}

namespace {

std::vector<Matrix> embeddings_by_class(const ModelState& state, const DomainDataset& ds) {
  const Mlp& enc = encoder_for(state, ds.domain);
  std::vector<std::vector<Vector>> cols(static_cast<std::size_t>(ds.num_classes));
  for (const auto& bag : ds.bags) {
    const Matrix emb = encode_bag(enc, bag);
    for (std::size_t j = 0; j < bag.instances.size(); ++j) {
      if (const auto& label = bag.instances[j].label) {
        cols[static_cast<std::size_t>(label->value() - 1)].push_back(emb.col(static_cast<Index>(j)));
      }
    }
  }
  std::vector<Matrix> out;
  for (const auto& c : cols) {
    Matrix m(state.embed_dim, static_cast<Index>(c.size()));
    for (std::size_t j = 0; j < c.size(); ++j) m.col(static_cast<Index>(j)) = c[j];
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

AlignmentScore measure_alignment(const ModelState& state, const DomainDataset& source,
                                 const DomainDataset& target) {
  check_compatible(state, source);
  check_compatible(state, target);
  return alignment_score(embeddings_by_class(state, source), embeddings_by_class(state, target));
}

void export_pca_csv(const ModelState& state, const DomainDataset& source,
                    const DomainDataset& target, const std::filesystem::path& path) {
  check_compatible(state, source);
  check_compatible(state, target);
  struct Row {
    const Bag* bag;
    const Instance* inst;
    Severity predicted;
  };
  std::vector<Row> rows;
  std::vector<Vector> cols;
  for (const DomainDataset* ds : {&source, &target}) {
    const Mlp& enc = encoder_for(state, ds->domain);
    for (const auto& bag : ds->bags) {
      const Matrix emb = encode_bag(enc, bag);
      const auto predicted = predict_instances(state.instance_head, emb);
      for (std::size_t j = 0; j < bag.instances.size(); ++j) {
        rows.push_back({&bag, &bag.instances[j], predicted[j]});
        cols.push_back(emb.col(static_cast<Index>(j)));
      }
    }
  }
  Matrix samples(state.embed_dim, static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) samples.col(static_cast<Index>(j)) = cols[j];
  const PcaProjection pca = pca_project(samples, 2);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  out << "domain,bag_id,instance_id,true_label,pred_label,pc1,pc2\n";
  char buf[64];
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const Row& r = rows[j];
    out << to_string(r.bag->domain) << ',' << r.bag->bag_id << ',' << r.inst->id << ',';
    if (r.inst->label) out << r.inst->label->to_clinical();
    out << ',' << r.predicted.to_clinical();
    for (Index c = 0; c < 2; ++c) {
      std::snprintf(buf, sizeof buf, ",%.10g", pca.coordinates(c, static_cast<Index>(j)));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw ValidationError("write to '" + path.string() + "' failed");
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_triplet: return "no_triplet";
    case Variant::adv_only: return "adv_only";
    case Variant::source_only: return "source_only";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (auto v : kAllVariants)
    if (to_string(v) == name) return v;
  throw ValidationError("unknown ablation variant '" + std::string(name) +
                        "' (expected full, no_triplet, adv_only or source_only)");
}

TrainConfig configure_variant(TrainConfig cfg, Variant v) {
  cfg.use_adv = v != Variant::source_only;
  cfg.use_shared_tokens = v == Variant::full || v == Variant::no_triplet;
  cfg.use_triplet = v == Variant::full;
  return cfg;
}

AblationTable run_ablation(const TrainConfig& cfg, const DataProvider& data,
                           const AblationOptions& options) {
  if (options.variants.empty()) throw ValidationError("ablation: no variants requested");
  if (options.seeds.empty()) throw ValidationError("ablation: no seeds requested");
  if (options.pca_dir) std::filesystem::create_directories(*options.pca_dir);
  constexpr std::array<ParamGroup, 4> kFrozen{ParamGroup::source_encoder, ParamGroup::instance_head,
                                              ParamGroup::tokens, ParamGroup::bag_heads};
  AblationTable table;
  for (const auto seed : options.seeds) {
    const DomainPair pair = data(seed);
    TrainConfig seeded = cfg;
    seeded.seed = seed;
    const TrainResult pre = pretrain_source(seeded, pair.source);
    std::vector<std::string> before;
    for (auto g : kFrozen) before.push_back(serialize_group(pre.state, g));

    for (const auto variant : options.variants) {
      VariantRun run;
      run.variant = variant;
      run.seed = seed;
      ModelState state = variant == Variant::source_only
                             ? pre.state
                             : adapt_target(configure_variant(seeded, variant), pre.state,
                                            pair.source, pair.target)
                                   .state;
      for (std::size_t i = 0; i < kFrozen.size(); ++i) {
        run.frozen_groups_unchanged &= serialize_group(state, kFrozen[i]) == before[i];
      }
      run.target_instances = evaluate_instances(state, pair.target);
      run.target_bags = evaluate_bags(state, pair.target);
      run.alignment = measure_alignment(state, pair.source, pair.target);
      if (options.pca_dir) {
        export_pca_csv(state, pair.source, pair.target,
                       *options.pca_dir / ("seed" + std::to_string(seed) + "_" +
                                           std::string(to_string(variant)) + ".csv"));
      }
      table.runs.push_back(std::move(run));
    }
  }

  for (const auto variant : options.variants) {
    VariantSummary s;
    s.variant = variant;
    int n = 0, n_qwk = 0;
    for (const auto& run : table.runs) {
      if (run.variant != variant) continue;
      s.mean_accuracy += run.target_instances.accuracy;
      s.mean_macro_f1 += run.target_instances.macro_f1;
      s.mean_alignment += run.alignment.mean;
      if (run.target_instances.qwk) {
        s.mean_qwk += *run.target_instances.qwk;
        ++n_qwk;
      }
      ++n;
    }
    s.mean_accuracy /= n;
    s.mean_macro_f1 /= n;
    s.mean_alignment /= n;
    if (n_qwk > 0) s.mean_qwk /= n_qwk;
    table.summary.push_back(s);
  }
  return table;
}

json ablation_to_json(const AblationTable& table) {
  json runs = json::array();
  for (const auto& r : table.runs) {
    json per_class = json::array();
    for (const auto& d : r.alignment.per_class) per_class.push_back(d ? json(*d) : json(nullptr));
    runs.push_back({{"variant", to_string(r.variant)},
                    {"seed", r.seed},
                    {"target_instance", report_to_json(r.target_instances)},
                    {"target_bag", report_to_json(r.target_bags)},
                    {"alignment",
                     {{"per_class", std::move(per_class)},
                      {"mean", r.alignment.mean},
                      {"excluded_classes", r.alignment.excluded_classes}}},
                    {"frozen_groups_unchanged", r.frozen_groups_unchanged}});
  }
  json summary = json::array();
  for (const auto& s : table.summary) {
    summary.push_back({{"variant", to_string(s.variant)},
                       {"mean_accuracy", s.mean_accuracy},
                       {"mean_macro_f1", s.mean_macro_f1},
                       {"mean_qwk", s.mean_qwk},
                       {"mean_alignment", s.mean_alignment}});
  }
  return {{"runs", std::move(runs)}, {"summary", std::move(summary)}};
}

}  // namespace sevalign
