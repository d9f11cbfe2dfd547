#include "sevalign/config.hpp"

#include <fstream>
#include <set>

#include "sevalign/errors.hpp"

namespace sevalign {

using json = nlohmann::json;

EffectiveRates effective_rates(const TrainConfig& cfg) {
  if (cfg.use_reference_rates) {
    const auto& r = cfg.reference_rates;
    return {r.pretrain_encoder, r.pretrain_instance_head, r.pretrain_bag, r.adapt_discriminator,
            r.adapt_encoder};
  }
  return {cfg.pretrain_lr_encoder, cfg.pretrain_lr_instance_head, cfg.pretrain_lr_bag,
          cfg.adapt_lr_discriminator, cfg.adapt_lr_encoder};
}

void validate_train_config(const TrainConfig& cfg) {
  auto positive = [](double v, const char* key) {
    if (!(v > 0)) throw ConfigError(key, "must be > 0");
  };
  if (cfg.embed_dim < 1) throw ConfigError("train.embed_dim", "must be >= 1");
  for (int w : cfg.encoder_hidden)
    if (w < 1) throw ConfigError("train.encoder_hidden", "widths must be >= 1");
  for (int w : cfg.discriminator_hidden)
    if (w < 1) throw ConfigError("train.discriminator_hidden", "widths must be >= 1");
  positive(cfg.pretrain_lr_encoder, "train.pretrain_lr_encoder");
  positive(cfg.pretrain_lr_instance_head, "train.pretrain_lr_instance_head");
  positive(cfg.pretrain_lr_bag, "train.pretrain_lr_bag");
  positive(cfg.adapt_lr_discriminator, "train.adapt_lr_discriminator");
  positive(cfg.adapt_lr_encoder, "train.adapt_lr_encoder");
  positive(cfg.reference_rates.pretrain_encoder, "train.reference_rates.pretrain_encoder");
  positive(cfg.reference_rates.pretrain_instance_head,
           "train.reference_rates.pretrain_instance_head");
  positive(cfg.reference_rates.pretrain_bag, "train.reference_rates.pretrain_bag");
  positive(cfg.reference_rates.adapt_discriminator, "train.reference_rates.adapt_discriminator");
  positive(cfg.reference_rates.adapt_encoder, "train.reference_rates.adapt_encoder");
  if (cfg.pretrain_max_epochs < 1) throw ConfigError("train.pretrain_max_epochs", "must be >= 1");
  if (cfg.patience < 0) throw ConfigError("train.patience", "must be >= 0");
  if (!(cfg.validation_fraction >= 0 && cfg.validation_fraction < 1)) {
    throw ConfigError("train.validation_fraction", "must lie in [0, 1)");
  }
  if (cfg.adapt_epochs < 1) throw ConfigError("train.adapt_epochs", "must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  if (!(cfg.weights.alpha >= 0)) throw ConfigError("train.alpha", "must be >= 0");
  if (!(cfg.weights.margin >= 0)) throw ConfigError("train.margin", "must be >= 0");
}

json shift_config_to_json(const ShiftConfig& c) {
  return {{"input_dim", c.input_dim},
          {"num_classes", c.num_classes},
          {"centroid_spacing", c.centroid_spacing},
          {"spread", c.spread},
          {"rotation_degrees", c.rotation_degrees},
          {"translation", c.translation},
          {"scale", c.scale},
          {"min_bag_size", c.min_bag_size},
          {"max_bag_size", c.max_bag_size},
          {"instance_class_weights", c.instance_class_weights},
          {"bags_per_domain", c.bags_per_domain},
          {"seed", c.seed}};
}

json train_config_to_json(const TrainConfig& c) {
  const auto& r = c.reference_rates;
  return {{"embed_dim", c.embed_dim},
          {"encoder_hidden", c.encoder_hidden},
          {"discriminator_hidden", c.discriminator_hidden},
          {"pretrain_lr_encoder", c.pretrain_lr_encoder},
          {"pretrain_lr_instance_head", c.pretrain_lr_instance_head},
          {"pretrain_lr_bag", c.pretrain_lr_bag},
          {"pretrain_max_epochs", c.pretrain_max_epochs},
          {"patience", c.patience},
          {"validation_fraction", c.validation_fraction},
          {"adapt_lr_discriminator", c.adapt_lr_discriminator},
          {"adapt_lr_encoder", c.adapt_lr_encoder},
          {"adapt_epochs", c.adapt_epochs},
          {"batch_size", c.batch_size},
          {"alpha", c.weights.alpha},
          {"margin", c.weights.margin},
          {"reduction", c.reduction == Reduction::mean ? "mean" : "sum"},
          {"seed", c.seed},
          {"use_adv", c.use_adv},
          {"use_shared_tokens", c.use_shared_tokens},
          {"use_triplet", c.use_triplet},
          {"use_reference_rates", c.use_reference_rates},
          {"reference_rates",
           {{"pretrain_encoder", r.pretrain_encoder},
            {"pretrain_instance_head", r.pretrain_instance_head},
            {"pretrain_bag", r.pretrain_bag},
            {"adapt_discriminator", r.adapt_discriminator},
            {"adapt_encoder", r.adapt_encoder}}}};
}

json experiment_config_to_json(const ExperimentConfig& c) {
  auto opt = [](const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); };
  return {{"shift", shift_config_to_json(c.shift)},
          {"train", train_config_to_json(c.train)},
          {"paths",
           {{"source", opt(c.paths.source)},
            {"target", opt(c.paths.target)},
            {"checkpoint", opt(c.paths.checkpoint)}}}};
}

namespace {

/// Reads the fields of one JSON object, rejecting unknown keys and type
/// mismatches with the dotted key path.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path(key), "has the wrong type");
    }
  }

  void read_optional_string(const char* key, std::optional<std::string>& out) {
    seen_.insert(key);
    if (!obj_.contains(key) || obj_.at(key).is_null()) return;
    if (!obj_.at(key).is_string()) throw ConfigError(path(key), "must be a string or null");
    out = obj_.at(key).get<std::string>();
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError(path(key), "unknown key");
    }
  }

  std::string path(const std::string& key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

 private:
  const json& obj_;
  std::string prefix_;
  std::set<std::string> seen_;
};

ShiftConfig parse_shift(const json& j) {
  ShiftConfig c;
  ObjectReader r(j, "shift");
  r.read("input_dim", c.input_dim);
  r.read("num_classes", c.num_classes);
  r.read("centroid_spacing", c.centroid_spacing);
  r.read("spread", c.spread);
  r.read("rotation_degrees", c.rotation_degrees);
  r.read("translation", c.translation);
  r.read("scale", c.scale);
  r.read("min_bag_size", c.min_bag_size);
  r.read("max_bag_size", c.max_bag_size);
  r.read("instance_class_weights", c.instance_class_weights);
  r.read("bags_per_domain", c.bags_per_domain);
  r.read("seed", c.seed);
  r.finish();
  // Keep the default uniform mixture in step with a changed class count.
  if (!j.contains("instance_class_weights")) {
    c.instance_class_weights.assign(static_cast<std::size_t>(std::max(c.num_classes, 0)), 1.0);
  }
  try {
    validate_shift_config(c);
  } catch (const ValidationError& e) {
    throw ConfigError("shift", e.what());
  }
  return c;
}

TrainConfig parse_train(const json& j) {
  TrainConfig c;
  ObjectReader r(j, "train");
  r.read("embed_dim", c.embed_dim);
  r.read("encoder_hidden", c.encoder_hidden);
  r.read("discriminator_hidden", c.discriminator_hidden);
  r.read("pretrain_lr_encoder", c.pretrain_lr_encoder);
  r.read("pretrain_lr_instance_head", c.pretrain_lr_instance_head);
  r.read("pretrain_lr_bag", c.pretrain_lr_bag);
  r.read("pretrain_max_epochs", c.pretrain_max_epochs);
  r.read("patience", c.patience);
  r.read("validation_fraction", c.validation_fraction);
  r.read("adapt_lr_discriminator", c.adapt_lr_discriminator);
  r.read("adapt_lr_encoder", c.adapt_lr_encoder);
  r.read("adapt_epochs", c.adapt_epochs);
  r.read("batch_size", c.batch_size);
  r.read("alpha", c.weights.alpha);
  r.read("margin", c.weights.margin);
  std::string reduction = c.reduction == Reduction::mean ? "mean" : "sum";
  r.read("reduction", reduction);
  if (reduction == "mean") {
    c.reduction = Reduction::mean;
  } else if (reduction == "sum") {
    c.reduction = Reduction::sum;
  } else {
    throw ConfigError("train.reduction", "must be \"mean\" or \"sum\"");
  }
  r.read("seed", c.seed);
  r.read("use_adv", c.use_adv);
  r.read("use_shared_tokens", c.use_shared_tokens);
  r.read("use_triplet", c.use_triplet);
  r.read("use_reference_rates", c.use_reference_rates);
  if (const json* rates = r.child("reference_rates")) {
    ObjectReader rr(*rates, "train.reference_rates");
    rr.read("pretrain_encoder", c.reference_rates.pretrain_encoder);
    rr.read("pretrain_instance_head", c.reference_rates.pretrain_instance_head);
    rr.read("pretrain_bag", c.reference_rates.pretrain_bag);
    rr.read("adapt_discriminator", c.reference_rates.adapt_discriminator);
    rr.read("adapt_encoder", c.reference_rates.adapt_encoder);
    rr.finish();
  }
  r.finish();
  validate_train_config(c);
  return c;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& doc) {
  ExperimentConfig cfg;
  ObjectReader root(doc, "");
  if (const json* s = root.child("shift")) cfg.shift = parse_shift(*s);
  if (const json* t = root.child("train")) cfg.train = parse_train(*t);
  if (const json* p = root.child("paths")) {
    ObjectReader r(*p, "paths");
    r.read_optional_string("source", cfg.paths.source);
    r.read_optional_string("target", cfg.paths.target);
    r.read_optional_string("checkpoint", cfg.paths.checkpoint);
    r.finish();
  }
  root.finish();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("malformed JSON: ") + e.what());
  }
  return parse_experiment_config(doc);
}

}  // namespace sevalign
