#include <gtest/gtest.h>

#include <algorithm>

#include "sevalign/config.hpp"
#include "sevalign/errors.hpp"
#include "sevalign/training.hpp"

using namespace sevalign;

namespace {

ShiftConfig small_shift(std::uint64_t seed = 0) {
  ShiftConfig s;
  s.input_dim = 4;
  s.num_classes = 3;
  s.instance_class_weights = {1.0, 1.0, 1.0};
  s.min_bag_size = 3;
  s.max_bag_size = 8;
  s.bags_per_domain = 40;
  s.seed = seed;
  return s;
}

TrainConfig small_train() {
  TrainConfig c;
  c.embed_dim = 4;
  c.encoder_hidden = {8};
  c.discriminator_hidden = {8};
  c.pretrain_max_epochs = 15;
  c.patience = 5;
  c.adapt_epochs = 3;
  c.batch_size = 8;
  return c;
}

constexpr std::array<ParamGroup, 4> kFrozen{ParamGroup::source_encoder, ParamGroup::instance_head,
                                            ParamGroup::tokens, ParamGroup::bag_heads};

ConfigError parse_error(const std::string& text) {
  try {
    parse_experiment_config(nlohmann::json::parse(text));
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "no ConfigError for " << text;
  return ConfigError("", "");
}

}  // namespace

TEST(Config, ErrorsNameTheDottedKey) {
  EXPECT_EQ(parse_error(R"({"train": {"bogus": 1}})").key(), "train.bogus");
  EXPECT_EQ(parse_error(R"({"train": {"patience": "x"}})").key(), "train.patience");
  EXPECT_EQ(parse_error(R"({"train": {"patience": -1}})").key(), "train.patience");
  EXPECT_EQ(parse_error(R"({"train": {"adapt_epochs": 0}})").key(), "train.adapt_epochs");
  EXPECT_EQ(parse_error(R"({"nope": {}})").key(), "nope");
}

TEST(Config, RoundTripsThroughJson) {
  ExperimentConfig c;
  c.train.weights.alpha = 0.3;
  c.shift.rotation_degrees = {10.0, 20.0};
  c.paths.checkpoint = "ck.json";
  const auto j = experiment_config_to_json(c);
  EXPECT_EQ(experiment_config_to_json(parse_experiment_config(j)), j);
}

TEST(Config, EffectiveRatesFollowSwitch) {
  TrainConfig c;
  EXPECT_EQ(effective_rates(c).adapt_encoder, c.adapt_lr_encoder);
  c.use_reference_rates = true;
  EXPECT_EQ(effective_rates(c).adapt_encoder, c.reference_rates.adapt_encoder);
  EXPECT_EQ(effective_rates(c).pretrain_bag, c.reference_rates.pretrain_bag);
}

TEST(Config, HashIsStableAndSensitive) {
  TrainConfig a, b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.weights.margin = 1.5;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Pretrain, EarlyStopContract) {
  const auto data = generate_synthetic_domains(small_shift());
  for (int patience : {0, 3}) {
    TrainConfig c = small_train();
    c.patience = patience;
    c.pretrain_max_epochs = 200;
    const auto r = pretrain_source(c, data.source);
    ASSERT_TRUE(r.log.early_stopped) << "patience " << patience;
    const int last = r.log.epochs.back().epoch;
    EXPECT_EQ(last - r.log.best_epoch, patience + 1);
    EXPECT_LT(static_cast<int>(r.log.epochs.size()), 200);
  }
}

TEST(Pretrain, LogShape) {
  const auto data = generate_synthetic_domains(small_shift());
  const auto r = pretrain_source(small_train(), data.source);
  const auto j = train_log_to_json(r.log);
  EXPECT_EQ(j.at("stage"), "pretrain");
  EXPECT_FALSE(j.contains("wall_clock_seconds"));
  for (const auto& e : j.at("epochs")) {
    EXPECT_TRUE(e.at("losses").contains("instance"));
    EXPECT_TRUE(e.at("losses").contains("bag"));
    EXPECT_TRUE(e.at("losses").contains("validation_bag"));
  }
  EXPECT_EQ(serialize_group(r.state, ParamGroup::target_encoder),
            serialize_group(r.state, ParamGroup::source_encoder));
}

TEST(Pretrain, DeterministicCheckpoint) {
  const auto data = generate_synthetic_domains(small_shift(3));
  TrainConfig c = small_train();
  c.seed = 11;
  const auto a = pretrain_source(c, data.source);
  const auto b = pretrain_source(c, data.source);
  EXPECT_EQ(serialize_checkpoint(a.state), serialize_checkpoint(b.state));
  EXPECT_EQ(train_log_to_json(a.log).dump(), train_log_to_json(b.log).dump());
  const auto x = adapt_target(c, a.state, data.source, data.target);
  const auto y = adapt_target(c, b.state, data.source, data.target);
  EXPECT_EQ(serialize_checkpoint(x.state), serialize_checkpoint(y.state));
  EXPECT_EQ(train_log_to_json(x.log).dump(), train_log_to_json(y.log).dump());
}

TEST(Pretrain, LearnsWellSeparatedSource) {
  ShiftConfig s = small_shift(5);
  s.centroid_spacing = 6.0;
  s.spread = 0.5;
  s.bags_per_domain = 120;
  TrainConfig c = small_train();
  c.pretrain_max_epochs = 400;
  c.patience = 400;
  c.pretrain_lr_encoder = c.pretrain_lr_instance_head = 1e-2;
  const auto r = pretrain_source(c, generate_synthetic_domains(s).source);
  s.seed = 99;
  const auto held_out = generate_synthetic_domains(s).source;
  EXPECT_GE(evaluate_instances(r.state, held_out).accuracy, 0.95);
}

TEST(Pretrain, RejectsMissingClass) {
  DomainDataset ds;
  ds.num_classes = 3;
  ds.input_dim = 2;
  for (int b = 0; b < 4; ++b) {
    Bag bag;
    bag.bag_id = "b" + std::to_string(b);
    const int y = b % 2 == 0 ? 1 : 3;
    bag.instances.push_back({bag.bag_id + "_0", Vector::Constant(2, y), Severity(y)});
    bag.bag_label = Severity(y);
    ds.bags.push_back(bag);
  }
  try {
    pretrain_source(small_train(), ds);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("severity class 2"), std::string::npos) << e.what();
  }
}

TEST(Pretrain, RejectsUnlabelledSource) {
  auto data = generate_synthetic_domains(small_shift());
  data.source.bags[2].instances[0].label.reset();
  EXPECT_THROW(pretrain_source(small_train(), data.source), ValidationError);
  EXPECT_THROW(pretrain_source(small_train(), data.target), ValidationError);
}

class Adaptation : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new DomainPair(generate_synthetic_domains(small_shift(1)));
    pre_ = new TrainResult(pretrain_source(small_train(), data_->source));
  }
  static void TearDownTestSuite() {
    delete data_;
    delete pre_;
  }
  static DomainPair* data_;
  static TrainResult* pre_;
};

DomainPair* Adaptation::data_ = nullptr;
TrainResult* Adaptation::pre_ = nullptr;

TEST_F(Adaptation, FrozenGroupsStayBitIdentical) {
  const auto r = adapt_target(small_train(), pre_->state, data_->source, data_->target);
  for (auto g : kFrozen) {
    EXPECT_EQ(serialize_group(r.state, g), serialize_group(pre_->state, g)) << to_string(g);
    EXPECT_TRUE(r.state.is_frozen(g));
  }
  EXPECT_NE(serialize_group(r.state, ParamGroup::target_encoder),
            serialize_group(pre_->state, ParamGroup::target_encoder));
  EXPECT_EQ(static_cast<int>(r.log.epochs.size()), small_train().adapt_epochs);
}

TEST_F(Adaptation, AllTermsOffLeavesTargetEncoder) {
  TrainConfig c = small_train();
  c.use_adv = c.use_shared_tokens = c.use_triplet = false;
  const auto r = adapt_target(c, pre_->state, data_->source, data_->target);
  EXPECT_EQ(serialize_group(r.state, ParamGroup::target_encoder),
            serialize_group(pre_->state, ParamGroup::source_encoder));
}

TEST_F(Adaptation, IgnoresTargetInstanceLabels) {
  const auto with = adapt_target(small_train(), pre_->state, data_->source, data_->target);
  const auto without = adapt_target(small_train(), pre_->state, data_->source,
                                    without_instance_labels(data_->target));
  EXPECT_EQ(serialize_group(with.state, ParamGroup::target_encoder),
            serialize_group(without.state, ParamGroup::target_encoder));
}

TEST_F(Adaptation, AdvOnlyDoesNotUseTokensOrTriplet) {
  const auto r = adapt_target(configure_variant(small_train(), Variant::adv_only), pre_->state,
                              data_->source, data_->target);
  for (const auto& e : r.log.epochs) {
    EXPECT_EQ(e.losses.at("bag"), 0.0);
    EXPECT_EQ(e.losses.at("triplet"), 0.0);
    EXPECT_GT(e.losses.at("enc"), 0.0);
  }
}

TEST_F(Adaptation, RejectsMismatchedData) {
  auto other = generate_synthetic_domains([] {
    ShiftConfig s = small_shift();
    s.input_dim = 6;
    return s;
  }());
  EXPECT_THROW(adapt_target(small_train(), pre_->state, other.source, other.target), ValidationError);
  EXPECT_THROW(adapt_target(small_train(), pre_->state, data_->target, data_->source), ValidationError);
}

TEST(Ablation, SourceOnlyMatchesDirectEvaluation) {
  const TrainConfig c = small_train();
  const DataProvider provider = [](std::uint64_t seed) {
    return generate_synthetic_domains(small_shift(seed));
  };
  AblationOptions options;
  options.seeds = {4};
  options.variants = {Variant::source_only, Variant::full};
  const auto table = run_ablation(c, provider, options);
  ASSERT_EQ(table.runs.size(), 2u);

  TrainConfig seeded = c;
  seeded.seed = 4;
  const auto data = provider(4);
  const auto pre = pretrain_source(seeded, data.source);
  const auto& run = table.runs[0];
  EXPECT_EQ(run.variant, Variant::source_only);
  EXPECT_EQ(report_to_json(run.target_bags), report_to_json(evaluate_bags(pre.state, data.target)));
  EXPECT_EQ(report_to_json(run.target_instances),
            report_to_json(evaluate_instances(pre.state, data.target)));
  EXPECT_EQ(run.alignment.mean, measure_alignment(pre.state, data.source, data.target).mean);
  for (const auto& r : table.runs) EXPECT_TRUE(r.frozen_groups_unchanged);

  const auto j = ablation_to_json(table);
  EXPECT_EQ(j.at("runs").size(), 2u);
  EXPECT_EQ(j.at("summary")[1].at("variant"), "full");
}

TEST(Ablation, VariantSwitches) {
  const TrainConfig c;
  EXPECT_TRUE(configure_variant(c, Variant::full).use_triplet);
  const auto nt = configure_variant(c, Variant::no_triplet);
  EXPECT_TRUE(nt.use_adv && nt.use_shared_tokens && !nt.use_triplet);
  const auto ao = configure_variant(c, Variant::adv_only);
  EXPECT_TRUE(ao.use_adv && !ao.use_shared_tokens && !ao.use_triplet);
  const auto so = configure_variant(c, Variant::source_only);
  EXPECT_FALSE(so.use_adv || so.use_shared_tokens || so.use_triplet);
  for (auto v : kAllVariants) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("everything"), ValidationError);
}
