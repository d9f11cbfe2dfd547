#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "sevalign/data.hpp"
#include "sevalign/errors.hpp"

using namespace sevalign;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sevalign_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

DomainDataset tiny_dataset(Domain domain) {
  DomainDataset ds;
  ds.domain = domain;
  ds.num_classes = 3;
  ds.input_dim = 2;
  Bag bag;
  bag.bag_id = "b0";
  bag.domain = domain;
  for (int j = 0; j < 3; ++j) {
    Instance inst;
    inst.id = "b0_" + std::to_string(j);
    inst.features = Vector::Constant(2, 0.25 * j);
    inst.label = Severity(j + 1);
    bag.instances.push_back(inst);
  }
  bag.bag_label = Severity(3);
  ds.bags.push_back(bag);
  return ds;
}

ShiftConfig small_shift(std::uint64_t seed) {
  ShiftConfig c;
  c.input_dim = 6;
  c.bags_per_domain = 40;
  c.seed = seed;
  return c;
}

std::map<int, std::size_t> class_counts(const std::vector<int>& labels,
                                        const std::vector<std::size_t>& idx) {
  std::map<int, std::size_t> counts;
  for (auto i : idx) counts[labels.at(i)] += 1;
  return counts;
}

}  // namespace

TEST(Severity, ClinicalConversion) {
  EXPECT_EQ(Severity(1).to_clinical(), 0);
  EXPECT_EQ(Severity::from_clinical(3).value(), 4);
  EXPECT_LT(Severity(2), Severity(3));
}

TEST(BagLabel, IsMaximum) {
  const std::vector<Severity> labels{Severity(1), Severity(3), Severity(2)};
  EXPECT_EQ(bag_label_from_instances(labels), Severity(3));
  const std::vector<Severity> single{Severity(2)};
  EXPECT_EQ(bag_label_from_instances(single), Severity(2));
  EXPECT_THROW(bag_label_from_instances(std::span<const Severity>{}), ValidationError);
}

TEST(Validate, AcceptsConsistentDataset) {
  EXPECT_NO_THROW(validate_dataset(tiny_dataset(Domain::source)));
}

TEST(Validate, RejectsBagLabelMismatch) {
  auto ds = tiny_dataset(Domain::source);
  ds.bags[0].bag_label = Severity(2);
  try {
    validate_dataset(ds);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("b0"), std::string::npos);
  }
}

TEST(Validate, RejectsUnlabelledSourceInstance) {
  auto ds = tiny_dataset(Domain::source);
  ds.bags[0].instances[1].label.reset();
  EXPECT_THROW(validate_dataset(ds), ValidationError);
}

TEST(Validate, TargetMayHidePartOfTheLabels) {
  auto ds = tiny_dataset(Domain::target);
  ds.bags[0].instances[2].label.reset();
  EXPECT_NO_THROW(validate_dataset(ds));
  ds.bags[0].bag_label = Severity(1);  // visible label 2 exceeds the bag label
  EXPECT_THROW(validate_dataset(ds), ValidationError);
}

TEST(Validate, RejectsFeatureLengthAndDomainMix) {
  auto ds = tiny_dataset(Domain::source);
  ds.bags[0].instances[0].features = Vector::Zero(3);
  EXPECT_THROW(validate_dataset(ds), ShapeError);
  ds = tiny_dataset(Domain::source);
  ds.bags[0].domain = Domain::target;
  EXPECT_THROW(validate_dataset(ds), ValidationError);
}

TEST(Validate, StripLabels) {
  const auto stripped = without_instance_labels(tiny_dataset(Domain::target));
  for (const auto& inst : stripped.bags[0].instances) EXPECT_FALSE(inst.label.has_value());
  EXPECT_EQ(stripped.bags[0].bag_label, Severity(3));
}

TEST(Generator, BagLabelIsMaxOfInstances) {
  const auto pair = generate_synthetic_domains(small_shift(3));
  for (const auto* ds : {&pair.source, &pair.target}) {
    EXPECT_NO_THROW(validate_dataset(*ds));
    for (const auto& bag : ds->bags) {
      std::vector<Severity> labels;
      for (const auto& inst : bag.instances) labels.push_back(*inst.label);
      EXPECT_EQ(bag_label_from_instances(labels), bag.bag_label);
      EXPECT_GE(bag.instances.size(), 4u);
      EXPECT_LE(bag.instances.size(), 30u);
    }
  }
}

TEST(Generator, Reproducible) {
  const auto a = generate_synthetic_domains(small_shift(9));
  const auto b = generate_synthetic_domains(small_shift(9));
  const auto c = generate_synthetic_domains(small_shift(10));
  ASSERT_EQ(a.target.bags.size(), b.target.bags.size());
  for (std::size_t i = 0; i < a.target.bags.size(); ++i) {
    ASSERT_EQ(a.target.bags[i].instances.size(), b.target.bags[i].instances.size());
    for (std::size_t j = 0; j < a.target.bags[i].instances.size(); ++j) {
      EXPECT_EQ(a.target.bags[i].instances[j].features, b.target.bags[i].instances[j].features);
    }
  }
  EXPECT_NE(a.source.bags[0].instances[0].features, c.source.bags[0].instances[0].features);
}

namespace {

/// Per-class means; row k-1 holds class k.
std::vector<Vector> class_means(const DomainDataset& ds, std::vector<std::size_t>& counts) {
  std::vector<Vector> sums(static_cast<std::size_t>(ds.num_classes), Vector::Zero(ds.input_dim));
  counts.assign(static_cast<std::size_t>(ds.num_classes), 0);
  for (const auto& bag : ds.bags)
    for (const auto& inst : bag.instances) {
      const auto k = static_cast<std::size_t>(inst.label->value() - 1);
      sums[k] += inst.features;
      counts[k] += 1;
    }
  for (std::size_t k = 0; k < sums.size(); ++k) sums[k] /= static_cast<double>(counts[k]);
  return sums;
}

void expect_mean_shift(const ShiftConfig& cfg, const Vector& expected_shift) {
  const auto pair = generate_synthetic_domains(cfg);
  std::vector<std::size_t> ns, nt;
  const auto ms = class_means(pair.source, ns);
  const auto mt = class_means(pair.target, nt);
  for (std::size_t k = 0; k < ms.size(); ++k) {
    // Both means are noisy: four standard errors of their difference.
    const double tol = 4.0 * cfg.spread *
                       std::sqrt(1.0 / static_cast<double>(ns[k]) + 1.0 / static_cast<double>(nt[k]));
    for (Index c = 0; c < cfg.input_dim; ++c) {
      EXPECT_NEAR(mt[k][c] - ms[k][c], expected_shift[c], tol) << "class " << k + 1 << " coord " << c;
    }
  }
}

}  // namespace

TEST(Generator, NoShiftMeansAgree) {
  ShiftConfig cfg = small_shift(21);
  cfg.rotation_degrees = {0.0};
  cfg.bags_per_domain = 400;
  expect_mean_shift(cfg, Vector::Zero(cfg.input_dim));
}

TEST(Generator, TranslationShiftsMeans) {
  ShiftConfig cfg = small_shift(22);
  cfg.rotation_degrees = {};
  cfg.bags_per_domain = 400;
  cfg.translation = {1.5, -2.0, 0.0, 0.5, 3.0, -0.25};
  expect_mean_shift(cfg, Eigen::Map<const Vector>(cfg.translation.data(), 6));
}

TEST(Generator, SourceCentroidsOrdinal) {
  ShiftConfig cfg = small_shift(4);
  cfg.bags_per_domain = 400;
  const auto pair = generate_synthetic_domains(cfg);
  std::vector<std::size_t> counts;
  const auto m = class_means(pair.source, counts);
  for (std::size_t k = 0; k < m.size(); ++k) {
    EXPECT_NEAR(m[k][0], static_cast<double>(k) * cfg.centroid_spacing,
                4.0 * cfg.spread / std::sqrt(static_cast<double>(counts[k])));
  }
}

TEST(Generator, RejectsDegenerateConfig) {
  ShiftConfig cfg = small_shift(0);
  cfg.bags_per_domain = 0;
  EXPECT_THROW(generate_synthetic_domains(cfg), ValidationError);
  cfg = small_shift(0);
  cfg.instance_class_weights = {};
  EXPECT_THROW(generate_synthetic_domains(cfg), ValidationError);
  cfg = small_shift(0);
  cfg.spread = 0.0;
  EXPECT_THROW(generate_synthetic_domains(cfg), ValidationError);
  cfg = small_shift(0);
  cfg.min_bag_size = 0;
  EXPECT_THROW(generate_synthetic_domains(cfg), ValidationError);
  cfg = small_shift(0);
  cfg.rotation_degrees = {10, 20, 30, 40};
  EXPECT_THROW(generate_synthetic_domains(cfg), ValidationError);
}

TEST(Oversample, DuplicateToMaxArithmetic) {
  const std::vector<int> labels{1, 1, 1, 1, 2, 2, 3, 3, 3, 3, 4, 4};
  const auto idx = oversample_indices(labels, 5);
  EXPECT_EQ(idx.size(), 16u);
  const auto counts = class_counts(labels, idx);
  for (int k = 1; k <= 4; ++k) EXPECT_EQ(counts.at(k), 4u);
}

TEST(Oversample, BalancedIsPermutation) {
  const std::vector<int> labels{7, 7, 7, 9, 9, 9};
  auto idx = oversample_indices(labels, 1);
  std::sort(idx.begin(), idx.end());
  EXPECT_EQ(idx, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
}

TEST(Oversample, SingleClassAndEmpty) {
  const std::vector<int> labels(5, 2);
  EXPECT_EQ(oversample_indices(labels, 0).size(), 5u);
  EXPECT_THROW(oversample_indices(std::span<const int>{}, 0), ValidationError);
}

TEST(Oversample, RandomPropertyCheck) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> labels(1 + rng() % 40);
    for (auto& l : labels) l = static_cast<int>(rng() % 5);
    std::map<int, std::size_t> in;
    for (int l : labels) in[l] += 1;
    std::size_t top = 0;
    for (const auto& [l, n] : in) top = std::max(top, n);
    const auto idx = oversample_indices(labels, rng());
    for (auto i : idx) ASSERT_LT(i, labels.size());
    for (const auto& [l, n] : class_counts(labels, idx)) EXPECT_EQ(n, top);
    EXPECT_EQ(idx.size(), top * in.size());
  }
}

TEST(DatasetFile, RoundTrip) {
  const auto pair = generate_synthetic_domains(small_shift(8));
  auto target = pair.target;
  target.bags[0].instances[0].label.reset();
  for (const auto* ds : {&pair.source, static_cast<const DomainDataset*>(&target)}) {
    const fs::path p = temp_path("roundtrip.jsonl");
    save_dataset(*ds, p);
    const auto back = load_dataset(p);
    EXPECT_EQ(back.domain, ds->domain);
    EXPECT_EQ(back.num_classes, ds->num_classes);
    EXPECT_EQ(back.input_dim, ds->input_dim);
    ASSERT_EQ(back.bags.size(), ds->bags.size());
    for (std::size_t b = 0; b < ds->bags.size(); ++b) {
      EXPECT_EQ(back.bags[b].bag_id, ds->bags[b].bag_id);
      EXPECT_EQ(back.bags[b].bag_label, ds->bags[b].bag_label);
      ASSERT_EQ(back.bags[b].instances.size(), ds->bags[b].instances.size());
      for (std::size_t j = 0; j < ds->bags[b].instances.size(); ++j) {
        EXPECT_EQ(back.bags[b].instances[j].id, ds->bags[b].instances[j].id);
        EXPECT_EQ(back.bags[b].instances[j].features, ds->bags[b].instances[j].features);
        EXPECT_EQ(back.bags[b].instances[j].label, ds->bags[b].instances[j].label);
      }
    }
  }
}

TEST(DatasetFile, ClinicalLabelsOnDisk) {
  const fs::path p = temp_path("clinical.jsonl");
  save_dataset(tiny_dataset(Domain::source), p);
  std::ifstream in(p);
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  EXPECT_NE(line.find("\"bag_label\":2"), std::string::npos) << line;
  EXPECT_NE(line.find("\"label\":0"), std::string::npos) << line;
}

TEST(DatasetFile, RejectsBagLabelBelowInstances) {
  const fs::path p = temp_path("bad_label.jsonl");
  write_file(p,
             "{\"k\":4,\"d_in\":2}\n"
             "{\"bag_id\":\"p17\",\"domain\":\"source\",\"bag_label\":2,\"instances\":["
             "{\"id\":\"a\",\"features\":[0,0],\"label\":1},"
             "{\"id\":\"b\",\"features\":[1,1],\"label\":3}]}\n");
  try {
    load_dataset(p);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("p17"), std::string::npos) << e.what();
  }
}

TEST(DatasetFile, RejectsShortFeatureRow) {
  const fs::path p = temp_path("short_row.jsonl");
  std::string row = "[";
  for (int i = 0; i < 15; ++i) row += (i ? ",0.5" : "0.5");
  row += "]";
  write_file(p, "{\"k\":4,\"d_in\":16}\n{\"bag_id\":\"x\",\"domain\":\"source\",\"bag_label\":0,"
                "\"instances\":[{\"id\":\"x0\",\"features\":" + row + ",\"label\":0}]}\n");
  EXPECT_THROW(load_dataset(p), ShapeError);
}

TEST(DatasetFile, RejectsMalformedInput) {
  const fs::path p = temp_path("malformed.jsonl");
  write_file(p, "{\"k\":4,\"d_in\":2}\n{not json\n");
  EXPECT_THROW(load_dataset(p), ValidationError);
  write_file(p, "{\"k\":4,\"d_in\":2}\n{\"bag_id\":\"x\",\"domain\":\"source\",\"bag_label\":0,"
                "\"instances\":[{\"id\":\"x0\",\"features\":[0,1],\"label\":null}]}\n");
  EXPECT_THROW(load_dataset(p), ValidationError);
  EXPECT_THROW(load_dataset(temp_path("does_not_exist.jsonl")), ValidationError);
}
