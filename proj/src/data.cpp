#include "sevalign/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

#include <json.hpp>

#include "sevalign/errors.hpp"

namespace sevalign {

using json = nlohmann::json;

std::string_view to_string(Domain domain) {
  return domain == Domain::source ? "source" : "target";
}

Domain parse_domain(std::string_view text) {
  if (text == "source") return Domain::source;
  if (text == "target") return Domain::target;
  throw ValidationError("unknown domain '" + std::string(text) + "'");
}

std::size_t DomainDataset::instance_count() const {
  std::size_t n = 0;
  for (const auto& bag : bags) n += bag.instances.size();
  return n;
}

Severity bag_label_from_instances(std::span<const Severity> labels) {
  if (labels.empty()) throw ValidationError("bag label of an empty label list");
  return *std::max_element(labels.begin(), labels.end());
}

void validate_dataset(const DomainDataset& ds) {
  if (ds.num_classes < 2) throw ValidationError("dataset needs K >= 2");
  if (ds.input_dim < 1) throw ValidationError("dataset needs d_in >= 1");
  if (ds.bags.empty()) throw ValidationError("dataset has no bags");
  const auto in_range = [&](Severity s) { return s.value() >= 1 && s.value() <= ds.num_classes; };
  for (const auto& bag : ds.bags) {
    const std::string where = "bag '" + bag.bag_id + "'";
    if (bag.domain != ds.domain) {
      throw ValidationError(where + ": domain " + std::string(to_string(bag.domain)) +
                            " differs from dataset domain " + std::string(to_string(ds.domain)));
    }
    if (bag.instances.empty()) throw ValidationError(where + ": bag is empty");
    if (!in_range(bag.bag_label)) throw ValidationError(where + ": bag label out of range");
    std::vector<Severity> present;
    for (const auto& inst : bag.instances) {
      if (inst.features.size() != ds.input_dim) {
        throw ShapeError(where + ", instance '" + inst.id + "': feature length " +
                         std::to_string(inst.features.size()) + " != d_in " +
                         std::to_string(ds.input_dim));
      }
      if (!inst.features.allFinite()) {
        throw ValidationError(where + ", instance '" + inst.id + "': non-finite feature");
      }
      if (inst.label) {
        if (!in_range(*inst.label)) {
          throw ValidationError(where + ", instance '" + inst.id + "': label out of range");
        }
        present.push_back(*inst.label);
      } else if (ds.domain == Domain::source) {
        throw ValidationError(where + ", instance '" + inst.id +
                              "': source instances must be labelled");
      }
    }
    if (!present.empty()) {
      const Severity top = bag_label_from_instances(present);
      const bool complete = present.size() == bag.instances.size();
      if ((complete && top != bag.bag_label) || top > bag.bag_label) {
        throw ValidationError(where + ": bag label " +
                              std::to_string(bag.bag_label.to_clinical()) +
                              " != max instance label " + std::to_string(top.to_clinical()));
      }
    }
  }
}

DomainDataset without_instance_labels(const DomainDataset& ds) {
  DomainDataset out = ds;
  for (auto& bag : out.bags)
    for (auto& inst : bag.instances) inst.label.reset();
  return out;
}

// ---------------------------------------------------------------------------

void validate_shift_config(const ShiftConfig& cfg) {
  if (cfg.input_dim < 1) throw ValidationError("shift.input_dim must be >= 1");
  if (cfg.num_classes < 2) throw ValidationError("shift.num_classes must be >= 2");
  if (!(cfg.centroid_spacing > 0)) throw ValidationError("shift.centroid_spacing must be > 0");
  if (!(cfg.spread > 0)) throw ValidationError("shift.spread must be > 0");
  if (!(cfg.scale > 0)) throw ValidationError("shift.scale must be > 0");
  if (cfg.min_bag_size < 1 || cfg.max_bag_size < cfg.min_bag_size) {
    throw ValidationError("shift bag-size range must satisfy 1 <= min <= max");
  }
  if (cfg.bags_per_domain < 1) throw ValidationError("shift.bags_per_domain must be >= 1");
  if (cfg.instance_class_weights.size() != static_cast<std::size_t>(cfg.num_classes)) {
    throw ValidationError("shift.instance_class_weights must have one weight per class");
  }
  for (double w : cfg.instance_class_weights) {
    if (!(w >= 0)) throw ValidationError("shift.instance_class_weights must be non-negative");
  }
  if (!(cfg.instance_class_weights.front() > 0)) {
    // Bags labelled 1 can only hold class-1 instances.
    throw ValidationError("shift.instance_class_weights[0] must be > 0");
  }
  if (2 * cfg.rotation_degrees.size() > static_cast<std::size_t>(cfg.input_dim)) {
    throw ValidationError("shift.rotation_degrees: more rotation planes than d_in allows");
  }
  if (!cfg.translation.empty() &&
      cfg.translation.size() != static_cast<std::size_t>(cfg.input_dim)) {
    throw ValidationError("shift.translation must be empty or have length d_in");
  }
}

namespace {

Matrix rotation_matrix(const ShiftConfig& cfg) {
  Matrix rot = Matrix::Identity(cfg.input_dim, cfg.input_dim);
  for (std::size_t i = 0; i < cfg.rotation_degrees.size(); ++i) {
    const double theta = cfg.rotation_degrees[i] * std::numbers::pi / 180.0;
    const Index a = static_cast<Index>(2 * i), b = a + 1;
    Matrix plane = Matrix::Identity(cfg.input_dim, cfg.input_dim);
    plane(a, a) = std::cos(theta);
    plane(a, b) = -std::sin(theta);
    plane(b, a) = std::sin(theta);
    plane(b, b) = std::cos(theta);
    rot = plane * rot;
  }
  return rot;
}

DomainDataset generate_domain(const ShiftConfig& cfg, Domain domain, const Matrix& transform,
                              const Vector& offset) {
  std::mt19937_64 rng(derive_seed(cfg.seed, domain == Domain::source ? 1 : 2));
  std::uniform_int_distribution<int> bag_label_dist(1, cfg.num_classes);
  std::uniform_int_distribution<int> size_dist(cfg.min_bag_size, cfg.max_bag_size);
  std::normal_distribution<double> noise(0.0, cfg.spread);

  DomainDataset ds;
  ds.domain = domain;
  ds.num_classes = cfg.num_classes;
  ds.input_dim = cfg.input_dim;
  const char prefix = domain == Domain::source ? 's' : 't';

  for (int b = 0; b < cfg.bags_per_domain; ++b) {
    Bag bag;
    bag.domain = domain;
    bag.bag_id = std::string(1, prefix) + std::to_string(b);
    const int top = bag_label_dist(rng);
    const int n = size_dist(rng);
    std::uniform_int_distribution<int> forced_dist(0, n - 1);
    const int forced = forced_dist(rng);
    std::discrete_distribution<int> class_dist(cfg.instance_class_weights.begin(),
                                               cfg.instance_class_weights.begin() + top);
    for (int j = 0; j < n; ++j) {
      const int label = j == forced ? top : class_dist(rng) + 1;
      Vector x(cfg.input_dim);
      for (Index c = 0; c < x.size(); ++c) x[c] = noise(rng);
      x[0] += (label - 1) * cfg.centroid_spacing;
      Instance inst;
      inst.id = bag.bag_id + "_" + std::to_string(j);
      inst.features = transform * x + offset;
      inst.label = Severity(label);
      bag.instances.push_back(std::move(inst));
    }
    bag.bag_label = Severity(top);
    ds.bags.push_back(std::move(bag));
  }
  return ds;
}

}  // namespace

DomainPair generate_synthetic_domains(const ShiftConfig& cfg) {
  validate_shift_config(cfg);
  const Index d = cfg.input_dim;
  DomainPair out;
  out.source = generate_domain(cfg, Domain::source, Matrix::Identity(d, d), Vector::Zero(d));
  Vector offset = Vector::Zero(d);
  if (!cfg.translation.empty()) {
    offset = Eigen::Map<const Vector>(cfg.translation.data(), d);
  }
  out.target = generate_domain(cfg, Domain::target, cfg.scale * rotation_matrix(cfg), offset);
  return out;
}

std::vector<std::size_t> oversample_indices(std::span<const int> labels, std::uint64_t seed) {
  if (labels.empty()) throw ValidationError("oversample_indices: empty label list");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::size_t largest = 0;
  for (const auto& [label, idx] : by_class) largest = std::max(largest, idx.size());

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  out.reserve(largest * by_class.size());
  for (const auto& [label, idx] : by_class) {
    out.insert(out.end(), idx.begin(), idx.end());
    std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
    for (std::size_t extra = idx.size(); extra < largest; ++extra) out.push_back(idx[pick(rng)]);
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

// ---------------------------------------------------------------------------

void save_dataset(const DomainDataset& ds, const std::filesystem::path& path) {
  validate_dataset(ds);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  out << json{{"k", ds.num_classes}, {"d_in", ds.input_dim}}.dump() << '\n';
  for (const auto& bag : ds.bags) {
    json instances = json::array();
    for (const auto& inst : bag.instances) {
      json features = json::array();
      for (Index c = 0; c < inst.features.size(); ++c) features.push_back(inst.features[c]);
      instances.push_back({{"id", inst.id},
                           {"features", std::move(features)},
                           {"label", inst.label ? json(inst.label->to_clinical()) : json(nullptr)}});
    }
    json line{{"bag_id", bag.bag_id},
              {"domain", to_string(bag.domain)},
              {"bag_label", bag.bag_label.to_clinical()},
              {"instances", std::move(instances)}};
    out << line.dump() << '\n';
  }
  if (!out) throw ValidationError("write to '" + path.string() + "' failed");
}

namespace {

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ValidationError(where + ": missing field '" + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

DomainDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  auto parse = [&](const std::string& text) {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": malformed JSON: " + e.what());
    }
  };

  DomainDataset ds;
  bool have_header = false;
  bool have_domain = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json doc = parse(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (!have_header) {
      ds.num_classes = field<int>(doc, "k", where);
      ds.input_dim = field<int>(doc, "d_in", where);
      have_header = true;
      continue;
    }
    Bag bag;
    bag.bag_id = field<std::string>(doc, "bag_id", where);
    const std::string bag_where = where + " (bag '" + bag.bag_id + "')";
    bag.domain = parse_domain(field<std::string>(doc, "domain", bag_where));
    bag.bag_label = Severity::from_clinical(field<int>(doc, "bag_label", bag_where));
    if (!have_domain) {
      ds.domain = bag.domain;
      have_domain = true;
    }
    const auto& instances = doc.contains("instances") ? doc.at("instances") : json();
    if (!instances.is_array()) throw ValidationError(bag_where + ": 'instances' must be a list");
    for (const auto& item : instances) {
      Instance inst;
      inst.id = field<std::string>(item, "id", bag_where);
      const auto features = field<std::vector<double>>(item, "features", bag_where);
      inst.features = Eigen::Map<const Vector>(features.data(), static_cast<Index>(features.size()));
      if (item.contains("label") && !item.at("label").is_null()) {
        inst.label = Severity::from_clinical(field<int>(item, "label", bag_where));
      }
      bag.instances.push_back(std::move(inst));
    }
    ds.bags.push_back(std::move(bag));
  }
  if (!have_header) throw ValidationError(path.string() + ": missing header line");
  validate_dataset(ds);
  return ds;
}

}  // namespace sevalign
