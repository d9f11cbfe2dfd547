#include "sevalign/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "sevalign/errors.hpp"

namespace sevalign {

using json = nlohmann::json;

Vector PrototypeSet::prototype(Severity k) const {
  if (k.value() < 1 || k.value() > num_classes()) {
    throw ValidationError("no prototype for severity class " + std::to_string(k.value()));
  }
  return prototypes.col(k.value() - 1);
}

std::string_view to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::source_encoder: return "source_encoder";
    case ParamGroup::target_encoder: return "target_encoder";
    case ParamGroup::instance_head: return "instance_head";
    case ParamGroup::tokens: return "tokens";
    case ParamGroup::bag_heads: return "bag_heads";
    case ParamGroup::discriminator: return "discriminator";
  }
  return "unknown";
}

ModelState init_model(const ModelDims& dims, std::uint64_t seed) {
  if (dims.num_classes < 2) throw ValidationError("model needs K >= 2");
  if (dims.input_dim < 1 || dims.embed_dim < 1) throw ShapeError("model dimensions must be >= 1");
  std::mt19937_64 rng(derive_seed(seed, 101));
  const int ranks = dims.num_classes - 1;

  ModelState s;
  s.num_classes = dims.num_classes;
  s.input_dim = dims.input_dim;
  s.embed_dim = dims.embed_dim;

  std::vector<int> enc{dims.input_dim};
  enc.insert(enc.end(), dims.encoder_hidden.begin(), dims.encoder_hidden.end());
  enc.push_back(dims.embed_dim);
  s.source_encoder = make_mlp(enc, rng);
  s.target_encoder = s.source_encoder;

  auto uniform_matrix = [&](Index rows, Index cols, int fan_in, int fan_out) {
    std::uniform_real_distribution<double> dist(-std::sqrt(6.0 / (fan_in + fan_out)),
                                                std::sqrt(6.0 / (fan_in + fan_out)));
    Matrix m(rows, cols);
    for (Index c = 0; c < cols; ++c)
      for (Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
    return m;
  };
  s.instance_head.weight = uniform_matrix(dims.embed_dim, 1, dims.embed_dim, 1).col(0);
  s.instance_head.thresholds = Vector::Zero(ranks);
  s.tokens.tokens = uniform_matrix(ranks, dims.embed_dim, dims.embed_dim, 1);
  s.bag_heads.weights = uniform_matrix(ranks, dims.embed_dim, dims.embed_dim, 1);
  s.bag_heads.biases = Vector::Zero(ranks);

  std::vector<int> disc{dims.embed_dim};
  disc.insert(disc.end(), dims.discriminator_hidden.begin(), dims.discriminator_hidden.end());
  disc.push_back(1);
  s.discriminator = make_mlp(disc, rng);
  return s;
}

ModelState zero_grads_like(const ModelState& state) {
  ModelState g = state;
  g.source_encoder = zeros_like(state.source_encoder);
  g.target_encoder = zeros_like(state.target_encoder);
  g.instance_head.weight.setZero();
  g.instance_head.thresholds.setZero();
  g.tokens.tokens.setZero();
  g.bag_heads.weights.setZero();
  g.bag_heads.biases.setZero();
  g.discriminator = zeros_like(state.discriminator);
  return g;
}

void validate_model(const ModelState& s) {
  const Index ranks = s.num_classes - 1;
  const Index d = s.embed_dim;
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
  };
  require(s.num_classes >= 2, "model: K must be >= 2");
  check_layer_chain(s.source_encoder);
  check_layer_chain(s.target_encoder);
  check_layer_chain(s.discriminator);
  require(s.source_encoder.input_width() == s.input_dim &&
              s.source_encoder.output_width() == d,
          "model: source encoder must map d_in -> d");
  require(s.target_encoder.input_width() == s.input_dim &&
              s.target_encoder.output_width() == d,
          "model: target encoder must map d_in -> d");
  require(s.discriminator.input_width() == d && s.discriminator.output_width() == 1,
          "model: discriminator must map d -> 1");
  require(s.instance_head.weight.size() == d && s.instance_head.thresholds.size() == ranks,
          "model: instance head needs d weights and K-1 thresholds");
  require(s.tokens.tokens.rows() == ranks && s.tokens.tokens.cols() == d,
          "model: need K-1 aggregation tokens of dimension d");
  require(s.bag_heads.weights.rows() == ranks && s.bag_heads.weights.cols() == d &&
              s.bag_heads.biases.size() == ranks,
          "model: need K-1 bag heads over dimension d");
}

Index group_size(const ModelState& s, ParamGroup group) {
  switch (group) {
    case ParamGroup::source_encoder: return s.source_encoder.parameter_count();
    case ParamGroup::target_encoder: return s.target_encoder.parameter_count();
    case ParamGroup::instance_head:
      return s.instance_head.weight.size() + s.instance_head.thresholds.size();
    case ParamGroup::tokens: return s.tokens.tokens.size();
    case ParamGroup::bag_heads: return s.bag_heads.weights.size() + s.bag_heads.biases.size();
    case ParamGroup::discriminator: return s.discriminator.parameter_count();
  }
  return 0;
}

namespace {

Index write_block(const Matrix& m, Vector& out, Index offset) {
  out.segment(offset, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
  return offset + m.size();
}

Index read_block(Matrix& m, const Vector& in, Index offset) {
  Eigen::Map<Vector>(m.data(), m.size()) = in.segment(offset, m.size());
  return offset + m.size();
}

Index write_block(const Vector& v, Vector& out, Index offset) {
  out.segment(offset, v.size()) = v;
  return offset + v.size();
}

Index read_block(Vector& v, const Vector& in, Index offset) {
  v = in.segment(offset, v.size());
  return offset + v.size();
}

}  // namespace

Vector pack_groups(const ModelState& s, std::span<const ParamGroup> groups) {
  Index total = 0;
  for (auto g : groups) total += group_size(s, g);
  Vector flat(total);
  Index off = 0;
  for (auto g : groups) {
    switch (g) {
      case ParamGroup::source_encoder: off = write_params(s.source_encoder, flat, off); break;
      case ParamGroup::target_encoder: off = write_params(s.target_encoder, flat, off); break;
      case ParamGroup::instance_head:
        off = write_block(s.instance_head.weight, flat, off);
        off = write_block(s.instance_head.thresholds, flat, off);
        break;
      case ParamGroup::tokens: off = write_block(s.tokens.tokens, flat, off); break;
      case ParamGroup::bag_heads:
        off = write_block(s.bag_heads.weights, flat, off);
        off = write_block(s.bag_heads.biases, flat, off);
        break;
      case ParamGroup::discriminator: off = write_params(s.discriminator, flat, off); break;
    }
  }
  return flat;
}

void unpack_groups(ModelState& s, std::span<const ParamGroup> groups, const Vector& flat) {
  Index total = 0;
  for (auto g : groups) total += group_size(s, g);
  if (flat.size() != total) {
    throw ShapeError("unpack_groups: expected " + std::to_string(total) + " values, got " +
                     std::to_string(flat.size()));
  }
  Index off = 0;
  for (auto g : groups) {
    switch (g) {
      case ParamGroup::source_encoder: off = read_params(s.source_encoder, flat, off); break;
      case ParamGroup::target_encoder: off = read_params(s.target_encoder, flat, off); break;
      case ParamGroup::instance_head:
        off = read_block(s.instance_head.weight, flat, off);
        off = read_block(s.instance_head.thresholds, flat, off);
        break;
      case ParamGroup::tokens: off = read_block(s.tokens.tokens, flat, off); break;
      case ParamGroup::bag_heads:
        off = read_block(s.bag_heads.weights, flat, off);
        off = read_block(s.bag_heads.biases, flat, off);
        break;
      case ParamGroup::discriminator: off = read_params(s.discriminator, flat, off); break;
    }
  }
}

// ---------------------------------------------------------------------------

Vector krank_encode_label(Severity y, int num_classes) {
  if (num_classes < 2) throw ValidationError("krank_encode_label: K must be >= 2");
  if (y.value() < 1 || y.value() > num_classes) {
    throw ValidationError("krank_encode_label: label " + std::to_string(y.value()) +
                          " outside 1.." + std::to_string(num_classes));
  }
  Vector t(num_classes - 1);
  for (int k = 0; k < num_classes - 1; ++k) t[k] = y.value() > k + 1 ? 1.0 : 0.0;
  return t;
}

Severity krank_decode(const Vector& probabilities) {
  int above = 0;
  for (Index k = 0; k < probabilities.size(); ++k) {
    const double p = probabilities[k];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ValidationError("krank_decode: probability " + std::to_string(p) +
                            " at rank " + std::to_string(k + 1) + " outside [0,1]");
    }
    if (p > 0.5) ++above;
  }
  return Severity(1 + above);
}

Vector instance_logits(const KRankHead& head, const Vector& embedding) {
  if (embedding.size() != head.weight.size()) {
    throw ShapeError("instance_logits: embedding length " + std::to_string(embedding.size()) +
                     " != head dimension " + std::to_string(head.weight.size()));
  }
  return head.thresholds.array() + head.weight.dot(embedding);
}

Matrix instance_logits(const KRankHead& head, const Matrix& embeddings) {
  if (embeddings.rows() != head.weight.size()) {
    throw ShapeError("instance_logits: embedding rows " + std::to_string(embeddings.rows()) +
                     " != head dimension " + std::to_string(head.weight.size()));
  }
  const Eigen::RowVectorXd scores = head.weight.transpose() * embeddings;
  Matrix logits = scores.replicate(head.thresholds.size(), 1);
  logits.colwise() += head.thresholds;
  return logits;
}

std::vector<Severity> predict_instances(const KRankHead& head, const Matrix& embeddings) {
  const Matrix logits = instance_logits(head, embeddings);
  std::vector<Severity> out;
  out.reserve(static_cast<std::size_t>(logits.cols()));
  for (Index j = 0; j < logits.cols(); ++j) {
    // p > 0.5 exactly when the logit is positive.
    out.emplace_back(1 + static_cast<int>((logits.col(j).array() > 0.0).count()));
  }
  return out;
}

Vector bag_attention(const Vector& token, const Matrix& embeddings) {
  if (embeddings.cols() == 0) throw ValidationError("bag_attention: empty bag");
  if (embeddings.rows() != token.size()) {
    throw ShapeError("bag_attention: token dimension " + std::to_string(token.size()) +
                     " != embedding dimension " + std::to_string(embeddings.rows()));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(token.size()));
  return softmax(embeddings.transpose() * token * scale);
}

Vector bag_embedding(const Vector& weights, const Matrix& embeddings) {
  if (weights.size() != embeddings.cols()) {
    throw ShapeError("bag_embedding: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(embeddings.cols()) + " instances");
  }
  return embeddings * weights;
}

Vector bag_logits(const AggregationTokens& tokens, const BagHeads& heads,
                  const Matrix& embeddings) {
  const Index ranks = tokens.tokens.rows();
  if (heads.weights.rows() != ranks || heads.biases.size() != ranks) {
    throw ShapeError("bag_logits: head count does not match token count");
  }
  Vector logits(ranks);
  for (Index k = 0; k < ranks; ++k) {
    const Vector token = tokens.tokens.row(k).transpose();
    const Vector pooled = bag_embedding(bag_attention(token, embeddings), embeddings);
    logits[k] = heads.weights.row(k).dot(pooled) + heads.biases[k];
  }
  return logits;
}

Matrix bag_logits_backward(const AggregationTokens& tokens, const BagHeads& heads,
                           const Matrix& embeddings, const Vector& d_logits,
                           AggregationTokens* d_tokens, BagHeads* d_heads) {
  const Index ranks = tokens.tokens.rows();
  if (d_logits.size() != ranks) throw ShapeError("bag_logits_backward: wrong gradient length");
  const double scale = 1.0 / std::sqrt(static_cast<double>(embeddings.rows()));
  Matrix d_emb = Matrix::Zero(embeddings.rows(), embeddings.cols());
  for (Index k = 0; k < ranks; ++k) {
    const double g = d_logits[k];
    if (g == 0.0) continue;
    const Vector token = tokens.tokens.row(k).transpose();
    const Vector w = bag_attention(token, embeddings);
    const Vector pooled = embeddings * w;
    const Vector head_w = heads.weights.row(k).transpose();
    if (d_heads) {
      d_heads->weights.row(k) += g * pooled.transpose();
      d_heads->biases[k] += g;
    }
    const Vector d_pooled = g * head_w;
    const Vector d_w = embeddings.transpose() * d_pooled;
    d_emb.noalias() += d_pooled * w.transpose();
    // Softmax Jacobian-vector product.
    const Vector d_scores = (w.array() * (d_w.array() - w.dot(d_w))).matrix();
    if (d_tokens) d_tokens->tokens.row(k) += (scale * (embeddings * d_scores)).transpose();
    d_emb.noalias() += scale * token * d_scores.transpose();
  }
  return d_emb;
}

Severity predict_bag(const AggregationTokens& tokens, const BagHeads& heads,
                     const Matrix& embeddings) {
  const Vector logits = bag_logits(tokens, heads, embeddings);
  return Severity(1 + static_cast<int>((logits.array() > 0.0).count()));
}

Matrix encode_bag(const Mlp& encoder, const Bag& bag) {
  if (bag.instances.empty()) throw ValidationError("bag '" + bag.bag_id + "' is empty");
  Matrix x(bag.instances.front().features.size(), static_cast<Index>(bag.instances.size()));
  for (std::size_t j = 0; j < bag.instances.size(); ++j) {
    x.col(static_cast<Index>(j)) = bag.instances[j].features;
  }
  return mlp_forward(encoder, x);
}

PrototypeSet compute_prototypes(const DomainDataset& source, const Mlp& source_encoder) {
  const int K = source.num_classes;
  PrototypeSet out;
  out.prototypes = Matrix::Zero(source_encoder.output_width(), K);
  out.counts.assign(static_cast<std::size_t>(K), 0);
  for (const auto& bag : source.bags) {
    const Matrix emb = encode_bag(source_encoder, bag);
    for (std::size_t j = 0; j < bag.instances.size(); ++j) {
      const auto& label = bag.instances[j].label;
      if (!label) {
        throw ValidationError("compute_prototypes: unlabelled source instance '" +
                              bag.instances[j].id + "'");
      }
      const int k = label->value() - 1;
      if (k < 0 || k >= K) throw ValidationError("compute_prototypes: label out of range");
      out.prototypes.col(k) += emb.col(static_cast<Index>(j));
      out.counts[static_cast<std::size_t>(k)] += 1;
    }
  }
  for (int k = 0; k < K; ++k) {
    if (out.counts[static_cast<std::size_t>(k)] == 0) {
      throw ValidationError("compute_prototypes: no source instances of severity class " +
                            std::to_string(k + 1) + " (clinical " + std::to_string(k) + ")");
    }
    out.prototypes.col(k) /= static_cast<double>(out.counts[static_cast<std::size_t>(k)]);
  }
  return out;
}

double discriminate(const Mlp& discriminator, const Vector& embedding) {
  if (embedding.size() != discriminator.input_width()) {
    throw ShapeError("discriminate: embedding length " + std::to_string(embedding.size()) +
                     " != discriminator input " + std::to_string(discriminator.input_width()));
  }
  const double z = mlp_apply(discriminator, embedding)[0];
  return std::clamp(sigmoid(z), kProbClamp, 1.0 - kProbClamp);
}

// ---------------------------------------------------------------------------
// Checkpoint layout (JSON, keys sorted):
//   {"format": "sevalign-checkpoint", "version": 1, "k", "d_in", "d",
//    "frozen": {group: bool}, "groups": {group: ...}}
// Matrices are {"rows", "cols", "data": column-major values}; MLPs are
// {"layers": [{"weight": matrix, "bias": [...]}]}.
// ---------------------------------------------------------------------------

namespace {

constexpr int kCheckpointVersion = 1;

json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

json vector_to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
    throw ShapeError("checkpoint: matrix data length does not match its shape");
  }
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

Vector vector_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(data.data(), static_cast<Index>(data.size()));
}

json mlp_to_json(const Mlp& net) {
  json layers = json::array();
  for (const auto& layer : net.layers) {
    layers.push_back({{"weight", matrix_to_json(layer.weight)}, {"bias", vector_to_json(layer.bias)}});
  }
  return {{"layers", std::move(layers)}};
}

Mlp mlp_from_json(const json& j) {
  Mlp net;
  for (const auto& layer : j.at("layers")) {
    net.layers.push_back({matrix_from_json(layer.at("weight")), vector_from_json(layer.at("bias"))});
  }
  return net;
}

json group_to_json(const ModelState& s, ParamGroup group) {
  switch (group) {
    case ParamGroup::source_encoder: return mlp_to_json(s.source_encoder);
    case ParamGroup::target_encoder: return mlp_to_json(s.target_encoder);
    case ParamGroup::instance_head:
      return {{"weight", vector_to_json(s.instance_head.weight)},
              {"thresholds", vector_to_json(s.instance_head.thresholds)}};
    case ParamGroup::tokens: return {{"tokens", matrix_to_json(s.tokens.tokens)}};
    case ParamGroup::bag_heads:
      return {{"weights", matrix_to_json(s.bag_heads.weights)},
              {"biases", vector_to_json(s.bag_heads.biases)}};
    case ParamGroup::discriminator: return mlp_to_json(s.discriminator);
  }
  return {};
}

}  // namespace

std::string serialize_group(const ModelState& state, ParamGroup group) {
  return group_to_json(state, group).dump();
}

std::string serialize_checkpoint(const ModelState& state) {
  validate_model(state);
  json groups = json::object();
  json frozen = json::object();
  for (auto g : kAllGroups) {
    groups[std::string(to_string(g))] = group_to_json(state, g);
    frozen[std::string(to_string(g))] = state.is_frozen(g);
  }
  json doc{{"format", "sevalign-checkpoint"},
           {"version", kCheckpointVersion},
           {"k", state.num_classes},
           {"d_in", state.input_dim},
           {"d", state.embed_dim},
           {"frozen", std::move(frozen)},
           {"groups", std::move(groups)}};
  return doc.dump() + "\n";
}

ModelState parse_checkpoint(std::string_view text) {
  ModelState s;
  try {
    const json doc = json::parse(text);
    if (doc.value("format", "") != "sevalign-checkpoint") {
      throw ValidationError("checkpoint: not a sevalign checkpoint");
    }
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw ValidationError("checkpoint: unsupported version " +
                            std::to_string(doc.at("version").get<int>()));
    }
    s.num_classes = doc.at("k").get<int>();
    s.input_dim = doc.at("d_in").get<int>();
    s.embed_dim = doc.at("d").get<int>();
    const json& g = doc.at("groups");
    s.source_encoder = mlp_from_json(g.at("source_encoder"));
    s.target_encoder = mlp_from_json(g.at("target_encoder"));
    s.instance_head.weight = vector_from_json(g.at("instance_head").at("weight"));
    s.instance_head.thresholds = vector_from_json(g.at("instance_head").at("thresholds"));
    s.tokens.tokens = matrix_from_json(g.at("tokens").at("tokens"));
    s.bag_heads.weights = matrix_from_json(g.at("bag_heads").at("weights"));
    s.bag_heads.biases = vector_from_json(g.at("bag_heads").at("biases"));
    s.discriminator = mlp_from_json(g.at("discriminator"));
    for (auto group : kAllGroups) {
      s.set_frozen(group, doc.at("frozen").at(std::string(to_string(group))).get<bool>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: malformed document: ") + e.what());
  }
  validate_model(s);
  return s;
}

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  out << serialize_checkpoint(state);
  if (!out) throw ValidationError("write to '" + path.string() + "' failed");
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace sevalign
