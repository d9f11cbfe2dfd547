#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "sevalign/errors.hpp"
#include "sevalign/model.hpp"

using namespace sevalign;

namespace {

ModelDims small_dims(int d_in = 5, int d = 4, int K = 4) {
  ModelDims dims;
  dims.input_dim = d_in;
  dims.embed_dim = d;
  dims.num_classes = K;
  dims.encoder_hidden = {6};
  dims.discriminator_hidden = {5};
  return dims;
}

Matrix m2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

AggregationTokens fixed_tokens() { return {m2(1.0, 0.0, -0.5, 1.5)}; }
BagHeads fixed_heads() { return {m2(0.4, -0.3, 1.2, 0.7), v2(0.1, -0.6)}; }

}  // namespace

TEST(KRank, EncodeExamples) {
  EXPECT_EQ(krank_encode_label(Severity(1), 4), (Vector(3) << 0, 0, 0).finished());
  EXPECT_EQ(krank_encode_label(Severity(3), 4), (Vector(3) << 1, 1, 0).finished());
  EXPECT_EQ(krank_encode_label(Severity(4), 4), (Vector(3) << 1, 1, 1).finished());
  EXPECT_THROW(krank_encode_label(Severity(5), 4), ValidationError);
  EXPECT_THROW(krank_encode_label(Severity(0), 4), ValidationError);
}

TEST(KRank, RoundTripAllK) {
  for (int K = 2; K <= 6; ++K)
    for (int y = 1; y <= K; ++y) {
      const Vector t = krank_encode_label(Severity(y), K);
      EXPECT_EQ(krank_decode(t), Severity(y)) << "K=" << K << " y=" << y;
    }
}

TEST(KRank, DecodeCountsAboveHalf) {
  EXPECT_EQ(krank_decode((Vector(3) << 0.9, 0.2, 0.7).finished()), Severity(3));
  EXPECT_EQ(krank_decode((Vector(3) << 0.5, 0.5, 0.5).finished()), Severity(1));
  EXPECT_THROW(krank_decode((Vector(2) << 0.3, 1.2).finished()), ValidationError);
}

TEST(InstanceHead, SharedWeightLogits) {
  KRankHead head{v2(2.0, -1.0), (Vector(3) << 0.5, -0.5, -2.0).finished()};
  const Vector logits = instance_logits(head, v2(1.0, 0.5));
  EXPECT_DOUBLE_EQ(logits[0], 2.0);
  EXPECT_DOUBLE_EQ(logits[1], 1.0);
  EXPECT_DOUBLE_EQ(logits[2], -0.5);
  Matrix batch(2, 2);
  batch << 1.0, -3.0, 0.5, 0.0;
  const Matrix bl = instance_logits(head, batch);
  EXPECT_EQ(bl.col(0), logits);
  EXPECT_EQ(predict_instances(head, batch), (std::vector<Severity>{Severity(3), Severity(1)}));
  EXPECT_THROW(instance_logits(head, Vector(Vector::Zero(3))), ShapeError);
}

TEST(Attention, ReferenceWeights) {
  const Vector w = bag_attention(v2(1.0, 0.0), Matrix::Identity(2, 2));
  EXPECT_NEAR(w[0], 0.6697615493266569, 1e-12);
  EXPECT_NEAR(w[1], 0.3302384506733431, 1e-12);
}

TEST(Attention, SimplexOnRandomBags) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (int trial = 0; trial < 300; ++trial) {
    const Index d = 1 + static_cast<Index>(rng() % 8);
    const Index n = 1 + static_cast<Index>(rng() % 20);
    Matrix E(d, n);
    Vector a(d);
    for (Index i = 0; i < E.size(); ++i) E.data()[i] = normal(rng);
    for (Index i = 0; i < d; ++i) a[i] = normal(rng);
    const Vector w = bag_attention(a, E);
    EXPECT_GE(w.minCoeff(), 0.0);
    EXPECT_NEAR(w.sum(), 1.0, 1e-9);
  }
  EXPECT_THROW(bag_attention(v2(1, 0), Matrix(2, 0)), ValidationError);
  EXPECT_THROW(bag_attention(Vector::Zero(3), Matrix::Zero(2, 2)), ShapeError);
}

TEST(Attention, SingleInstanceBagPassesThrough) {
  const Matrix E = (Matrix(3, 1) << 0.3, -1.0, 2.0).finished();
  const Vector w = bag_attention((Vector(3) << 5.0, 1.0, -2.0).finished(), E);
  EXPECT_DOUBLE_EQ(w[0], 1.0);
  EXPECT_EQ(bag_embedding(w, E), Vector(E.col(0)));
}

TEST(BagLogits, ReferenceValues) {
  const Vector z = bag_logits(fixed_tokens(), fixed_heads(), m2(1.0, -0.5, 0.5, 2.0));
  EXPECT_NEAR(z[0], 0.07995751901185263, 1e-12);
  EXPECT_NEAR(z[1], 0.28028135109887786, 1e-12);
}

TEST(BagLogits, PermutationInvariant) {
  std::mt19937_64 rng(4);
  const Matrix E = Matrix::Random(2, 6);
  const Vector base = bag_logits(fixed_tokens(), fixed_heads(), E);
  std::vector<Index> perm{0, 1, 2, 3, 4, 5};
  for (int t = 0; t < 10; ++t) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix P(2, 6);
    for (Index j = 0; j < 6; ++j) P.col(j) = E.col(perm[static_cast<std::size_t>(j)]);
    EXPECT_LT((bag_logits(fixed_tokens(), fixed_heads(), P) - base).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(BagLogits, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Index d = 2 + static_cast<Index>(rng() % 4), n = 1 + static_cast<Index>(rng() % 5);
    const Index ranks = 1 + static_cast<Index>(rng() % 3);
    const Matrix E0 = Matrix::Random(d, n) * 2.0;
    const AggregationTokens T0{Matrix::Random(ranks, d)};
    const BagHeads H0{Matrix::Random(ranks, d), Vector::Random(ranks)};
    const Vector weights = Vector::Random(ranks);  // L = weights . logits
    const Index nE = E0.size(), nT = T0.tokens.size(), nW = H0.weights.size();
    Vector params(nE + nT + nW + ranks);
    params << E0.reshaped(), T0.tokens.reshaped(), H0.weights.reshaped(), H0.biases;
    const Objective fn = [&](const Vector& p, Vector* grad) {
      const Matrix E = p.segment(0, nE).reshaped(d, n);
      const AggregationTokens T{p.segment(nE, nT).reshaped(ranks, d)};
      const BagHeads H{p.segment(nE + nT, nW).reshaped(ranks, d), p.tail(ranks)};
      if (grad) {
        AggregationTokens dT{Matrix::Zero(ranks, d)};
        BagHeads dH{Matrix::Zero(ranks, d), Vector::Zero(ranks)};
        const Matrix dE = bag_logits_backward(T, H, E, weights, &dT, &dH);
        grad->resize(p.size());
        *grad << dE.reshaped(), dT.tokens.reshaped(), dH.weights.reshaped(), dH.biases;
      }
      return weights.dot(bag_logits(T, H, E));
    };
    const auto r = grad_check(fn, params, 1e-5, 1e-6);
    EXPECT_TRUE(r.passed) << r.max_rel_error;
  }
}

TEST(Discriminator, ReferenceProbabilityAndClamp) {
  Mlp disc;
  Matrix D1(3, 2);
  D1 << 0.2, -0.4, 1.0, 0.5, -0.3, 0.8;
  disc.layers.push_back({D1, (Vector(3) << 0.0, 0.1, -0.1).finished()});
  disc.layers.push_back({(Matrix(1, 3) << 0.7, -1.1, 0.4).finished(), (Vector(1) << 0.2).finished()});
  EXPECT_NEAR(discriminate(disc, v2(0.3, -0.9)), 0.5607860019655536, 1e-12);

  Mlp huge;
  huge.layers.push_back({(Matrix(1, 2) << 1e4, 0.0).finished(), Vector::Zero(1)});
  EXPECT_DOUBLE_EQ(discriminate(huge, v2(1.0, 0.0)), 1.0 - kProbClamp);
  EXPECT_DOUBLE_EQ(discriminate(huge, v2(-1.0, 0.0)), kProbClamp);
}

TEST(Prototypes, MatchBruteForceMeans) {
  const ModelState s = init_model(small_dims(3, 2, 3), 5);
  for (int trial = 0; trial < 20; ++trial) {
    DomainDataset ds;
    ds.num_classes = 3;
    ds.input_dim = 3;
    std::vector<std::vector<Vector>> by_class(3);
    for (int b = 0; b < 4; ++b) {
      Bag bag;
      bag.bag_id = std::to_string(b);
      int top = 1;
      for (int j = 0; j < 5; ++j) {
        Instance inst;
        inst.features = Vector::Random(3);
        const int y = (b * 5 + j) % 3 + 1;
        inst.label = Severity(y);
        top = std::max(top, y);
        by_class[static_cast<std::size_t>(y - 1)].push_back(mlp_apply(s.source_encoder, inst.features));
        bag.instances.push_back(inst);
      }
      bag.bag_label = Severity(top);
      ds.bags.push_back(bag);
    }
    const PrototypeSet p = compute_prototypes(ds, s.source_encoder);
    for (int k = 0; k < 3; ++k) {
      Vector mean = Vector::Zero(2);
      for (const auto& e : by_class[static_cast<std::size_t>(k)]) mean += e;
      mean /= static_cast<double>(by_class[static_cast<std::size_t>(k)].size());
      EXPECT_LT((p.prototype(Severity(k + 1)) - mean).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_EQ(p.counts[static_cast<std::size_t>(k)], by_class[static_cast<std::size_t>(k)].size());
    }
  }
}

TEST(Prototypes, MissingClassNamed) {
  const ModelState s = init_model(small_dims(2, 2, 3), 1);
  DomainDataset ds;
  ds.num_classes = 3;
  ds.input_dim = 2;
  Bag bag;
  bag.bag_id = "only";
  bag.bag_label = Severity(2);
  bag.instances.push_back({"a", Vector::Zero(2), Severity(1)});
  bag.instances.push_back({"b", Vector::Ones(2), Severity(2)});
  ds.bags.push_back(bag);
  try {
    compute_prototypes(ds, s.source_encoder);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("class 3"), std::string::npos) << e.what();
  }
}

TEST(State, InitTargetCopiesSource) {
  const ModelState s = init_model(small_dims(), 3);
  for (std::size_t l = 0; l < s.source_encoder.layers.size(); ++l) {
    EXPECT_EQ(s.source_encoder.layers[l].weight, s.target_encoder.layers[l].weight);
  }
  EXPECT_EQ(s.instance_head.thresholds, Vector::Zero(3));
  EXPECT_EQ(s.tokens.tokens.rows(), 3);
  EXPECT_EQ(s.tokens.tokens.cols(), 4);
  EXPECT_EQ(s.discriminator.output_width(), 1);
  for (auto g : kAllGroups) EXPECT_FALSE(s.is_frozen(g));
  EXPECT_THROW(init_model(small_dims(5, 4, 1), 0), ValidationError);
}

TEST(State, InitIsSeeded) {
  const ModelState a = init_model(small_dims(), 8), b = init_model(small_dims(), 8),
                   c = init_model(small_dims(), 9);
  EXPECT_EQ(serialize_checkpoint(a), serialize_checkpoint(b));
  EXPECT_NE(serialize_checkpoint(a), serialize_checkpoint(c));
}

TEST(State, PackUnpackRoundTrip) {
  ModelState s = init_model(small_dims(), 4);
  Index total = 0;
  for (auto g : kAllGroups) total += group_size(s, g);
  const Vector flat = pack_groups(s, kAllGroups);
  EXPECT_EQ(flat.size(), total);
  ModelState z = zero_grads_like(s);
  EXPECT_EQ(pack_groups(z, kAllGroups).cwiseAbs().maxCoeff(), 0.0);
  unpack_groups(z, kAllGroups, flat);
  EXPECT_EQ(pack_groups(z, kAllGroups), flat);
  EXPECT_THROW(unpack_groups(z, kAllGroups, Vector::Zero(total - 1)), ShapeError);
}

TEST(State, ValidateRejectsBadShapes) {
  ModelState s = init_model(small_dims(), 4);
  EXPECT_NO_THROW(validate_model(s));
  s.tokens.tokens = Matrix::Zero(2, 4);
  EXPECT_THROW(validate_model(s), ShapeError);
  s = init_model(small_dims(), 4);
  s.instance_head.thresholds = Vector::Zero(4);
  EXPECT_THROW(validate_model(s), ShapeError);
}

TEST(Checkpoint, RoundTripIsByteStable) {
  ModelState s = init_model(small_dims(), 6);
  s.set_frozen(ParamGroup::tokens, true);
  s.instance_head.thresholds << 0.1, -1.0 / 3.0, 1e-300;
  const std::string text = serialize_checkpoint(s);
  const ModelState back = parse_checkpoint(text);
  EXPECT_EQ(serialize_checkpoint(back), text);
  EXPECT_TRUE(back.is_frozen(ParamGroup::tokens));
  EXPECT_FALSE(back.is_frozen(ParamGroup::bag_heads));
  EXPECT_EQ(back.instance_head.thresholds, s.instance_head.thresholds);

  const auto path = std::filesystem::temp_directory_path() / "sevalign_ckpt_test.json";
  save_checkpoint(s, path);
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(path)), text);
}

TEST(Checkpoint, RejectsMalformed) {
  EXPECT_THROW(parse_checkpoint("{"), ValidationError);
  EXPECT_THROW(parse_checkpoint("{\"format\":\"other\"}"), ValidationError);
  const ModelState s = init_model(small_dims(), 6);
  std::string text = serialize_checkpoint(s);
  const auto pos = text.find("\"version\":1");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 11, "\"version\":9");
  EXPECT_THROW(parse_checkpoint(text), ValidationError);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/ckpt.json"), ValidationError);
}
