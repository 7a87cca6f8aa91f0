#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "feae/feae.hpp"
#include "oracles.hpp"

using namespace feae;

namespace {

std::vector<std::vector<float>> sorted_rows(const Matrix<float>& X) {
  std::vector<std::vector<float>> rows;
  for (std::size_t r = 0; r < X.rows(); ++r) rows.emplace_back(X.row(r).begin(), X.row(r).end());
  std::sort(rows.begin(), rows.end());
  return rows;
}

double scalar(Var<double> v) { return v.value()(0, 0); }

}  // namespace

// ---------------------------------------------------------------------------
// Augmentations

TEST(Corrupt, ShuffleOfOneEdgeIsIdentity) {
  auto g = oracle::random_graph(2, 1, 3, 1);
  Rng rng(1);
  auto out = corrupt(g, AugmentationSpec::edge_shuffle(), rng);
  EXPECT_EQ(out.X, g.X);
  EXPECT_EQ(out.edges, g.edges);
}

TEST(Corrupt, ShufflePreservesTopologyAndRowMultiset) {
  auto g = oracle::random_graph(15, 40, 4, 2);
  Rng rng(2);
  auto out = corrupt(g, AugmentationSpec::edge_shuffle(), rng);
  EXPECT_EQ(out.num_nodes, g.num_nodes);
  EXPECT_EQ(out.edges, g.edges);
  EXPECT_EQ(sorted_rows(out.X), sorted_rows(g.X));
  EXPECT_NE(out.X, g.X);
}

TEST(Corrupt, NodeDropRemovesNodesAndTheirEdges) {
  auto g = oracle::random_graph(10, 30, 2, 3);
  Rng rng(3);
  auto out = corrupt(g, AugmentationSpec::node_drop(0.3), rng);
  EXPECT_EQ(out.num_nodes, 7u);
  EXPECT_NO_THROW(out.validate());
  for (std::size_t e = 0; e < out.num_edges(); ++e) {
    const auto o = std::size_t(out.origin[e]);
    EXPECT_EQ(out.host_keys[out.edges[e].src], g.host_keys[g.edges[o].src]);
    EXPECT_EQ(out.host_keys[out.edges[e].dst], g.host_keys[g.edges[o].dst]);
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(out.X(e, c), g.X(o, c));
  }
  std::size_t expected = 0;
  for (const auto& e : g.edges) {
    const bool keep_src = std::count(out.host_keys.begin(), out.host_keys.end(), g.host_keys[e.src]) > 0;
    const bool keep_dst = std::count(out.host_keys.begin(), out.host_keys.end(), g.host_keys[e.dst]) > 0;
    expected += keep_src && keep_dst;
  }
  EXPECT_EQ(out.num_edges(), expected);
}

TEST(Corrupt, RandomEdgeAddAppendsMarkedEdges) {
  auto g = oracle::random_graph(10, 30, 3, 4);
  Rng rng(4);
  auto out = corrupt(g, AugmentationSpec::random_edge_add(0.1), rng);
  ASSERT_EQ(out.num_edges(), 33u);
  EXPECT_NO_THROW(out.validate());
  for (std::size_t e = 0; e < 30; ++e) EXPECT_EQ(out.origin[e], std::int64_t(e));
  for (std::size_t e = 30; e < 33; ++e) EXPECT_EQ(out.origin[e], -1);
}

TEST(Corrupt, EdgeMaskZeroesRowsKeepsTopology) {
  auto g = oracle::random_graph(10, 20, 3, 5);
  for (auto& v : g.X.data()) v = 0.5f;
  Rng rng(5);
  auto out = corrupt(g, AugmentationSpec::edge_mask(0.3), rng);
  EXPECT_EQ(out.edges, g.edges);
  std::size_t zero_rows = 0;
  for (std::size_t e = 0; e < out.num_edges(); ++e)
    zero_rows += std::all_of(out.X.row(e).begin(), out.X.row(e).end(), [](float v) { return v == 0.0f; });
  EXPECT_EQ(zero_rows, 6u);
}

TEST(Corrupt, DeterministicPerSeedAndValidated) {
  auto g = oracle::random_graph(12, 30, 3, 6);
  for (auto spec : {AugmentationSpec::edge_shuffle(), AugmentationSpec::node_drop(0.3),
                    AugmentationSpec::random_edge_add(0.2), AugmentationSpec::edge_mask(0.3)}) {
    Rng a(77), b(77);
    auto x = corrupt(g, spec, a);
    auto y = corrupt(g, spec, b);
    EXPECT_EQ(x.X, y.X);
    EXPECT_EQ(x.edges, y.edges);
  }
  Rng rng(1);
  EXPECT_THROW(corrupt(g, AugmentationSpec::edge_mask(1.0), rng), PreconditionError);
  EXPECT_THROW(corrupt(g, AugmentationSpec::node_drop(0.0), rng), PreconditionError);
  auto tiny = oracle::random_graph(1, 2, 2, 1);
  EXPECT_THROW(corrupt(tiny, AugmentationSpec::node_drop(0.5), rng), PreconditionError);
  EXPECT_THROW(augmentation_preset("aug3"), ConfigError);
}

// ---------------------------------------------------------------------------
// Readout and discriminator

TEST(Readout, Examples) {
  Tape<double> t;
  auto s = readout(t.constant(Matrix<double>{{2, 0}, {0, 2}}));
  EXPECT_NEAR(s.value()(0, 0), 0.7311, 1e-4);
  EXPECT_NEAR(s.value()(0, 1), 0.7311, 1e-4);
  auto z = readout(t.constant(Matrix<double>(3, 4)));
  for (double v : z.value().data()) EXPECT_EQ(v, 0.5);
  auto one = readout(t.constant(Matrix<double>{{-1.0, 3.0}}));
  EXPECT_DOUBLE_EQ(one.value()(0, 1), sigmoid_scalar(3.0));
  EXPECT_THROW(readout(t.constant(Matrix<double>(0, 2))), PreconditionError);
}

TEST(Discriminate, ZeroAndIdentityWeights) {
  Tape<double> t;
  auto H = t.constant(Matrix<double>{{1, 0, 0}, {0.3, -2, 5}});
  auto s = t.constant(Matrix<double>{{1, 0, 0}});
  auto zero = discriminate(H, s, t.constant(Matrix<double>(3, 3)));
  for (double v : zero.value().data()) EXPECT_EQ(v, 0.5);
  auto id = discriminate(H, s, t.constant(Matrix<double>{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
  EXPECT_NEAR(id.value()(0, 0), 0.7311, 1e-4);
  EXPECT_THROW(discriminate(H, s, t.constant(Matrix<double>(2, 3))), DimensionError);
}

TEST(Discriminate, GradCheck) {
  Rng rng(3);
  Param<double> H("H", xavier_init<double>(6, 4, rng)), S("S", xavier_init<double>(1, 4, rng)),
      W("W", xavier_init<double>(4, 4, rng));
  Matrix<double> w(6, 1);
  for (auto& v : w.data()) v = rng.uniform(-1, 1);
  auto rep = grad_check<double>(
      [&](Tape<double>& t) { return weighted_sum(discriminate(t.param(H), t.param(S), t.param(W)), w); },
      {&H, &S, &W});
  EXPECT_LT(rep.max_relative_error, 1e-4);
}

// ---------------------------------------------------------------------------
// Contrastive loss

TEST(DgiLoss, Examples) {
  Tape<double> t;
  auto half = t.constant(Matrix<double>(4, 1, 0.5));
  EXPECT_NEAR(scalar(dgi_loss(half, half)), std::log(2.0), 1e-12);
  auto hi = t.constant(Matrix<double>(3, 1, 1 - 1e-12));
  auto lo = t.constant(Matrix<double>(3, 1, 1e-12));
  EXPECT_LT(scalar(dgi_loss(hi, lo)), 1e-6);
  EXPECT_NEAR(scalar(dgi_loss(t.constant(Matrix<double>{{0.9}}), t.constant(Matrix<double>{{0.2}}))), 0.1643,
              1e-4);
  EXPECT_THROW(dgi_loss(t.constant(Matrix<double>(0, 1)), half), PreconditionError);
}

TEST(DgiLoss, LogitFormMatchesProbabilityForm) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix<double> zp(7, 1), zn(5, 1);
    for (auto& v : zp.data()) v = rng.uniform(-6, 6);
    for (auto& v : zn.data()) v = rng.uniform(-6, 6);
    Tape<double> t;
    auto a = dgi_loss_logits(t.constant(zp), t.constant(zn));
    auto b = dgi_loss(sigmoid(t.constant(zp)), sigmoid(t.constant(zn)));
    EXPECT_NEAR(scalar(a), scalar(b), 1e-12);
  }
  Param<double> P("P", Matrix<double>{{0.3}, {-1.2}, {2.0}}), N("N", Matrix<double>{{-0.5}, {4.0}});
  auto rep = grad_check<double>([&](Tape<double>& t) { return dgi_loss_logits(t.param(P), t.param(N)); }, {&P, &N});
  EXPECT_LT(rep.max_relative_error, 1e-7);
  auto rep2 = grad_check<double>(
      [&](Tape<double>& t) { return dgi_loss(sigmoid(t.param(P)), sigmoid(t.param(N))); }, {&P, &N});
  EXPECT_LT(rep2.max_relative_error, 1e-7);
}

TEST(DgiLoss, LogitFormKeepsGradientWhenSaturated) {
  Param<double> P("P", Matrix<double>{{-40.0}});
  Tape<double> t;
  t.backward(dgi_loss_logits(t.param(P), t.constant(Matrix<double>{{0.0}})));
  EXPECT_LT(P.grad(0, 0), -0.4);
}

TEST(DgiLoss, ZeroInitDiscriminatorGivesLn2) {
  auto g = oracle::random_graph(10, 20, 4, 7);
  Rng rng(7);
  auto enc = EncoderParams<double>::init(4, 8, rng);
  auto ssl = SslParams<double>::init(8, 4, rng);
  auto views = augment_pair(g, augmentation_preset("dgi_default"), rng);
  Tape<double> t;
  auto [H, H_neg] = encode_pair(t, views, enc);
  auto s = readout(H);
  auto W = t.param(ssl.W_disc);
  EXPECT_NEAR(scalar(dgi_loss(discriminate(H, s, W), discriminate(H_neg, s, W))), std::log(2.0), 1e-3);
}

TEST(BceWithLogits, MatchesClampedProbabilityForm) {
  Tape<double> t;
  auto z = t.constant(Matrix<double>{{-1.0986122886681098}, {0.7}, {-1.0986122886681098}, {3.0}});
  auto a = bce_with_logits(z, {0, 2}, {1, 0});
  EXPECT_NEAR(scalar(a), 0.8370, 1e-4);
  auto b = bce_rows(sigmoid(z), {0, 2}, {1, 0});
  EXPECT_NEAR(scalar(a), scalar(b), 1e-12);
  EXPECT_THROW(bce_with_logits(z, {}, {}), PreconditionError);
  EXPECT_THROW(bce_with_logits(z, {9}, {1}), DimensionError);
}

// ---------------------------------------------------------------------------
// Reconstruction

TEST(Reconstruct, ZeroInputsGiveHalf) {
  Tape<double> t;
  Rng rng(1);
  auto a = reconstruct(t.constant(Matrix<double>(3, 4)), t.constant(xavier_init<double>(4, 2, rng)));
  for (double v : a.value().data()) EXPECT_EQ(v, 0.5);
  auto b = reconstruct(t.constant(xavier_init<double>(3, 4, rng)), t.constant(Matrix<double>(4, 2)));
  for (double v : b.value().data()) EXPECT_EQ(v, 0.5);
  EXPECT_THROW(reconstruct(t.constant(Matrix<double>(3, 4)), t.constant(Matrix<double>(3, 2))), DimensionError);
}

TEST(Reconstruct, OutputStrictlyInsideUnitInterval) {
  Tape<double> t;
  auto a = reconstruct(t.constant(Matrix<double>{{10, -10}, {0.1, 3}}), t.constant(Matrix<double>{{1, -1}, {2, 0.5}}));
  for (double v : a.value().data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Reconstruct, GradCheck) {
  Rng rng(4);
  Param<double> H("H", xavier_init<double>(5, 3, rng)), W("W_rec", xavier_init<double>(3, 4, rng));
  Matrix<double> X(5, 4);
  for (auto& v : X.data()) v = rng.uniform01();
  std::vector<RowRole> roles{RowRole::Few, RowRole::NonFew, RowRole::NonFew, RowRole::Skip, RowRole::Few};
  for (auto red : {Reduction::Mean, Reduction::Sum}) {
    auto rep = grad_check<double>(
        [&](Tape<double>& t) {
          auto [few, nonfew] = recon_losses(reconstruct(t.param(H), t.param(W)), X, roles, red);
          return linear_combination<double>({few, nonfew}, {-0.8, 0.2});
        },
        {&H, &W});
    EXPECT_LT(rep.max_relative_error, 1e-4);
  }
}

TEST(ReconLosses, Examples) {
  Tape<double> t;
  Matrix<double> X{{1, 0}, {0.3, 0.6}};
  auto same = recon_losses(t.constant(X), X, {RowRole::Few, RowRole::NonFew});
  EXPECT_EQ(scalar(same.first), 0.0);
  EXPECT_EQ(scalar(same.second), 0.0);
  auto Xh = t.constant(Matrix<double>{{0.5, 0.5}, {0.3, 0.6}});
  auto [few, nonfew] = recon_losses(Xh, X, roles_from_mask({true, false}));
  EXPECT_DOUBLE_EQ(scalar(few), 0.25);
  EXPECT_EQ(scalar(nonfew), 0.0);
  auto none = recon_losses(Xh, X, roles_from_mask({false, false}));
  EXPECT_EQ(scalar(none.first), 0.0);
}

TEST(ReconLosses, MeanEqualsSumOverSetSizeTimesWidth) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix<double> X(9, 3), Xh(9, 3);
    for (auto& v : X.data()) v = rng.uniform01();
    for (auto& v : Xh.data()) v = rng.uniform01();
    std::vector<bool> mask(9);
    std::size_t n_few = 0;
    for (std::size_t i = 0; i < 9; ++i) n_few += (mask[i] = rng.uniform01() < 0.3);
    if (n_few == 0 || n_few == 9) continue;
    auto roles = roles_from_mask(mask);
    Tape<double> t;
    auto mean = recon_losses(t.constant(Xh), X, roles, Reduction::Mean);
    auto sum = recon_losses(t.constant(Xh), X, roles, Reduction::Sum);
    EXPECT_NEAR(scalar(mean.first), scalar(sum.first) / double(n_few * 3), 1e-14);
    EXPECT_NEAR(scalar(mean.second), scalar(sum.second) / double((9 - n_few) * 3), 1e-14);
  }
}

// ---------------------------------------------------------------------------
// Combined loss

TEST(FeaeLoss, Composition) {
  auto lb = feae_loss(0.6931, 1.0, 0.5, 0.2, 0.8);
  EXPECT_NEAR(lb.l_total, -0.0069, 1e-12);
  EXPECT_EQ(feae_loss(0.7, 0.3, 0.2, 0.0, 0.0).l_total, 0.7);
  EXPECT_THROW(feae_loss(0.7, 0.3, 0.2, -1.0, 0.0), PreconditionError);
  Tape<double> t;
  auto v = feae_loss(t.constant(Matrix<double>{{0.6931}}), t.constant(Matrix<double>{{1.0}}),
                     t.constant(Matrix<double>{{0.5}}), 0.2, 0.8);
  EXPECT_NEAR(scalar(v), -0.0069, 1e-12);
}

TEST(FeaeLoss, DefaultTradeoffCoefficients) {
  TrainConfig cfg;
  EXPECT_EQ(cfg.alpha, 0.2);
  EXPECT_EQ(cfg.beta, 0.8);
}

TEST(FeaeLoss, BoundedBelowDuringTraining) {
  auto cfg = synthetic_preset("desk", 5);
  cfg.n_flows = 600;
  auto g = build_graph(generate_synthetic(cfg));
  Rng rng(5);
  auto sel = select_few_shot(g, {1, 0.05, false}, rng);
  TrainConfig tc;
  tc.seed = 5;
  tc.hidden = 16;
  tc.encoder_epochs_max = 60;
  tc.encoder_patience = 60;
  auto out = train_encoder<float>(g, sel, tc);
  ASSERT_FALSE(out.history.encoder.empty());
  for (const auto& lb : out.history.encoder) {
    EXPECT_LE(lb.l_few, 1.0);
    EXPECT_GE(lb.l_total, lb.l_dgi - tc.beta - 1e-6);
  }
}

TEST(FeaeLoss, AscentOnFewTermDoesNotDecreaseIt) {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    auto g = oracle::random_graph(8, 20, 4, seed);
    Rng rng(seed);
    auto enc = EncoderParams<double>::init(4, 6, rng);
    auto ssl = SslParams<double>::init(6, 4, rng);
    std::vector<bool> mask(20, false);
    mask[0] = mask[7] = true;
    const auto roles = roles_from_mask(mask);
    const auto X = g.X.cast<double>();
    auto few_value = [&] {
      Tape<double> t;
      auto H = encode(g, t.constant(X), enc);
      return scalar(recon_losses(reconstruct(H, t.param(ssl.W_rec)), X, roles).first);
    };
    const double before = few_value();
    {
      Tape<double> t;
      auto H = encode(g, t.constant(X), enc);
      auto [few, nonfew] = recon_losses(reconstruct(H, t.param(ssl.W_rec)), X, roles);
      t.backward(linear_combination<double>({few}, {-0.8}));
    }
    std::vector<Param<double>*> params{&enc.W_agg, &enc.W_edge, &ssl.W_rec};
    adam_step(params, AdamOptions{1e-3, 0.0});
    EXPECT_GE(few_value(), before) << "seed " << seed;
  }
}
