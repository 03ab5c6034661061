#include <gtest/gtest.h>

#include "fgdc/core/grad_check.hpp"
#include "fgdc/data/synth.hpp"
#include "fgdc/model/flow_step.hpp"
#include "helpers.hpp"

namespace fgdc {
namespace {

using testing::filled;
using testing::random_tensor;
using testing::randomize_zero_parameters;

using VarD = Var<double>;

TEST(Pyramid, PaperChannelExtents) {
  ParameterStore<double> store;
  Rng rng(1);
  auto enc = FeatureEncoder<double>::create(store, "e", ModelConfig::preset("S").pyramid_channels, rng);
  Tape<double> tape;
  tape.set_grad_enabled(false);
  auto p = extract_pyramid(enc, tape.constant(random_tensor({1, 3, 64, 64}, 2, 0, 1)));
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0].shape(), (Shape{1, 24, 32, 32}));
  EXPECT_EQ(p[1].shape(), (Shape{1, 48, 16, 16}));
  EXPECT_EQ(p[2].shape(), (Shape{1, 96, 8, 8}));
}

TEST(Pyramid, IdenticalImagesIdenticalFeatures) {
  ParameterStore<double> store;
  Rng rng(1);
  auto enc = FeatureEncoder<double>::create(store, "e", {4, 6, 8}, rng);
  const auto img = random_tensor({1, 3, 16, 16}, 3, 0, 1);
  Tape<double> tape;
  auto a = enc(tape.constant(img)), b = enc(tape.constant(img));
  for (int l = 0; l < 3; ++l) EXPECT_TRUE(bitwise_equal(a[l].value(), b[l].value()));
}

TEST(Pyramid, NonDivisibleExtents) {
  ParameterStore<double> store;
  Rng rng(1);
  auto enc = FeatureEncoder<double>::create(store, "e", {4, 6, 8}, rng);
  Tape<double> tape;
  EXPECT_THROW(enc(tape.constant(Tensor<double>({1, 3, 20, 16}))), ShapeError);
}

TEST(Pyramid, GradCheckCoarsestMean) {
  ParameterStore<double> store;
  Rng rng(4);
  auto enc = FeatureEncoder<double>::create(store, "e", {3, 4, 4}, rng);
  GradCheckOptions o;
  o.tol = 1e-3;
  o.skip_kinks = true;
  auto f = [&](Tape<double>&, const VarD& x) { return mean(enc(x)[2]); };
  const auto r = grad_check(f, random_tensor({1, 3, 8, 8}, 5, 0, 1), o);
  EXPECT_TRUE(r.pass) << r.summary();
}

TEST(Fen, OutputShapes) {
  ModelConfig cfg;
  cfg.ifb_channels = {6, 6, 4};
  cfg.ifb_depth = 2;
  ParameterStore<double> store;
  Rng rng(1);
  auto fen = Fen<double>::create(store, "fen", cfg, rng);
  Tape<double> tape;
  tape.set_grad_enabled(false);
  auto out = fen(tape.constant(random_tensor({2, 3, 16, 24}, 1, 0, 1)),
                 tape.constant(random_tensor({2, 3, 16, 24}, 2, 0, 1)));
  EXPECT_EQ(out.flow_t0.shape(), (Shape{2, 2, 16, 24}));
  EXPECT_EQ(out.flow_t1.shape(), (Shape{2, 2, 16, 24}));
  EXPECT_EQ(out.mask.shape(), (Shape{2, 1, 16, 24}));
  for (double v : out.mask.value().data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Fen, PaperWidths) {
  EXPECT_EQ(ModelConfig::preset("L").ifb_channels, (std::array<int, 3>{180, 120, 90}));
  EXPECT_EQ(ModelConfig::preset("S").ifb_channels, (std::array<int, 3>{120, 90, 60}));
}

// <ft(p), fw(q)> / C with q clamped to the image, straight from the definition.
double corr_oracle(const Tensor<double>& a, const Tensor<double>& b, int n, int i, int j, int dy,
                   int dx) {
  const Shape s = a.shape();
  const int y = std::clamp(i + dy, 0, s.h - 1), x = std::clamp(j + dx, 0, s.w - 1);
  double acc = 0;
  for (int c = 0; c < s.c; ++c) acc += a.at(n, c, i, j) * b.at(n, c, y, x);
  return acc / s.c;
}

TEST(Correlation, OnesGiveOne) {
  Tape<double> tape;
  auto ones = tape.constant(filled<double>({1, 5, 4, 4}, 1.0));
  auto y = correlation(ones, ones, 2);
  EXPECT_EQ(y.shape(), (Shape{1, 25, 4, 4}));
  for (double v : y.value().data()) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(Correlation, OrthogonalGiveZero) {
  Tensor<double> a({1, 4, 5, 5}), b({1, 4, 5, 5});
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      a.at(0, 0, i, j) = 1, a.at(0, 1, i, j) = 1;
      b.at(0, 2, i, j) = 3, b.at(0, 3, i, j) = -2;
    }
  Tape<double> tape;
  for (double v : correlation(tape.constant(a), tape.constant(b), 1).value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Correlation, MatchesBruteForce) {
  const auto a = random_tensor({2, 4, 6, 6}, 1), b = random_tensor({2, 4, 6, 6}, 2);
  const int r = 2;
  Tape<double> tape;
  auto y = correlation(tape.constant(a), tape.constant(b), r);
  double worst = 0;
  for (int n = 0; n < 2; ++n)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        for (int i = 0; i < 6; ++i)
          for (int j = 0; j < 6; ++j) {
            const int ch = (dy + r) * (2 * r + 1) + (dx + r);
            worst = std::max(worst, std::abs(y.value().at(n, ch, i, j) -
                                             corr_oracle(a, b, n, i, j, dy, dx)));
          }
  EXPECT_LT(worst, 1e-6);
}

TEST(Correlation, Errors) {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({1, 2, 4, 4}));
  EXPECT_THROW(correlation(a, tape.constant(Tensor<double>({1, 2, 4, 5})), 1), ShapeError);
  EXPECT_THROW(correlation(a, a, -1), std::invalid_argument);
}

struct FrbFixture {
  ParameterStore<double> store;
  Frb<double> frb;
  Tensor<double> f0, f1, v0, v1, m;

  FrbFixture() {
    Rng rng(2);
    frb = Frb<double>::create(store, "frb", 4, 1, -4.0, rng);
    f0 = random_tensor({1, 4, 6, 6}, 1);
    f1 = random_tensor({1, 4, 6, 6}, 2);
    v0 = random_tensor({1, 2, 6, 6}, 3, -1.3, 1.3);
    v1 = random_tensor({1, 2, 6, 6}, 4, -1.3, 1.3);
    m = random_tensor({1, 1, 6, 6}, 5, 0.2, 0.8);
  }
  FrbOutput<double> run(Tape<double>& t) const {
    return frb(t.constant(f0), t.constant(f1), t.constant(v0), t.constant(v1), t.constant(m));
  }
};

TEST(Frb, ZeroHeadKeepsFlows) {
  FrbFixture fx;
  Tape<double> tape;
  auto r = fx.run(tape);
  EXPECT_TRUE(bitwise_equal(r.flow_t0.value(), fx.v0));
  EXPECT_TRUE(bitwise_equal(r.flow_t1.value(), fx.v1));
}

TEST(Frb, ZeroOcclusionOutputAddsHalf) {
  FrbFixture fx;
  for (auto* p : {fx.frb.occ_head.weight, fx.frb.occ_head.bias}) p->value = Tensor<double>(p->value.shape());
  Tape<double> tape;
  auto r = fx.run(tape);
  double sat = 0;
  for (std::size_t i = 0; i < fx.m.numel(); ++i) {
    const double raw = fx.m.data()[i] + 0.5;
    EXPECT_EQ(r.mask.value().data()[i], std::min(raw, 1.0));
    sat += raw > 1.0;
  }
  EXPECT_DOUBLE_EQ(r.saturation, sat / fx.m.numel());
}

TEST(Frb, GradCheck) {
  FrbFixture fx;
  randomize_zero_parameters(fx.store, 7);
  GradCheckOptions o;
  o.tol = 1e-3;
  o.skip_kinks = true;
  const auto p0 = random_tensor({1, 2, 6, 6}, 8), p1 = random_tensor({1, 2, 6, 6}, 9);
  const auto pm = random_tensor({1, 1, 6, 6}, 10), pf = random_tensor({1, 4, 6, 6}, 11);
  auto project = [&](const FrbOutput<double>& r) {
    return add(add(weighted_sum(r.flow_t0, p0), weighted_sum(r.flow_t1, p1)),
               add(weighted_sum(r.mask, pm), weighted_sum(r.ft, pf)));
  };
  auto via_f0 = [&](Tape<double>& t, const VarD& x) {
    return project(fx.frb(x, t.constant(fx.f1), t.constant(fx.v0), t.constant(fx.v1),
                          t.constant(fx.m)));
  };
  auto via_v1 = [&](Tape<double>& t, const VarD& x) {
    return project(fx.frb(t.constant(fx.f0), t.constant(fx.f1), t.constant(fx.v0), x,
                          t.constant(fx.m)));
  };
  auto r0 = grad_check(via_f0, fx.f0, o);
  auto r1 = grad_check(via_v1, fx.v1, o);
  EXPECT_TRUE(r0.pass) << r0.summary();
  EXPECT_TRUE(r1.pass) << r1.summary();
}

TEST(Anchor, ConstantFramesAnyFlow) {
  Tape<double> tape;
  auto c = tape.constant(filled<double>({1, 3, 8, 8}, 0.37));
  auto y = synthesize_anchor(c, c, tape.constant(random_tensor({1, 2, 8, 8}, 1, -5, 5)),
                             tape.constant(random_tensor({1, 2, 8, 8}, 2, -5, 5)),
                             tape.constant(random_tensor({1, 1, 8, 8}, 3, 0, 1)));
  for (double v : y.value().data()) EXPECT_NEAR(v, 0.37, 1e-15);
}

TEST(Anchor, ZeroFlowHalfMaskAverages) {
  const auto a = random_tensor({1, 3, 8, 8}, 1, 0, 1), b = random_tensor({1, 3, 8, 8}, 2, 0, 1);
  Tape<double> tape;
  Tensor<double> zero({1, 2, 8, 8});
  auto y = synthesize_anchor(tape.constant(a), tape.constant(b), tape.constant(zero),
                             tape.constant(zero), tape.constant(filled<double>({1, 1, 8, 8}, 0.5)));
  for (std::size_t i = 0; i < a.numel(); ++i)
    EXPECT_NEAR(y.value().data()[i], 0.5 * (a.data()[i] + b.data()[i]), 1e-15);
}

TEST(Anchor, TranslationWithTrueFlowsAbove40dB) {
  SynthSpec spec;
  spec.fixed_velocity = true;
  spec.velocity_x = 4.0;
  spec.velocity_y = -2.0;
  spec.seed = 17;
  for (const auto& s : synth_generate(spec, 3)) {
    Tape<double> tape;
    auto y = synthesize_anchor(tape.constant(s.i0.cast<double>()), tape.constant(s.i1.cast<double>()),
                               tape.constant(s.flow_t0->cast<double>()),
                               tape.constant(s.flow_t1->cast<double>()),
                               tape.constant(filled<double>({1, 1, 64, 64}, 0.5)));
    const auto gt = s.it.cast<double>();
    const auto& valid = *s.valid;
    // Away from dis-occlusions and a 3-pixel frame border.
    double se = 0;
    int n = 0;
    for (int c = 0; c < 3; ++c)
      for (int i = 3; i < 61; ++i)
        for (int j = 3; j < 61; ++j) {
          if (valid.at(0, 0, i, j) < 0.5) continue;
          const double d = y.value().at(0, c, i, j) - gt.at(0, c, i, j);
          se += d * d;
          ++n;
        }
    ASSERT_GT(n, 3 * 58 * 58 / 2);
    EXPECT_GT(10 * std::log10(n / se), 40.0) << s.id;
  }
}

ModelConfig tiny_flow_config() {
  ModelConfig c;
  c.pyramid_channels = {4, 6, 8};
  c.ifb_channels = {6, 6, 4};
  c.ifb_depth = 2;
  c.corr_radius = 1;
  return c;
}

TEST(FlowStep, ShapeContract) {
  ParameterStore<double> store;
  Rng rng(3);
  auto fs = FlowStep<double>::create(store, tiny_flow_config(), rng);
  Tape<double> tape;
  tape.set_grad_enabled(false);
  auto out = fs(tape.constant(random_tensor({2, 3, 32, 24}, 1, 0, 1)),
                tape.constant(random_tensor({2, 3, 32, 24}, 2, 0, 1)));
  EXPECT_EQ(out.coarse.flow_t0.shape(), (Shape{2, 2, 32, 24}));
  EXPECT_EQ(out.flow_t0.shape(), (Shape{2, 2, 32, 24}));
  EXPECT_EQ(out.flow_t1.shape(), (Shape{2, 2, 32, 24}));
  EXPECT_EQ(out.mask.shape(), (Shape{2, 1, 32, 24}));
  EXPECT_EQ(out.anchor.shape(), (Shape{2, 3, 32, 24}));
  ASSERT_EQ(out.flows_t0.size(), 3u);
  for (int l = 0; l < 3; ++l) {
    const int h = 32 >> (l + 1), w = 24 >> (l + 1);
    EXPECT_EQ(out.flows_t0[l].shape(), (Shape{2, 2, h, w}));
    EXPECT_EQ(out.flows_t1[l].shape(), (Shape{2, 2, h, w}));
    EXPECT_EQ(out.masks[l].shape(), (Shape{2, 1, h, w}));
    EXPECT_EQ(out.anchors[l].shape(), l == 0 ? (Shape{2, 3, 32, 24}) : (Shape{2, 3, h, w}));
    for (double v : out.masks[l].value().data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(FlowStep, ZeroHeadsGiveUpsampledCoarseFlows) {
  ParameterStore<double> store;
  Rng rng(3);
  auto fs = FlowStep<double>::create(store, tiny_flow_config(), rng);
  const auto a = random_tensor({1, 3, 16, 16}, 1, 0, 1), b = random_tensor({1, 3, 16, 16}, 2, 0, 1);
  Tape<double> tape;
  auto out = fs(tape.constant(a), tape.constant(b));
  auto expect = scale_flow(scale_flow(scale_flow(scale_flow(out.coarse.flow_t0, 0.125), 2.0), 2.0), 2.0);
  // The residual heads are zero so the refined flow is the coarse flow taken
  // down to the coarsest level and back up.
  EXPECT_LT(max_abs_diff(out.flows_t0[0].value(),
                         scale_flow(scale_flow(scale_flow(out.coarse.flow_t0, 0.125), 2.0), 2.0).value()),
            1e-12);
  EXPECT_LT(max_abs_diff(out.flow_t0.value(), expect.value()), 1e-12);
}

TEST(FlowStep, Deterministic) {
  ParameterStore<double> store;
  Rng rng(3);
  auto fs = FlowStep<double>::create(store, tiny_flow_config(), rng);
  randomize_zero_parameters(store, 4);
  const auto a = random_tensor({1, 3, 16, 16}, 1, 0, 1), b = random_tensor({1, 3, 16, 16}, 2, 0, 1);
  Tape<double> t1, t2;
  auto x = fs(t1.constant(a), t1.constant(b)), y = fs(t2.constant(a), t2.constant(b));
  EXPECT_TRUE(bitwise_equal(x.anchor.value(), y.anchor.value()));
  EXPECT_TRUE(bitwise_equal(x.flow_t1.value(), y.flow_t1.value()));
}

TEST(FlowStep, RejectsUnalignedExtents) {
  ParameterStore<double> store;
  Rng rng(3);
  auto fs = FlowStep<double>::create(store, tiny_flow_config(), rng);
  Tape<double> tape;
  EXPECT_THROW(fs(tape.constant(Tensor<double>({1, 3, 20, 16})),
                  tape.constant(Tensor<double>({1, 3, 20, 16}))),
               ShapeError);
  EXPECT_THROW(fs(tape.constant(Tensor<double>({1, 3, 16, 16})),
                  tape.constant(Tensor<double>({1, 3, 16, 24}))),
               ShapeError);
}

}  // namespace
}  // namespace fgdc
