#include <gtest/gtest.h>

#include "fgdc/core/grad_check.hpp"
#include "fgdc/model/deformable.hpp"
#include "helpers.hpp"

namespace fgdc {
namespace {

using testing::filled;
using testing::random_tensor;

using VarD = Var<double>;
const std::optional<VarD> kNone;

TEST(DeformConv, OneTapIdentity) {
  const auto x = random_tensor({2, 1, 5, 4}, 1);
  Tape<double> tape;
  auto y = deform_conv(tape.constant(x), tape.constant(filled<double>({1, 1, 1, 1}, 1.0)), kNone,
                       tape.constant(Tensor<double>({2, 2, 5, 4})),
                       tape.constant(filled<double>({2, 1, 5, 4}, 1.0)), kNone, {1, 1});
  EXPECT_TRUE(bitwise_equal(y.value(), x));
}

TEST(DeformConv, ZeroOffsetsReduceToConv) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto x = random_tensor({2, 4, 6, 7}, 10 + seed), w = random_tensor({3, 4, 3, 3}, 20 + seed);
    const auto b = random_tensor({1, 3, 1, 1}, 30 + seed);
    const int groups = seed % 2 ? 2 : 1;
    Tape<double> tape;
    auto y = deform_conv(tape.constant(x), tape.constant(w), std::optional<VarD>(tape.constant(b)),
                         tape.constant(Tensor<double>({2, 18 * groups, 6, 7})),
                         tape.constant(filled<double>({2, 9 * groups, 6, 7}, 1.0)), kNone,
                         {3, groups});
    auto c = conv2d(tape.constant(x), tape.constant(w), std::optional<VarD>(tape.constant(b)),
                    {1, 1, 1});
    EXPECT_LT(max_abs_diff(y.value(), c.value()), 1e-6);
  }
}

TEST(DeformConv, BaseFlowReducesToWarp) {
  Tensor<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor<double> flow({1, 2, 2, 2}, {0.5, 0.5, 0.5, 0.5, 0, 0, 0, 0});
  Tape<double> tape;
  auto y = deform_conv(tape.constant(x), tape.constant(filled<double>({1, 1, 1, 1}, 1.0)), kNone,
                       tape.constant(Tensor<double>({1, 2, 2, 2})),
                       tape.constant(filled<double>({1, 1, 2, 2}, 1.0)),
                       std::optional<VarD>(tape.constant(flow)), {1, 1});
  const double expect[] = {1.5, 2.0, 3.5, 4.0};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(y.value().data()[i], expect[i], 1e-15);
  auto warped = backward_warp(tape.constant(x), tape.constant(flow));
  EXPECT_LT(max_abs_diff(y.value(), warped.value()), 1e-15);
}

TEST(DeformConv, ModulationScalesLinearly) {
  const auto x = random_tensor({1, 2, 5, 5}, 1), w = random_tensor({2, 2, 3, 3}, 2);
  const auto off = random_tensor({1, 18, 5, 5}, 3, -1, 1);
  Tape<double> tape;
  auto full = deform_conv(tape.constant(x), tape.constant(w), kNone, tape.constant(off),
                          tape.constant(filled<double>({1, 9, 5, 5}, 1.0)), kNone, {3, 1});
  auto quarter = deform_conv(tape.constant(x), tape.constant(w), kNone, tape.constant(off),
                             tape.constant(filled<double>({1, 9, 5, 5}, 0.25)), kNone, {3, 1});
  for (std::size_t i = 0; i < full.value().numel(); ++i)
    EXPECT_NEAR(quarter.value().data()[i], 0.25 * full.value().data()[i], 1e-12);
}

// Flow on every tap equals shifting the whole window: with integer flow the
// result matches conv2d over the warped input away from clamped borders.
TEST(DeformConv, IntegerFlowShiftsWindow) {
  const auto x = random_tensor({1, 2, 9, 9}, 4), w = random_tensor({2, 2, 3, 3}, 5);
  const auto flow = filled<double>({1, 2, 9, 9}, 1.0);
  Tape<double> tape;
  auto y = deform_conv(tape.constant(x), tape.constant(w), kNone,
                       tape.constant(Tensor<double>({1, 18, 9, 9})),
                       tape.constant(filled<double>({1, 9, 9, 9}, 1.0)),
                       std::optional<VarD>(tape.constant(flow)), {3, 1});
  auto c = conv2d(tape.constant(x), tape.constant(w), kNone, {1, 1, 1});
  for (int o = 0; o < 2; ++o)
    for (int i = 1; i < 6; ++i)
      for (int j = 1; j < 6; ++j)
        EXPECT_NEAR(y.value().at(0, o, i, j), c.value().at(0, o, i + 1, j + 1), 1e-12);
}

TEST(DeformConv, ShapeErrors) {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>({1, 4, 5, 5}));
  auto w = tape.constant(Tensor<double>({2, 4, 3, 3}));
  auto mods = tape.constant(Tensor<double>({1, 9, 5, 5}));
  EXPECT_THROW(deform_conv(x, w, kNone, tape.constant(Tensor<double>({1, 17, 5, 5})), mods, kNone,
                           {3, 1}),
               ShapeError);
  EXPECT_THROW(deform_conv(x, w, kNone, tape.constant(Tensor<double>({1, 18, 5, 4})), mods, kNone,
                           {3, 1}),
               ShapeError);
  // 4 channels do not split into 3 offset groups.
  EXPECT_THROW(deform_conv(x, w, kNone, tape.constant(Tensor<double>({1, 54, 5, 5})),
                           tape.constant(Tensor<double>({1, 27, 5, 5})), kNone, {3, 3}),
               ShapeError);
}

TEST(DeformConv, GradientsAllInputs) {
  const auto x = random_tensor({1, 2, 5, 5}, 1), w = random_tensor({2, 2, 3, 3}, 2);
  auto off = random_tensor({1, 36, 5, 5}, 3, -1.5, 1.5);
  auto flow = random_tensor({1, 2, 5, 5}, 4, -1.5, 1.5);
  const auto mods = random_tensor({1, 18, 5, 5}, 5, 0.1, 0.9);
  const auto proj = random_tensor({1, 2, 5, 5}, 6);
  const DeformOptions opt{3, 2};
  auto f = [&](int which) {
    return [&, which](Tape<double>& t, const VarD& v) {
      auto pick = [&](int k, const Tensor<double>& c) { return k == which ? v : t.constant(c); };
      return weighted_sum(deform_conv(pick(0, x), pick(1, w), kNone, pick(2, off), pick(3, mods),
                                      std::optional<VarD>(pick(4, flow)), opt),
                          proj);
    };
  };
  const Tensor<double>* inputs[] = {&x, &w, &off, &mods, &flow};
  GradCheckOptions o;
  o.skip_kinks = true;
  for (int k = 0; k < 5; ++k) {
    const auto r = grad_check(f(k), *inputs[k], o);
    EXPECT_TRUE(r.pass) << "input " << k << ": " << r.summary();
  }
}

TEST(OffsetPredictor, ZeroHeadAndChannelCounts) {
  ParameterStore<double> store;
  Rng rng(1);
  auto p = OffsetPredictor<double>::create(store, "p", 6, 6, 3, {3, 8}, false, rng);
  EXPECT_EQ(p.offset_channels(), 144);
  EXPECT_EQ(p.mod_channels(), 72);
  Tape<double> tape;
  auto [off, mods] = p(tape.constant(random_tensor({1, 6, 5, 5}, 2)),
                       tape.constant(random_tensor({1, 6, 5, 5}, 3)), nullptr);
  EXPECT_EQ(off.shape(), (Shape{1, 144, 5, 5}));
  EXPECT_EQ(mods.shape(), (Shape{1, 72, 5, 5}));
  for (double v : off.value().data()) EXPECT_EQ(v, 0.0);
  for (double v : mods.value().data()) EXPECT_EQ(v, 0.5);
}

TEST(OffsetPredictor, ModulationsBoundedAndGradientsReachBothInputs) {
  ParameterStore<double> store;
  Rng rng(4);
  auto p = OffsetPredictor<double>::create(store, "p", 3, 4, 2, {3, 1}, true, rng);
  testing::randomize_zero_parameters(store, 5, 0.3);
  const auto a = random_tensor({1, 3, 5, 5}, 6), b = random_tensor({1, 3, 5, 5}, 7);
  Tape<double> tape;
  auto va = tape.leaf(a), vb = tape.leaf(b);
  auto [off, mods] = p(va, vb, nullptr);
  for (double v : mods.value().data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  auto loss = add(weighted_sum(off, random_tensor(off.shape(), 8)),
                  weighted_sum(mods, random_tensor(mods.shape(), 9)));
  auto grads = tape.backward(loss);
  double na = 0, nb = 0;
  const Tensor<double> ga = grads.of(va), gb = grads.of(vb);
  for (double g : ga.data()) na += std::abs(g);
  for (double g : gb.data()) nb += std::abs(g);
  EXPECT_GT(na, 0.0);
  EXPECT_GT(nb, 0.0);
}

TEST(OffsetPredictor, ShapeMismatch) {
  ParameterStore<double> store;
  Rng rng(1);
  auto p = OffsetPredictor<double>::create(store, "p", 3, 4, 2, {3, 1}, false, rng);
  Tape<double> tape;
  EXPECT_THROW(p(tape.constant(Tensor<double>({1, 3, 4, 4})),
                 tape.constant(Tensor<double>({1, 3, 4, 5})), nullptr),
               ShapeError);
}

TEST(Cascade, UpsampleDoublesOffsets) {
  Tape<double> tape;
  CascadeState<double> c{tape.constant(filled<double>({1, 18, 3, 3}, 1.5)),
                         tape.constant(filled<double>({1, 9, 3, 3}, 0.3))};
  auto up = upsample_cascade(c, 6, 6);
  EXPECT_EQ(up.offsets.shape(), (Shape{1, 18, 6, 6}));
  for (double v : up.offsets.value().data()) EXPECT_NEAR(v, 3.0, 1e-14);
  for (double v : up.mods.value().data()) EXPECT_NEAR(v, 0.3, 1e-14);
}

struct FgdclFixture {
  ParameterStore<double> store;
  Fgdcl<double> layer;
  Tensor<double> f0, f0w, f1w, flow;

  FgdclFixture() {
    Rng rng(3);
    layer = Fgdcl<double>::create(store, "l", 4, 4, 3, {3, 2}, false, rng);
    f0 = random_tensor({1, 4, 6, 6}, 1);
    f0w = random_tensor({1, 4, 6, 6}, 2);
    f1w = random_tensor({1, 4, 6, 6}, 3);
    flow = random_tensor({1, 2, 6, 6}, 4, -1, 1);
  }
};

TEST(Fgdcl, ZeroInitReturnsWarpedFeature) {
  FgdclFixture fx;
  Tape<double> tape;
  auto r = fx.layer.apply(tape.constant(fx.f0), tape.constant(fx.f0w), tape.constant(fx.f1w),
                          tape.constant(fx.flow), nullptr);
  EXPECT_TRUE(bitwise_equal(r.warped.value(), fx.f0w));
  EXPECT_EQ(r.cascade.offsets.shape(), (Shape{1, 36, 6, 6}));
  EXPECT_EQ(r.cascade.mods.shape(), (Shape{1, 18, 6, 6}));
}

TEST(Fgdcl, SkipAddsExactlyWarpedFeature) {
  FgdclFixture fx;
  testing::randomize_zero_parameters(fx.store, 9, 0.3);
  Tape<double> tape;
  auto with = fx.layer.apply(tape.constant(fx.f0), tape.constant(fx.f0w), tape.constant(fx.f1w),
                             tape.constant(fx.flow), nullptr);
  auto without = fx.layer.apply(tape.constant(fx.f0), tape.constant(fx.f0w),
                                tape.constant(fx.f1w), tape.constant(fx.flow), nullptr,
                                {true, false});
  for (std::size_t i = 0; i < fx.f0w.numel(); ++i)
    EXPECT_EQ(with.warped.value().data()[i], without.warped.value().data()[i] + fx.f0w.data()[i]);
}

TEST(Fgdcl, GradCheckEndToEnd) {
  FgdclFixture fx;
  testing::randomize_zero_parameters(fx.store, 11, 0.1);
  const auto proj = random_tensor({1, 4, 6, 6}, 12);
  GradCheckOptions o;
  o.tol = 1e-3;
  o.skip_kinks = true;
  auto via_flow = [&](Tape<double>& t, const VarD& v) {
    return weighted_sum(fx.layer.apply(t.constant(fx.f0), t.constant(fx.f0w), t.constant(fx.f1w), v,
                                       nullptr).warped,
                        proj);
  };
  auto via_f0 = [&](Tape<double>& t, const VarD& v) {
    return weighted_sum(fx.layer.apply(v, t.constant(fx.f0w), t.constant(fx.f1w),
                                       t.constant(fx.flow), nullptr).warped,
                        proj);
  };
  auto via_f1w = [&](Tape<double>& t, const VarD& v) {
    return weighted_sum(fx.layer.apply(t.constant(fx.f0), t.constant(fx.f0w), v,
                                       t.constant(fx.flow), nullptr).warped,
                        proj);
  };
  EXPECT_TRUE(grad_check(via_flow, fx.flow, o).pass);
  EXPECT_TRUE(grad_check(via_f0, fx.f0, o).pass);
  const auto r = grad_check(via_f1w, fx.f1w, o);
  EXPECT_TRUE(r.pass) << r.summary();
}

}  // namespace
}  // namespace fgdc
