#include <gtest/gtest.h>

#include <fstream>

#include "fgdc/core/checkpoint.hpp"
#include "fgdc/core/grad_check.hpp"
#include "helpers.hpp"

namespace fgdc {
namespace {

using testing::filled;
using testing::random_tensor;

// Direct nested-loop convolution, independent of im2col and GEMM.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b,
                          int stride, int pad, int groups) {
  const Shape xs = x.shape(), ws = w.shape();
  const int oh = (xs.h + 2 * pad - ws.h) / stride + 1, ow = (xs.w + 2 * pad - ws.w) / stride + 1;
  Tensor<double> y({xs.n, ws.n, oh, ow});
  const int cg = xs.c / groups, og = ws.n / groups;
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < ws.n; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = b ? b->data()[o] : 0.0;
          const int g = o / og;
          for (int c = 0; c < cg; ++c)
            for (int ky = 0; ky < ws.h; ++ky)
              for (int kx = 0; kx < ws.w; ++kx) {
                const int iy = i * stride - pad + ky, ix = j * stride - pad + kx;
                if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                acc += w.at(o, c, ky, kx) * x.at(n, g * cg + c, iy, ix);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

Var<double> leaf_conv(Tape<double>& tape, const Tensor<double>& x, const Tensor<double>& w,
                      std::optional<Tensor<double>> b, ConvOptions opt) {
  std::optional<Var<double>> bv;
  if (b) bv = tape.constant(*b);
  return conv2d(tape.constant(x), tape.constant(w), bv, opt);
}

TEST(Tensor, DataLengthIsProductOfExtents) {
  Tensor<float> t({2, 3, 4, 5});
  EXPECT_EQ(t.numel(), 120u);
  EXPECT_EQ(t.data().size(), 120u);
  EXPECT_THROW(Tensor<float>({1, 1, 2, 2}, std::vector<float>(3)), ShapeError);
}

TEST(Tensor, SharedStorageRejectsMutation) {
  Tensor<float> a({1, 1, 2, 2});
  Tensor<float> b = a;
  EXPECT_THROW(b.mutable_data(), std::logic_error);
  Tensor<float> c = a.clone();
  c.mutable_data()[0] = 1;
  EXPECT_EQ(a.data()[0], 0.0f);
}

TEST(Conv2d, PointwiseScaling) {
  Tape<double> tape;
  auto y = leaf_conv(tape, filled<double>({1, 1, 3, 3}, 1.0), filled<double>({1, 1, 1, 1}, 2.0),
                     std::nullopt, {1, 0, 1});
  for (double v : y.value().data()) EXPECT_EQ(v, 2.0);
}

TEST(Conv2d, ZeroKernelGivesBias) {
  Tape<double> tape;
  auto y = leaf_conv(tape, random_tensor({1, 2, 5, 5}, 3), Tensor<double>({1, 2, 3, 3}),
                     filled<double>({1, 1, 1, 1}, 0.5), {1, 1, 1});
  for (double v : y.value().data()) EXPECT_EQ(v, 0.5);
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  struct Case { Shape x, w; int stride, pad, groups; };
  const Case cases[] = {{{1, 2, 5, 5}, {3, 2, 3, 3}, 1, 1, 1},
                        {{2, 4, 8, 6}, {6, 2, 3, 3}, 1, 1, 2},
                        {{1, 3, 8, 8}, {4, 3, 4, 4}, 2, 1, 1},
                        {{2, 3, 5, 7}, {2, 3, 1, 1}, 1, 0, 1}};
  std::uint64_t seed = 10;
  for (const auto& c : cases) {
    const auto x = random_tensor(c.x, seed++), w = random_tensor(c.w, seed++);
    const auto b = random_tensor({1, c.w.n, 1, 1}, seed++);
    Tape<double> tape;
    auto y = leaf_conv(tape, x, w, b, {c.stride, c.pad, c.groups});
    EXPECT_LT(max_abs_diff(y.value(), naive_conv(x, w, &b, c.stride, c.pad, c.groups)), 1e-6);
  }
}

TEST(Conv2d, GroupsEqualIndependentSliceConvolutions) {
  const auto x = random_tensor({2, 6, 6, 6}, 1), w = random_tensor({4, 3, 3, 3}, 2);
  Tape<double> tape;
  auto xv = tape.constant(x);
  auto grouped = conv2d(xv, tape.constant(w), std::optional<Var<double>>(), {1, 1, 2});
  for (int g = 0; g < 2; ++g) {
    auto xs = slice_channels(xv, 3 * g, 3);
    auto ws = slice_channels(tape.constant(w.reshaped({1, 4, 27, 1})), 2 * g, 2);
    auto part = conv2d(xs, tape.constant(ws.value().reshaped({2, 3, 3, 3})), std::optional<Var<double>>(), {1, 1, 1});
    auto expect = slice_channels(grouped, 2 * g, 2);
    EXPECT_LT(max_abs_diff(part.value(), expect.value()), 1e-6);
  }
}

TEST(Conv2d, RejectsNonTilingExtent) {
  Tape<double> tape;
  EXPECT_THROW(leaf_conv(tape, Tensor<double>({1, 1, 6, 6}), Tensor<double>({1, 1, 3, 3}),
                         std::nullopt, {2, 1, 1}),
               ShapeError);
  EXPECT_THROW(leaf_conv(tape, Tensor<double>({1, 2, 6, 6}), Tensor<double>({1, 3, 3, 3}),
                         std::nullopt, {1, 1, 1}),
               ShapeError);
}

TEST(Elementwise, Values) {
  Tape<double> tape;
  auto z = tape.constant(Tensor<double>({1, 1, 2, 2}));
  for (double v : sigmoid(z).value().data()) EXPECT_EQ(v, 0.5);
  Tensor<double> t({1, 1, 1, 2}, {-3.0, 3.0});
  auto r = relu(tape.constant(t));
  EXPECT_EQ(r.value().data()[0], 0.0);
  EXPECT_EQ(r.value().data()[1], 3.0);
  EXPECT_THROW(add(z, tape.constant(Tensor<double>({1, 1, 2, 3}))), ShapeError);
}

TEST(Elementwise, MulGradientIsOtherOperand) {
  const auto a = random_tensor({1, 2, 3, 3}, 4), b = random_tensor({1, 2, 3, 3}, 5);
  Tape<double> tape;
  auto av = tape.leaf(a);
  auto g = tape.backward(sum(mul(av, tape.constant(b)))).of(av);
  EXPECT_TRUE(bitwise_equal(g, b));
  auto f = [&](Tape<double>& t, const Var<double>& x) { return sum(mul(x, t.constant(b))); };
  EXPECT_LT(grad_check(f, a).max_rel_err, 1e-4);
}

// Independent align-corners-false bilinear sample.
double bilinear_oracle(const Tensor<double>& x, int c, int oy, int ox, int oh, int ow) {
  const Shape s = x.shape();
  auto src = [](int o, int in, int out) {
    return std::clamp((o + 0.5) * in / out - 0.5, 0.0, static_cast<double>(in - 1));
  };
  const double sy = src(oy, s.h, oh), sx = src(ox, s.w, ow);
  const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
  const int y1 = std::min(y0 + 1, s.h - 1), x1 = std::min(x0 + 1, s.w - 1);
  const double fy = sy - y0, fx = sx - x0;
  return (1 - fy) * ((1 - fx) * x.at(0, c, y0, x0) + fx * x.at(0, c, y0, x1)) +
         fy * ((1 - fx) * x.at(0, c, y1, x0) + fx * x.at(0, c, y1, x1));
}

TEST(Resize, ConstantStaysConstant) {
  Tape<double> tape;
  auto y = resize_bilinear(tape.constant(filled<double>({1, 2, 5, 3}, 0.7)), 11, 4);
  for (double v : y.value().data()) EXPECT_NEAR(v, 0.7, 1e-15);
}

TEST(Resize, TwoByTwoToOneIsMean) {
  Tape<double> tape;
  auto y = resize_bilinear(tape.constant(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4})), 1, 1);
  EXPECT_DOUBLE_EQ(y.value().item(), 2.5);
}

TEST(Resize, MatchesPerPixelOracle) {
  const auto x = random_tensor({1, 2, 3, 3}, 7);
  Tape<double> tape;
  auto y = resize_bilinear(tape.constant(x), 6, 6);
  double worst = 0;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        worst = std::max(worst, std::abs(y.value().at(0, c, i, j) - bilinear_oracle(x, c, i, j, 6, 6)));
  EXPECT_LT(worst, 1e-6);
}

TEST(Concat, ChannelCountsAndIdentity) {
  Tape<double> tape;
  auto a = tape.constant(random_tensor({1, 2, 3, 3}, 1));
  auto b = tape.constant(random_tensor({1, 3, 3, 3}, 2));
  EXPECT_EQ(concat_channels<double>({a, b}).shape().c, 5);
  EXPECT_TRUE(bitwise_equal(concat_channels<double>({a}).value(), a.value()));
  EXPECT_THROW(concat_channels<double>({a, tape.constant(Tensor<double>({1, 1, 3, 4}))}), ShapeError);
}

TEST(Concat, SliceGradientIsIncomingSlice) {
  const auto a = random_tensor({1, 2, 2, 2}, 1), b = random_tensor({1, 3, 2, 2}, 2);
  const auto w = random_tensor({1, 3, 2, 2}, 3);
  Tape<double> tape;
  auto av = tape.leaf(a), bv = tape.leaf(b);
  auto loss = weighted_sum(slice_channels(concat_channels<double>({av, bv}), 2, 3), w);
  auto g = tape.backward(loss);
  EXPECT_TRUE(bitwise_equal(g.of(bv), w));
  const Tensor<double> ga = g.of(av);
  for (double v : ga.data()) EXPECT_EQ(v, 0.0);
  auto f = [&](Tape<double>& t, const Var<double>& x) {
    return weighted_sum(slice_channels(concat_channels<double>({t.constant(a), x}), 2, 3), w);
  };
  EXPECT_LT(grad_check(f, b).max_rel_err, 1e-4);
}

TEST(Backward, SumAndQuadratic) {
  const auto x = random_tensor({1, 2, 3, 4}, 9);
  Tape<double> tape;
  auto xv = tape.leaf(x);
  const Tensor<double> ones = tape.backward(sum(xv)).of(xv);
  for (double v : ones.data()) EXPECT_EQ(v, 1.0);
  auto q = scale(sum(mul(xv, xv)), 0.5);
  EXPECT_LT(max_abs_diff(tape.backward(q).of(xv), x), 1e-15);
}

TEST(Backward, ConvReluMeanMatchesFiniteDifferences) {
  const auto x = testing::normal_tensor({1, 2, 5, 5}, 1);
  const auto w = testing::normal_tensor({3, 2, 3, 3}, 2);
  auto f = [&](Tape<double>& t, const Var<double>& xv) {
    return mean(relu(conv2d(xv, t.constant(w), std::optional<Var<double>>(), {1, 1, 1})));
  };
  GradCheckOptions opt;
  opt.skip_kinks = true;
  EXPECT_LT(grad_check(f, x, opt).max_rel_err, 1e-4);
}

TEST(Backward, RejectsNonScalarAndDetached) {
  Tape<double> tape;
  auto x = tape.leaf(random_tensor({1, 1, 2, 2}, 1));
  EXPECT_THROW(tape.backward(relu(x)), ShapeError);
  auto c = tape.constant(random_tensor({1, 1, 2, 2}, 2));
  EXPECT_THROW(tape.backward(sum(c)), std::invalid_argument);
}

TEST(Backward, DeterministicBitwise) {
  const auto x = random_tensor({2, 3, 6, 6}, 3), w = random_tensor({4, 3, 3, 3}, 4);
  auto run = [&] {
    Tape<double> tape;
    auto xv = tape.leaf(x);
    auto y = conv2d(xv, tape.constant(w), std::optional<Var<double>>(), {1, 1, 1});
    return tape.backward(mean(sigmoid(resize_bilinear(y, 9, 9)))).of(xv);
  };
  EXPECT_TRUE(bitwise_equal(run(), run()));
}

TEST(Tape, NonFiniteForwardIsAnError) {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>({1, 1, 1, 1}, {1e308}));
  EXPECT_THROW(scale(x, 10.0), NumericalError);
}

TEST(GradCheck, TrivialFunctions) {
  const auto x = random_tensor({1, 2, 3, 3}, 5);
  auto s = [](Tape<double>&, const Var<double>& v) { return sum(v); };
  EXPECT_LT(grad_check(s, x).max_rel_err, 1e-10);

  Tape<double> tape;
  auto z = tape.leaf(Tensor<double>({1, 1, 2, 2}));
  const Tensor<double> gz = tape.backward(sum(sigmoid(z))).of(z);
  for (double g : gz.data()) EXPECT_DOUBLE_EQ(g, 0.25);
  auto sg = [](Tape<double>&, const Var<double>& v) { return sum(sigmoid(v)); };
  EXPECT_TRUE(grad_check(sg, Tensor<double>({1, 1, 2, 2})).pass);

  auto bad = [](Tape<double>&, const Var<double>& v) { return relu(v); };
  EXPECT_THROW(grad_check(bad, x), ShapeError);
}

TEST(Parameters, KaimingBoundsAndZeroBias) {
  ParameterStore<double> store;
  Rng rng(1);
  auto conv = Conv2d<double>::create(store, "c", 4, 8, 3, rng);
  const double bound = std::sqrt(6.0 / (4 * 9));
  for (double v : conv.weight->value.data()) EXPECT_LE(std::abs(v), bound);
  for (double v : conv.bias->value.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(store.size(), 2u);
  EXPECT_THROW(store.add("c.weight", Tensor<double>({1, 1, 1, 1})), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsExact) {
  testing::TempDir dir("ckpt");
  ParameterStore<float> store;
  store.add("a.weight", random_tensor<float>({2, 3, 3, 3}, 1));
  store.add("b.bias", random_tensor<float>({1, 5, 1, 1}, 2));
  CheckpointData data = to_checkpoint(store);
  data.metadata["config"] = R"({"name":"micro"})";
  write_checkpoint(dir / "m.ckpt", data);
  const CheckpointData back = read_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(back.metadata.at("config"), R"({"name":"micro"})");
  ParameterStore<float> other;
  other.add("a.weight", Tensor<float>({2, 3, 3, 3}));
  other.add("b.bias", Tensor<float>({1, 5, 1, 1}));
  load_parameters(back, other);
  EXPECT_TRUE(bitwise_equal(other.find("a.weight")->value, store.find("a.weight")->value));
  EXPECT_TRUE(bitwise_equal(other.find("b.bias")->value, store.find("b.bias")->value));
}

TEST(Checkpoint, RejectsMismatchAndCorruption) {
  testing::TempDir dir("ckpt");
  ParameterStore<float> store;
  store.add("w", random_tensor<float>({1, 2, 3, 3}, 1));
  write_checkpoint(dir / "m.ckpt", to_checkpoint(store));

  ParameterStore<float> wrong;
  wrong.add("w", Tensor<float>({1, 2, 1, 1}));
  EXPECT_THROW(load_parameters(read_checkpoint(dir / "m.ckpt"), wrong), DataError);
  ParameterStore<float> missing;
  missing.add("v", Tensor<float>({1, 2, 3, 3}));
  EXPECT_THROW(load_parameters(read_checkpoint(dir / "m.ckpt"), missing), DataError);

  { std::ofstream(dir / "m.ckpt", std::ios::app | std::ios::binary) << 'x'; }
  EXPECT_THROW(read_checkpoint(dir / "m.ckpt"), DataError);
  { std::ofstream(dir / "bad.ckpt", std::ios::binary) << "NOPE"; }
  EXPECT_THROW(read_checkpoint(dir / "bad.ckpt"), DataError);
  const auto size = std::filesystem::file_size(dir / "m.ckpt");
  std::filesystem::resize_file(dir / "m.ckpt", size - 10);
  EXPECT_THROW(read_checkpoint(dir / "m.ckpt"), DataError);
}

}  // namespace
}  // namespace fgdc
