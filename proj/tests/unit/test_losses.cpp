#include <gtest/gtest.h>

#include <complex>
#include <numbers>
#include <random>

#include "fgdc/core/grad_check.hpp"
#include "fgdc/loss/losses.hpp"
#include "helpers.hpp"

namespace fgdc {
namespace {

using testing::filled;
using testing::random_tensor;
using VarD = Var<double>;

double val(const VarD& v) { return v.value().item(); }

TEST(Distillation, IdenticalAndUnitOffset) {
  const auto a = random_tensor({2, 2, 16, 16}, 1, -3, 3), b = random_tensor({2, 2, 16, 16}, 2, -3, 3);
  Tape<double> tape;
  EXPECT_EQ(val(distillation_loss(tape.constant(a), tape.constant(b), tape.constant(a),
                                  tape.constant(b))),
            0.0);
  Tensor<double> a1 = a.clone(), b1 = b.clone();
  for (double& v : a1.mutable_data()) v += 1.0;
  for (double& v : b1.mutable_data()) v += 1.0;
  EXPECT_NEAR(val(distillation_loss(tape.constant(a1), tape.constant(b1), tape.constant(a),
                                    tape.constant(b))),
              2.0, 1e-12);
}

// Quarter-resolution bilinear (align-corners false) by hand, then mean |.|.
Tensor<double> quarter(const Tensor<double>& f) {
  const Shape s = f.shape();
  const int oh = s.h / 4, ow = s.w / 4;
  Tensor<double> out({s.n, s.c, oh, ow});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          const double y = std::max(0.0, (i + 0.5) * 4 - 0.5), x = std::max(0.0, (j + 0.5) * 4 - 0.5);
          const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
          const int y1 = std::min(y0 + 1, s.h - 1), x1 = std::min(x0 + 1, s.w - 1);
          const double ay = y - y0, ax = x - x0;
          out.at(n, c, i, j) = (1 - ay) * ((1 - ax) * f.at(n, c, y0, x0) + ax * f.at(n, c, y0, x1)) +
                               ay * ((1 - ax) * f.at(n, c, y1, x0) + ax * f.at(n, c, y1, x1));
        }
  return out;
}

double mean_abs(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(a.data()[i] - b.data()[i]);
  return s / a.numel();
}

TEST(Distillation, MatchesOracle) {
  Tensor<double> f[4];
  for (int k = 0; k < 4; ++k) f[k] = random_tensor({2, 2, 16, 24}, 10 + k, -4, 4);
  Tape<double> tape;
  const double got = val(distillation_loss(tape.constant(f[0]), tape.constant(f[1]),
                                           tape.constant(f[2]), tape.constant(f[3])));
  const double expect = mean_abs(quarter(f[0]), quarter(f[2])) + mean_abs(quarter(f[1]), quarter(f[3]));
  EXPECT_NEAR(got, expect, 1e-7);
}

TEST(TaskOriented, Examples) {
  const auto gt = random_tensor({1, 3, 8, 8}, 1, 0, 0.8);
  Tensor<double> shifted = gt.clone();
  for (double& v : shifted.mutable_data()) v += 0.1;
  Tape<double> tape;
  EXPECT_EQ(val(task_oriented_loss(tape.constant(gt), tape.constant(gt))), 0.0);
  EXPECT_NEAR(val(task_oriented_loss(tape.constant(shifted), tape.constant(gt))), 0.1, 1e-12);
  EXPECT_NEAR(val(flow_step_loss(tape.constant(Tensor<double>::scalar(0.1)),
                                 tape.constant(Tensor<double>::scalar(2.0)), 0.01)),
              0.12, 1e-15);
  EXPECT_THROW(task_oriented_loss(tape.constant(gt), tape.constant(Tensor<double>({1, 3, 8, 4}))),
               ShapeError);
}

TEST(PyramidContent, Examples) {
  Tape<double> tape;
  std::vector<VarD> out, tgt;
  for (int l = 0; l < 3; ++l) {
    const auto t = random_tensor({1, 3, 16 >> l, 16 >> l}, l, 0, 0.6);
    Tensor<double> o = t.clone();
    for (double& v : o.mutable_data()) v += 0.3;
    out.push_back(tape.constant(o));
    tgt.push_back(tape.constant(t));
  }
  EXPECT_EQ(val(pyramid_content_loss(tgt, tgt)), 0.0);
  EXPECT_NEAR(val(pyramid_content_loss(out, tgt)), 0.3, 1e-12);
  std::vector<VarD> two(tgt.begin(), tgt.begin() + 2);
  EXPECT_THROW(pyramid_content_loss(out, two), ShapeError);
}

TEST(PyramidContent, MatchesOracle) {
  Tape<double> tape;
  std::vector<VarD> out, tgt;
  double expect = 0;
  for (int l = 0; l < 3; ++l) {
    const auto a = random_tensor({2, 3, 16 >> l, 12 >> l}, 20 + l);
    const auto b = random_tensor({2, 3, 16 >> l, 12 >> l}, 30 + l);
    out.push_back(tape.constant(a));
    tgt.push_back(tape.constant(b));
    expect += mean_abs(a, b) / 3;
  }
  EXPECT_NEAR(val(pyramid_content_loss(out, tgt)), expect, 1e-7);
}

// Direct O(N^4) DFT of each plane.
using cplx = std::complex<double>;
std::vector<cplx> naive_dft(const Tensor<double>& x, int n, int c) {
  const Shape s = x.shape();
  std::vector<cplx> out(s.plane());
  for (int u = 0; u < s.h; ++u)
    for (int v = 0; v < s.w; ++v) {
      cplx acc = 0;
      for (int i = 0; i < s.h; ++i)
        for (int j = 0; j < s.w; ++j) {
          const double ang = -2 * std::numbers::pi * (double(u) * i / s.h + double(v) * j / s.w);
          acc += x.at(n, c, i, j) * cplx(std::cos(ang), std::sin(ang));
        }
      out[u * s.w + v] = acc;
    }
  return out;
}

std::pair<double, double> naive_parts(const Tensor<double>& a, const Tensor<double>& b) {
  const Shape s = a.shape();
  double amp = 0, ph = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const auto x = naive_dft(a, n, c), y = naive_dft(b, n, c);
      for (std::size_t k = 0; k < x.size(); ++k) {
        amp += std::abs(std::abs(x[k]) - std::abs(y[k]));
        double d = std::arg(x[k]) - std::arg(y[k]);
        while (d > std::numbers::pi) d -= 2 * std::numbers::pi;
        while (d <= -std::numbers::pi) d += 2 * std::numbers::pi;
        ph += std::abs(d);
      }
    }
  const double count = static_cast<double>(a.numel());
  return {amp / count, ph / count};
}

TEST(Frequency, IdenticalIsZero) {
  const auto a = random_tensor({1, 3, 8, 8}, 1, 0, 1);
  Tape<double> tape;
  EXPECT_EQ(val(frequency_loss(tape.constant(a), tape.constant(a))), 0.0);
}

TEST(Frequency, ConstantsDifferOnlyAtDc) {
  const auto parts = frequency_parts(filled<double>({1, 3, 8, 8}, 0.7), filled<double>({1, 3, 8, 8}, 0.2));
  EXPECT_NEAR(parts.amplitude, 0.5, 1e-12);
  EXPECT_EQ(parts.phase, 0.0);
}

TEST(Frequency, MatchesNaiveDft) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto a = random_tensor({2, 3, 8, 8}, 40 + seed, 0, 1);
    const auto b = random_tensor({2, 3, 8, 8}, 50 + seed, 0, 1);
    const auto [amp, ph] = naive_parts(a, b);
    const auto parts = frequency_parts(a, b);
    EXPECT_NEAR(parts.amplitude, amp, 1e-5);
    EXPECT_NEAR(parts.phase, ph, 1e-5);
    Tape<double> tape;
    EXPECT_NEAR(val(frequency_loss(tape.constant(a), tape.constant(b))), amp + ph, 1e-5);
  }
}

TEST(Frequency, CircularShiftOnlyMovesPhase) {
  const auto a = random_tensor({1, 3, 8, 8}, 60, 0, 1);
  Tensor<double> b(a.shape());
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) b.at(0, c, (i + 3) % 8, (j + 2) % 8) = a.at(0, c, i, j);
  const auto parts = frequency_parts(a, b);
  EXPECT_LT(parts.amplitude, 1e-12);
  EXPECT_GT(parts.phase, 0.1);
}

TEST(Frequency, PyramidAveragesLevels) {
  Tape<double> tape;
  std::vector<VarD> out, tgt;
  double expect = 0;
  for (int l = 0; l < 3; ++l) {
    const auto a = random_tensor({1, 3, 16 >> l, 16 >> l}, 70 + l, 0, 1);
    const auto b = random_tensor({1, 3, 16 >> l, 16 >> l}, 80 + l, 0, 1);
    out.push_back(tape.constant(a));
    tgt.push_back(tape.constant(b));
    const auto p = frequency_parts(a, b);
    expect += (p.amplitude + p.phase) / 3;
  }
  EXPECT_NEAR(val(pyramid_frequency_loss(out, tgt)), expect, 1e-12);
}

// Census distance written from the definition.
double census_oracle(const Tensor<double>& a, const Tensor<double>& b) {
  const Shape s = a.shape();
  auto gray = [](const Tensor<double>& t, int n, int i, int j) {
    return 0.2989 * t.at(n, 0, i, j) + 0.587 * t.at(n, 1, i, j) + 0.114 * t.at(n, 2, i, j);
  };
  auto desc = [](double d) { return d / std::sqrt(0.81 + d * d); };
  const double eps = 0.01, alpha = 0.45;
  double total = 0;
  int count = 0;
  for (int n = 0; n < s.n; ++n)
    for (int i = 3; i < s.h - 3; ++i)
      for (int j = 3; j < s.w - 3; ++j) {
        double ham = 0;
        for (int di = -3; di <= 3; ++di)
          for (int dj = -3; dj <= 3; ++dj) {
            const double q = desc(gray(a, n, i + di, j + dj) - gray(a, n, i, j)) -
                             desc(gray(b, n, i + di, j + dj) - gray(b, n, i, j));
            ham += q * q / (0.1 + q * q);
          }
        total += std::pow(ham * ham + eps * eps, alpha) - std::pow(eps * eps, alpha);
        ++count;
      }
  return total / count;
}

TEST(Census, Examples) {
  const auto gt = random_tensor({2, 3, 12, 14}, 90, 0, 0.75);
  Tensor<double> bright = gt.clone(), gain = gt.clone();
  for (double& v : bright.mutable_data()) v += 0.2;
  for (double& v : gain.mutable_data()) v *= 1.2;
  Tape<double> tape;
  EXPECT_EQ(val(census_loss(tape.constant(gt), tape.constant(gt))), 0.0);
  // The shift cancels in every neighbour difference up to roundoff.
  EXPECT_LT(val(census_loss(tape.constant(bright), tape.constant(gt))), 1e-10);
  const double g = val(census_loss(tape.constant(gain), tape.constant(gt)));
  EXPECT_GT(g, 0.0);
  EXPECT_NEAR(g, census_oracle(gain, gt), 1e-6);
  const auto other = random_tensor({2, 3, 12, 14}, 91, 0, 1);
  EXPECT_NEAR(val(census_loss(tape.constant(other), tape.constant(gt))), census_oracle(other, gt), 1e-9);
}

TEST(Census, ExactZeroUnderShiftOfExactValues) {
  // 8-bit levels shifted by 1/32 stay exact in both precisions.
  Tensor<double> a({1, 3, 10, 11});
  std::mt19937 rng(5);
  for (double& v : a.mutable_data()) v = static_cast<double>(rng() % 200) / 256.0;
  Tensor<double> shifted = a.clone();
  for (double& v : shifted.mutable_data()) v += 1.0 / 32.0;
  Tape<double> tape;
  EXPECT_EQ(val(census_loss(tape.constant(shifted), tape.constant(a))), 0.0);
  Tape<float> tf;
  EXPECT_EQ(census_loss(tf.constant(shifted.cast<float>()), tf.constant(a.cast<float>())).value().item(),
            0.0f);
}

TEST(Census, TooSmall) {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>({1, 3, 6, 10}));
  EXPECT_THROW(census_loss(x, x), ShapeError);
}

TEST(Census, Gradient) {
  const auto a = random_tensor({1, 3, 9, 9}, 92, 0, 1), b = random_tensor({1, 3, 9, 9}, 93, 0, 1);
  auto f = [&](Tape<double>& t, const VarD& x) { return census_loss(x, t.constant(b)); };
  const auto r = grad_check(f, a, {.tol = 1e-4});
  EXPECT_TRUE(r.pass) << r.summary();
}

ModelOutput<double> fake_output(Tape<double>& tape, const Tensor<double>& frame,
                                const Tensor<double>& flow0, const Tensor<double>& flow1,
                                std::uint64_t noise_seed) {
  ModelOutput<double> out;
  out.flow.coarse.flow_t0 = tape.constant(flow0);
  out.flow.coarse.flow_t1 = tape.constant(flow1);
  out.flow.anchor = tape.constant(frame);
  const auto frame_var = tape.constant(frame);
  for (int l = 0; l < 3; ++l) {
    const int h = frame.shape().h >> l, w = frame.shape().w >> l;
    VarD target = l == 0 ? frame_var : resize_bilinear(frame_var, h, w);
    if (noise_seed) target = add(target, tape.constant(random_tensor({1, 3, h, w}, noise_seed + l, -0.1, 0.1)));
    out.frames.push_back(target);
  }
  return out;
}

TEST(Total, PerfectPredictionIsZero) {
  const auto gt = random_tensor({1, 3, 16, 16}, 100, 0, 1);
  const auto f0 = random_tensor({1, 2, 16, 16}, 101), f1 = random_tensor({1, 2, 16, 16}, 102);
  Tape<double> tape;
  auto out = fake_output(tape, gt, f0, f1, 0);
  auto b = total_loss(out, tape.constant(gt), std::optional(tape.constant(f0)),
                      std::optional(tape.constant(f1)));
  EXPECT_EQ(b.total_value, 0.0);
  EXPECT_TRUE(b.has_dis);
}

TEST(Total, RecombinesWeightedTerms) {
  const auto gt = random_tensor({1, 3, 16, 16}, 110, 0, 1);
  const auto f0 = random_tensor({1, 2, 16, 16}, 111), f1 = random_tensor({1, 2, 16, 16}, 112);
  Tape<double> tape;
  auto out = fake_output(tape, gt, f0, f1, 7);
  auto r0 = tape.constant(random_tensor({1, 2, 16, 16}, 113));
  auto r1 = tape.constant(random_tensor({1, 2, 16, 16}, 114));
  auto b = total_loss(out, tape.constant(gt), std::optional(r0), std::optional(r1));
  EXPECT_GT(b.pc, 0);
  EXPECT_GT(b.pf, 0);
  EXPECT_GT(b.dis, 0);
  EXPECT_GT(b.sen, 0);
  EXPECT_NEAR(b.total_value, b.pc + 0.1 * b.pf + 0.01 * b.dis + b.sen, 1e-7);

  LossOptions none;
  none.weights = {0, 0, 0};
  auto only_pc = total_loss(out, tape.constant(gt), std::optional(r0), std::optional(r1), none);
  EXPECT_EQ(only_pc.total_value, only_pc.pc);

  // Without pseudo labels the distillation term is skipped.
  auto no_dis = total_loss(out, tape.constant(gt), std::optional<VarD>(), std::optional<VarD>());
  EXPECT_FALSE(no_dis.has_dis);
  EXPECT_NEAR(no_dis.total_value, b.pc + 0.1 * b.pf + b.sen, 1e-12);
}

TEST(Total, AllTermsNonNegative) {
  for (std::uint64_t seed = 1; seed < 5; ++seed) {
    const auto gt = random_tensor({1, 3, 16, 16}, 120 + seed, 0, 1);
    Tape<double> tape;
    auto out = fake_output(tape, random_tensor({1, 3, 16, 16}, 130 + seed, 0, 1),
                           random_tensor({1, 2, 16, 16}, 140 + seed), random_tensor({1, 2, 16, 16}, 150 + seed), seed);
    auto b = total_loss(out, tape.constant(gt), std::optional(tape.constant(random_tensor({1, 2, 16, 16}, 1))),
                        std::optional(tape.constant(random_tensor({1, 2, 16, 16}, 2))));
    for (double v : {b.pc, b.pf, b.dis, b.sen, b.to, b.total_value}) EXPECT_GE(v, 0.0);
  }
}

}  // namespace
}  // namespace fgdc
