#include "fgdc/loss/losses.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>

namespace fgdc {
namespace {

using cd = std::complex<double>;

// FFTW plans are cached per extent; the planner is not reentrant.
class DftPlans {
 public:
  static DftPlans& instance() {
    static DftPlans plans;
    return plans;
  }

  // In-place unnormalized 2-D DFT of an h x w complex plane; sign -1 forward,
  // +1 inverse.
  void run(std::vector<cd>& plane, int h, int w, int sign) {
    std::lock_guard<std::mutex> lock(mu_);
    Entry& e = entry(h, w);
    std::copy(plane.begin(), plane.end(), reinterpret_cast<cd*>(e.buffer));
    fftw_execute(sign < 0 ? e.forward : e.inverse);
    std::copy_n(reinterpret_cast<cd*>(e.buffer), plane.size(), plane.begin());
  }

  ~DftPlans() {
    for (auto& [key, e] : plans_) {
      fftw_destroy_plan(e.forward);
      fftw_destroy_plan(e.inverse);
      fftw_free(e.buffer);
    }
  }

 private:
  struct Entry {
    fftw_complex* buffer = nullptr;
    fftw_plan forward = nullptr;
    fftw_plan inverse = nullptr;
  };

  Entry& entry(int h, int w) {
    auto it = plans_.find({h, w});
    if (it != plans_.end()) return it->second;
    Entry e;
    e.buffer = fftw_alloc_complex(static_cast<std::size_t>(h) * w);
    e.forward = fftw_plan_dft_2d(h, w, e.buffer, e.buffer, FFTW_FORWARD, FFTW_ESTIMATE);
    e.inverse = fftw_plan_dft_2d(h, w, e.buffer, e.buffer, FFTW_BACKWARD, FFTW_ESTIMATE);
    return plans_.emplace(std::make_pair(h, w), e).first->second;
  }

  std::mutex mu_;
  std::map<std::pair<int, int>, Entry> plans_;
};

double wrap_phase(double d) {
  constexpr double pi = std::numbers::pi;
  d = std::remainder(d, 2.0 * pi);  // [-pi, pi]
  return d <= -pi ? d + 2.0 * pi : d;
}

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

struct Spectrum {
  std::vector<cd> bins;
  double floor = 0;  // bins with |X| <= floor count as exactly zero
};

template <typename T>
Spectrum plane_spectrum(const T* x, int h, int w) {
  Spectrum s;
  s.bins.resize(static_cast<std::size_t>(h) * w);
  double mass = 0;
  for (std::size_t i = 0; i < s.bins.size(); ++i) {
    s.bins[i] = cd(static_cast<double>(x[i]), 0.0);
    mass += std::abs(static_cast<double>(x[i]));
  }
  DftPlans::instance().run(s.bins, h, w, -1);
  s.floor = 1e-10 * mass + 1e-300;
  return s;
}

struct BinTerms {
  double amp_diff, phase_diff;
};

BinTerms bin_terms(const cd& x, const cd& y, double fx, double fy) {
  const double ax = std::abs(x), ay = std::abs(y);
  const double px = ax > fx ? std::arg(x) : 0.0;
  const double py = ay > fy ? std::arg(y) : 0.0;
  return {ax - ay, wrap_phase(px - py)};
}

// d(|X|)/dX and d(arg X)/dX as complex "gradients" (d/dRe + i d/dIm).
cd amp_grad(const cd& x, double floor) {
  const double a = std::abs(x);
  return a > floor ? x / a : cd(0, 0);
}
cd phase_grad(const cd& x, double floor) {
  const double a = std::abs(x);
  if (a <= floor) return cd(0, 0);
  return cd(-x.imag(), x.real()) / (a * a);
}

template <typename T>
void accumulate_plane_grad(std::vector<cd>& g, int h, int w, T* out) {
  // dL/dx_n = Re(sum_k G_k e^{+2 pi i k n / N}).
  DftPlans::instance().run(g, h, w, +1);
  for (std::size_t i = 0; i < g.size(); ++i) out[i] += static_cast<T>(g[i].real());
}

}  // namespace

template <typename T>
Var<T> distillation_loss(const Var<T>& v0, const Var<T>& v1, const Var<T>& ref0,
                         const Var<T>& ref1) {
  const Shape s = v0.shape();
  require(s.c == 2 && v1.shape() == s && ref0.shape() == s && ref1.shape() == s,
          "distillation_loss: flows must share a 2-channel shape, got " + s.str());
  const int h = scaled_extent(s.h, 0.25);
  const int w = scaled_extent(s.w, 0.25);
  auto down = [h, w](const Var<T>& f) { return resize_bilinear(f, h, w); };
  return add(mean_abs_diff(down(v0), down(ref0)), mean_abs_diff(down(v1), down(ref1)));
}

template <typename T>
Var<T> task_oriented_loss(const Var<T>& anchor, const Var<T>& target) {
  return mean_abs_diff(anchor, target);
}

template <typename T>
Var<T> flow_step_loss(const Var<T>& task_oriented, const Var<T>& distillation,
                      double lambda_dis) {
  return add(task_oriented, scale(distillation, static_cast<T>(lambda_dis)));
}

template <typename T>
std::vector<Var<T>> pyramid_targets(const Var<T>& target, const std::vector<Var<T>>& like) {
  std::vector<Var<T>> out;
  for (const auto& l : like) out.push_back(resize_bilinear(target, l.shape().h, l.shape().w));
  return out;
}

template <typename T>
Var<T> pyramid_content_loss(const std::vector<Var<T>>& outputs,
                            const std::vector<Var<T>>& targets) {
  require(!outputs.empty() && outputs.size() == targets.size(),
          "pyramid_content_loss: level count mismatch");
  Var<T> acc = mean_abs_diff(outputs[0], targets[0]);
  for (std::size_t l = 1; l < outputs.size(); ++l)
    acc = add(acc, mean_abs_diff(outputs[l], targets[l]));
  return scale(acc, static_cast<T>(1.0 / static_cast<double>(outputs.size())));
}

template <typename T>
FrequencyParts frequency_parts(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape s = a.shape();
  require(b.shape() == s, "frequency_loss: shape mismatch " + s.str() + " vs " +
                              b.shape().str());
  const std::size_t P = s.plane();
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  FrequencyParts parts;
  for (std::size_t k = 0; k < planes; ++k) {
    const Spectrum x = plane_spectrum(a.data().data() + k * P, s.h, s.w);
    const Spectrum y = plane_spectrum(b.data().data() + k * P, s.h, s.w);
    for (std::size_t i = 0; i < P; ++i) {
      const BinTerms t = bin_terms(x.bins[i], y.bins[i], x.floor, y.floor);
      parts.amplitude += std::abs(t.amp_diff);
      parts.phase += std::abs(t.phase_diff);
    }
  }
  const double count = static_cast<double>(planes * P);
  parts.amplitude /= count;
  parts.phase /= count;
  return parts;
}

template <typename T>
Var<T> frequency_loss(const Var<T>& a, const Var<T>& b) {
  const Tensor<T> av = a.value(), bv = b.value();
  const FrequencyParts parts = frequency_parts(av, bv);
  return a.tape().record(
      Tensor<T>::scalar(static_cast<T>(parts.amplitude + parts.phase)), {a, b},
      [av, bv](std::span<const T> g, std::span<T* const> gin) {
        const Shape s = av.shape();
        const std::size_t P = s.plane();
        const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
        const double scale = static_cast<double>(g[0]) / static_cast<double>(planes * P);
        std::vector<cd> gx(P), gy(P);
        for (std::size_t k = 0; k < planes; ++k) {
          const Spectrum x = plane_spectrum(av.data().data() + k * P, s.h, s.w);
          const Spectrum y = plane_spectrum(bv.data().data() + k * P, s.h, s.w);
          for (std::size_t i = 0; i < P; ++i) {
            const BinTerms t = bin_terms(x.bins[i], y.bins[i], x.floor, y.floor);
            const double sa = scale * sign(t.amp_diff);
            const double sp = scale * sign(t.phase_diff);
            gx[i] = sa * amp_grad(x.bins[i], x.floor) + sp * phase_grad(x.bins[i], x.floor);
            gy[i] = -sa * amp_grad(y.bins[i], y.floor) - sp * phase_grad(y.bins[i], y.floor);
          }
          if (gin[0]) accumulate_plane_grad(gx, s.h, s.w, gin[0] + k * P);
          if (gin[1]) accumulate_plane_grad(gy, s.h, s.w, gin[1] + k * P);
        }
      });
}

template <typename T>
Var<T> pyramid_frequency_loss(const std::vector<Var<T>>& outputs,
                              const std::vector<Var<T>>& targets) {
  require(!outputs.empty() && outputs.size() == targets.size(),
          "pyramid_frequency_loss: level count mismatch");
  Var<T> acc = frequency_loss(outputs[0], targets[0]);
  for (std::size_t l = 1; l < outputs.size(); ++l)
    acc = add(acc, frequency_loss(outputs[l], targets[l]));
  return scale(acc, static_cast<T>(1.0 / static_cast<double>(outputs.size())));
}

namespace {

constexpr double kGray[3] = {0.2989, 0.587, 0.114};

template <typename T>
std::vector<double> to_double(const Tensor<T>& x) {
  return std::vector<double>(x.data().begin(), x.data().end());
}

// Grayscale difference between pixels q and c of an RGB plane triple.
// Differencing each channel before weighting keeps an additive brightness
// shift out of the result exactly whenever the shifted values are exact.
inline double gray_diff(const double* rgb, std::size_t P, std::size_t q, std::size_t c) {
  double d = 0;
  for (int ch = 0; ch < 3; ++ch) d += kGray[ch] * (rgb[ch * P + q] - rgb[ch * P + c]);
  return d;
}

struct CensusEval {
  double loss = 0;
  std::vector<double> ga, gb;  // d loss / d gray, n * P, when requested
};

// a and b hold n RGB images, channel-planar.
CensusEval census_eval(const std::vector<double>& a, const std::vector<double>& b, int n_count,
                       int h, int w, const CensusParams& prm, bool want_grad) {
  const int r = prm.window / 2;
  const std::size_t P = static_cast<std::size_t>(h) * w;
  CensusEval ev;
  if (want_grad) {
    ev.ga.assign(static_cast<std::size_t>(n_count) * P, 0.0);
    ev.gb.assign(static_cast<std::size_t>(n_count) * P, 0.0);
  }
  const double eps2 = prm.eps * prm.eps;
  const double base = std::pow(eps2, prm.alpha);
  const double count = static_cast<double>(n_count) * (h - 2 * r) * (w - 2 * r);
  auto desc = [](double d) { return d / std::sqrt(0.81 + d * d); };
  auto ddesc = [](double d) { return 0.81 / std::pow(0.81 + d * d, 1.5); };
  for (int n = 0; n < n_count; ++n) {
    const double* pa = a.data() + n * 3 * P;
    const double* pb = b.data() + n * 3 * P;
    for (int y = r; y < h - r; ++y)
      for (int x = r; x < w - r; ++x) {
        const std::size_t c = static_cast<std::size_t>(y) * w + x;
        double dist = 0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const std::size_t q = static_cast<std::size_t>(y + dy) * w + (x + dx);
            const double qd = desc(gray_diff(pa, P, q, c)) - desc(gray_diff(pb, P, q, c));
            dist += qd * qd / (0.1 + qd * qd);
          }
        ev.loss += std::pow(dist * dist + eps2, prm.alpha) - base;
        if (!want_grad) continue;
        const double drho =
            2.0 * prm.alpha * dist * std::pow(dist * dist + eps2, prm.alpha - 1.0) / count;
        if (drho == 0.0) continue;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const std::size_t q = static_cast<std::size_t>(y + dy) * w + (x + dx);
            const double da = gray_diff(pa, P, q, c), db = gray_diff(pb, P, q, c);
            const double qd = desc(da) - desc(db);
            const double den = 0.1 + qd * qd;
            const double gq = drho * 0.2 * qd / (den * den);
            const double g_da = gq * ddesc(da);
            const double g_db = -gq * ddesc(db);
            ev.ga[n * P + q] += g_da;
            ev.ga[n * P + c] -= g_da;
            ev.gb[n * P + q] += g_db;
            ev.gb[n * P + c] -= g_db;
          }
      }
  }
  ev.loss /= count;
  return ev;
}

}  // namespace

template <typename T>
Var<T> census_loss(const Var<T>& a, const Var<T>& b, const CensusParams& prm) {
  const Shape s = a.shape();
  require(b.shape() == s, "census_loss: shape mismatch " + s.str() + " vs " + b.shape().str());
  require(s.c == 3, "census_loss expects RGB images, got " + s.str());
  require(s.h >= prm.window && s.w >= prm.window,
          "census_loss: image " + s.str() + " smaller than the census window");
  const Tensor<T> av = a.value(), bv = b.value();
  const auto ga = to_double(av), gb = to_double(bv);
  const CensusEval ev = census_eval(ga, gb, s.n, s.h, s.w, prm, false);
  return a.tape().record(
      Tensor<T>::scalar(static_cast<T>(ev.loss)), {a, b},
      [ga, gb, s, prm](std::span<const T> g, std::span<T* const> gin) {
        const CensusEval e = census_eval(ga, gb, s.n, s.h, s.w, prm, true);
        const std::size_t P = s.plane();
        const double up = static_cast<double>(g[0]);
        for (int k = 0; k < 2; ++k) {
          if (!gin[k]) continue;
          const std::vector<double>& gg = k == 0 ? e.ga : e.gb;
          for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < 3; ++c) {
              T* dst = gin[k] + (static_cast<std::size_t>(n) * s.c + c) * P;
              for (std::size_t p = 0; p < P; ++p)
                dst[p] += static_cast<T>(up * kGray[c] * gg[n * P + p]);
            }
        }
      });
}

template <typename T>
LossBreakdown<T> flow_step_breakdown(const FlowStepOutput<T>& out, const Var<T>& target,
                                     const std::optional<Var<T>>& ref_t0,
                                     const std::optional<Var<T>>& ref_t1,
                                     double lambda_dis) {
  LossBreakdown<T> b;
  Var<T> to = task_oriented_loss(out.anchor, target);
  b.to = to.value().item();
  b.total = to;
  if (ref_t0 && ref_t1) {
    Var<T> dis = distillation_loss(out.coarse.flow_t0, out.coarse.flow_t1, *ref_t0, *ref_t1);
    b.dis = dis.value().item();
    b.has_dis = true;
    if (lambda_dis != 0.0) b.total = flow_step_loss(to, dis, lambda_dis);
  }
  b.total_value = b.total.value().item();
  return b;
}

template <typename T>
LossBreakdown<T> total_loss(const ModelOutput<T>& out, const Var<T>& target,
                            const std::optional<Var<T>>& ref_t0,
                            const std::optional<Var<T>>& ref_t1, const LossOptions& opt) {
  LossBreakdown<T> b;
  const std::vector<Var<T>> targets = pyramid_targets(target, out.frames);
  Var<T> pc = opt.single_level_content
                  ? mean_abs_diff(out.frames[0], targets[0])
                  : pyramid_content_loss(out.frames, targets);
  b.pc = pc.value().item();
  Var<T> total = pc;
  if (!opt.no_freq_loss) {
    Var<T> pf = pyramid_frequency_loss(out.frames, targets);
    b.pf = pf.value().item();
    if (opt.weights.pf != 0.0) total = add(total, scale(pf, static_cast<T>(opt.weights.pf)));
  }
  if (ref_t0 && ref_t1) {
    Var<T> dis = distillation_loss(out.flow.coarse.flow_t0, out.flow.coarse.flow_t1, *ref_t0,
                                   *ref_t1);
    b.dis = dis.value().item();
    b.has_dis = true;
    if (opt.weights.dis != 0.0) total = add(total, scale(dis, static_cast<T>(opt.weights.dis)));
  }
  Var<T> sen = census_loss(out.frames[0], target);
  b.sen = sen.value().item();
  if (opt.weights.sen != 0.0) total = add(total, scale(sen, static_cast<T>(opt.weights.sen)));
  b.to = task_oriented_loss(out.flow.anchor, target).value().item();
  b.total = total;
  b.total_value = total.value().item();
  return b;
}

#define FGDC_INSTANTIATE(T)                                                               \
  template Var<T> distillation_loss(const Var<T>&, const Var<T>&, const Var<T>&,          \
                                    const Var<T>&);                                       \
  template Var<T> task_oriented_loss(const Var<T>&, const Var<T>&);                       \
  template Var<T> flow_step_loss(const Var<T>&, const Var<T>&, double);                   \
  template std::vector<Var<T>> pyramid_targets(const Var<T>&, const std::vector<Var<T>>&); \
  template Var<T> pyramid_content_loss(const std::vector<Var<T>>&,                        \
                                       const std::vector<Var<T>>&);                       \
  template FrequencyParts frequency_parts(const Tensor<T>&, const Tensor<T>&);            \
  template Var<T> frequency_loss(const Var<T>&, const Var<T>&);                           \
  template Var<T> pyramid_frequency_loss(const std::vector<Var<T>>&,                      \
                                         const std::vector<Var<T>>&);                     \
  template Var<T> census_loss(const Var<T>&, const Var<T>&, const CensusParams&);         \
  template LossBreakdown<T> flow_step_breakdown(const FlowStepOutput<T>&, const Var<T>&,  \
                                                const std::optional<Var<T>>&,             \
                                                const std::optional<Var<T>>&, double);    \
  template LossBreakdown<T> total_loss(const ModelOutput<T>&, const Var<T>&,              \
                                       const std::optional<Var<T>>&,                      \
                                       const std::optional<Var<T>>&, const LossOptions&);

FGDC_INSTANTIATE(float)
FGDC_INSTANTIATE(double)

}  // namespace fgdc
