#include "fgdc/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numbers>
#include <cstdio>
#include <random>

#include "fgdc/core/seed.hpp"

namespace fgdc {
namespace {

using Rng = std::mt19937_64;
constexpr double kPi = std::numbers::pi;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Sum of plane waves per channel; smooth, so bilinear resampling of a render
// reproduces it closely.
struct Texture {
  struct Wave {
    double kx, ky, phase, amp;
  };
  double base[3];
  std::vector<Wave> waves[3];

  static Texture random(Rng& rng, int count, double min_wavelength, double max_wavelength,
                        double amplitude, double base_lo, double base_hi) {
    Texture t;
    for (int c = 0; c < 3; ++c) {
      t.base[c] = uniform(rng, base_lo, base_hi);
      for (int k = 0; k < count; ++k) {
        const double lambda = uniform(rng, min_wavelength, max_wavelength);
        const double dir = uniform(rng, 0, 2 * kPi);
        t.waves[c].push_back({2 * kPi / lambda * std::cos(dir), 2 * kPi / lambda * std::sin(dir),
                              uniform(rng, 0, 2 * kPi), amplitude / (1 << std::min(k, 8))});
      }
    }
    return t;
  }

  double operator()(int c, double x, double y) const {
    double v = base[c];
    for (const auto& w : waves[c]) v += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
    return std::clamp(v, 0.0, 1.0);
  }
};

// Ellipse whose pose at time t is c(t) + s(t) R(theta(t)) u, with the
// reference pose at t = 0.5.
struct Sprite {
  double cx, cy, ra, rb;
  double vx = 0, vy = 0, omega = 0, log_zoom = 0;
  Texture tex;

  double scale_at(double t) const { return std::exp((t - 0.5) * log_zoom); }

  void forward(double t, double ux, double uy, double& x, double& y) const {
    const double th = (t - 0.5) * omega, s = scale_at(t);
    x = cx + (t - 0.5) * vx + s * (std::cos(th) * ux - std::sin(th) * uy);
    y = cy + (t - 0.5) * vy + s * (std::sin(th) * ux + std::cos(th) * uy);
  }

  void inverse(double t, double x, double y, double& ux, double& uy) const {
    const double th = (t - 0.5) * omega, s = scale_at(t);
    const double dx = x - (cx + (t - 0.5) * vx), dy = y - (cy + (t - 0.5) * vy);
    ux = (std::cos(th) * dx + std::sin(th) * dy) / s;
    uy = (-std::sin(th) * dx + std::cos(th) * dy) / s;
  }

  // Approximate signed distance to the outline in image pixels at time t.
  double signed_distance(double t, double x, double y) const {
    double ux, uy;
    inverse(t, x, y, ux, uy);
    const double f = std::hypot(ux / ra, uy / rb);
    return (f - 1.0) * std::min(ra, rb) * scale_at(t);
  }

  double max_displacement() const {
    double worst = 0;
    for (int i = 0; i <= 64; ++i) {
      const double a = 2 * kPi * i / 64;
      for (double r : {0.0, 1.0}) {
        const double ux = r * ra * std::cos(a), uy = r * rb * std::sin(a);
        double x0, y0, x1, y1;
        forward(0.0, ux, uy, x0, y0);
        forward(1.0, ux, uy, x1, y1);
        worst = std::max(worst, std::hypot(x1 - x0, y1 - y0));
      }
    }
    return worst;
  }
};

struct Scene {
  int h, w;
  Texture background;
  std::vector<Sprite> sprites;  // later entries are on top

  // Topmost sprite whose coverage at (x, y) is at least one half, or -1.
  int owner(double t, double x, double y) const {
    for (int k = static_cast<int>(sprites.size()) - 1; k >= 0; --k)
      if (sprites[k].signed_distance(t, x, y) <= 0.0) return k;
    return -1;
  }

  // True when (x, y) lies at least `margin` pixels inside `k` (or, for k = -1,
  // that far from every sprite) and nothing above k comes within `margin`.
  bool clear(double t, double x, double y, int k, double margin) const {
    for (int j = static_cast<int>(sprites.size()) - 1; j > k; --j)
      if (sprites[j].signed_distance(t, x, y) < margin) return false;
    if (k < 0) return true;
    return sprites[k].signed_distance(t, x, y) <= -margin;
  }

  Tensor<float> render(double t) const {
    Tensor<float> img({1, 3, h, w});
    auto d = img.mutable_data();
    const std::size_t P = static_cast<std::size_t>(h) * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double col[3];
        for (int c = 0; c < 3; ++c) col[c] = background(c, x, y);
        for (const auto& s : sprites) {
          const double alpha = std::clamp(0.5 - s.signed_distance(t, x, y), 0.0, 1.0);
          if (alpha <= 0.0) continue;
          double ux, uy;
          s.inverse(t, x, y, ux, uy);
          for (int c = 0; c < 3; ++c) col[c] = alpha * s.tex(c, ux, uy) + (1 - alpha) * col[c];
        }
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        for (int c = 0; c < 3; ++c) d[c * P + p] = static_cast<float>(col[c]);
      }
    return img;
  }
};

Scene make_scene(const SynthSpec& spec, Rng& rng) {
  Scene sc{spec.height, spec.width, {}, {}};
  const double max_wl = std::max(spec.min_wavelength * 3.0, spec.min_wavelength + 1.0);
  sc.background = Texture::random(rng, std::max(1, spec.octaves), spec.min_wavelength, max_wl,
                                  0.18, 0.3, 0.7);
  const double motion =
      spec.fixed_velocity ? std::hypot(spec.velocity_x, spec.velocity_y) : spec.max_motion;
  const double margin = spec.max_size / 2.0 + motion / 2.0 + 1.0;
  if (spec.sprites > 0 && (2 * margin >= spec.height || 2 * margin >= spec.width))
    throw DataError("sprites of size " + std::to_string(spec.max_size) + " with motion " +
                    std::to_string(motion) + " do not fit a " + std::to_string(spec.width) +
                    "x" + std::to_string(spec.height) + " canvas");
  std::vector<int> kinds;
  if (spec.translate) kinds.push_back(0);
  if (spec.rotate) kinds.push_back(1);
  if (spec.zoom) kinds.push_back(2);
  for (int k = 0; k < spec.sprites; ++k) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 500)
        throw DataError("cannot place " + std::to_string(spec.sprites) +
                        " non-overlapping sprites on the canvas");
      Sprite s;
      s.ra = uniform(rng, spec.min_size, spec.max_size) / 2.0;
      s.rb = uniform(rng, spec.min_size, spec.max_size) / 2.0;
      s.cx = uniform(rng, margin, spec.width - 1 - margin);
      s.cy = uniform(rng, margin, spec.height - 1 - margin);
      s.tex = Texture::random(rng, 2, 14.0, 28.0, 0.1, 0.1, 0.9);
      if (spec.fixed_velocity) {
        s.vx = spec.velocity_x;
        s.vy = spec.velocity_y;
      } else if (motion > 0 && !kinds.empty()) {
        const int kind = kinds[std::uniform_int_distribution<int>(0, kinds.size() - 1)(rng)];
        const double mag = uniform(rng, 0.25, 1.0) * motion;
        const double dir = uniform(rng, 0, 2 * kPi);
        const double r = std::max(s.ra, s.rb);
        const double share = kind == 0 ? 1.0 : 0.5;
        s.vx = share * mag * std::cos(dir);
        s.vy = share * mag * std::sin(dir);
        const double sgn = uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0;
        if (kind == 1) s.omega = sgn * 0.5 * mag / r;
        if (kind == 2) s.log_zoom = sgn * std::log1p(0.5 * mag / r);
        // Shrink until the frame-to-frame displacement honours the bound.
        while (s.max_displacement() > motion) {
          s.vx *= 0.9;
          s.vy *= 0.9;
          s.omega *= 0.9;
          s.log_zoom *= 0.9;
        }
      }
      bool ok = true;
      if (!spec.allow_occlusion)
        for (const auto& o : sc.sprites)
          if (std::hypot(o.cx - s.cx, o.cy - s.cy) <
              std::max(o.ra, o.rb) + std::max(s.ra, s.rb) + motion + 2.0)
            ok = false;
      if (ok) {
        sc.sprites.push_back(s);
        break;
      }
    }
  }
  return sc;
}

}  // namespace

void to_json(nlohmann::json& j, const SynthSpec& s) {
  j = {{"height", s.height},         {"width", s.width},
       {"sprites", s.sprites},       {"min_size", s.min_size},
       {"max_size", s.max_size},     {"max_motion", s.max_motion},
       {"translate", s.translate},   {"rotate", s.rotate},
       {"zoom", s.zoom},             {"octaves", s.octaves},
       {"min_wavelength", s.min_wavelength},
       {"allow_occlusion", s.allow_occlusion},
       {"fixed_velocity", s.fixed_velocity},
       {"velocity_x", s.velocity_x},   {"velocity_y", s.velocity_y},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SynthSpec& s) {
  SynthSpec d;
  s.height = j.value("height", d.height);
  s.width = j.value("width", d.width);
  s.sprites = j.value("sprites", d.sprites);
  s.min_size = j.value("min_size", d.min_size);
  s.max_size = j.value("max_size", d.max_size);
  s.max_motion = j.value("max_motion", d.max_motion);
  s.translate = j.value("translate", d.translate);
  s.rotate = j.value("rotate", d.rotate);
  s.zoom = j.value("zoom", d.zoom);
  s.octaves = j.value("octaves", d.octaves);
  s.min_wavelength = j.value("min_wavelength", d.min_wavelength);
  s.allow_occlusion = j.value("allow_occlusion", d.allow_occlusion);
  s.fixed_velocity = j.value("fixed_velocity", d.fixed_velocity);
  s.velocity_x = j.value("velocity_x", d.velocity_x);
  s.velocity_y = j.value("velocity_y", d.velocity_y);
  s.seed = j.value("seed", d.seed);
  if (s.height < 8 || s.width < 8 || s.sprites < 0 || s.min_size < 1 ||
      s.max_size < s.min_size || s.max_motion < 0 || s.min_wavelength <= 0)
    throw std::invalid_argument("invalid synth spec values");
}

std::vector<TripletSample> synth_generate(const SynthSpec& spec, int n) {
  if (n < 1) throw std::invalid_argument("synth_generate needs n >= 1");
  std::vector<TripletSample> out;
  out.reserve(n);
  constexpr double kMargin = 1.5;
  for (int i = 0; i < n; ++i) {
    Rng rng(splitmix(spec.seed * 0x100000001B3ULL + static_cast<std::uint64_t>(i)));
    const Scene sc = make_scene(spec, rng);
    TripletSample s;
    char id[16];
    std::snprintf(id, sizeof id, "s%05d", i);
    s.id = id;
    s.i0 = sc.render(0.0);
    s.it = sc.render(0.5);
    s.i1 = sc.render(1.0);
    const int h = spec.height, w = spec.width;
    const std::size_t P = static_cast<std::size_t>(h) * w;
    Tensor<float> f0({1, 2, h, w}), f1({1, 2, h, w}), valid({1, 1, h, w});
    auto a = f0.mutable_data(), b = f1.mutable_data(), v = valid.mutable_data();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        const int k = sc.owner(0.5, x, y);
        double x0 = x, y0 = y, x1 = x, y1 = y;
        if (k >= 0) {
          double ux, uy;
          sc.sprites[k].inverse(0.5, x, y, ux, uy);
          sc.sprites[k].forward(0.0, ux, uy, x0, y0);
          sc.sprites[k].forward(1.0, ux, uy, x1, y1);
        }
        a[p] = static_cast<float>(x0 - x);
        a[P + p] = static_cast<float>(y0 - y);
        b[p] = static_cast<float>(x1 - x);
        b[P + p] = static_cast<float>(y1 - y);
        const bool inside = x0 >= 0 && x0 <= w - 1 && y0 >= 0 && y0 <= h - 1 && x1 >= 0 &&
                            x1 <= w - 1 && y1 >= 0 && y1 <= h - 1;
        v[p] = inside && sc.clear(0.5, x, y, k, kMargin) && sc.clear(0.0, x0, y0, k, kMargin) &&
                       sc.clear(1.0, x1, y1, k, kMargin)
                   ? 1.0f
                   : 0.0f;
      }
    s.flow_t0 = f0;
    s.flow_t1 = f1;
    s.valid = valid;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fgdc
