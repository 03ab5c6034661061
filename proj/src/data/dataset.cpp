#include "fgdc/data/dataset.hpp"

#include <fstream>
#include <random>
#include <span>

#include "fgdc/data/io.hpp"

namespace fgdc {
namespace fs = std::filesystem;

namespace {

template <typename F>
Tensor<float> remap(const Tensor<float>& t, int h, int w, F source) {
  const Shape s = t.shape();
  Tensor<float> out({s.n, s.c, h, w});
  auto d = out.mutable_data();
  std::size_t i = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          auto [sy, sx] = source(y, x);
          d[i++] = t.at(n, c, sy, sx);
        }
  return out;
}

Tensor<float> negate_channel(const Tensor<float>& flow, int channel) {
  Tensor<float> out = flow.clone();
  const Shape s = out.shape();
  auto d = out.mutable_data();
  for (int n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < s.plane(); ++p)
      d[(static_cast<std::size_t>(n) * s.c + channel) * s.plane() + p] *= -1.0f;
  return out;
}

template <typename F>
TripletSample map_sample(const TripletSample& s, F f) {
  TripletSample o;
  o.id = s.id;
  o.i0 = f(s.i0, -1);
  o.it = f(s.it, -1);
  o.i1 = f(s.i1, -1);
  if (s.flow_t0) o.flow_t0 = f(*s.flow_t0, 0);
  if (s.flow_t1) o.flow_t1 = f(*s.flow_t1, 0);
  if (s.valid) o.valid = f(*s.valid, -1);
  return o;
}

Tensor<float> stack(std::span<const TripletSample> samples,
                    const Tensor<float>& (*pick)(const TripletSample&)) {
  const Shape s0 = pick(samples[0]).shape();
  Tensor<float> out({static_cast<int>(samples.size()), s0.c, s0.h, s0.w});
  auto d = out.mutable_data();
  std::size_t off = 0;
  for (const auto& s : samples) {
    const Tensor<float>& t = pick(s);
    require(t.shape() == s0, "make_batch: sample " + s.id + " has extents " +
                                 t.shape().str() + ", expected " + s0.str());
    std::copy(t.data().begin(), t.data().end(), d.begin() + off);
    off += t.numel();
  }
  return out;
}

}  // namespace

void write_dataset(const fs::path& root, std::span<const TripletSample> samples) {
  fs::create_directories(root);
  std::ofstream index(root / "index.txt");
  if (!index) throw DataError("cannot write " + (root / "index.txt").string());
  for (const auto& s : samples) {
    const fs::path dir = root / s.id;
    fs::create_directories(dir);
    write_image(s.i0, dir / "im1.png");
    write_image(s.it, dir / "im2.png");
    write_image(s.i1, dir / "im3.png");
    if (s.flow_t0 && s.flow_t1) {
      write_flo(*s.flow_t0, dir / "flow_t0.flo");
      write_flo(*s.flow_t1, dir / "flow_t1.flo");
    }
    if (s.valid) write_image(*s.valid, dir / "valid.png");
    index << s.id << '\n';
  }
}

std::vector<TripletSample> read_dataset(const fs::path& root) {
  std::ifstream index(root / "index.txt");
  if (!index) throw DataError("dataset has no index.txt: " + root.string());
  std::vector<TripletSample> out;
  std::string id;
  while (std::getline(index, id)) {
    if (!id.empty() && id.back() == '\r') id.pop_back();
    if (id.empty()) continue;
    const fs::path dir = root / id;
    TripletSample s;
    s.id = id;
    s.i0 = read_image(dir / "im1.png");
    s.it = read_image(dir / "im2.png");
    s.i1 = read_image(dir / "im3.png");
    if (!(s.i0.shape() == s.it.shape() && s.i0.shape() == s.i1.shape()))
      throw DataError("frames of sample " + id + " differ in size");
    if (fs::exists(dir / "flow_t0.flo") && fs::exists(dir / "flow_t1.flo")) {
      s.flow_t0 = read_flo(dir / "flow_t0.flo");
      s.flow_t1 = read_flo(dir / "flow_t1.flo");
      if (!s.flow_t0->shape().same_spatial(s.i0.shape()) ||
          !s.flow_t1->shape().same_spatial(s.i0.shape()))
        throw DataError("flows of sample " + id + " do not match its frames");
    }
    if (fs::exists(dir / "valid.png")) {
      const Tensor<float> m = read_image(dir / "valid.png");
      Tensor<float> v({1, 1, m.shape().h, m.shape().w});
      auto d = v.mutable_data();
      for (std::size_t p = 0; p < v.numel(); ++p) d[p] = m.data()[p] > 0.5f ? 1.0f : 0.0f;
      s.valid = v;
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw DataError("dataset index is empty: " + root.string());
  return out;
}

TripletSample crop(const TripletSample& s, int y, int x, int h, int w) {
  const Shape is = s.i0.shape();
  if (h > is.h || w > is.w)
    throw DataError("crop " + std::to_string(h) + "x" + std::to_string(w) +
                    " larger than canvas " + is.str());
  require(y >= 0 && x >= 0 && y + h <= is.h && x + w <= is.w, "crop window out of range");
  TripletSample o = map_sample(s, [&](const Tensor<float>& t, int) {
    return remap(t, h, w, [&](int yy, int xx) { return std::pair{yy + y, xx + x}; });
  });
  // Pixels whose source position left the window are no longer warp-consistent.
  if (o.valid && o.flow_t0 && o.flow_t1) {
    const std::size_t P = static_cast<std::size_t>(h) * w;
    const auto a = o.flow_t0->data(), b = o.flow_t1->data();
    Tensor<float> v = o.valid->clone();
    auto d = v.mutable_data();
    auto inside = [&](std::span<const float> f, std::size_t p, int yy, int xx) {
      const float sx = static_cast<float>(xx) + f[p], sy = static_cast<float>(yy) + f[P + p];
      return sx >= 0 && sx <= w - 1 && sy >= 0 && sy <= h - 1;
    };
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx) {
        const std::size_t p = static_cast<std::size_t>(yy) * w + xx;
        if (!inside(a, p, yy, xx) || !inside(b, p, yy, xx)) d[p] = 0.0f;
      }
    o.valid = v;
  }
  return o;
}

TripletSample flip_horizontal(const TripletSample& s) {
  const int w = s.i0.shape().w, h = s.i0.shape().h;
  return map_sample(s, [&](const Tensor<float>& t, int flow_channel) {
    Tensor<float> m = remap(t, h, w, [&](int y, int x) { return std::pair{y, w - 1 - x}; });
    return flow_channel >= 0 ? negate_channel(m, 0) : m;
  });
}

TripletSample flip_vertical(const TripletSample& s) {
  const int w = s.i0.shape().w, h = s.i0.shape().h;
  return map_sample(s, [&](const Tensor<float>& t, int flow_channel) {
    Tensor<float> m = remap(t, h, w, [&](int y, int x) { return std::pair{h - 1 - y, x}; });
    return flow_channel >= 0 ? negate_channel(m, 1) : m;
  });
}

TripletSample time_reverse(const TripletSample& s) {
  TripletSample o = s;
  std::swap(o.i0, o.i1);
  std::swap(o.flow_t0, o.flow_t1);
  return o;
}

TripletSample augment(const TripletSample& s, const AugmentOptions& opt, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Shape is = s.i0.shape();
  if (opt.crop > is.h || opt.crop > is.w)
    throw DataError("crop " + std::to_string(opt.crop) + " larger than canvas " + is.str());
  const int y = std::uniform_int_distribution<int>(0, is.h - opt.crop)(rng);
  const int x = std::uniform_int_distribution<int>(0, is.w - opt.crop)(rng);
  TripletSample o = (opt.crop == is.h && opt.crop == is.w) ? s : crop(s, y, x, opt.crop, opt.crop);
  std::bernoulli_distribution coin(0.5);
  const bool hf = coin(rng), vf = coin(rng), tr = coin(rng);
  if (opt.flips && hf) o = flip_horizontal(o);
  if (opt.flips && vf) o = flip_vertical(o);
  if (opt.time_reversal && tr) o = time_reverse(o);
  return o;
}

Batch make_batch(std::span<const TripletSample> samples) {
  require(!samples.empty(), "make_batch: no samples");
  Batch b;
  b.i0 = stack(samples, [](const TripletSample& s) -> const Tensor<float>& { return s.i0; });
  b.it = stack(samples, [](const TripletSample& s) -> const Tensor<float>& { return s.it; });
  b.i1 = stack(samples, [](const TripletSample& s) -> const Tensor<float>& { return s.i1; });
  bool flows = true, valid = true;
  for (const auto& s : samples) {
    flows = flows && s.flow_t0 && s.flow_t1;
    valid = valid && s.valid;
  }
  if (flows) {
    b.flow_t0 = stack(samples, [](const TripletSample& s) -> const Tensor<float>& { return *s.flow_t0; });
    b.flow_t1 = stack(samples, [](const TripletSample& s) -> const Tensor<float>& { return *s.flow_t1; });
  }
  if (valid)
    b.valid = stack(samples, [](const TripletSample& s) -> const Tensor<float>& { return *s.valid; });
  return b;
}

}  // namespace fgdc
