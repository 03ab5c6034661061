#include "fgdc/model/flow_step.hpp"

#include <string>

namespace fgdc {

template <typename T>
Var<T> correlation(const Var<T>& ft, const Var<T>& fw, int radius) {
  require(radius >= 0, "correlation radius must be non-negative");
  require(ft.shape() == fw.shape(), "correlation: feature shapes differ " +
                                        ft.shape().str() + " vs " + fw.shape().str());
  const Tensor<T> a = ft.value(), b = fw.value();
  return ft.tape().record(
      kernels::correlation(a, b, radius), {ft, fw},
      [a, b, radius](std::span<const T> g, std::span<T* const> gin) {
        kernels::correlation_backward(
            a, b, radius, g, gin[0] ? std::span<T>(gin[0], a.numel()) : std::span<T>(),
            gin[1] ? std::span<T>(gin[1], b.numel()) : std::span<T>());
      });
}

void check_image_extents(const Shape& s, int alignment) {
  require(s.h > 0 && s.w > 0 && s.h % alignment == 0 && s.w % alignment == 0,
          "image extents " + s.str() + " must be divisible by " +
              std::to_string(alignment));
}

template <typename T>
FeatureEncoder<T> FeatureEncoder<T>::create(ParameterStore<T>& store,
                                            const std::string& name,
                                            const std::array<int, 3>& channels, Rng& rng) {
  FeatureEncoder e;
  int in = 3;
  for (std::size_t l = 0; l < channels.size(); ++l) {
    const std::string p = name + ".level" + std::to_string(l + 1);
    Level lv;
    lv.down = Conv2d<T>::create(store, p + ".down", in, channels[l], 4, rng, Init::kKaiming,
                                2, 1, 1);
    lv.conv = Conv2d<T>::create(store, p + ".conv", channels[l], channels[l], 3, rng);
    e.levels.push_back(lv);
    in = channels[l];
  }
  return e;
}

template <typename T>
Pyramid<T> FeatureEncoder<T>::operator()(const Var<T>& image) const {
  check_image_extents(image.shape(), 1 << static_cast<int>(levels.size()));
  Pyramid<T> out;
  Var<T> x = image;
  for (const auto& lv : levels) {
    x = relu(lv.conv(relu(lv.down(x))));
    out.push_back(x);
  }
  return out;
}

template <typename T>
Pyramid<T> extract_pyramid(const FeatureEncoder<T>& encoder, const Var<T>& image) {
  return encoder(image);
}

template <typename T>
Ifb<T> Ifb<T>::create(ParameterStore<T>& store, const std::string& name, int width,
                      int depth, double scale, Rng& rng) {
  Ifb b;
  b.scale = scale;
  int in = 11;
  for (int i = 0; i + 1 < depth; ++i) {
    b.layers.push_back(
        Conv2d<T>::create(store, name + ".conv" + std::to_string(i), in, width, 3, rng));
    in = width;
  }
  b.head = Conv2d<T>::create(store, name + ".head", in, 5, 3, rng, Init::kZero);
  return b;
}

template <typename T>
Fen<T> Fen<T>::create(ParameterStore<T>& store, const std::string& name,
                      const ModelConfig& cfg, Rng& rng) {
  Fen f;
  const double scales[3] = {0.25, 0.5, 1.0};
  for (int i = 0; i < 3; ++i)
    f.blocks.push_back(Ifb<T>::create(store, name + ".ifb" + std::to_string(i),
                                      cfg.ifb_channels[i], cfg.ifb_depth, scales[i], rng));
  return f;
}

template <typename T>
FenOutput<T> Fen<T>::operator()(const Var<T>& i0, const Var<T>& i1) const {
  const Shape s = i0.shape();
  require(i1.shape() == s, "fen: frame shapes differ " + s.str() + " vs " +
                               i1.shape().str());
  Tape<T>& tape = i0.tape();
  Var<T> f0, f1, logit;
  int cur_h = 0;
  for (const auto& blk : blocks) {
    const int h = scaled_extent(s.h, blk.scale);
    const int w = scaled_extent(s.w, blk.scale);
    if (!f0.valid()) {
      f0 = tape.constant(Tensor<T>::zeros({s.n, 2, h, w}));
      f1 = tape.constant(Tensor<T>::zeros({s.n, 2, h, w}));
      logit = tape.constant(Tensor<T>::zeros({s.n, 1, h, w}));
    } else {
      const double up = static_cast<double>(h) / cur_h;
      f0 = scale_flow(f0, up);
      f1 = scale_flow(f1, up);
      logit = resize_bilinear(logit, h, w);
    }
    cur_h = h;
    Var<T> a = resize_bilinear(i0, h, w);
    Var<T> b = resize_bilinear(i1, h, w);
    Var<T> x = concat_channels<T>({backward_warp(a, f0), backward_warp(b, f1), f0, f1, logit});
    for (const auto& conv : blk.layers) x = relu(conv(x));
    Var<T> r = blk.head(x);
    f0 = add(f0, slice_channels(r, 0, 2));
    f1 = add(f1, slice_channels(r, 2, 2));
    logit = add(logit, slice_channels(r, 4, 1));
  }
  if (cur_h != s.h) {
    const double up = static_cast<double>(s.h) / cur_h;
    f0 = scale_flow(f0, up);
    f1 = scale_flow(f1, up);
    logit = resize_bilinear(logit, s.h, s.w);
  }
  return {f0, f1, logit, sigmoid(logit)};
}

template <typename T>
Frb<T> Frb<T>::create(ParameterStore<T>& store, const std::string& name, int channels,
                      int radius, double occlusion_bias, Rng& rng) {
  Frb f;
  f.radius = radius;
  const int window = (2 * radius + 1) * (2 * radius + 1);
  f.occ_conv = Conv2d<T>::create(store, name + ".occ.conv", 2 * channels, channels, 3, rng);
  f.occ_head = Conv2d<T>::create(store, name + ".occ.head", channels, 1, 3, rng, Init::kZero);
  f.occ_head.bias->value = Tensor<T>::full({1, 1, 1, 1}, static_cast<T>(occlusion_bias));
  f.fuse = Conv2d<T>::create(store, name + ".gate.fuse", window + 2 * channels + 2, channels,
                             1, rng);
  f.branch_gate =
      Conv2d<T>::create(store, name + ".gate.branch", channels, 2 * channels, 3, rng);
  f.head = Conv2d<T>::create(store, name + ".gate.head", channels, 2, 3, rng, Init::kZero);
  return f;
}

template <typename T>
Var<T> Frb<T>::gated(const Var<T>& corr, const Var<T>& fw, const Var<T>& ft,
                     const Var<T>& flow) const {
  Var<T> u = relu(fuse(concat_channels<T>({corr, fw, ft, flow})));
  Var<T> bg = branch_gate(u);
  const int c = u.shape().c;
  Var<T> y = mul(slice_channels(bg, 0, c), sigmoid(slice_channels(bg, c, c)));
  return head(y);
}

template <typename T>
FrbOutput<T> Frb<T>::operator()(const Var<T>& f0, const Var<T>& f1, const Var<T>& flow_t0,
                                const Var<T>& flow_t1, const Var<T>& mask) const {
  const Shape s = f0.shape();
  require(f1.shape() == s, "frb: feature shapes differ");
  require(flow_t0.shape() == s.with_channels(2) && flow_t1.shape() == s.with_channels(2),
          "frb: flows not at level extents " + s.str());
  require(mask.shape() == s.with_channels(1), "frb: mask not at level extents");
  Var<T> f0w = backward_warp(f0, flow_t0);
  Var<T> f1w = backward_warp(f1, flow_t1);
  Var<T> raw = add(mask, sigmoid(occ_head(relu(occ_conv(concat_channels<T>({f0w, f1w}))))));
  std::size_t out_of_range = 0;
  for (T v : raw.value().data())
    if (v < T(0) || v > T(1)) ++out_of_range;
  Var<T> m = clamp(raw, T(0), T(1));
  Var<T> ft = occlusion_blend(f0w, f1w, m);
  Var<T> c0 = correlation(ft, f0w, radius);
  Var<T> c1 = correlation(ft, f1w, radius);
  FrbOutput<T> out;
  out.flow_t0 = add(flow_t0, gated(c0, f0w, ft, flow_t0));
  out.flow_t1 = add(flow_t1, gated(c1, f1w, ft, flow_t1));
  out.mask = m;
  out.ft = ft;
  out.saturation = static_cast<double>(out_of_range) / static_cast<double>(raw.value().numel());
  return out;
}

template <typename T>
Var<T> synthesize_anchor(const Var<T>& i0, const Var<T>& i1, const Var<T>& flow_t0,
                         const Var<T>& flow_t1, const Var<T>& mask) {
  return occlusion_blend(backward_warp(i0, flow_t0), backward_warp(i1, flow_t1), mask);
}

template <typename T>
FlowStep<T> FlowStep<T>::create(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng) {
  FlowStep fs;
  fs.encoder = FeatureEncoder<T>::create(store, "encoder", cfg.pyramid_channels, rng);
  fs.fen = Fen<T>::create(store, "fen", cfg, rng);
  for (int l = 0; l < ModelConfig::kLevels; ++l)
    fs.frbs.push_back(Frb<T>::create(store, "frn.level" + std::to_string(l + 1),
                                     cfg.pyramid_channels[l], cfg.corr_radius,
                                     cfg.occlusion_bias, rng));
  return fs;
}

template <typename T>
FlowStepOutput<T> FlowStep<T>::operator()(const Var<T>& i0, const Var<T>& i1) const {
  const Shape s = i0.shape();
  check_image_extents(s, ModelConfig::kAlignment);
  require(i1.shape() == s, "flow step: frame shapes differ");
  const int L = static_cast<int>(frbs.size());
  FlowStepOutput<T> out;
  out.coarse = fen(i0, i1);
  out.f0 = encoder(i0);
  out.f1 = encoder(i1);
  out.flows_t0.resize(L);
  out.flows_t1.resize(L);
  out.masks.resize(L);
  out.anchors.resize(L);

  const Shape top = out.f0[L - 1].shape();
  Var<T> v0 = scale_flow(out.coarse.flow_t0, static_cast<double>(top.h) / s.h);
  Var<T> v1 = scale_flow(out.coarse.flow_t1, static_cast<double>(top.h) / s.h);
  Var<T> m = resize_bilinear(out.coarse.mask, top.h, top.w);
  double saturation = 0.0;
  for (int l = L - 1; l >= 0; --l) {
    const Shape ls = out.f0[l].shape();
    if (v0.shape().h != ls.h) {
      const double up = static_cast<double>(ls.h) / v0.shape().h;
      v0 = scale_flow(v0, up);
      v1 = scale_flow(v1, up);
      m = resize_bilinear(m, ls.h, ls.w);
    }
    FrbOutput<T> r = frbs[l](out.f0[l], out.f1[l], v0, v1, m);
    v0 = r.flow_t0;
    v1 = r.flow_t1;
    m = r.mask;
    out.flows_t0[l] = v0;
    out.flows_t1[l] = v1;
    out.masks[l] = m;
    saturation += r.saturation;
    if (l > 0)
      out.anchors[l] = synthesize_anchor(resize_bilinear(i0, ls.h, ls.w),
                                         resize_bilinear(i1, ls.h, ls.w), v0, v1, m);
  }
  const double up = static_cast<double>(s.h) / out.f0[0].shape().h;
  out.flow_t0 = scale_flow(out.flows_t0[0], up);
  out.flow_t1 = scale_flow(out.flows_t1[0], up);
  out.mask = resize_bilinear(out.masks[0], s.h, s.w);
  out.anchor = synthesize_anchor(i0, i1, out.flow_t0, out.flow_t1, out.mask);
  out.anchors[0] = out.anchor;
  out.mask_saturation = saturation / L;
  return out;
}

#define FGDC_INSTANTIATE(T)                                                        \
  template Var<T> correlation(const Var<T>&, const Var<T>&, int);                  \
  template struct FeatureEncoder<T>;                                               \
  template Pyramid<T> extract_pyramid(const FeatureEncoder<T>&, const Var<T>&);    \
  template struct Ifb<T>;                                                          \
  template struct Fen<T>;                                                          \
  template struct Frb<T>;                                                          \
  template Var<T> synthesize_anchor(const Var<T>&, const Var<T>&, const Var<T>&,   \
                                    const Var<T>&, const Var<T>&);                 \
  template struct FlowStep<T>;

FGDC_INSTANTIATE(float)
FGDC_INSTANTIATE(double)

}  // namespace fgdc
