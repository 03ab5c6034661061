#include "fgdc/model/deformation_step.hpp"

#include <string>

namespace fgdc {

template <typename T>
Pdcn<T> Pdcn<T>::create(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng) {
  Pdcn p;
  p.flags.flow_guidance = !cfg.ablation.no_flow_guidance;
  p.flags.skip = !cfg.ablation.no_skip;
  p.cascade = !cfg.ablation.no_cascade;
  const DeformOptions opt{cfg.deform_kernel, cfg.deform_groups};
  for (int l = 0; l < ModelConfig::kLevels; ++l) {
    const int c = cfg.pyramid_channels[l];
    const bool takes_cascade = p.cascade && l + 1 < ModelConfig::kLevels;
    std::array<Fgdcl<T>, 2> pair;
    for (int d = 0; d < 2; ++d)
      pair[d] = Fgdcl<T>::create(
          store, "pdcn.level" + std::to_string(l + 1) + ".dir" + std::to_string(d), c, c,
          cfg.predictor_depth, opt, takes_cascade, rng);
    p.layers.push_back(pair);
  }
  return p;
}

template <typename T>
Pyramid<T> Pdcn<T>::operator()(const Pyramid<T>& f0, const Pyramid<T>& f1,
                               const std::vector<Var<T>>& flows_t0,
                               const std::vector<Var<T>>& flows_t1) const {
  const int L = static_cast<int>(layers.size());
  require(static_cast<int>(f0.size()) == L && static_cast<int>(f1.size()) == L &&
              static_cast<int>(flows_t0.size()) == L &&
              static_cast<int>(flows_t1.size()) == L,
          "pdcn: level count mismatch");
  Pyramid<T> out(L);
  std::array<std::optional<CascadeState<T>>, 2> carry;
  for (int l = L - 1; l >= 0; --l) {
    const Var<T> src[2] = {f0[l], f1[l]};
    const Var<T> flow[2] = {flows_t0[l], flows_t1[l]};
    const Var<T> warped[2] = {backward_warp(src[0], flow[0]), backward_warp(src[1], flow[1])};
    Var<T> comp[2];
    for (int d = 0; d < 2; ++d) {
      std::optional<CascadeState<T>> up;
      if (cascade && carry[d]) {
        const Shape s = src[d].shape();
        up = upsample_cascade(*carry[d], s.h, s.w);
      }
      FgdclResult<T> r = layers[l][d].apply(src[d], warped[d], warped[1 - d], flow[d],
                                            up ? &*up : nullptr, flags);
      comp[d] = r.warped;
      carry[d] = r.cascade;
    }
    out[l] = concat_channels<T>({comp[0], comp[1]});
  }
  return out;
}

template <typename T>
Pyramid<T> warp_pyramid(const Pyramid<T>& f0, const Pyramid<T>& f1,
                        const std::vector<Var<T>>& flows_t0,
                        const std::vector<Var<T>>& flows_t1) {
  Pyramid<T> out;
  for (std::size_t l = 0; l < f0.size(); ++l)
    out.push_back(concat_channels<T>(
        {backward_warp(f0[l], flows_t0[l]), backward_warp(f1[l], flows_t1[l])}));
  return out;
}

template <typename T>
Mfsn<T> Mfsn<T>::create(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng) {
  Mfsn m;
  m.columns = cfg.grid_columns;
  const int R = ModelConfig::kLevels;
  const int half = m.columns / 2;
  m.laterals.resize(R);
  m.downs.resize(R);
  m.ups.resize(R);
  for (int r = 0; r < R; ++r) {
    const std::string row = "mfsn.row" + std::to_string(r + 1);
    const int w = cfg.grid_widths[r];
    m.inputs.push_back(Conv2d<T>::create(store, row + ".input",
                                         2 * cfg.pyramid_channels[r] + 3, w, 3, rng));
    for (int c = 1; c < m.columns; ++c) {
      const std::string p = row + ".lateral" + std::to_string(c);
      m.laterals[r].push_back({Conv2d<T>::create(store, p + ".a", w, w, 3, rng),
                               Conv2d<T>::create(store, p + ".b", w, w, 3, rng)});
    }
    if (r + 1 < R) {
      const int wn = cfg.grid_widths[r + 1];
      for (int c = 0; c < half; ++c)
        m.downs[r].push_back({Conv2d<T>::create(store, row + ".down" + std::to_string(c), w,
                                                wn, 4, rng, Init::kKaiming, 2, 1, 1)});
      for (int c = half; c < m.columns; ++c)
        m.ups[r].push_back(
            {Conv2d<T>::create(store, row + ".up" + std::to_string(c), wn, w, 3, rng)});
    }
    m.heads.push_back(Conv2d<T>::create(store, row + ".head", w, 3, 3, rng, Init::kZero));
  }
  return m;
}

template <typename T>
Var<T> Mfsn<T>::lateral(int row, int column, const Var<T>& x) const {
  const Lateral& b = laterals[row][column - 1];
  return add(x, b.b(relu(b.a(relu(x)))));
}

template <typename T>
std::vector<Var<T>> Mfsn<T>::operator()(const Pyramid<T>& ft,
                                        const std::vector<Var<T>>& anchors) const {
  const int R = static_cast<int>(inputs.size());
  require(static_cast<int>(ft.size()) == R && static_cast<int>(anchors.size()) == R,
          "mfsn: expected " + std::to_string(R) + " levels");
  const int half = columns / 2;
  std::vector<Var<T>> x(R);
  // Column 0: inputs, fed downward.
  for (int r = 0; r < R; ++r) {
    const Shape s = ft[r].shape();
    Var<T> in = inputs[r](
        concat_channels<T>({ft[r], resize_bilinear(anchors[r], s.h, s.w)}));
    x[r] = r == 0 ? in : add(in, relu(downs[r - 1][0].conv(x[r - 1])));
  }
  for (int c = 1; c < columns; ++c) {
    if (c < half) {
      for (int r = 0; r < R; ++r) {
        Var<T> v = lateral(r, c, x[r]);
        if (r > 0) v = add(v, relu(downs[r - 1][c].conv(x[r - 1])));
        x[r] = v;
      }
    } else {
      for (int r = R - 1; r >= 0; --r) {
        Var<T> v = lateral(r, c, x[r]);
        if (r + 1 < R) {
          const Shape s = v.shape();
          v = add(v, resize_bilinear(relu(ups[r][c - half].conv(x[r + 1])), s.h, s.w));
        }
        x[r] = v;
      }
    }
  }
  std::vector<Var<T>> residuals(R);
  for (int r = 0; r < R; ++r) {
    const Shape a = anchors[r].shape();
    Var<T> h = relu(x[r]);
    if (h.shape().h != a.h || h.shape().w != a.w) h = resize_bilinear(h, a.h, a.w);
    residuals[r] = heads[r](h);
  }
  return residuals;
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng(seed);
  flow_ = FlowStep<T>::create(store_, cfg_, rng);
  pdcn_ = Pdcn<T>::create(store_, cfg_, rng);
  mfsn_ = Mfsn<T>::create(store_, cfg_, rng);
}

template <typename T>
const std::vector<std::string>& Model<T>::flow_step_prefixes() {
  static const std::vector<std::string> prefixes{"encoder.", "fen.", "frn."};
  return prefixes;
}

template <typename T>
FlowStepOutput<T> Model<T>::flow_step(const Var<T>& i0, const Var<T>& i1) const {
  return flow_(i0, i1);
}

template <typename T>
ModelOutput<T> Model<T>::operator()(const Var<T>& i0, const Var<T>& i1) const {
  ModelOutput<T> out;
  out.flow = flow_(i0, i1);
  const auto& fs = out.flow;
  out.ft = cfg_.ablation.no_pdcn ? warp_pyramid(fs.f0, fs.f1, fs.flows_t0, fs.flows_t1)
                                 : pdcn_(fs.f0, fs.f1, fs.flows_t0, fs.flows_t1);
  out.residuals = mfsn_(out.ft, fs.anchors);
  for (std::size_t l = 0; l < out.residuals.size(); ++l)
    out.frames.push_back(add(fs.anchors[l], out.residuals[l]));
  return out;
}

#define FGDC_INSTANTIATE(T)                                                          \
  template struct Pdcn<T>;                                                           \
  template Pyramid<T> warp_pyramid(const Pyramid<T>&, const Pyramid<T>&,             \
                                   const std::vector<Var<T>>&,                       \
                                   const std::vector<Var<T>>&);                      \
  template struct Mfsn<T>;                                                           \
  template class Model<T>;

FGDC_INSTANTIATE(float)
FGDC_INSTANTIATE(double)

}  // namespace fgdc
