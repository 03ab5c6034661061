#include "fgdc/model/deformable.hpp"

namespace fgdc {
namespace {

template <typename T>
std::span<T> grad_span(T* p, std::size_t n) {
  return p ? std::span<T>(p, n) : std::span<T>();
}

}  // namespace

template <typename T>
Var<T> deform_conv(const Var<T>& x, const Var<T>& weight,
                   const std::optional<Var<T>>& bias, const Var<T>& offsets,
                   const Var<T>& mods, const std::optional<Var<T>>& base_flow,
                   const DeformOptions& opt) {
  const Tensor<T> xv = x.value(), wv = weight.value(), ov = offsets.value(),
                  mv = mods.value();
  Tensor<T> bv, fv;
  if (bias) bv = bias->value();
  if (base_flow) fv = base_flow->value();
  Tensor<T> out = kernels::deform_conv(xv, wv, bias ? &bv : nullptr, ov, mv,
                                       base_flow ? &fv : nullptr, opt);
  std::vector<Var<T>> inputs{x, weight, offsets, mods};
  if (bias) inputs.push_back(*bias);
  if (base_flow) inputs.push_back(*base_flow);
  const bool has_bias = bias.has_value();
  const bool has_flow = base_flow.has_value();
  return x.tape().record(
      std::move(out), std::move(inputs),
      [xv, wv, ov, mv, fv, opt, has_bias, has_flow](std::span<const T> g,
                                                    std::span<T* const> gin) {
        std::size_t k = 4;
        T* gb = has_bias ? gin[k++] : nullptr;
        T* gf = has_flow ? gin[k++] : nullptr;
        kernels::deform_conv_backward(
            xv, wv, ov, mv, has_flow ? &fv : nullptr, opt, g,
            grad_span(gin[0], xv.numel()), grad_span(gin[1], wv.numel()),
            grad_span(gb, static_cast<std::size_t>(wv.shape().n)),
            grad_span(gin[2], ov.numel()), grad_span(gin[3], mv.numel()),
            grad_span(gf, fv.numel()));
      });
}

template <typename T>
CascadeState<T> upsample_cascade(const CascadeState<T>& coarse, int h, int w) {
  const Shape s = coarse.offsets.shape();
  if (s.h == h && s.w == w) return coarse;
  const T ratio = static_cast<T>(h) / static_cast<T>(s.h);
  return {scale(resize_bilinear(coarse.offsets, h, w), ratio),
          resize_bilinear(coarse.mods, h, w)};
}

template <typename T>
OffsetPredictor<T> OffsetPredictor<T>::create(ParameterStore<T>& store,
                                              const std::string& name,
                                              int feature_ch, int hidden, int depth,
                                              DeformOptions opt, bool takes_cascade,
                                              Rng& rng) {
  OffsetPredictor p;
  p.opt = opt;
  p.takes_cascade = takes_cascade;
  int in = 2 * feature_ch + (takes_cascade ? p.offset_channels() + p.mod_channels() : 0);
  for (int i = 0; i < depth; ++i) {
    p.stack.push_back(Conv2d<T>::create(store, name + ".conv" + std::to_string(i), in,
                                        hidden, 3, rng));
    in = hidden;
  }
  p.head = Conv2d<T>::create(store, name + ".head", in,
                             p.offset_channels() + p.mod_channels(), 3, rng, Init::kZero);
  return p;
}

template <typename T>
std::pair<Var<T>, Var<T>> OffsetPredictor<T>::operator()(
    const Var<T>& f0w, const Var<T>& f1w, const CascadeState<T>* cascade) const {
  require(f0w.shape() == f1w.shape(), "predict_offsets: feature shapes differ " +
                                          f0w.shape().str() + " vs " + f1w.shape().str());
  Tape<T>& tape = f0w.tape();
  std::vector<Var<T>> parts{f0w, f1w};
  if (takes_cascade) {
    const Shape s = f0w.shape();
    if (cascade) {
      require(cascade->offsets.shape() == s.with_channels(offset_channels()) &&
                  cascade->mods.shape() == s.with_channels(mod_channels()),
              "cascade state does not match level extents " + s.str());
      parts.push_back(cascade->offsets);
      parts.push_back(cascade->mods);
    } else {
      parts.push_back(tape.constant(Tensor<T>::zeros(s.with_channels(offset_channels()))));
      parts.push_back(tape.constant(Tensor<T>::zeros(s.with_channels(mod_channels()))));
    }
  }
  Var<T> h = concat_channels<T>(std::span<const Var<T>>(parts));
  for (const auto& conv : stack) h = relu(conv(h));
  Var<T> out = head(h);
  return {slice_channels(out, 0, offset_channels()),
          sigmoid(slice_channels(out, offset_channels(), mod_channels()))};
}

template <typename T>
Fgdcl<T> Fgdcl<T>::create(ParameterStore<T>& store, const std::string& name,
                          int channels, int hidden, int depth, DeformOptions opt,
                          bool takes_cascade, Rng& rng) {
  require(channels % opt.offset_groups == 0,
          name + ": channels not divisible by offset groups");
  Fgdcl f;
  f.opt = opt;
  f.predictor = OffsetPredictor<T>::create(store, name + ".offsets", channels, hidden,
                                           depth, opt, takes_cascade, rng);
  f.weight = &store.add(name + ".dconv.weight",
                        Tensor<T>::zeros({channels, channels, opt.kernel, opt.kernel}));
  f.bias = &store.add(name + ".dconv.bias", Tensor<T>::zeros({1, 1, 1, channels}));
  return f;
}

template <typename T>
FgdclResult<T> Fgdcl<T>::apply(const Var<T>& f0, const Var<T>& f0w, const Var<T>& f1w,
                               const Var<T>& flow, const CascadeState<T>* cascade,
                               FgdclFlags flags) const {
  require(f0.shape() == f0w.shape(), "fgdcl: F0 and F0w differ in shape");
  require(flow.shape() == f0.shape().with_channels(2), "fgdcl: flow extents mismatch");
  Tape<T>& tape = f0.tape();
  auto [offsets, mods] = predictor(f0w, f1w, cascade);
  Var<T> delta =
      flags.flow_guidance
          ? deform_conv(f0, tape.param(*weight), std::optional<Var<T>>(tape.param(*bias)),
                        offsets, mods, std::optional<Var<T>>(flow), opt)
          : deform_conv(f0w, tape.param(*weight), std::optional<Var<T>>(tape.param(*bias)),
                        offsets, mods, std::optional<Var<T>>(), opt);
  Var<T> out = flags.skip ? add(delta, f0w) : delta;
  return {out, {offsets, mods}};
}

#define FGDC_INSTANTIATE(T)                                                          \
  template Var<T> deform_conv(const Var<T>&, const Var<T>&,                          \
                              const std::optional<Var<T>>&, const Var<T>&,           \
                              const Var<T>&, const std::optional<Var<T>>&,           \
                              const DeformOptions&);                                 \
  template CascadeState<T> upsample_cascade(const CascadeState<T>&, int, int);       \
  template struct OffsetPredictor<T>;                                                \
  template struct Fgdcl<T>;

FGDC_INSTANTIATE(float)
FGDC_INSTANTIATE(double)

}  // namespace fgdc
