#include <string>

#include "fgdc/kernels/kernels.hpp"

namespace fgdc {

int conv_out_extent(int in, int kernel, int stride, int padding) {
  require(kernel >= 1, "kernel size must be >= 1");
  require(stride >= 1, "stride must be >= 1");
  require(padding >= 0, "padding must be non-negative");
  const int span = in + 2 * padding - kernel;
  if (span < 0 || span % stride != 0)
    throw ShapeError("convolution window does not tile input extent " +
                     std::to_string(in) + " (kernel " + std::to_string(kernel) +
                     ", stride " + std::to_string(stride) + ", padding " +
                     std::to_string(padding) + ")");
  return span / stride + 1;
}

Shape conv_out_shape(const Shape& x, const Shape& w, const ConvOptions& opt) {
  require(opt.groups >= 1, "groups must be >= 1");
  require(w.h == w.w, "conv kernel must be square, got " + w.str());
  require(x.c % opt.groups == 0 && w.n % opt.groups == 0,
          "channels not divisible by groups: input " + x.str() + ", weight " +
              w.str() + ", groups " + std::to_string(opt.groups));
  require(w.c * opt.groups == x.c,
          "conv weight " + w.str() + " incompatible with input " + x.str() +
              " at groups " + std::to_string(opt.groups));
  return {x.n, w.n, conv_out_extent(x.h, w.h, opt.stride, opt.padding),
          conv_out_extent(x.w, w.w, opt.stride, opt.padding)};
}

void check_deform_shapes(const Shape& x, const Shape& w, const Shape& offsets,
                         const Shape& mods, const Shape* base_flow,
                         const DeformOptions& opt) {
  const int k = opt.kernel;
  const int g = opt.offset_groups;
  require(k >= 1 && k % 2 == 1, "deformable kernel must be odd, got " +
                                    std::to_string(k));
  require(g >= 1 && x.c % g == 0,
          "input channels " + std::to_string(x.c) +
              " not divisible by offset groups " + std::to_string(g));
  require(w.c == x.c && w.h == k && w.w == k,
          "deformable weight " + w.str() + " incompatible with input " +
              x.str());
  require(offsets.same_spatial(x) && offsets.c == 2 * k * k * g,
          "offset field " + offsets.str() + " expected " +
              std::to_string(2 * k * k * g) + " channels at input extents " +
              x.str());
  require(mods.same_spatial(x) && mods.c == k * k * g,
          "modulation field " + mods.str() + " expected " +
              std::to_string(k * k * g) + " channels at input extents " +
              x.str());
  if (base_flow)
    require(base_flow->same_spatial(x) && base_flow->c == 2,
            "base flow " + base_flow->str() + " incompatible with input " +
                x.str());
}

}  // namespace fgdc
