#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fgdc/data/synth.hpp"

namespace fgdc {

// <root>/<id>/{im1.png, im2.png, im3.png[, flow_t0.flo, flow_t1.flo][, valid.png]}
// plus <root>/index.txt listing ids one per line. im1 = I0, im2 = I_t, im3 = I1.
void write_dataset(const std::filesystem::path& root, std::span<const TripletSample> samples);
std::vector<TripletSample> read_dataset(const std::filesystem::path& root);

// Geometric transforms keep flows consistent with the images.
TripletSample crop(const TripletSample& s, int y, int x, int h, int w);
TripletSample flip_horizontal(const TripletSample& s);
TripletSample flip_vertical(const TripletSample& s);
// Swaps I0/I1 and the two flows; v_{t->0} of the reversed clip is the
// original v_{t->1}.
TripletSample time_reverse(const TripletSample& s);

struct AugmentOptions {
  int crop = 64;
  bool flips = true;
  bool time_reversal = true;
};

// Random crop, then each of h-flip, v-flip, time reversal with probability
// 1/2, all drawn from `seed`.
TripletSample augment(const TripletSample& s, const AugmentOptions& opt, std::uint64_t seed);

// Stacks samples along the batch axis. Flows are present only if every
// sample has them.
struct Batch {
  Tensor<float> i0, it, i1;
  std::optional<Tensor<float>> flow_t0, flow_t1, valid;
};
Batch make_batch(std::span<const TripletSample> samples);

}  // namespace fgdc
