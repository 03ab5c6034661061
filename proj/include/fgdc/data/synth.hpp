#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fgdc/core/tensor.hpp"

namespace fgdc {

// One training triplet at t = 0.5. Images are 1x3xHxW in [0, 1]; flows
// 1x2xHxW; `valid` (1x1xHxW, 0 or 1) marks pixels visible in all three frames.
struct TripletSample {
  std::string id;
  Tensor<float> i0, it, i1;
  std::optional<Tensor<float>> flow_t0, flow_t1;
  std::optional<Tensor<float>> valid;
};

struct SynthSpec {
  int height = 64;
  int width = 64;
  int sprites = 3;
  int min_size = 14;
  int max_size = 28;
  // Bound on any point's displacement between frame 0 and frame 1, pixels.
  double max_motion = 8.0;
  bool translate = true;
  bool rotate = true;
  bool zoom = true;
  int octaves = 3;
  // Shortest background texture wavelength, pixels.
  double min_wavelength = 20.0;
  bool allow_occlusion = true;
  // When set, every sprite translates by exactly this displacement between
  // frame 0 and frame 1 and the motion-kind switches are ignored.
  bool fixed_velocity = false;
  double velocity_x = 0.0;
  double velocity_y = 0.0;
  std::uint64_t seed = 1;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

// Deterministic for a given spec (seed included). Ids are "s00000", ...
std::vector<TripletSample> synth_generate(const SynthSpec& spec, int n);

}  // namespace fgdc
