#pragma once

#include <array>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace fgdc {

struct AblationFlags {
  bool no_pdcn = false;           // flow-warped features go straight to the grid
  bool no_flow_guidance = false;  // DConv samples F0w with no base flow
  bool no_skip = false;           // drop the F0w skip around the DConv
  bool no_cascade = false;        // predictors do not see coarser offsets

  bool operator==(const AblationFlags&) const = default;
};

// Architecture description. Arrays indexed by pyramid level run fine to
// coarse; IFB arrays run in execution order (scale 1/4, 1/2, 1).
struct ModelConfig {
  std::string name = "micro";
  std::array<int, 3> pyramid_channels{8, 12, 16};
  std::array<int, 3> ifb_channels{16, 12, 8};
  int ifb_depth = 6;
  int corr_radius = 3;
  int deform_kernel = 3;
  int deform_groups = 2;
  int predictor_depth = 3;
  std::array<int, 3> grid_widths{12, 24, 48};
  int grid_columns = 6;
  // Initial occlusion-net logit; sigmoid(-4) ~ 0.018 keeps the accumulated
  // mask below 1 at initialization.
  double occlusion_bias = -4.0;
  AblationFlags ablation;

  static constexpr int kLevels = 3;

  static ModelConfig preset(const std::string& name);
  // Extents must be divisible by this.
  static constexpr int kAlignment = 8;
};

void to_json(nlohmann::json& j, const AblationFlags& f);
void from_json(const nlohmann::json& j, AblationFlags& f);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace fgdc
