#include "fgdc/model/config.hpp"

#include <nlohmann/json.hpp>
#include <stdexcept>

namespace fgdc {

ModelConfig ModelConfig::preset(const std::string& name) {
  ModelConfig c;
  c.name = name;
  if (name == "micro") return c;
  if (name == "S" || name == "L") {
    c.pyramid_channels = {24, 48, 96};
    c.deform_groups = 8;
    if (name == "L") {
      c.ifb_channels = {180, 120, 90};
      c.grid_widths = {48, 96, 192};
    } else {
      c.ifb_channels = {120, 90, 60};
      c.grid_widths = {24, 48, 96};
    }
    return c;
  }
  throw std::invalid_argument("unknown model config '" + name + "' (micro, S, L)");
}

void to_json(nlohmann::json& j, const AblationFlags& f) {
  j = {{"no_pdcn", f.no_pdcn},
       {"no_flow_guidance", f.no_flow_guidance},
       {"no_skip", f.no_skip},
       {"no_cascade", f.no_cascade}};
}

void from_json(const nlohmann::json& j, AblationFlags& f) {
  f.no_pdcn = j.value("no_pdcn", false);
  f.no_flow_guidance = j.value("no_flow_guidance", false);
  f.no_skip = j.value("no_skip", false);
  f.no_cascade = j.value("no_cascade", false);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"name", c.name},
       {"pyramid_channels", c.pyramid_channels},
       {"ifb_channels", c.ifb_channels},
       {"ifb_depth", c.ifb_depth},
       {"corr_radius", c.corr_radius},
       {"deform_kernel", c.deform_kernel},
       {"deform_groups", c.deform_groups},
       {"predictor_depth", c.predictor_depth},
       {"grid_widths", c.grid_widths},
       {"grid_columns", c.grid_columns},
       {"occlusion_bias", c.occlusion_bias},
       {"ablation", c.ablation}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c = ModelConfig::preset(j.value("name", std::string("micro")));
  if (j.contains("pyramid_channels")) j.at("pyramid_channels").get_to(c.pyramid_channels);
  if (j.contains("ifb_channels")) j.at("ifb_channels").get_to(c.ifb_channels);
  c.ifb_depth = j.value("ifb_depth", c.ifb_depth);
  c.corr_radius = j.value("corr_radius", c.corr_radius);
  c.deform_kernel = j.value("deform_kernel", c.deform_kernel);
  c.deform_groups = j.value("deform_groups", c.deform_groups);
  c.predictor_depth = j.value("predictor_depth", c.predictor_depth);
  if (j.contains("grid_widths")) j.at("grid_widths").get_to(c.grid_widths);
  c.grid_columns = j.value("grid_columns", c.grid_columns);
  c.occlusion_bias = j.value("occlusion_bias", c.occlusion_bias);
  if (j.contains("ablation")) j.at("ablation").get_to(c.ablation);
  if (c.ifb_depth < 2 || c.grid_columns < 2 || c.grid_columns % 2 != 0 ||
      c.corr_radius < 0 || c.predictor_depth < 1)
    throw std::invalid_argument("invalid model config values");
}

}  // namespace fgdc
