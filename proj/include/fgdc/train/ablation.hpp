#pragma once

#include <string>
#include <vector>

#include "fgdc/train/trainer.hpp"

namespace fgdc {

// One paired comparison: the same seeds, data order and stage-1 weights for
// both arms; only the named switch differs.
struct AblationComparison {
  std::string name;      // e.g. "pdcn"
  std::string baseline;  // arm expected to win
  std::string variant;
  std::string metric;    // "psnr" (higher wins) or "coarse_epe" (lower wins)
  bool higher_is_better = true;
  std::vector<double> baseline_values;  // per seed
  std::vector<double> variant_values;
  int wins = 0;  // seeds where the baseline strictly wins

  bool majority() const { return 2 * wins > static_cast<int>(baseline_values.size()); }
};

struct AblationReport {
  std::vector<AblationComparison> comparisons;
  double seconds = 0;

  nlohmann::json to_json() const;
  // Aligned text, one row per comparison.
  std::string table() const;
};

// Groups: "distillation" (stage 1 with and without L_dis), "pdcn",
// "fgdcl" (no flow guidance / no skip / no cascade), "stages" (two-stage vs
// one-stage at equal total iterations). Empty selects all. Seeds are
// cfg.seed, cfg.seed + 1, ...
AblationReport run_ablations(const TrainConfig& cfg, std::span<const TripletSample> train_set,
                             std::span<const TripletSample> eval_set, int seeds,
                             const std::vector<std::string>& groups = {},
                             const LogSink& progress = {});

const std::vector<std::string>& ablation_groups();

}  // namespace fgdc
