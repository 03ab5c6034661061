#include "fgdc/train/ablation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <sstream>

namespace fgdc {
namespace {

double coarse_epe(const Model<float>& model, std::span<const TripletSample> data) {
  double sum = 0;
  int count = 0;
  for (const auto& s : data) {
    if (!s.flow_t0 || !s.flow_t1) continue;
    Tape<float> tape;
    tape.set_grad_enabled(false);
    const FlowStepOutput<float> o = model.flow_step(tape.constant(s.i0), tape.constant(s.i1));
    const Tensor<float>* mask = s.valid ? &*s.valid : nullptr;
    sum += epe(o.coarse.flow_t0.value(), *s.flow_t0, mask);
    sum += epe(o.coarse.flow_t1.value(), *s.flow_t1, mask);
    count += 2;
  }
  if (count == 0) throw DataError("ablation: evaluation set has no reference flows");
  return sum / count;
}

void copy_flow_step(const Model<float>& from, Model<float>& to) {
  for (const auto& prefix : Model<float>::flow_step_prefixes())
    for (Parameter<float>* p : to.parameters().with_prefix(prefix)) {
      const Parameter<float>* src = from.parameters().find(p->name);
      require(src != nullptr && src->value.shape() == p->value.shape(),
              "ablation: flow-step parameter mismatch for " + p->name);
      p->value = src->value.clone();
    }
}

bool wants(const std::vector<std::string>& groups, const std::string& g) {
  return groups.empty() || std::find(groups.begin(), groups.end(), g) != groups.end();
}

}  // namespace

const std::vector<std::string>& ablation_groups() {
  static const std::vector<std::string> g{"distillation", "pdcn", "fgdcl", "stages"};
  return g;
}

AblationReport run_ablations(const TrainConfig& cfg, std::span<const TripletSample> train_set,
                             std::span<const TripletSample> eval_set, int seeds,
                             const std::vector<std::string>& groups, const LogSink& progress) {
  for (const auto& g : groups)
    if (std::find(ablation_groups().begin(), ablation_groups().end(), g) == ablation_groups().end())
      throw std::invalid_argument("unknown ablation group '" + g + "'");
  if (seeds < 1) throw std::invalid_argument("ablation needs at least one seed");
  const auto start = std::chrono::steady_clock::now();

  auto note = [&](const std::string& what, int seed, double value) {
    if (progress) progress({{"arm", what}, {"seed", seed}, {"value", value}});
  };

  std::map<std::string, std::vector<double>> arms;
  const bool need_stage2 = wants(groups, "pdcn") || wants(groups, "fgdcl") || wants(groups, "stages");
  for (int s = 0; s < seeds; ++s) {
    TrainConfig base = cfg;
    base.seed = cfg.seed + static_cast<std::uint64_t>(s);
    base.one_stage = false;
    base.ablation = {};
    const std::uint64_t model_seed = base.seed;

    Model<float> stage1(base.model_config(), model_seed);
    train_stage1(stage1, base, train_set);
    if (wants(groups, "distillation")) {
      arms["dis_on"].push_back(coarse_epe(stage1, eval_set));
      note("dis_on", s, arms["dis_on"].back());
      TrainConfig off = base;
      off.weights.dis = 0;
      Model<float> m(off.model_config(), model_seed);
      train_stage1(m, off, train_set);
      arms["dis_off"].push_back(coarse_epe(m, eval_set));
      note("dis_off", s, arms["dis_off"].back());
    }
    if (!need_stage2) continue;

    auto finish = [&](const std::string& arm, AblationFlags flags) {
      TrainConfig c = base;
      c.ablation = flags;
      Model<float> m(c.model_config(), model_seed);
      copy_flow_step(stage1, m);
      train_stage2(m, c, train_set);
      arms[arm].push_back(evaluate(m, eval_set).mean_psnr);
      note(arm, s, arms[arm].back());
    };
    finish("full", {});
    if (wants(groups, "pdcn")) finish("no_pdcn", {.no_pdcn = true});
    if (wants(groups, "fgdcl")) {
      finish("no_flow_guidance", {.no_flow_guidance = true});
      finish("no_skip", {.no_skip = true});
      finish("no_cascade", {.no_cascade = true});
    }
    if (wants(groups, "stages")) {
      TrainConfig c = base;
      c.one_stage = true;
      Model<float> m(c.model_config(), model_seed);
      train(m, c, train_set);
      arms["one_stage"].push_back(evaluate(m, eval_set).mean_psnr);
      note("one_stage", s, arms["one_stage"].back());
    }
  }

  AblationReport report;
  auto compare = [&](const std::string& name, const std::string& base, const std::string& var,
                     const std::string& metric, bool higher) {
    AblationComparison c{name, base, var, metric, higher, arms[base], arms[var], 0};
    for (std::size_t i = 0; i < c.baseline_values.size(); ++i) {
      const double b = c.baseline_values[i], v = c.variant_values[i];
      if (higher ? b > v : b < v) ++c.wins;
    }
    report.comparisons.push_back(std::move(c));
  };
  if (wants(groups, "distillation"))
    compare("distillation", "dis_on", "dis_off", "coarse_epe", false);
  if (wants(groups, "pdcn")) compare("pdcn", "full", "no_pdcn", "psnr", true);
  if (wants(groups, "fgdcl")) {
    compare("flow_guidance", "full", "no_flow_guidance", "psnr", true);
    compare("skip", "full", "no_skip", "psnr", true);
    compare("cascade", "full", "no_cascade", "psnr", true);
  }
  if (wants(groups, "stages")) compare("stages", "full", "one_stage", "psnr", true);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : comparisons)
    rows.push_back({{"comparison", c.name},
                    {"baseline", c.baseline},
                    {"variant", c.variant},
                    {"metric", c.metric},
                    {"higher_is_better", c.higher_is_better},
                    {"baseline_values", c.baseline_values},
                    {"variant_values", c.variant_values},
                    {"wins", c.wins},
                    {"seeds", c.baseline_values.size()},
                    {"majority", c.majority()}});
  return {{"comparisons", rows}, {"seconds", seconds}};
}

std::string AblationReport::table() const {
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %-10s %-18s %-10s %10s %10s %6s %s\n", "comparison",
                "baseline", "variant", "metric", "base_mean", "var_mean", "wins", "majority");
  os << line;
  for (const auto& c : comparisons) {
    std::snprintf(line, sizeof line, "%-14s %-10s %-18s %-10s %10.4f %10.4f %3d/%-2zu %s\n",
                  c.name.c_str(), c.baseline.c_str(), c.variant.c_str(), c.metric.c_str(),
                  mean(c.baseline_values), mean(c.variant_values), c.wins,
                  c.baseline_values.size(), c.majority() ? "yes" : "no");
    os << line;
  }
  return os.str();
}

}  // namespace fgdc
