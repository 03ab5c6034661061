#include "fgdc/verify/gradient_suite.hpp"

#include <algorithm>
#include <chrono>
#include <memory>
#include <functional>
#include <random>

#include "fgdc/core/seed.hpp"
#include "fgdc/loss/losses.hpp"
#include "fgdc/model/deformation_step.hpp"

namespace fgdc {
namespace {

using D = double;
using VarD = Var<D>;
using Inputs = std::vector<VarD>;
using Fn = std::function<VarD(Tape<D>&, const Inputs&)>;

constexpr double kPrimitiveTol = 1e-4;
constexpr double kCompositeTol = 1e-3;

Tensor<D> uniform(Shape s, Rng& rng, double lo, double hi) {
  Tensor<D> t(s);
  std::uniform_real_distribution<double> u(lo, hi);
  for (D& v : t.mutable_data()) v = u(rng);
  return t;
}

// Displacements with fractional parts away from integers, so bilinear
// sampling stays on one cell under the finite-difference step.
Tensor<D> flow_field(Shape s, Rng& rng, int span) {
  Tensor<D> t(s);
  std::uniform_int_distribution<int> whole(-span, span);
  std::uniform_real_distribution<double> frac(0.2, 0.8);
  for (D& v : t.mutable_data()) v = whole(rng) + frac(rng);
  return t;
}

// Sum of each output against fixed pseudo-random weights; deterministic
// across re-evaluations so finite differences see the same scalar.
VarD project(const Inputs& outs, std::uint64_t seed) {
  Rng rng(seed);
  std::optional<VarD> total;
  for (const VarD& o : outs) {
    VarD s = weighted_sum(o, uniform(o.shape(), rng, -1.0, 1.0));
    total = total ? add(*total, s) : s;
  }
  return *total;
}

// Zero-initialized heads would hide whole subgraphs from the check.
void randomize_zero_parameters(ParameterStore<D>& store, Rng& rng) {
  for (auto& p : store.all()) {
    bool zero = true;
    for (D v : p.value.data()) zero = zero && v == 0;
    if (zero) p.value = uniform(p.value.shape(), rng, -0.1, 0.1);
  }
}

struct Probe {
  std::vector<std::string> input_names;
  std::vector<Tensor<D>> inputs;
  std::vector<Parameter<D>*> params;
  Fn f;
};

struct Outcome {
  GradCheckReport report;
  std::string worst;
};

void fold(Outcome& acc, const GradCheckReport& r, const std::string& name, bool first) {
  if (first || r.max_rel_err > acc.report.max_rel_err) acc.worst = name;
  acc.report = first ? r : merge(acc.report, r);
}

Outcome run_probe(const Probe& p, const GradCheckOptions& opt) {
  Outcome out;
  bool first = true;
  for (std::size_t k = 0; k < p.inputs.size(); ++k) {
    auto fk = [&](Tape<D>& tape, const VarD& x) {
      Inputs vs;
      for (std::size_t j = 0; j < p.inputs.size(); ++j)
        vs.push_back(j == k ? x : tape.constant(p.inputs[j]));
      return p.f(tape, vs);
    };
    fold(out, grad_check(fk, p.inputs[k], opt), p.input_names[k], first);
    first = false;
  }
  for (Parameter<D>* param : p.params) {
    auto fp = [&](Tape<D>& tape) {
      Inputs vs;
      for (const auto& t : p.inputs) vs.push_back(tape.constant(t));
      return p.f(tape, vs);
    };
    fold(out, grad_check_parameter(fp, *param, opt), param->name, first);
    first = false;
  }
  return out;
}

std::vector<Parameter<D>*> all_params(ParameterStore<D>& store) {
  std::vector<Parameter<D>*> v;
  for (auto& p : store.all()) v.push_back(&p);
  return v;
}

// At most `count` parameters, a seeded subset.
std::vector<Parameter<D>*> some_params(ParameterStore<D>& store, std::size_t count, Rng& rng) {
  auto v = all_params(store);
  std::shuffle(v.begin(), v.end(), rng);
  if (v.size() > count) v.resize(count);
  return v;
}

ModelConfig tiny_config() {
  ModelConfig c = ModelConfig::preset("micro");
  c.name = "tiny";
  c.pyramid_channels = {4, 6, 8};
  c.ifb_channels = {6, 6, 4};
  c.ifb_depth = 3;
  c.corr_radius = 1;
  c.deform_groups = 2;
  c.predictor_depth = 2;
  c.grid_widths = {4, 6, 8};
  c.grid_columns = 4;
  return c;
}

// Each case owns the objects its closure refers to.
struct Case {
  std::string name;
  bool composite = false;
  std::size_t max_elements = 24;
  std::function<Outcome(std::uint64_t seed, const GradCheckOptions&)> run;
};

Outcome simple(std::uint64_t, const GradCheckOptions& opt,
               std::vector<std::string> names, std::vector<Tensor<D>> inputs, Fn f) {
  Probe p{std::move(names), std::move(inputs), {}, std::move(f)};
  return run_probe(p, opt);
}

std::vector<Case> cases() {
  std::vector<Case> cs;

  cs.push_back({"conv2d", false, 24, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    Outcome acc;
    struct Variant { int cin, cout, k, stride, pad, groups; };
    const Variant variants[] = {{3, 4, 3, 1, 1, 1}, {4, 4, 4, 2, 1, 2}, {2, 3, 1, 1, 0, 1}};
    bool first = true;
    for (const auto& v : variants) {
      std::vector<Tensor<D>> in{uniform({2, v.cin, 6, 6}, rng, -1, 1),
                                uniform({v.cout, v.cin / v.groups, v.k, v.k}, rng, -1, 1),
                                uniform({1, v.cout, 1, 1}, rng, -1, 1)};
      const ConvOptions co{v.stride, v.pad, v.groups};
      Outcome o = simple(seed, opt, {"x", "weight", "bias"}, in,
                         [co, seed](Tape<D>&, const Inputs& x) {
                           return project({conv2d(x[0], x[1], std::optional<VarD>(x[2]), co)}, seed);
                         });
      fold(acc, o.report, "k" + std::to_string(v.k) + "." + o.worst, first);
      first = false;
    }
    return acc;
  }});

  cs.push_back({"elementwise", false, 24, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    std::vector<Tensor<D>> in{uniform({2, 3, 4, 4}, rng, -2, 2), uniform({2, 3, 4, 4}, rng, -2, 2)};
    return simple(seed, opt, {"a", "b"}, in, [seed](Tape<D>&, const Inputs& x) {
      const VarD& a = x[0];
      const VarD& b = x[1];
      return project({add(a, b), sub(a, b), mul(a, b), relu(a), sigmoid(a), tanh(b),
                      scale(a, 0.7), add_scalar(b, 0.3), abs(a), clamp(b, -1.0, 1.0),
                      elementwise(ElementwiseKind::kScale, a, std::optional<VarD>{}, -1.5)},
                     seed);
    });
  }});

  cs.push_back({"resize", false, 24, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    std::vector<Tensor<D>> in{uniform({1, 2, 6, 8}, rng, -1, 1)};
    return simple(seed, opt, {"x"}, in, [seed](Tape<D>&, const Inputs& x) {
      return project({resize_bilinear(x[0], 12, 16), resize_bilinear(x[0], 3, 4),
                      resize_bilinear(x[0], 5, 7), scale_flow(x[0], 0.5)},
                     seed);
    });
  }});

  cs.push_back({"concat", false, 24, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    std::vector<Tensor<D>> in{uniform({2, 2, 3, 3}, rng, -1, 1), uniform({2, 3, 3, 3}, rng, -1, 1)};
    return simple(seed, opt, {"a", "b"}, in, [seed](Tape<D>&, const Inputs& x) {
      VarD c = concat_channels<D>({x[0], x[1], x[0]});
      return project({c, slice_channels(c, 1, 3)}, seed);
    });
  }});

  cs.push_back({"reductions", false, 24, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    std::vector<Tensor<D>> in{uniform({1, 2, 4, 4}, rng, -1, 1), uniform({1, 2, 4, 4}, rng, -1, 1)};
    return simple(seed, opt, {"a", "b"}, in, [](Tape<D>&, const Inputs& x) {
      return add(add(sum(x[0]), scale(mean(x[1]), 3.0)), mean_abs_diff(x[0], x[1]));
    });
  }});

  cs.push_back({"backward_warp", false, 32, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    std::vector<Tensor<D>> in{uniform({2, 3, 7, 6}, rng, -1, 1), flow_field({2, 2, 7, 6}, rng, 2)};
    return simple(seed, opt, {"feature", "flow"}, in, [seed](Tape<D>&, const Inputs& x) {
      return project({backward_warp(x[0], x[1])}, seed);
    });
  }});

  cs.push_back({"occlusion_blend", false, 24, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    std::vector<Tensor<D>> in{uniform({2, 3, 4, 4}, rng, -1, 1), uniform({2, 3, 4, 4}, rng, -1, 1),
                              uniform({2, 1, 4, 4}, rng, 0, 1)};
    return simple(seed, opt, {"f0", "f1", "mask"}, in, [seed](Tape<D>&, const Inputs& x) {
      return project({occlusion_blend(x[0], x[1], x[2])}, seed);
    });
  }});

  cs.push_back({"deform_conv", false, 24, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    const DeformOptions d{3, 2};
    const int k2g = 9 * 2;
    std::vector<Tensor<D>> in{uniform({2, 4, 6, 5}, rng, -1, 1), uniform({3, 4, 3, 3}, rng, -1, 1),
                              uniform({2, 2 * k2g, 6, 5}, rng, -0.15, 0.15),
                              uniform({2, k2g, 6, 5}, rng, 0, 1), uniform({1, 3, 1, 1}, rng, -1, 1),
                              flow_field({2, 2, 6, 5}, rng, 1)};
    return simple(seed, opt, {"x", "weight", "offsets", "mods", "bias", "flow"}, in,
                  [d, seed](Tape<D>&, const Inputs& x) {
                    return project({deform_conv(x[0], x[1], std::optional<VarD>(x[4]), x[2], x[3],
                                                std::optional<VarD>(x[5]), d)},
                                   seed);
                  });
  }});

  cs.push_back({"correlation", false, 24, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    std::vector<Tensor<D>> in{uniform({2, 3, 5, 6}, rng, -1, 1), uniform({2, 3, 5, 6}, rng, -1, 1)};
    return simple(seed, opt, {"ft", "fw"}, in, [seed](Tape<D>&, const Inputs& x) {
      return project({correlation(x[0], x[1], 2)}, seed);
    });
  }});

  cs.push_back({"frb", true, 12, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    auto store = std::make_shared<ParameterStore<D>>();
    auto frb = std::make_shared<Frb<D>>(Frb<D>::create(*store, "frb", 4, 2, -4.0, rng));
    randomize_zero_parameters(*store, rng);
    Probe p;
    p.input_names = {"f0", "f1", "flow_t0", "flow_t1", "mask"};
    p.inputs = {uniform({1, 4, 6, 6}, rng, -1, 1), uniform({1, 4, 6, 6}, rng, -1, 1),
                flow_field({1, 2, 6, 6}, rng, 1), flow_field({1, 2, 6, 6}, rng, 1),
                uniform({1, 1, 6, 6}, rng, 0.2, 0.6)};
    p.params = all_params(*store);
    p.f = [frb, store, seed](Tape<D>&, const Inputs& x) {
      FrbOutput<D> o = (*frb)(x[0], x[1], x[2], x[3], x[4]);
      return project({o.flow_t0, o.flow_t1, o.mask, o.ft}, seed);
    };
    return run_probe(p, opt);
  }});

  cs.push_back({"fgdcl", true, 12, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    auto store = std::make_shared<ParameterStore<D>>();
    auto layer = std::make_shared<Fgdcl<D>>(
        Fgdcl<D>::create(*store, "fgdcl", 4, 6, 2, DeformOptions{3, 2}, true, rng));
    randomize_zero_parameters(*store, rng);
    const int k2g = 18;
    Probe p;
    p.input_names = {"f0", "f0w", "f1w", "flow", "cascade.offsets", "cascade.mods"};
    p.inputs = {uniform({1, 4, 6, 6}, rng, -1, 1), uniform({1, 4, 6, 6}, rng, -1, 1),
                uniform({1, 4, 6, 6}, rng, -1, 1), flow_field({1, 2, 6, 6}, rng, 1),
                uniform({1, 2 * k2g, 3, 3}, rng, -0.1, 0.1), uniform({1, k2g, 3, 3}, rng, 0.2, 0.8)};
    p.params = all_params(*store);
    p.f = [layer, store, seed](Tape<D>&, const Inputs& x) {
      const CascadeState<D> up = upsample_cascade(CascadeState<D>{x[4], x[5]}, 6, 6);
      FgdclResult<D> guided = layer->apply(x[0], x[1], x[2], x[3], &up);
      FgdclResult<D> plain = layer->apply(x[0], x[1], x[2], x[3], nullptr, {false, false});
      return project({guided.warped, guided.cascade.offsets, guided.cascade.mods, plain.warped},
                     seed);
    };
    return run_probe(p, opt);
  }});

  cs.push_back({"mfsn", true, 12, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    const ModelConfig cfg = tiny_config();
    auto store = std::make_shared<ParameterStore<D>>();
    auto grid = std::make_shared<Mfsn<D>>(Mfsn<D>::create(*store, cfg, rng));
    randomize_zero_parameters(*store, rng);
    Probe p;
    const int ext[3] = {8, 4, 2};
    for (int l = 0; l < 3; ++l) {
      p.input_names.push_back("ft" + std::to_string(l));
      p.inputs.push_back(uniform({1, 2 * cfg.pyramid_channels[l], ext[l], ext[l]}, rng, -1, 1));
    }
    const int anchor_ext[3] = {16, 4, 2};
    for (int l = 0; l < 3; ++l) {
      p.input_names.push_back("anchor" + std::to_string(l));
      p.inputs.push_back(uniform({1, 3, anchor_ext[l], anchor_ext[l]}, rng, 0, 1));
    }
    p.input_names.push_back("lateral_in");
    p.inputs.push_back(uniform({1, cfg.grid_widths[1], 4, 4}, rng, -1, 1));
    p.params = some_params(*store, 10, rng);
    p.f = [grid, store, seed](Tape<D>&, const Inputs& x) {
      Pyramid<D> ft{x[0], x[1], x[2]};
      std::vector<VarD> anchors{x[3], x[4], x[5]};
      std::vector<VarD> res = (*grid)(ft, anchors);
      res.push_back(grid->lateral(1, 2, x[6]));
      return project(res, seed);
    };
    return run_probe(p, opt);
  }});

  cs.push_back({"pdcn", true, 8, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    const ModelConfig cfg = tiny_config();
    auto store = std::make_shared<ParameterStore<D>>();
    auto pdcn = std::make_shared<Pdcn<D>>(Pdcn<D>::create(*store, cfg, rng));
    randomize_zero_parameters(*store, rng);
    Probe p;
    const int ext[3] = {8, 4, 2};
    for (int l = 0; l < 3; ++l) {
      const std::string s = std::to_string(l);
      p.input_names.insert(p.input_names.end(), {"f0." + s, "f1." + s, "v0." + s, "v1." + s});
      p.inputs.push_back(uniform({1, cfg.pyramid_channels[l], ext[l], ext[l]}, rng, -1, 1));
      p.inputs.push_back(uniform({1, cfg.pyramid_channels[l], ext[l], ext[l]}, rng, -1, 1));
      p.inputs.push_back(flow_field({1, 2, ext[l], ext[l]}, rng, 1));
      p.inputs.push_back(flow_field({1, 2, ext[l], ext[l]}, rng, 1));
    }
    p.params = some_params(*store, 8, rng);
    p.f = [pdcn, store, seed](Tape<D>&, const Inputs& x) {
      Pyramid<D> f0, f1;
      std::vector<VarD> v0, v1;
      for (int l = 0; l < 3; ++l) {
        f0.push_back(x[4 * l]);
        f1.push_back(x[4 * l + 1]);
        v0.push_back(x[4 * l + 2]);
        v1.push_back(x[4 * l + 3]);
      }
      return project((*pdcn)(f0, f1, v0, v1), seed);
    };
    return run_probe(p, opt);
  }});

  cs.push_back({"flow_step", true, 8, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    const ModelConfig cfg = tiny_config();
    auto store = std::make_shared<ParameterStore<D>>();
    auto fs = std::make_shared<FlowStep<D>>(FlowStep<D>::create(*store, cfg, rng));
    randomize_zero_parameters(*store, rng);
    Probe p;
    p.input_names = {"i0", "i1"};
    p.inputs = {uniform({1, 3, 16, 16}, rng, 0, 1), uniform({1, 3, 16, 16}, rng, 0, 1)};
    p.params = some_params(*store, 8, rng);
    p.f = [fs, store, seed](Tape<D>&, const Inputs& x) {
      FlowStepOutput<D> o = (*fs)(x[0], x[1]);
      return project({o.flow_t0, o.flow_t1, o.mask, o.anchor, o.coarse.flow_t0}, seed);
    };
    return run_probe(p, opt);
  }});

  cs.push_back({"distillation_loss", false, 24, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    std::vector<Tensor<D>> in;
    for (int i = 0; i < 4; ++i) in.push_back(uniform({2, 2, 8, 8}, rng, -3, 3));
    return simple(seed, opt, {"v0", "v1", "ref0", "ref1"}, in, [](Tape<D>&, const Inputs& x) {
      return distillation_loss(x[0], x[1], x[2], x[3]);
    });
  }});

  cs.push_back({"task_oriented_loss", false, 24, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    std::vector<Tensor<D>> in{uniform({2, 3, 5, 5}, rng, 0, 1), uniform({2, 3, 5, 5}, rng, 0, 1)};
    return simple(seed, opt, {"anchor", "target"}, in, [](Tape<D>&, const Inputs& x) {
      return task_oriented_loss(x[0], x[1]);
    });
  }});

  cs.push_back({"content_loss", false, 24, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    std::vector<Tensor<D>> in{uniform({1, 3, 8, 8}, rng, 0, 1), uniform({1, 3, 4, 4}, rng, 0, 1),
                              uniform({1, 3, 8, 8}, rng, 0, 1)};
    return simple(seed, opt, {"out0", "out1", "target"}, in, [](Tape<D>&, const Inputs& x) {
      std::vector<VarD> outs{x[0], x[1]};
      return pyramid_content_loss(outs, pyramid_targets(x[2], outs));
    });
  }});

  cs.push_back({"frequency_loss", false, 24, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    std::vector<Tensor<D>> in{uniform({2, 3, 8, 6}, rng, 0, 1), uniform({2, 3, 8, 6}, rng, 0, 1)};
    return simple(seed, opt, {"a", "b"}, in, [](Tape<D>&, const Inputs& x) {
      return frequency_loss(x[0], x[1]);
    });
  }});

  cs.push_back({"census_loss", false, 24, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    std::vector<Tensor<D>> in{uniform({2, 3, 10, 9}, rng, 0, 1), uniform({2, 3, 10, 9}, rng, 0, 1)};
    return simple(seed, opt, {"a", "b"}, in, [](Tape<D>&, const Inputs& x) {
      return census_loss(x[0], x[1]);
    });
  }});

  cs.push_back({"total_loss", true, 6, [](std::uint64_t seed, const GradCheckOptions& opt) {
    Rng rng(seed);
    auto model = std::make_shared<Model<D>>(tiny_config(), seed);
    randomize_zero_parameters(model->parameters(), rng);
    Probe p;
    p.input_names = {"i0", "i1", "target", "ref_t0"};
    p.inputs = {uniform({1, 3, 16, 16}, rng, 0, 1), uniform({1, 3, 16, 16}, rng, 0, 1),
                uniform({1, 3, 16, 16}, rng, 0, 1), uniform({1, 2, 16, 16}, rng, -2, 2)};
    const Tensor<D> ref1 = uniform({1, 2, 16, 16}, rng, -2, 2);
    p.params = some_params(model->parameters(), 8, rng);
    p.f = [model, ref1](Tape<D>& tape, const Inputs& x) {
      ModelOutput<D> out = (*model)(x[0], x[1]);
      return total_loss(out, x[2], std::optional<VarD>(x[3]),
                        std::optional<VarD>(tape.constant(ref1)))
          .total;
    };
    return run_probe(p, opt);
  }});

  return cs;
}

}  // namespace

std::vector<std::string> gradient_suite_ops() {
  std::vector<std::string> names;
  for (const auto& c : cases()) names.push_back(c.name);
  return names;
}

std::vector<GradSuiteResult> run_gradient_suite(const std::string& only, int seeds,
                                                std::uint64_t base_seed) {
  std::vector<Case> all = cases();
  if (!only.empty()) {
    auto it = std::find_if(all.begin(), all.end(), [&](const Case& c) { return c.name == only; });
    if (it == all.end()) throw std::invalid_argument("unknown gradcheck op '" + only + "'");
    all = {*it};
  }
  std::vector<GradSuiteResult> results;
  for (const Case& c : all) {
    const auto start = std::chrono::steady_clock::now();
    GradSuiteResult r;
    r.op = c.name;
    r.composite = c.composite;
    r.tol = c.composite ? kCompositeTol : kPrimitiveTol;
    Outcome acc;
    for (int s = 0; s < seeds; ++s) {
      const std::uint64_t seed = mix_seed(base_seed, static_cast<std::uint64_t>(s));
      GradCheckOptions opt;
      opt.tol = r.tol;
      opt.max_elements = c.max_elements;
      opt.seed = seed;
      opt.skip_kinks = true;
      const Outcome o = c.run(seed, opt);
      fold(acc, o.report, "seed" + std::to_string(s) + ":" + o.worst, s == 0);
    }
    r.report = acc.report;
    // The kink budget applies to the op as a whole, not to each small tensor.
    r.report.pass = r.report.max_rel_err < r.tol &&
                    static_cast<double>(r.report.kinks) <=
                        GradCheckOptions{}.max_kink_fraction * static_cast<double>(r.report.checked);
    r.worst_tensor = acc.worst;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace fgdc
