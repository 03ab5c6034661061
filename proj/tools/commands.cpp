#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fgdc/core/threads.hpp"
#include "fgdc/data/io.hpp"
#include "fgdc/train/ablation.hpp"
#include "fgdc/verify/gradient_suite.hpp"

namespace fgdc::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

TrainConfig load_train_config(const std::string& path) {
  if (path.empty()) return TrainConfig::preset("micro");
  return read_json_file(path).get<TrainConfig>();
}

std::vector<TripletSample> load_data(const std::string& dir) {
  std::vector<TripletSample> data = read_dataset(dir);
  if (data.empty()) throw DataError("dataset " + dir + " is empty");
  return data;
}

// Edge-replicates the bottom/right border up to a multiple of `align`.
Tensor<float> pad_to(const Tensor<float>& x, int align) {
  const Shape s = x.shape();
  const int h = (s.h + align - 1) / align * align, w = (s.w + align - 1) / align * align;
  if (h == s.h && w == s.w) return x;
  Tensor<float> y({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) y.at(n, c, i, j) = x.at(n, c, std::min(i, s.h - 1), std::min(j, s.w - 1));
  return y;
}

Tensor<float> crop_to(const Tensor<float>& x, int h, int w) {
  const Shape s = x.shape();
  if (s.h == h && s.w == w) return x;
  Tensor<float> y({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) y.at(n, c, i, j) = x.at(n, c, i, j);
  return y;
}

// Per-channel min/max normalization to [0, 1]; the sidecar records the range.
void write_normalized(const Tensor<float>& x, const fs::path& png) {
  const Shape s = x.shape();
  Tensor<float> y = x.clone();
  json ranges = json::array();
  const std::size_t plane = s.plane();
  for (int c = 0; c < s.c; ++c) {
    auto d = y.mutable_data().subspan(static_cast<std::size_t>(c) * plane, plane);
    const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
    const float mn = *lo, mx = *hi;
    for (float& v : d) v = mx > mn ? (v - mn) / (mx - mn) : 0.0f;
    ranges.push_back({{"min", mn}, {"max", mx}});
  }
  write_image(y, png);
  fs::path sidecar = png;
  sidecar.replace_extension(".json");
  std::ofstream(sidecar) << json{{"image", png.filename().string()}, {"channels", ranges}}.dump(2)
                         << "\n";
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir, int n,
              std::optional<std::uint64_t> seed, std::ostream& out) {
  SynthSpec spec;
  if (!spec_path.empty()) {
    try {
      spec = read_json_file(spec_path).get<SynthSpec>();
    } catch (const json::exception& e) {
      throw DataError(std::string("bad synth spec: ") + e.what());
    }
  }
  if (seed) spec.seed = *seed;
  const auto samples = synth_generate(spec, n);
  write_dataset(out_dir, samples);
  out << "wrote " << samples.size() << " triplets to " << out_dir << "\n";
  return kOk;
}

int cmd_train(const std::string& config, const std::string& data_dir, const std::string& out_path,
              const std::string& stage, const std::string& init, const std::string& log_path,
              std::optional<std::uint64_t> seed, std::ostream& out) {
  TrainConfig cfg = load_train_config(config);
  if (seed) cfg.seed = *seed;
  const auto data = load_data(data_dir);
  std::ofstream log_file;
  if (!log_path.empty()) {
    log_file.open(log_path);
    if (!log_file) throw DataError("cannot open log " + log_path);
  }
  std::ostream& log_stream = log_path.empty() ? out : log_file;
  LogSink sink = [&](const json& j) { log_stream << j.dump() << "\n" << std::flush; };

  Model<float> model = init.empty() ? Model<float>(cfg.model_config(), cfg.seed) : load_model(init);
  if (stage == "1") {
    train_stage1(model, cfg, data, sink);
  } else if (stage == "2") {
    if (init.empty() && !cfg.one_stage)
      throw DataError("stage 2 needs --init with a stage-1 checkpoint (or one_stage in the config)");
    train_stage2(model, cfg, data, sink,
                 cfg.one_stage ? cfg.stage1_iters + cfg.stage2_iters : 0);
  } else {
    train(model, cfg, data, sink);
  }
  save_model(out_path, model);
  if (!log_path.empty()) out << "checkpoint written to " << out_path << "\n";
  return kOk;
}

int cmd_interpolate(const std::string& ckpt, const std::string& a, const std::string& b,
                    const std::string& out_path, const std::string& dump, std::ostream& out) {
  const Model<float> model = load_model(ckpt);
  const Tensor<float> i0 = read_image(a), i1 = read_image(b);
  if (!(i0.shape() == i1.shape()))
    throw DataError("frames differ in size: " + i0.shape().str() + " vs " + i1.shape().str());
  const int h = i0.shape().h, w = i0.shape().w;
  Tape<float> tape;
  tape.set_grad_enabled(false);
  const ModelOutput<float> o =
      model(tape.constant(pad_to(i0, ModelConfig::kAlignment)),
            tape.constant(pad_to(i1, ModelConfig::kAlignment)));
  if (!o.frames[0].value().all_finite()) throw NumericalError("non-finite output frame");
  write_image(crop_to(o.frames[0].value(), h, w), out_path);
  if (!dump.empty()) {
    const fs::path d(dump);
    fs::create_directories(d);
    write_image(crop_to(o.flow.anchor.value(), h, w), d / "anchor.png");
    write_flo(crop_to(o.flow.flow_t0.value(), h, w), d / "flow_t0.flo");
    write_flo(crop_to(o.flow.flow_t1.value(), h, w), d / "flow_t1.flo");
    write_normalized(crop_to(o.flow.mask.value(), h, w), d / "mask.png");
    for (std::size_t l = 0; l < o.residuals.size(); ++l) {
      const std::string s = std::to_string(l);
      write_normalized(o.residuals[l].value(), d / ("residual_l" + s + ".png"));
      write_normalized(o.flow.masks[l].value(), d / ("mask_l" + s + ".png"));
      write_flo(o.flow.flows_t0[l].value(), d / ("flow_t0_l" + s + ".flo"));
      write_flo(o.flow.flows_t1[l].value(), d / ("flow_t1_l" + s + ".flo"));
    }
  }
  out << "wrote " << out_path << "\n";
  return kOk;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& report,
             std::ostream& out) {
  const Model<float> model = load_model(ckpt);
  const auto data = load_data(data_dir);
  const EvalSummary s = evaluate(model, data);
  std::ofstream rep;
  if (!report.empty()) {
    rep.open(report);
    if (!rep) throw DataError("cannot open report " + report);
  }
  double psnr_sum = 0, ssim_sum = 0, ie_sum = 0, epe_sum = 0;
  std::size_t epe_count = 0;
  for (const auto& r : s.records) {
    MetricRecord m = r.final_frame;
    if (m.epe && r.epe_t1) m.epe = 0.5 * (*m.epe + *r.epe_t1);
    json line = m;
    line["anchor_psnr"] = r.anchor.psnr;
    if (rep) rep << line.dump() << "\n";
    psnr_sum += m.psnr;
    ssim_sum += m.ssim;
    ie_sum += m.ie;
    if (m.epe) {
      epe_sum += *m.epe;
      ++epe_count;
    }
  }
  const double n = static_cast<double>(s.records.size());
  json agg{{"aggregate", true}, {"count", s.records.size()}, {"psnr", psnr_sum / n},
           {"ssim", ssim_sum / n}, {"ie", ie_sum / n}};
  if (epe_count) agg["epe"] = epe_sum / static_cast<double>(epe_count);
  if (rep) rep << agg.dump() << "\n";
  out << agg.dump() << "\n";
  return kOk;
}

int cmd_gradcheck(const std::string& op, int seeds, bool list, std::ostream& out) {
  if (list) {
    for (const auto& name : gradient_suite_ops()) out << name << "\n";
    return kOk;
  }
  bool ok = true;
  const std::vector<std::string> ops = op.empty() ? gradient_suite_ops() : std::vector<std::string>{op};
  for (const auto& name : ops) {
    const GradSuiteResult r = run_gradient_suite(name, seeds).front();
    char line[256];
    std::snprintf(line, sizeof line, "%-4s %-20s max_rel_err=%.3e tol=%.0e checked=%zu kinks=%zu %.1fs",
                  r.report.pass ? "PASS" : "FAIL", r.op.c_str(), r.report.max_rel_err, r.tol,
                  r.report.checked, r.report.kinks, r.seconds);
    out << line;
    if (!r.report.pass) out << " worst=" << r.worst_tensor << " (" << r.report.summary() << ")";
    out << std::endl;
    ok = ok && r.report.pass;
  }
  if (!ok) throw NumericalError("gradient check failed");
  return kOk;
}

int cmd_ablate(const std::string& config, const std::string& data_dir, const std::string& eval_dir,
               int seeds, const std::vector<std::string>& groups, const std::string& json_path,
               std::optional<std::uint64_t> seed, std::ostream& out) {
  TrainConfig cfg = load_train_config(config);
  if (seed) cfg.seed = *seed;
  const auto train_set = load_data(data_dir);
  const auto eval_set = eval_dir.empty() ? train_set : load_data(eval_dir);
  const AblationReport r = run_ablations(cfg, train_set, eval_set, seeds, groups);
  out << r.table();
  const json j = r.to_json();
  out << j.dump() << "\n";
  if (!json_path.empty()) std::ofstream(json_path) << j.dump(2) << "\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"fgdc: flow-guided deformable compensation for frame interpolation"};
  app.require_subcommand(1, 1);
  std::optional<std::uint64_t> seed;

  std::string spec_path, out_dir;
  int n = 64;
  auto* synth = app.add_subcommand("synth", "generate a synthetic triplet dataset");
  synth->add_option("--spec", spec_path, "SynthSpec JSON (defaults when omitted)")->check(CLI::ExistingFile);
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--n", n, "number of triplets")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "overrides the spec seed");

  std::string config, data_dir, ckpt_out, stage = "both", init, log_path;
  auto* train_cmd = app.add_subcommand("train", "two-stage training");
  train_cmd->add_option("--config", config, "TrainConfig JSON (micro preset when omitted)")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--data", data_dir, "dataset directory")->required();
  train_cmd->add_option("--out", ckpt_out, "checkpoint to write")->required();
  train_cmd->add_option("--stage", stage, "1, 2 or both")->check(CLI::IsMember({"1", "2", "both"}));
  train_cmd->add_option("--init", init, "checkpoint to start from")->check(CLI::ExistingFile);
  train_cmd->add_option("--log", log_path, "JSON-lines log (stdout when omitted)");
  train_cmd->add_option("--seed", seed, "overrides the config seed");

  std::string ckpt, frame0, frame1, frame_out, dump;
  auto* interp = app.add_subcommand("interpolate", "synthesize the middle frame");
  interp->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  interp->add_option("--frame0", frame0, "first frame (PNG or PPM)")->required()->check(CLI::ExistingFile);
  interp->add_option("--frame1", frame1, "second frame")->required()->check(CLI::ExistingFile);
  interp->add_option("--out", frame_out, "output image")->required();
  interp->add_option("--dump-intermediates", dump, "directory for anchor, flows, masks, residuals");
  interp->add_option("--seed", seed, "accepted for uniformity; inference is deterministic");

  std::string report;
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM/IE/EPE over a dataset");
  eval->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--report", report, "JSON-lines report");
  eval->add_option("--seed", seed, "accepted for uniformity; evaluation is deterministic");

  std::string op;
  int seeds = 5;
  bool list = false;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  grad->add_option("--op", op, "run a single check");
  grad->add_option("--seeds", seeds, "random seeds per check")->check(CLI::PositiveNumber);
  grad->add_flag("--list", list, "list check names");

  std::string eval_dir, json_path;
  std::vector<std::string> groups;
  int ablate_seeds = 3;
  auto* ablate = app.add_subcommand("ablate", "paired directional comparisons");
  ablate->add_option("--config", config, "TrainConfig JSON")->check(CLI::ExistingFile);
  ablate->add_option("--data", data_dir, "training dataset")->required();
  ablate->add_option("--eval-data", eval_dir, "evaluation dataset (training set when omitted)");
  ablate->add_option("--seeds", ablate_seeds, "paired seeds")->check(CLI::PositiveNumber);
  ablate->add_option("--groups", groups, "distillation, pdcn, fgdcl, stages")->delimiter(',');
  ablate->add_option("--json", json_path, "write the report as JSON");
  ablate->add_option("--seed", seed, "overrides the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kUsage;
  }

  try {
    configure_threads_from_env();
    if (*synth) return cmd_synth(spec_path, out_dir, n, seed, out);
    if (*train_cmd) return cmd_train(config, data_dir, ckpt_out, stage, init, log_path, seed, out);
    if (*interp) return cmd_interpolate(ckpt, frame0, frame1, frame_out, dump, out);
    if (*eval) return cmd_eval(ckpt, data_dir, report, out);
    if (*grad) return cmd_gradcheck(op, seeds, list, out);
    if (*ablate)
      return cmd_ablate(config, data_dir, eval_dir, ablate_seeds, groups, json_path, seed, out);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    // Unknown --op or ablation group names are usage errors; shape errors are data.
    if (dynamic_cast<const ShapeError*>(&e)) {
      err << "data error: " << e.what() << "\n";
      return kData;
    }
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace fgdc::cli
