#include "fgdc/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "fgdc/core/checkpoint.hpp"
#include "fgdc/core/seed.hpp"

namespace fgdc {

TrainConfig TrainConfig::preset(const std::string& name) {
  TrainConfig c;
  c.name = name;
  if (name == "micro") return c;
  if (name == "paper") {
    c.model = "L";
    c.stage1_iters = 200000;
    c.stage2_iters = 400000;
    c.batch = 24;
    c.crop = 128;
    c.base_lr = 1e-4;
    return c;
  }
  throw std::invalid_argument("unknown train preset '" + name + "' (micro, paper)");
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m = ModelConfig::preset(model);
  m.ablation = ablation;
  return m;
}

LossOptions TrainConfig::loss_options() const {
  LossOptions o;
  o.weights = weights;
  o.single_level_content = single_level_content;
  o.no_freq_loss = no_freq_loss;
  return o;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"schema_version", kTrainConfigSchema},
                     {"name", c.name},
                     {"model", c.model},
                     {"ablation", c.ablation},
                     {"stage1_iters", c.stage1_iters},
                     {"stage2_iters", c.stage2_iters},
                     {"one_stage", c.one_stage},
                     {"batch", c.batch},
                     {"crop", c.crop},
                     {"flips", c.flips},
                     {"time_reversal", c.time_reversal},
                     {"base_lr", c.base_lr},
                     {"final_lr", c.final_lr},
                     {"clip_norm", c.clip_norm},
                     {"weights", {{"pf", c.weights.pf}, {"dis", c.weights.dis}, {"sen", c.weights.sen}}},
                     {"single_level_content", c.single_level_content},
                     {"no_freq_loss", c.no_freq_loss},
                     {"log_every", c.log_every},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  try {
    const int version = j.value("schema_version", kTrainConfigSchema);
    if (version != kTrainConfigSchema)
      throw DataError("unsupported train config schema_version " + std::to_string(version));
    c = TrainConfig::preset(j.value("name", std::string("micro")));
    c.model = j.value("model", c.model);
    if (j.contains("ablation")) c.ablation = j.at("ablation").get<AblationFlags>();
    c.stage1_iters = j.value("stage1_iters", c.stage1_iters);
    c.stage2_iters = j.value("stage2_iters", c.stage2_iters);
    c.one_stage = j.value("one_stage", c.one_stage);
    c.batch = j.value("batch", c.batch);
    c.crop = j.value("crop", c.crop);
    c.flips = j.value("flips", c.flips);
    c.time_reversal = j.value("time_reversal", c.time_reversal);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.final_lr = j.value("final_lr", c.final_lr);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      c.weights.pf = w.value("pf", c.weights.pf);
      c.weights.dis = w.value("dis", c.weights.dis);
      c.weights.sen = w.value("sen", c.weights.sen);
    }
    c.single_level_content = j.value("single_level_content", c.single_level_content);
    c.no_freq_loss = j.value("no_freq_loss", c.no_freq_loss);
    c.log_every = j.value("log_every", c.log_every);
    c.seed = j.value("seed", c.seed);
    (void)ModelConfig::preset(c.model);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed train config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("bad train config: ") + e.what());
  }
  if (c.stage1_iters < 0 || c.stage2_iters < 0 || c.batch < 1 || c.crop < ModelConfig::kAlignment ||
      c.crop % ModelConfig::kAlignment != 0 || !(c.base_lr > 0) || !(c.final_lr >= 0) ||
      c.final_lr > c.base_lr || c.log_every < 1 || c.clip_norm < 0 || c.weights.pf < 0 ||
      c.weights.dis < 0 || c.weights.sen < 0)
    throw DataError("train config values out of range");
}

std::vector<TripletSample> sample_batch(std::span<const TripletSample> data,
                                        const TrainConfig& cfg, int stage, long iteration) {
  if (data.empty()) throw DataError("training set is empty");
  const std::uint64_t n = data.size();
  const std::uint64_t stream = mix_seed(cfg.seed, static_cast<std::uint64_t>(stage));
  std::vector<std::size_t> perm;
  std::uint64_t perm_epoch = ~0ULL;
  AugmentOptions aug;
  aug.flips = cfg.flips;
  aug.time_reversal = cfg.time_reversal;
  std::vector<TripletSample> out;
  out.reserve(cfg.batch);
  for (int b = 0; b < cfg.batch; ++b) {
    const std::uint64_t k = static_cast<std::uint64_t>(iteration) * cfg.batch + b;
    const std::uint64_t epoch = k / n;
    if (epoch != perm_epoch) {
      perm.resize(n);
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng(mix_seed(stream, epoch));
      std::shuffle(perm.begin(), perm.end(), rng);
      perm_epoch = epoch;
    }
    const TripletSample& s = data[perm[k % n]];
    aug.crop = std::min({cfg.crop, s.i0.shape().h, s.i0.shape().w});
    out.push_back(augment(s, aug, mix_seed(stream ^ 0xA5A5A5A5ULL, k)));
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

struct StageInputs {
  Var<float> i0, it, i1;
  std::optional<Var<float>> ref_t0, ref_t1;
  std::optional<Tensor<float>> valid;
};

StageInputs bind(Tape<float>& tape, const Batch& b) {
  StageInputs in;
  in.i0 = tape.constant(b.i0);
  in.it = tape.constant(b.it);
  in.i1 = tape.constant(b.i1);
  if (b.flow_t0) in.ref_t0 = tape.constant(*b.flow_t0);
  if (b.flow_t1) in.ref_t1 = tape.constant(*b.flow_t1);
  in.valid = b.valid;
  return in;
}

std::optional<double> batch_epe(const Var<float>& flow, const Batch& b) {
  if (!b.flow_t0) return std::nullopt;
  return epe(flow.value(), *b.flow_t0, b.valid ? &*b.valid : nullptr);
}

// Trainable set in store order; gradients missing from the tape are zero.
std::vector<ParamGrad<float>> collect(const std::vector<Parameter<float>*>& trainable,
                                      const Gradients<float>& g) {
  std::unordered_map<const Parameter<float>*, Tensor<float>> found;
  for (auto& [p, t] : g.parameters()) found.emplace(p, std::move(t));
  std::vector<ParamGrad<float>> out;
  out.reserve(trainable.size());
  for (Parameter<float>* p : trainable) {
    auto it = found.find(p);
    out.push_back({p, it != found.end() ? it->second : Tensor<float>::zeros(p->value.shape())});
  }
  return out;
}

std::vector<Parameter<float>*> flow_step_parameters(Model<float>& model) {
  std::vector<Parameter<float>*> out;
  for (const auto& prefix : Model<float>::flow_step_prefixes())
    for (Parameter<float>* p : model.parameters().with_prefix(prefix)) out.push_back(p);
  return out;
}

std::vector<Parameter<float>*> all_parameters(Model<float>& model) {
  std::vector<Parameter<float>*> out;
  for (auto& p : model.parameters().all()) out.push_back(&p);
  return out;
}

void require_finite(double v, long iteration, const char* what) {
  if (!std::isfinite(v))
    throw NumericalError("non-finite " + std::string(what) + " at iteration " +
                         std::to_string(iteration));
}

// stage 2 in the log is the full-model stage, whether or not stage 1 ran.
StageSummary run(Model<float>& model, const TrainConfig& cfg,
                 std::span<const TripletSample> data, const LogSink& log, int stage,
                 long iterations) {
  StageSummary summary;
  summary.iterations = iterations;
  if (iterations <= 0) return summary;
  const auto start = Clock::now();
  const std::vector<Parameter<float>*> trainable =
      stage == 1 ? flow_step_parameters(model) : all_parameters(model);
  const LossOptions lopt = cfg.loss_options();
  Adam<float> adam;
  for (long it = 0; it < iterations; ++it) {
    const double lr = stage == 1 ? cfg.base_lr
                                 : cosine_lr(it, iterations, cfg.base_lr, cfg.final_lr);
    const std::vector<TripletSample> samples = sample_batch(data, cfg, stage, it);
    const Batch batch = make_batch(samples);
    Tape<float> tape;
    const StageInputs in = bind(tape, batch);

    nlohmann::json rec;
    LossBreakdown<float> loss;
    std::optional<double> e;
    double psnr_value = 0;
    if (stage == 1) {
      const FlowStepOutput<float> out = model.flow_step(in.i0, in.i1);
      loss = flow_step_breakdown(out, in.it, in.ref_t0, in.ref_t1, cfg.weights.dis);
      e = batch_epe(out.flow_t0, batch);
      rec["loss"] = {{"to", loss.to}, {"dis", loss.dis}, {"total", loss.total_value}};
      rec["mask_saturation"] = out.mask_saturation;
    } else {
      const ModelOutput<float> out = model(in.i0, in.i1);
      loss = total_loss(out, in.it, in.ref_t0, in.ref_t1, lopt);
      e = batch_epe(out.flow.flow_t0, batch);
      psnr_value = psnr(out.frames[0].value(), batch.it);
      rec["loss"] = {{"pc", loss.pc}, {"pf", loss.pf}, {"dis", loss.dis},
                     {"sen", loss.sen}, {"to", loss.to}, {"total", loss.total_value}};
      rec["psnr"] = psnr_value;
    }
    require_finite(loss.total_value, it, "loss");

    std::vector<ParamGrad<float>> grads = collect(trainable, tape.backward(loss.total));
    check_gradients<float>(grads, it);
    const double norm = clip_global_norm<float>(grads, cfg.clip_norm);
    adam.step(grads, lr, it);

    const bool last = it + 1 == iterations;
    if (last || (it + 1) % cfg.log_every == 0 || it == 0) {
      rec["iter"] = it + 1;
      rec["stage"] = stage;
      rec["lr"] = lr;
      rec["grad_norm"] = norm;
      if (e) rec["epe"] = *e;
      summary.last = rec;
      if (log) log(rec);
    }
  }
  summary.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return summary;
}

}  // namespace

StageSummary train_stage1(Model<float>& model, const TrainConfig& cfg,
                          std::span<const TripletSample> data, const LogSink& log) {
  for (const auto& s : data)
    if (!s.flow_t0 || !s.flow_t1)
      throw DataError("stage 1 needs reference flows; sample " + s.id + " has none");
  return run(model, cfg, data, log, 1, cfg.stage1_iters);
}

StageSummary train_stage2(Model<float>& model, const TrainConfig& cfg,
                          std::span<const TripletSample> data, const LogSink& log,
                          long iterations) {
  return run(model, cfg, data, log, 2, iterations > 0 ? iterations : cfg.stage2_iters);
}

std::vector<StageSummary> train(Model<float>& model, const TrainConfig& cfg,
                                std::span<const TripletSample> data, const LogSink& log) {
  if (cfg.one_stage) return {train_stage2(model, cfg, data, log, cfg.stage1_iters + cfg.stage2_iters)};
  std::vector<StageSummary> out;
  out.push_back(train_stage1(model, cfg, data, log));
  out.push_back(train_stage2(model, cfg, data, log));
  return out;
}

void save_model(const std::filesystem::path& path, const Model<float>& model) {
  CheckpointData data = to_checkpoint(model.parameters());
  data.metadata["config"] = nlohmann::json(model.config()).dump();
  write_checkpoint(path, data);
}

Model<float> load_model(const std::filesystem::path& path) {
  const CheckpointData data = read_checkpoint(path);
  auto it = data.metadata.find("config");
  if (it == data.metadata.end()) throw DataError("checkpoint has no model config: " + path.string());
  ModelConfig cfg;
  try {
    cfg = nlohmann::json::parse(it->second).get<ModelConfig>();
  } catch (const std::exception& e) {
    throw DataError("checkpoint model config unreadable: " + std::string(e.what()));
  }
  Model<float> model(cfg, 0);
  load_parameters(data, model.parameters());
  if (data.tensors.size() != model.parameters().size())
    throw DataError("checkpoint has parameters the model does not know");
  return model;
}

namespace {

Tensor<float> clamp01(const Tensor<float>& x) {
  Tensor<float> y = x.clone();
  for (float& v : y.mutable_data()) v = std::clamp(v, 0.0f, 1.0f);
  return y;
}

MetricRecord frame_metrics(const std::string& id, const Tensor<float>& pred,
                           const Tensor<float>& target) {
  MetricRecord r;
  r.sample_id = id;
  const Tensor<float> p = clamp01(pred);
  r.psnr = psnr(p, target);
  r.ssim = ssim(p, target);
  r.ie = interpolation_error(p, target);
  return r;
}

}  // namespace

EvalSummary evaluate(const Model<float>& model, std::span<const TripletSample> data) {
  EvalSummary s;
  if (data.empty()) return s;
  double epe_sum = 0;
  std::size_t epe_count = 0;
  for (const auto& sample : data) {
    Tape<float> tape;
    tape.set_grad_enabled(false);
    const ModelOutput<float> out = model(tape.constant(sample.i0), tape.constant(sample.i1));
    EvalRecord rec;
    rec.final_frame = frame_metrics(sample.id, out.frames[0].value(), sample.it);
    rec.anchor = frame_metrics(sample.id, out.flow.anchor.value(), sample.it);
    if (sample.flow_t0 && sample.flow_t1) {
      const Tensor<float>* mask = sample.valid ? &*sample.valid : nullptr;
      rec.final_frame.epe = epe(out.flow.flow_t0.value(), *sample.flow_t0, mask);
      rec.epe_t1 = epe(out.flow.flow_t1.value(), *sample.flow_t1, mask);
      epe_sum += *rec.final_frame.epe + *rec.epe_t1;
      epe_count += 2;
    }
    s.mean_psnr += rec.final_frame.psnr;
    s.mean_ssim += rec.final_frame.ssim;
    s.mean_ie += rec.final_frame.ie;
    s.mean_anchor_psnr += rec.anchor.psnr;
    s.records.push_back(std::move(rec));
  }
  const double n = static_cast<double>(data.size());
  s.mean_psnr /= n;
  s.mean_ssim /= n;
  s.mean_ie /= n;
  s.mean_anchor_psnr /= n;
  if (epe_count) s.mean_epe = epe_sum / static_cast<double>(epe_count);
  return s;
}

}  // namespace fgdc
