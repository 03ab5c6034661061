#include <gtest/gtest.h>

#include <set>

#include "fgdc/core/checkpoint.hpp"
#include "fgdc/train/trainer.hpp"
#include "helpers.hpp"

namespace fgdc {
namespace {

using testing::TempDir;

TEST(CosineLr, Endpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 1000, 1e-4, 1e-5), 1e-4);
  EXPECT_NEAR(cosine_lr(1000, 1000, 1e-4, 1e-5), 1e-5, 1e-18);
  EXPECT_NEAR(cosine_lr(500, 1000, 1e-4, 1e-5), 5.5e-5, 1e-18);
  double prev = 1;
  for (long i = 0; i <= 100; ++i) {
    const double lr = cosine_lr(i, 100, 1e-4, 1e-5);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
  EXPECT_THROW(cosine_lr(0, 0, 1e-4, 1e-5), std::invalid_argument);
  EXPECT_THROW(cosine_lr(11, 10, 1e-4, 1e-5), std::invalid_argument);
  EXPECT_THROW(cosine_lr(-1, 10, 1e-4, 1e-5), std::invalid_argument);
}

struct Scalar {
  ParameterStore<double> store;
  Parameter<double>* p;
  explicit Scalar(double v = 0) { p = &store.add("w", Tensor<double>::scalar(v)); }
  std::vector<ParamGrad<double>> grad(double g) { return {{p, Tensor<double>::scalar(g)}}; }
  double value() const { return p->value.item(); }
};

TEST(Adam, ZeroGradientLeavesParameters) {
  Scalar s(0.75);
  Adam<double> adam;
  for (int i = 0; i < 5; ++i) adam.step(s.grad(0.0), 1e-3, i);
  EXPECT_EQ(s.value(), 0.75);
  EXPECT_EQ(adam.steps(), 5);
}

TEST(Adam, FirstStepIsLr) {
  Scalar s;
  Adam<double> adam;
  adam.step(s.grad(1.0), 1e-3, 0);
  EXPECT_NEAR(s.value(), -1e-3, 1e-10);
}

TEST(Adam, MatchesScalarSimulationAndApproachesLr) {
  Scalar s;
  Adam<double> adam;
  double m = 0, v = 0, x = 0, last_step = 0;
  const double g = 0.37, lr = 2e-3;
  for (int t = 1; t <= 100; ++t) {
    adam.step(s.grad(g), lr, t - 1);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    last_step = lr * mh / (std::sqrt(vh) + 1e-8);
    x -= last_step;
    EXPECT_NEAR(s.value(), x, 1e-12);
  }
  EXPECT_NEAR(last_step, lr, 0.01 * lr);
  EXPECT_NEAR(adam.first_moment("w")[0], m, 1e-15);
  EXPECT_NEAR(adam.second_moment("w")[0], v, 1e-15);
}

TEST(Adam, NonFiniteGradientDiagnostics) {
  Scalar s;
  Adam<double> adam;
  try {
    adam.step(s.grad(std::nan("")), 1e-3, 42);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("iteration 42"), std::string::npos) << msg;
    EXPECT_NE(msg.find("w"), std::string::npos) << msg;
    EXPECT_NE(msg.find("grad norm"), std::string::npos) << msg;
  }
  EXPECT_EQ(s.value(), 0.0);
}

TEST(Adam, ClipGlobalNorm) {
  ParameterStore<double> store;
  auto& a = store.add("a", Tensor<double>({1, 1, 1, 2}));
  auto& b = store.add("b", Tensor<double>({1, 1, 1, 1}));
  std::vector<ParamGrad<double>> g{{&a, Tensor<double>({1, 1, 1, 2}, {3, 0})},
                                   {&b, Tensor<double>({1, 1, 1, 1}, {4})}};
  EXPECT_DOUBLE_EQ(clip_global_norm<double>(g, 1.0), 5.0);
  EXPECT_NEAR(g[0].grad.data()[0], 0.6, 1e-15);
  EXPECT_NEAR(g[1].grad.data()[0], 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(clip_global_norm<double>(g, 10.0), 1.0);
  EXPECT_NEAR(g[1].grad.data()[0], 0.8, 1e-15);
}

std::vector<TripletSample> small_data(int n = 4) {
  SynthSpec spec;
  spec.height = 32;
  spec.width = 32;
  spec.sprites = 2;
  spec.min_size = 6;
  spec.max_size = 10;
  spec.max_motion = 4;
  spec.seed = 8;
  return synth_generate(spec, n);
}

TrainConfig small_config() {
  TrainConfig c;
  c.stage1_iters = 3;
  c.stage2_iters = 3;
  c.batch = 2;
  c.crop = 16;
  c.log_every = 1;
  c.seed = 5;
  return c;
}

std::uint64_t hash_prefix(Model<float>& m, const std::string& prefix) {
  return parameter_hash(m.parameters().with_prefix(prefix));
}

TEST(Trainer, StageOneTouchesOnlyFlowStep) {
  const auto data = small_data();
  Model<float> model(ModelConfig::preset("micro"), 1);
  const auto pdcn = hash_prefix(model, "pdcn."), mfsn = hash_prefix(model, "mfsn.");
  const auto fen = hash_prefix(model, "fen."), frn = hash_prefix(model, "frn.");
  std::vector<nlohmann::json> log;
  train_stage1(model, small_config(), data, [&](const nlohmann::json& r) { log.push_back(r); });
  EXPECT_EQ(hash_prefix(model, "pdcn."), pdcn);
  EXPECT_EQ(hash_prefix(model, "mfsn."), mfsn);
  EXPECT_NE(hash_prefix(model, "fen."), fen);
  EXPECT_NE(hash_prefix(model, "frn."), frn);
  ASSERT_EQ(log.size(), 3u);
  for (const auto& r : log) {
    EXPECT_EQ(r["stage"], 1);
    EXPECT_EQ(r["lr"], small_config().base_lr);  // constant in stage 1
    for (const char* k : {"to", "dis", "total"}) EXPECT_TRUE(r["loss"].contains(k)) << k;
    EXPECT_TRUE(r.contains("epe"));
  }
}

TEST(Trainer, StageOneNeedsFlows) {
  auto data = small_data(2);
  data[1].flow_t0.reset();
  Model<float> model(ModelConfig::preset("micro"), 1);
  EXPECT_THROW(train_stage1(model, small_config(), data), DataError);
}

TEST(Trainer, StageTwoLogsAndDecaysLr) {
  const auto data = small_data();
  Model<float> model(ModelConfig::preset("micro"), 2);
  TrainConfig cfg = small_config();
  cfg.stage2_iters = 5;
  std::vector<nlohmann::json> log;
  const auto mfsn = hash_prefix(model, "mfsn.");
  train_stage2(model, cfg, data, [&](const nlohmann::json& r) { log.push_back(r); });
  EXPECT_NE(hash_prefix(model, "mfsn."), mfsn);
  ASSERT_EQ(log.size(), 5u);
  double prev = 1;
  for (const auto& r : log) {
    EXPECT_EQ(r["stage"], 2);
    EXPECT_LE(r["lr"].get<double>(), prev);
    prev = r["lr"];
    for (const char* k : {"pc", "pf", "dis", "sen", "to", "total"}) EXPECT_TRUE(r["loss"].contains(k)) << k;
    EXPECT_TRUE(r.contains("psnr"));
  }
  EXPECT_EQ(log[0]["lr"], cfg.base_lr);
}

TEST(Trainer, IdenticalSeedsIdenticalLogs) {
  const auto data = small_data();
  auto run = [&](std::uint64_t seed) {
    TrainConfig cfg = small_config();
    cfg.seed = seed;
    Model<float> model(cfg.model_config(), seed);
    std::string text;
    train(model, cfg, data, [&](const nlohmann::json& r) { text += r.dump() + "\n"; });
    return text;
  };
  const std::string a = run(3);
  EXPECT_EQ(a, run(3));
  EXPECT_NE(a, run(4));
}

TEST(Trainer, OneStageRunsSingleStage) {
  const auto data = small_data();
  TrainConfig cfg = small_config();
  cfg.one_stage = true;
  Model<float> model(cfg.model_config(), 1);
  std::vector<nlohmann::json> log;
  const auto stages = train(model, cfg, data, [&](const nlohmann::json& r) { log.push_back(r); });
  ASSERT_EQ(stages.size(), 1u);
  EXPECT_EQ(stages[0].iterations, 6);
  for (const auto& r : log) EXPECT_EQ(r["stage"], 2);
}

TEST(Trainer, BatchSamplingIsDeterministicAndCoversEpoch) {
  const auto data = small_data(4);
  TrainConfig cfg = small_config();
  cfg.batch = 4;
  cfg.flips = false;
  cfg.time_reversal = false;
  cfg.crop = 32;
  const auto a = sample_batch(data, cfg, 1, 0), b = sample_batch(data, cfg, 1, 0);
  std::set<std::string> ids;
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_TRUE(bitwise_equal(a[k].it, b[k].it));
    ids.insert(a[k].id);
  }
  EXPECT_EQ(ids.size(), 4u);
}

TEST(Checkpoint, SaveLoadForwardBitwise) {
  TempDir dir("ckpt");
  Model<float> model(ModelConfig::preset("micro"), 3);
  train_stage2(model, small_config(), small_data());
  save_model(dir / "m.ckpt", model);
  Model<float> back = load_model(dir / "m.ckpt");
  EXPECT_EQ(nlohmann::json(back.config()), nlohmann::json(model.config()));
  const auto s = small_data(1)[0];
  Tape<float> t1, t2;
  auto a = model(t1.constant(s.i0), t1.constant(s.i1));
  auto b = back(t2.constant(s.i0), t2.constant(s.i1));
  EXPECT_TRUE(bitwise_equal(a.frames[0].value(), b.frames[0].value()));
  EXPECT_TRUE(bitwise_equal(a.flow.flow_t0.value(), b.flow.flow_t0.value()));
}

TEST(Checkpoint, RejectsForeignContents) {
  TempDir dir("ckbad");
  Model<float> model(ModelConfig::preset("micro"), 3);
  CheckpointData data = to_checkpoint(model.parameters());
  write_checkpoint(dir / "noconfig.ckpt", data);
  EXPECT_THROW(load_model(dir / "noconfig.ckpt"), DataError);
  data.metadata["config"] = nlohmann::json(model.config()).dump();
  data.tensors.emplace("stray.weight", Tensor<float>({1, 1, 1, 1}));
  write_checkpoint(dir / "extra.ckpt", data);
  EXPECT_THROW(load_model(dir / "extra.ckpt"), DataError);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c = small_config();
  c.ablation.no_cascade = true;
  c.weights.pf = 0.25;
  nlohmann::json j = c;
  EXPECT_EQ(j["schema_version"], kTrainConfigSchema);
  const auto back = j.get<TrainConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_TRUE(back.model_config().ablation.no_cascade);

  j["schema_version"] = 99;
  EXPECT_THROW(j.get<TrainConfig>(), DataError);
  nlohmann::json bad = nlohmann::json(c);
  bad["batch"] = 0;
  EXPECT_THROW(bad.get<TrainConfig>(), DataError);
  bad = nlohmann::json(c);
  bad["crop"] = 20;
  EXPECT_THROW(bad.get<TrainConfig>(), DataError);
  bad = nlohmann::json(c);
  bad["base_lr"] = "fast";
  EXPECT_THROW(bad.get<TrainConfig>(), DataError);

  const auto paper = TrainConfig::preset("paper");
  EXPECT_EQ(paper.stage1_iters, 200000);
  EXPECT_EQ(paper.stage2_iters, 400000);
  EXPECT_EQ(paper.crop, 128);
  EXPECT_EQ(paper.base_lr, 1e-4);
  EXPECT_THROW(TrainConfig::preset("huge"), std::invalid_argument);
}

TEST(Evaluate, AggregatesPerSample) {
  const auto data = small_data(3);
  Model<float> model(ModelConfig::preset("micro"), 4);
  const EvalSummary s = evaluate(model, data);
  ASSERT_EQ(s.records.size(), 3u);
  double psnr_sum = 0, ssim_sum = 0, ie_sum = 0;
  for (const auto& r : s.records) {
    psnr_sum += r.final_frame.psnr;
    ssim_sum += r.final_frame.ssim;
    ie_sum += r.final_frame.ie;
    ASSERT_TRUE(r.final_frame.epe.has_value());
    // Zero-initialized MFSN heads: the final frame is the anchor.
    EXPECT_DOUBLE_EQ(r.final_frame.psnr, r.anchor.psnr);
  }
  EXPECT_NEAR(s.mean_psnr, psnr_sum / 3, 1e-9);
  EXPECT_NEAR(s.mean_ssim, ssim_sum / 3, 1e-9);
  EXPECT_NEAR(s.mean_ie, ie_sum / 3, 1e-9);
  EXPECT_TRUE(s.mean_epe.has_value());
}

}  // namespace
}  // namespace fgdc
