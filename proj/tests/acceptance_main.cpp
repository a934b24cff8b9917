// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavier end-to-end criteria reuse artifacts produced by earlier
// ones (the toy training run feeds enhancement, ablation and timing).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "oracles.hpp"
#include "rgan/gradcheck_suite.hpp"
#include "rgan/metrics.hpp"
#include "rgan/sampler.hpp"
#include "rgan/synth.hpp"
#include "rgan/trainer.hpp"

namespace fs = std::filesystem;
using namespace rgan;

namespace {

int g_failures = 0;

void criterion(int n, const std::string& what, bool pass,
               const std::string& detail) {
  std::printf("[%s] criterion %d: %s  (%s)\n", pass ? "PASS" : "FAIL", n,
              what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

ImageU8 random_image(int w, int h, SplitMix64& rng) {
  ImageU8 img(w, h);
  for (uint8_t& p : img.pixels) p = uint8_t(rng.next_below(256));
  return img;
}

std::vector<uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
}

struct PairScores {
  double mean_psnr = 0, mean_ssim = 0;
  int count = 0;
};

PairScores score_pairs(const fs::path& candidates, const fs::path& reference) {
  PairScores s;
  std::vector<QualityEntry> entries;
  for (const fs::path& p : list_ppm_dir(candidates)) {
    const ImageU8 a = load_ppm(p);
    const ImageU8 b = load_ppm(reference / p.filename());
    entries.push_back({p.filename().string(), psnr(a, b), ssim(a, b)});
  }
  const QualityReport rep = aggregate_quality(std::move(entries));
  s.mean_psnr = rep.mean_psnr_db;
  s.mean_ssim = rep.mean_ssim;
  s.count = int(rep.count);
  return s;
}

void criterion_1_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto outcomes = run_gradcheck_suite({1, 2, 3});
  bool pass = true;
  double worst = 0;
  std::string worst_name = "-";
  for (const GradCheckOutcome& o : outcomes) {
    if (!o.pass) {
      pass = false;
      std::printf("  gradient case %s: max_rel_err %.3e exceeds %.0e\n",
                  o.name.c_str(), o.max_rel_err, o.tol);
    }
    if (o.max_rel_err > worst) {
      worst = o.max_rel_err;
      worst_name = o.name;
    }
  }
  const double secs = elapsed_s(t0);
  pass = pass && secs < 300.0;
  char detail[160];
  std::snprintf(detail, sizeof detail,
                "%zu cases, 3 seeds, worst %.2e in %s, %.0f s", outcomes.size(),
                worst, worst_name.c_str(), secs);
  criterion(1, "gradient suite under tolerance in under 5 minutes", pass,
            detail);
}

void criterion_2_shapes() {
  bool pass = true;
  std::string detail;

  Discriminator<float> d("disc_h");
  d.params().initialize(21);
  Tensor<float> img(Shape{3, 256, 256}, 0.1f);
  const Shape dshape = d.forward(img).shape();
  pass = pass && dshape == Shape{1, 30, 30};
  detail += "disc " + shape_str(dshape);

  GeneratorVit<float> gen("gen_h", 256, 1024, 7, 8);
  gen.params().initialize(22);
  const Tensor<float> tokens = gen.encode(img);
  pass = pass && tokens.shape() == Shape{1024, 1024};
  detail += ", tokens " + shape_str(tokens.shape());
  const Tensor<float> grid = gen.tokens_to_grid(tokens);
  pass = pass && grid.shape() == Shape{1024, 32, 32};
  detail += ", grid " + shape_str(grid.shape());
  const Tensor<float> out = gen.decode(tokens);
  pass = pass && out.shape() == Shape{3, 256, 256};
  detail += ", output " + shape_str(out.shape());

  criterion(2, "paper-scale shape ledger exact", pass, detail);
}

void criterion_3_loss_identities() {
  using Td = Tensor<double>;
  bool pass = true;

  SplitMix64 rng(31);
  Td x(Shape{3, 8, 8});
  for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = rng.uniform(-1, 1);
  pass = pass && cycle_loss(x.clone(), x).item() == 0.0;
  pass = pass && identity_loss(x.clone(), x).item() == 0.0;

  Td zeros(Shape{1, 30, 30});
  const double dv = adversarial_d_loss(zeros, zeros.clone()).item();
  pass = pass && std::abs(dv - 2.0 * std::log(2.0)) < 1e-9;

  LossWeights w{10.0, 5.0};
  const LossReport r =
      total_losses(0.31, 0.44, 0.62, 0.58, 0.12, 0.1, 0.05, 0.07, w);
  const double re_g = r.adv_g_l + r.adv_g_h + w.lambda_cycle * (r.cycle_l + r.cycle_h) +
                      w.lambda_identity * (r.id_l + r.id_h);
  const double re_d = r.adv_d_l + r.adv_d_h;
  pass = pass && std::abs(re_g - r.total_g) < 1e-6 &&
         std::abs(re_d - r.total_d) < 1e-6;

  char detail[96];
  std::snprintf(detail, sizeof detail, "adv_d(s=0.5)=%.12f vs 2ln2=%.12f", dv,
                2.0 * std::log(2.0));
  criterion(3, "loss identities at fixed points", pass, detail);
}

void criterion_4_metric_oracles() {
  bool pass = true;
  double worst_psnr = 0, worst_ssim = 0;
  SplitMix64 rng(41);
  for (int i = 0; i < 50; ++i) {
    const ImageU8 a = random_image(24, 18, rng);
    const ImageU8 b = random_image(24, 18, rng);
    worst_psnr = std::max(worst_psnr,
                          std::abs(psnr(a, b) - rgan_test::brute_psnr(a, b)));
    worst_ssim = std::max(worst_ssim,
                          std::abs(ssim(a, b) - rgan_test::brute_ssim(a, b)));
  }
  pass = pass && worst_psnr < 1e-9 && worst_ssim < 1e-6;

  const ImageU8 img = random_image(32, 32, rng);
  pass = pass && std::abs(ssim(img, img) - 1.0) < 1e-9;

  ImageU8 base(16, 16), plus1(16, 16);
  for (size_t i = 0; i < base.pixels.size(); ++i) {
    base.pixels[i] = uint8_t(30 + (i % 180));
    plus1.pixels[i] = uint8_t(base.pixels[i] + 1);
  }
  const double unit = psnr(base, plus1);
  pass = pass && std::abs(unit - 48.1308) < 1e-4;

  char detail[128];
  std::snprintf(detail, sizeof detail,
                "50 pairs: |dPSNR|<=%.1e dB, |dSSIM|<=%.1e, unit-MSE %.6f dB",
                worst_psnr, worst_ssim, unit);
  criterion(4, "metric oracles", pass, detail);
}

TrainConfig micro_config(const fs::path& data, const fs::path& ckpt) {
  TrainConfig cfg;
  cfg.image_size = 32;
  cfg.embed_dim = 32;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.disc_channels = 8;
  cfg.epochs_max = 1;
  cfg.patience = 3;
  cfg.seed = 77;
  cfg.low_dir = (data / "low").string();
  cfg.high_dir = (data / "high").string();
  cfg.checkpoint_dir = ckpt.string();
  cfg.validate();
  return cfg;
}

void criterion_7_determinism(const fs::path& work) {
  const fs::path data = work / "micro_data";
  synthesize_dataset(data, 10, 32, 5);

  auto run = [&](const std::string& tag, int epochs,
                 const std::optional<fs::path>& resume) {
    const fs::path dir = work / ("micro_" + tag);
    fs::remove_all(dir);
    TrainConfig cfg = micro_config(data, dir);
    cfg.epochs_max = epochs;
    Trainer trainer(cfg);
    trainer.train(resume);
    return dir;
  };

  const fs::path a = run("a", 1, {});
  const fs::path b = run("b", 1, {});
  const bool identical = slurp(a / "last.ckpt") == slurp(b / "last.ckpt");

  // save -> load -> save
  bool resave_ok = false;
  {
    TrainConfig cfg = micro_config(data, work / "micro_resave");
    Trainer t(cfg);
    t.restore(read_checkpoint(a / "last.ckpt"));
    fs::create_directories(work / "micro_resave");
    write_checkpoint(work / "micro_resave" / "resaved.ckpt", t.snapshot());
    resave_ok =
        slurp(work / "micro_resave" / "resaved.ckpt") == slurp(a / "last.ckpt");
  }

  const fs::path straight = run("straight", 2, {});
  const fs::path resumed = run("resumed", 2, a / "last.ckpt");
  const bool resume_ok =
      slurp(straight / "last.ckpt") == slurp(resumed / "last.ckpt");

  char detail[128];
  std::snprintf(detail, sizeof detail,
                "two runs identical: %d, resave identical: %d, resume==straight: %d",
                identical, resave_ok, resume_ok);
  criterion(7, "determinism and persistence", identical && resave_ok && resume_ok,
            detail);
}

struct ToyRun {
  fs::path data, ckpt, enhanced;
  PairScores baseline, enhanced_scores;
  std::vector<LossReport> epoch_means;
  double minutes = 0;
};

ToyRun toy_train_and_enhance(const fs::path& work, const std::string& kind,
                             int epochs) {
  ToyRun run;
  run.data = work / "toy_data";
  if (!fs::exists(run.data / "high")) synthesize_dataset(run.data, 200, 64, 424242);

  run.ckpt = work / ("toy_ckpt_" + kind);
  fs::remove_all(run.ckpt);

  TrainConfig cfg;
  cfg.image_size = 64;
  cfg.embed_dim = 128;
  cfg.depth = 2;
  cfg.heads = 4;
  cfg.generator_kind = kind;
  cfg.base_channels = 16;
  cfg.res_blocks = 4;
  cfg.disc_channels = 32;
  cfg.lambda_cycle = 10.0;
  cfg.lambda_identity = 5.0;
  cfg.epochs_max = epochs;
  cfg.patience = 5;
  cfg.seed = 20240817;
  cfg.low_dir = (run.data / "low").string();
  cfg.high_dir = (run.data / "high").string();
  cfg.checkpoint_dir = run.ckpt.string();
  cfg.validate();

  const auto t0 = std::chrono::steady_clock::now();
  Trainer trainer(cfg, [](const std::string& s) {
    std::printf("  %s\n", s.c_str());
    std::fflush(stdout);
  });
  const TrainResult res = trainer.train();
  run.minutes = elapsed_s(t0) / 60.0;
  run.epoch_means = res.epoch_means;

  run.enhanced = work / ("toy_enhanced_" + kind);
  fs::remove_all(run.enhanced);
  enhance_images(run.ckpt / "best.ckpt", run.data / "degraded", run.enhanced);

  run.baseline = score_pairs(run.data / "degraded", run.data / "clean");
  run.enhanced_scores = score_pairs(run.enhanced, run.data / "clean");
  return run;
}

void criterion_5_6_8(const fs::path& work) {
  // 5: the ViT configuration end to end
  const ToyRun vit = toy_train_and_enhance(work, "vit", 18);
  const bool budget_ok = vit.minutes < 30.0 && vit.epoch_means.size() <= 30;
  const bool psnr_ok =
      vit.enhanced_scores.mean_psnr >= vit.baseline.mean_psnr + 1.0;
  const bool ssim_ok = vit.enhanced_scores.mean_ssim > vit.baseline.mean_ssim;
  const bool curve_ok = vit.epoch_means.size() >= 5 &&
                        vit.epoch_means[4].total_g < vit.epoch_means[0].total_g;
  char detail[256];
  std::snprintf(detail, sizeof detail,
                "40 held-out: PSNR %.3f -> %.3f dB, SSIM %.4f -> %.4f, "
                "total_g e1 %.3f e5 %.3f, %.1f min",
                vit.baseline.mean_psnr, vit.enhanced_scores.mean_psnr,
                vit.baseline.mean_ssim, vit.enhanced_scores.mean_ssim,
                vit.epoch_means.empty() ? 0.0 : vit.epoch_means[0].total_g,
                vit.epoch_means.size() >= 5 ? vit.epoch_means[4].total_g : 0.0,
                vit.minutes);
  criterion(5, "toy end-to-end enhancement gains",
            budget_ok && psnr_ok && ssim_ok && curve_ok &&
                vit.enhanced_scores.count == 40,
            detail);

  // 6: the convolutional baseline under the same budget, directional
  const ToyRun cnn = toy_train_and_enhance(work, "cnn-baseline", 10);
  const bool cnn_improves =
      cnn.enhanced_scores.mean_psnr > cnn.baseline.mean_psnr &&
      cnn.minutes < 30.0;
  std::snprintf(detail, sizeof detail,
                "vit %.3f dB vs cnn-baseline %.3f dB (baseline %.3f dB), "
                "cnn %.1f min",
                vit.enhanced_scores.mean_psnr, cnn.enhanced_scores.mean_psnr,
                cnn.baseline.mean_psnr, cnn.minutes);
  criterion(6, "ablation report: both generators improve held-out PSNR",
            cnn_improves, detail);

  // 8: latency harness on the trained ViT model
  const auto tensors = read_checkpoint(vit.ckpt / "best.ckpt");
  const auto gen = load_generator_h(tensors);
  std::vector<ImageU8> inputs;
  for (const fs::path& p : list_ppm_dir(vit.data / "degraded"))
    inputs.push_back(load_ppm(p));
  const SittResult sitt = measure_sitt(
      [&gen](const ImageU8& img) {
        return denormalize(gen->forward(normalize<float>(img)));
      },
      inputs);
  const bool sitt_ok = sitt.count >= 20 && sitt.std_ms < 0.2 * sitt.mean_ms;
  std::snprintf(detail, sizeof detail, "%.2f +- %.2f ms over %d images",
                sitt.mean_ms, sitt.std_ms, sitt.count);
  criterion(8, "single-image latency stable (std < 20% of mean)", sitt_ok,
            detail);
}

}  // namespace

int main() {
  const fs::path work = fs::current_path() / "acceptance_work";
  fs::create_directories(work);

  criterion_1_gradients();
  criterion_2_shapes();
  criterion_3_loss_identities();
  criterion_4_metric_oracles();
  criterion_7_determinism(work);
  criterion_5_6_8(work);

  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all acceptance criteria passed\n");
  return 0;
}
