// Command-line laboratory: synthetic data, training, enhancement, metric
// evaluation, gradient checking and checkpoint inspection.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "rgan/config.hpp"
#include "rgan/gradcheck_suite.hpp"
#include "rgan/metrics.hpp"
#include "rgan/sampler.hpp"
#include "rgan/synth.hpp"
#include "rgan/trainer.hpp"

namespace fs = std::filesystem;
using namespace rgan;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

int cmd_synth(const std::string& out, int count, int size, uint64_t seed,
              const std::string& recipe_file) {
  if (size < 16 || size % 8 != 0)
    throw ConfigError("field 'size': must be >= 16 and divisible by 8");
  if (count < 1) throw ConfigError("field 'count': must be >= 1");

  std::cout << "out = " << out << "\ncount = " << count << "\nsize = " << size
            << "\nseed = " << seed << "\nrecipe = "
            << (recipe_file.empty() ? "(sampled per image)" : recipe_file)
            << "\n";

  DegradationRecipe fixed;
  const bool has_fixed = !recipe_file.empty();
  if (has_fixed) fixed = DegradationRecipe::from_kv(parse_kv_file(recipe_file));

  const SynthCounts c =
      synthesize_dataset(out, count, size, seed, has_fixed ? &fixed : nullptr);
  std::cout << "high: " << c.high << "\nlow: " << c.low
            << "\neval pairs: " << c.eval_pairs << "\n";
  return 0;
}

int cmd_train(const std::string& config_file, const std::string& resume) {
  const TrainConfig cfg = TrainConfig::from_file(config_file);
  // dataset presence is a usage problem, caught before any compute
  for (const std::string& dir : {cfg.low_dir, cfg.high_dir}) {
    if (!fs::is_directory(dir))
      throw ConfigError("dataset directory missing: " + dir);
  }
  std::cout << cfg.echo();

  Trainer trainer(cfg, [](const std::string& s) { std::cout << s << "\n"; });
  std::optional<fs::path> resume_path;
  if (!resume.empty()) resume_path = fs::path(resume);
  const TrainResult r = trainer.train(resume_path);
  std::cout << "epochs run: " << r.epochs_run << "\nbest epoch: " << r.best_epoch
            << "\nbest total_g: " << r.best_total_g << "\n"
            << "checkpoints: " << r.best_path.string() << ", "
            << r.last_path.string() << "\n";
  return 0;
}

int cmd_enhance(const std::string& ckpt, const std::string& in,
                const std::string& out) {
  std::cout << "ckpt = " << ckpt << "\nin = " << in << "\nout = " << out
            << "\n";
  const EnhanceResult r = enhance_images(
      ckpt, in, out, [](const std::string& s) { std::cout << s << "\n"; });
  std::cout << "written: " << r.written << "\nskipped: " << r.skipped.size()
            << "\n";
  return 0;
}

int cmd_evaluate(const std::string& enhanced, const std::string& reference,
                 const std::string& report_file, bool timed,
                 const std::string& ckpt, const std::string& time_in) {
  std::cout << "enhanced = " << enhanced << "\nreference = " << reference
            << "\n";
  std::map<std::string, fs::path> ref_by_name;
  for (const fs::path& p : list_ppm_dir(reference))
    ref_by_name[p.filename().string()] = p;

  std::vector<QualityEntry> entries;
  std::vector<std::string> mismatched;
  for (const fs::path& p : list_ppm_dir(enhanced)) {
    const auto it = ref_by_name.find(p.filename().string());
    if (it == ref_by_name.end()) {
      mismatched.push_back(p.filename().string());
      continue;
    }
    const ImageU8 a = load_ppm(p);
    const ImageU8 b = load_ppm(it->second);
    entries.push_back({p.filename().string(), psnr(a, b), ssim(a, b)});
  }
  for (const std::string& name : mismatched)
    std::cout << "warning: no reference for " << name << ", skipped\n";
  if (entries.empty())
    throw IoError("no filename matches between " + enhanced + " and " +
                  reference);

  QualityReport rep = aggregate_quality(std::move(entries));
  if (timed) {
    if (ckpt.empty() || time_in.empty())
      throw ConfigError("--time requires --ckpt and --in");
    const auto tensors = read_checkpoint(ckpt);
    const auto gen = load_generator_h(tensors);
    std::vector<ImageU8> inputs;
    for (const fs::path& p : list_ppm_dir(time_in))
      inputs.push_back(load_ppm(p));
    rep.sitt = measure_sitt(
        [&gen](const ImageU8& img) {
          return denormalize(gen->forward(normalize<float>(img)));
        },
        inputs);
  }
  std::cout << rep.to_text();
  if (!mismatched.empty())
    std::cout << "warnings: " << mismatched.size() << " unmatched filenames\n";
  if (!report_file.empty()) {
    std::ofstream out(report_file, std::ios::trunc);
    if (!out) throw IoError("cannot write report to " + report_file);
    out << rep.to_kv();
  }
  return 0;
}

int cmd_inspect(const std::string& ckpt) {
  std::cout << inspect_checkpoint_text(ckpt);
  return 0;
}

int cmd_gradcheck() {
  const std::vector<uint64_t> seeds{1, 2, 3};
  std::cout << "seeds = 1 2 3\n";
  const auto t0 = std::chrono::steady_clock::now();
  bool all_pass = true;
  for (const GradCheckOutcome& o : run_gradcheck_suite(seeds)) {
    std::printf("%-38s max_rel_err %.3e (tol %.0e) %s\n", o.name.c_str(),
                o.max_rel_err, o.tol, o.pass ? "ok" : "FAIL");
    all_pass = all_pass && o.pass;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::printf("gradient suite finished in %.1f s: %s\n", secs,
              all_pass ? "all ok" : "FAILURES");
  if (!all_pass) throw IoError("gradient check failures");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unpaired retinal image enhancement laboratory"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_out;
  int synth_count = 200, synth_size = 64;
  uint64_t synth_seed = 0;
  std::string synth_recipe;
  synth->add_option("--out", synth_out, "Output dataset directory")->required();
  synth->add_option("--count", synth_count, "Total base images");
  synth->add_option("--size", synth_size, "Image side, divisible by 8");
  synth->add_option("--seed", synth_seed, "Generation seed");
  synth->add_option("--recipe", synth_recipe, "Fixed degradation recipe file");

  auto* train = app.add_subcommand("train", "Train the translation models");
  std::string train_config, train_resume;
  train->add_option("--config", train_config, "key = value config file")
      ->required();
  train->add_option("--resume", train_resume, "Checkpoint to resume from");

  auto* enhance = app.add_subcommand("enhance", "Enhance low-quality images");
  std::string enh_ckpt, enh_in, enh_out;
  enhance->add_option("--ckpt", enh_ckpt, "Checkpoint file")->required();
  enhance->add_option("--in", enh_in, "Input PPM file or directory")
      ->required();
  enhance->add_option("--out", enh_out, "Output directory")->required();

  auto* evaluate =
      app.add_subcommand("evaluate", "PSNR/SSIM against a reference set");
  std::string ev_enhanced, ev_reference, ev_report, ev_ckpt, ev_in;
  bool ev_time = false;
  evaluate->add_option("--enhanced", ev_enhanced, "Enhanced image directory")
      ->required();
  evaluate->add_option("--reference", ev_reference, "Reference directory")
      ->required();
  evaluate->add_option("--report", ev_report, "Write key=value report here");
  evaluate->add_flag("--time", ev_time, "Also measure per-image latency");
  evaluate->add_option("--ckpt", ev_ckpt, "Checkpoint for --time");
  evaluate->add_option("--in", ev_in, "Input directory for --time");

  auto* inspect = app.add_subcommand("inspect", "List checkpoint tensors");
  std::string ins_ckpt;
  inspect->add_option("--ckpt", ins_ckpt, "Checkpoint file")->required();

  app.add_subcommand("gradcheck",
                     "Run the finite-difference gradient suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (synth->parsed())
      return cmd_synth(synth_out, synth_count, synth_size, synth_seed,
                       synth_recipe);
    if (train->parsed()) return cmd_train(train_config, train_resume);
    if (enhance->parsed()) return cmd_enhance(enh_ckpt, enh_in, enh_out);
    if (evaluate->parsed())
      return cmd_evaluate(ev_enhanced, ev_reference, ev_report, ev_time,
                          ev_ckpt, ev_in);
    if (inspect->parsed()) return cmd_inspect(ins_ckpt);
    return cmd_gradcheck();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
