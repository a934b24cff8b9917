#include "rgan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

namespace rgan {

namespace {

std::unique_ptr<GeneratorBase<float>> make_generator(const TrainConfig& cfg,
                                                     const std::string& name) {
  if (cfg.generator_kind == "vit")
    return std::make_unique<GeneratorVit<float>>(name, cfg.image_size,
                                                 cfg.embed_dim, cfg.depth,
                                                 cfg.heads);
  return std::make_unique<GeneratorCnn<float>>(name, cfg.image_size,
                                               cfg.base_channels,
                                               cfg.res_blocks);
}

NamedTensorF to_named(const Param<float>& p, const std::string& name) {
  return NamedTensorF{name, p.tensor.shape(), p.tensor.vec()};
}

NamedTensorF scalar_tensor(const std::string& name, float v) {
  return NamedTensorF{name, Shape{1}, {v}};
}

}  // namespace

ModelSet ModelSet::build(const TrainConfig& cfg) {
  ModelSet m;
  m.gen_h = make_generator(cfg, "gen_h");
  m.gen_l = make_generator(cfg, "gen_l");
  m.disc_h = std::make_unique<Discriminator<float>>("disc_h",
                                                    cfg.disc_channels);
  m.disc_l = std::make_unique<Discriminator<float>>("disc_l",
                                                    cfg.disc_channels);
  return m;
}

void ModelSet::initialize(uint64_t seed) {
  gen_h->params().initialize(seed);
  gen_l->params().initialize(seed);
  disc_h->params().initialize(seed);
  disc_l->params().initialize(seed);
}

std::vector<ParamStore<float>*> ModelSet::generator_stores() {
  return {&gen_h->params(), &gen_l->params()};
}

int64_t ModelSet::total_params() const {
  return gen_h->params().total_count() + gen_l->params().total_count() +
         disc_h->params().total_count() + disc_l->params().total_count();
}

Trainer::Trainer(TrainConfig cfg, LogFn log)
    : cfg_(std::move(cfg)), log_(std::move(log)),
      models_(ModelSet::build(cfg_)),
      opt_g_(models_.generator_stores(), float(cfg_.lr), float(cfg_.beta1),
             float(cfg_.beta2)),
      opt_d_h_({&models_.disc_h->params()}, float(cfg_.lr), float(cfg_.beta1),
               float(cfg_.beta2)),
      opt_d_l_({&models_.disc_l->params()}, float(cfg_.lr), float(cfg_.beta1),
               float(cfg_.beta2)),
      stopper_(cfg_.patience) {
  models_.initialize(cfg_.seed);
}

LossReport Trainer::train_iteration(const std::vector<Tensor<float>>& low,
                                    const std::vector<Tensor<float>>& high) {
  if (low.empty() || low.size() != high.size())
    tensor_fail("train_iteration: batch sides must be non-empty and equal");
  const size_t batch = low.size();
  const float inv_b = 1.0f / float(batch);

  auto check_finite = [](const Tensor<float>& t, const char* term) {
    if (!std::isfinite(t.item()))
      tensor_fail(std::string("non-finite loss term: ") + term);
    return t;
  };

  // (a) translating forwards, kept on the generator tape for step (c)
  Tape<float> tape_g;
  std::vector<Tensor<float>> fake_h, fake_l;
  {
    Tape<float>::Scope scope(tape_g);
    for (size_t i = 0; i < batch; ++i) {
      fake_h.push_back(models_.gen_h->forward(low[i]));
      fake_l.push_back(models_.gen_l->forward(high[i]));
    }
  }

  // (b) discriminator update on detached fakes
  opt_d_h_.zero_grad();
  opt_d_l_.zero_grad();
  Tensor<float> adv_d_h_sum, adv_d_l_sum;
  {
    Tape<float> tape_d;
    Tape<float>::Scope scope(tape_d);
    for (size_t i = 0; i < batch; ++i) {
      Tensor<float> dh = scale(
          adversarial_d_loss(models_.disc_h->forward(high[i]),
                             models_.disc_h->forward(fake_h[i].detach())),
          inv_b);
      Tensor<float> dl = scale(
          adversarial_d_loss(models_.disc_l->forward(low[i]),
                             models_.disc_l->forward(fake_l[i].detach())),
          inv_b);
      adv_d_h_sum = i == 0 ? dh : add(adv_d_h_sum, dh);
      adv_d_l_sum = i == 0 ? dl : add(adv_d_l_sum, dl);
    }
    check_finite(adv_d_h_sum, "adv_D_H");
    check_finite(adv_d_l_sum, "adv_D_L");
    tape_d.backward(add(adv_d_h_sum, adv_d_l_sum));
  }
  opt_d_h_.step();
  opt_d_l_.step();

  // (c) generator update through the freshly updated discriminators
  opt_g_.zero_grad();
  Tensor<float> adv_g_h_sum, adv_g_l_sum, cyc_l_sum, cyc_h_sum, id_l_sum,
      id_h_sum;
  {
    Tape<float>::Scope scope(tape_g);
    for (size_t i = 0; i < batch; ++i) {
      Tensor<float> agh =
          scale(adversarial_g_loss(models_.disc_h->forward(fake_h[i])), inv_b);
      Tensor<float> agl =
          scale(adversarial_g_loss(models_.disc_l->forward(fake_l[i])), inv_b);
      Tensor<float> cl =
          scale(cycle_loss(models_.gen_l->forward(fake_h[i]), low[i]), inv_b);
      Tensor<float> ch =
          scale(cycle_loss(models_.gen_h->forward(fake_l[i]), high[i]), inv_b);
      Tensor<float> il =
          scale(identity_loss(models_.gen_l->forward(low[i]), low[i]), inv_b);
      Tensor<float> ih =
          scale(identity_loss(models_.gen_h->forward(high[i]), high[i]), inv_b);
      adv_g_h_sum = i == 0 ? agh : add(adv_g_h_sum, agh);
      adv_g_l_sum = i == 0 ? agl : add(adv_g_l_sum, agl);
      cyc_l_sum = i == 0 ? cl : add(cyc_l_sum, cl);
      cyc_h_sum = i == 0 ? ch : add(cyc_h_sum, ch);
      id_l_sum = i == 0 ? il : add(id_l_sum, il);
      id_h_sum = i == 0 ? ih : add(id_h_sum, ih);
    }
    check_finite(adv_g_h_sum, "adv_G_H");
    check_finite(adv_g_l_sum, "adv_G_L");
    check_finite(cyc_l_sum, "cycle_L");
    check_finite(cyc_h_sum, "cycle_H");
    check_finite(id_l_sum, "id_L");
    check_finite(id_h_sum, "id_H");
    LossWeights w{cfg_.lambda_cycle, cfg_.lambda_identity};
    Tensor<float> total_g = combine_generator_loss(
        adv_g_l_sum, adv_g_h_sum, cyc_l_sum, cyc_h_sum, id_l_sum, id_h_sum, w);
    check_finite(total_g, "total_G");
    tape_g.backward(total_g);
  }
  opt_g_.step();
  ++steps_;

  return total_losses(double(adv_d_l_sum.item()), double(adv_d_h_sum.item()),
                      double(adv_g_l_sum.item()), double(adv_g_h_sum.item()),
                      double(cyc_l_sum.item()), double(cyc_h_sum.item()),
                      double(id_l_sum.item()), double(id_h_sum.item()),
                      LossWeights{cfg_.lambda_cycle, cfg_.lambda_identity});
}

namespace {

std::string history_line(int epoch, const LossReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "epoch=%d total_g=%.9g total_d=%.9g adv_g_l=%.9g adv_g_h=%.9g "
                "cycle_l=%.9g cycle_h=%.9g id_l=%.9g id_h=%.9g adv_d_l=%.9g "
                "adv_d_h=%.9g",
                epoch, r.total_g, r.total_d, r.adv_g_l, r.adv_g_h, r.cycle_l,
                r.cycle_h, r.id_l, r.id_h, r.adv_d_l, r.adv_d_h);
  return buf;
}

}  // namespace

TrainResult Trainer::train(const std::optional<std::filesystem::path>& resume) {
  namespace fs = std::filesystem;
  UnpairedSampler sampler(cfg_.low_dir, cfg_.high_dir, cfg_.seed);
  fs::create_directories(cfg_.checkpoint_dir);
  const fs::path dir(cfg_.checkpoint_dir);

  if (resume) restore(read_checkpoint(*resume));

  std::ofstream history(dir / "history.txt",
                        resume ? std::ios::app : std::ios::trunc);
  if (!history)
    throw IoError("cannot write history file in " + cfg_.checkpoint_dir);

  // normalized tensors cached per file
  std::unordered_map<std::string, Tensor<float>> cache;
  auto fetch = [&cache](const fs::path& p) {
    auto it = cache.find(p.string());
    if (it != cache.end()) return it->second;
    Tensor<float> t = normalize<float>(load_ppm(p));
    cache.emplace(p.string(), t);
    return t;
  };

  TrainResult result;
  result.best_path = dir / "best.ckpt";
  result.last_path = dir / "last.ckpt";
  result.history_path = dir / "history.txt";

  for (int epoch = epoch_done_ + 1; epoch <= cfg_.epochs_max; ++epoch) {
    const auto pairs = sampler.epoch(epoch);
    LossReport sums;
    int64_t iters = 0;
    for (size_t off = 0; off < pairs.size(); off += size_t(cfg_.batch_size)) {
      std::vector<Tensor<float>> low, high;
      for (size_t i = off;
           i < std::min(pairs.size(), off + size_t(cfg_.batch_size)); ++i) {
        low.push_back(fetch(pairs[i].low));
        high.push_back(fetch(pairs[i].high));
      }
      const LossReport r = train_iteration(low, high);
      sums.adv_d_l += r.adv_d_l;
      sums.adv_d_h += r.adv_d_h;
      sums.adv_g_l += r.adv_g_l;
      sums.adv_g_h += r.adv_g_h;
      sums.cycle_l += r.cycle_l;
      sums.cycle_h += r.cycle_h;
      sums.id_l += r.id_l;
      sums.id_h += r.id_h;
      sums.total_g += r.total_g;
      sums.total_d += r.total_d;
      ++iters;
    }
    LossReport means = sums;
    for (double* f : {&means.adv_d_l, &means.adv_d_h, &means.adv_g_l,
                      &means.adv_g_h, &means.cycle_l, &means.cycle_h,
                      &means.id_l, &means.id_h, &means.total_g,
                      &means.total_d})
      *f /= double(iters);

    epoch_done_ = epoch;
    result.epoch_means.push_back(means);
    const std::string line = history_line(epoch, means);
    history << line << "\n";
    history.flush();
    log(line);

    const bool stop = stopper_.update(means.total_g);
    if (stopper_.improved_last()) write_checkpoint(result.best_path, snapshot());
    write_checkpoint(result.last_path, snapshot());

    result.epochs_run = epoch;
    result.best_epoch = stopper_.best_epoch();
    result.best_total_g = stopper_.best();
    if (stop) {
      log("early stop: no improvement for " + std::to_string(cfg_.patience) +
          " epochs");
      break;
    }
  }
  return result;
}

std::vector<NamedTensorF> Trainer::snapshot() const {
  std::vector<NamedTensorF> out;
  const ParamStore<float>* stores[] = {
      &models_.gen_h->params(), &models_.gen_l->params(),
      &models_.disc_h->params(), &models_.disc_l->params()};
  for (const ParamStore<float>* s : stores)
    for (const Param<float>& p : s->entries()) out.push_back(to_named(p, p.name));

  const Adam<float>* opts[] = {&opt_g_, &opt_d_h_, &opt_d_l_};
  for (bool first_moment : {true, false})
    for (const Adam<float>* opt : opts)
      for (const auto& slot : opt->slots())
        out.push_back(NamedTensorF{
            (first_moment ? "adam.m." : "adam.v.") + slot.param->name,
            slot.param->tensor.shape(),
            first_moment ? slot.m : slot.v});

  out.push_back(scalar_tensor("meta.epoch", float(epoch_done_)));
  out.push_back(scalar_tensor("meta.step", float(steps_)));
  out.push_back(scalar_tensor(
      "meta.best_loss", std::isfinite(stopper_.best())
                            ? float(stopper_.best())
                            : std::numeric_limits<float>::max()));
  out.push_back(scalar_tensor("meta.best_epoch", float(stopper_.best_epoch())));
  out.push_back(scalar_tensor("adam.t.gen", float(opt_g_.step_count())));
  out.push_back(scalar_tensor("adam.t.disc_h", float(opt_d_h_.step_count())));
  out.push_back(scalar_tensor("adam.t.disc_l", float(opt_d_l_.step_count())));
  out.push_back(scalar_tensor("meta.image_size", float(cfg_.image_size)));
  out.push_back(scalar_tensor("meta.embed_dim", float(cfg_.embed_dim)));
  out.push_back(scalar_tensor("meta.depth", float(cfg_.depth)));
  out.push_back(scalar_tensor("meta.heads", float(cfg_.heads)));
  out.push_back(scalar_tensor("meta.generator_kind",
                              cfg_.generator_kind == "vit" ? 0.0f : 1.0f));
  out.push_back(scalar_tensor("meta.base_channels", float(cfg_.base_channels)));
  out.push_back(scalar_tensor("meta.res_blocks", float(cfg_.res_blocks)));
  out.push_back(scalar_tensor("meta.disc_channels", float(cfg_.disc_channels)));
  return out;
}

void Trainer::restore(const std::vector<NamedTensorF>& tensors) {
  std::unordered_map<std::string, const NamedTensorF*> by_name;
  for (const NamedTensorF& t : tensors) {
    if (!by_name.emplace(t.name, &t).second)
      throw CheckpointError("checkpoint: duplicate tensor " + t.name);
  }
  auto take = [&by_name](const std::string& name, const Shape& shape,
                         std::vector<float>& dst) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw CheckpointError("checkpoint: missing tensor " + name);
    if (it->second->shape != shape)
      throw CheckpointError("checkpoint: tensor " + name + " has shape " +
                            shape_str(it->second->shape) + ", expected " +
                            shape_str(shape));
    dst = it->second->data;
    by_name.erase(it);
  };

  ParamStore<float>* stores[] = {
      &models_.gen_h->params(), &models_.gen_l->params(),
      &models_.disc_h->params(), &models_.disc_l->params()};
  for (ParamStore<float>* s : stores)
    for (Param<float>& p : s->entries()) take(p.name, p.tensor.shape(), p.tensor.vec());

  Adam<float>* opts[] = {&opt_g_, &opt_d_h_, &opt_d_l_};
  for (Adam<float>* opt : opts)
    for (auto& slot : opt->slots()) {
      take("adam.m." + slot.param->name, slot.param->tensor.shape(), slot.m);
      take("adam.v." + slot.param->name, slot.param->tensor.shape(), slot.v);
    }

  auto take_scalar = [&by_name](const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw CheckpointError("checkpoint: missing scalar " + name);
    if (it->second->data.size() != 1)
      throw CheckpointError("checkpoint: scalar " + name + " is not scalar");
    const float v = it->second->data[0];
    by_name.erase(it);
    return v;
  };
  epoch_done_ = int(take_scalar("meta.epoch"));
  steps_ = int64_t(take_scalar("meta.step"));
  const float best = take_scalar("meta.best_loss");
  const int best_epoch = int(take_scalar("meta.best_epoch"));
  stopper_.restore(best == std::numeric_limits<float>::max()
                       ? std::numeric_limits<double>::infinity()
                       : double(best),
                   best_epoch, epoch_done_);
  opt_g_.set_step_count(int64_t(take_scalar("adam.t.gen")));
  opt_d_h_.set_step_count(int64_t(take_scalar("adam.t.disc_h")));
  opt_d_l_.set_step_count(int64_t(take_scalar("adam.t.disc_l")));

  // architecture meta must agree with the live config
  const struct {
    const char* name;
    float expected;
  } arch[] = {
      {"meta.image_size", float(cfg_.image_size)},
      {"meta.embed_dim", float(cfg_.embed_dim)},
      {"meta.depth", float(cfg_.depth)},
      {"meta.heads", float(cfg_.heads)},
      {"meta.generator_kind", cfg_.generator_kind == "vit" ? 0.0f : 1.0f},
      {"meta.base_channels", float(cfg_.base_channels)},
      {"meta.res_blocks", float(cfg_.res_blocks)},
      {"meta.disc_channels", float(cfg_.disc_channels)},
  };
  for (const auto& a : arch) {
    const float v = take_scalar(a.name);
    if (v != a.expected)
      throw CheckpointError("checkpoint: " + std::string(a.name) + " is " +
                            std::to_string(v) + ", config expects " +
                            std::to_string(a.expected));
  }
  if (!by_name.empty())
    throw CheckpointError("checkpoint: unexpected tensor " +
                          by_name.begin()->first);
}

TrainConfig config_from_checkpoint(const std::vector<NamedTensorF>& tensors) {
  std::unordered_map<std::string, float> scalars;
  for (const NamedTensorF& t : tensors)
    if (t.data.size() == 1) scalars[t.name] = t.data[0];
  auto need = [&scalars](const char* name) {
    auto it = scalars.find(name);
    if (it == scalars.end())
      throw CheckpointError("checkpoint: missing scalar " + std::string(name));
    return it->second;
  };
  TrainConfig cfg;
  cfg.image_size = int(need("meta.image_size"));
  cfg.embed_dim = int(need("meta.embed_dim"));
  cfg.depth = int(need("meta.depth"));
  cfg.heads = int(need("meta.heads"));
  cfg.generator_kind =
      need("meta.generator_kind") == 0.0f ? "vit" : "cnn-baseline";
  cfg.base_channels = int(need("meta.base_channels"));
  cfg.res_blocks = int(need("meta.res_blocks"));
  cfg.disc_channels = int(need("meta.disc_channels"));
  return cfg;
}

std::unique_ptr<GeneratorBase<float>> load_generator_h(
    const std::vector<NamedTensorF>& tensors) {
  const TrainConfig cfg = config_from_checkpoint(tensors);
  std::unique_ptr<GeneratorBase<float>> gen = make_generator(cfg, "gen_h");
  std::unordered_map<std::string, const NamedTensorF*> by_name;
  for (const NamedTensorF& t : tensors) by_name[t.name] = &t;
  for (Param<float>& p : gen->params().entries()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      throw CheckpointError("checkpoint: missing tensor " + p.name);
    if (it->second->shape != p.tensor.shape())
      throw CheckpointError("checkpoint: tensor " + p.name + " has shape " +
                            shape_str(it->second->shape) + ", expected " +
                            shape_str(p.tensor.shape()));
    p.tensor.vec() = it->second->data;
  }
  return gen;
}

EnhanceResult enhance_images(const std::filesystem::path& ckpt_path,
                             const std::filesystem::path& input,
                             const std::filesystem::path& out_dir,
                             const Trainer::LogFn& log) {
  namespace fs = std::filesystem;
  const auto tensors = read_checkpoint(ckpt_path);
  const auto gen = load_generator_h(tensors);
  const int size = gen->image_size();

  std::vector<fs::path> files;
  if (fs::is_directory(input))
    files = list_ppm_dir(input);
  else
    files.push_back(input);
  fs::create_directories(out_dir);

  EnhanceResult res;
  for (const fs::path& f : files) {
    try {
      const ImageU8 img = load_ppm(f);
      if (img.width != size || img.height != size)
        throw IoError("size " + std::to_string(img.width) + "x" +
                      std::to_string(img.height) + " does not match model " +
                      std::to_string(size));
      const Tensor<float> out = gen->forward(normalize<float>(img));
      save_ppm(out_dir / f.filename(), denormalize(out));
      ++res.written;
    } catch (const std::exception& e) {
      res.skipped.push_back(f.filename().string() + ": " + e.what());
      if (log) log("skipped " + f.filename().string() + ": " + e.what());
    }
  }
  return res;
}

std::string inspect_checkpoint_text(const std::filesystem::path& path) {
  const auto tensors = read_checkpoint(path);
  std::ostringstream os;
  std::map<std::string, int64_t> per_model;
  int64_t total = 0;
  for (const NamedTensorF& t : tensors) {
    os << t.name << " " << shape_str(t.shape) << "\n";
    if (t.name.starts_with("adam.") || t.name.starts_with("meta.")) continue;
    const auto dot = t.name.find('.');
    per_model[t.name.substr(0, dot)] += shape_numel(t.shape);
    total += shape_numel(t.shape);
  }
  for (const auto& [model, count] : per_model)
    os << model << " parameters: " << count << "\n";
  os << "total parameters: " << total << "\n";
  return os.str();
}

}  // namespace rgan
