#include "rgan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace rgan {

namespace {

// cos/sin of k*2*pi/16 scaled by 256; drawing never touches libm so rasters
// are identical on every platform.
constexpr int kDirX[16] = {256, 237, 181, 98,  0,    -98,  -181, -237,
                           -256, -237, -181, -98, 0,   98,   181,  237};
constexpr int kDirY[16] = {0,   98,  181, 237, 256,  237,  181,  98,
                           0,   -98, -181, -237, -256, -237, -181, -98};

struct Disc {
  int cx, cy, r;
  bool contains(int x, int y, int margin = 0) const {
    const int dx = x - cx, dy = y - cy, rr = r - margin;
    return dx * dx + dy * dy <= rr * rr;
  }
};

void fill_disc(ImageU8& img, const Disc& d, int cr, int cg, int cb) {
  for (int y = std::max(0, d.cy - d.r); y <= std::min(img.height - 1, d.cy + d.r); ++y)
    for (int x = std::max(0, d.cx - d.r); x <= std::min(img.width - 1, d.cx + d.r); ++x)
      if (d.contains(x, y)) {
        img.at(y, x, 0) = uint8_t(std::clamp(cr, 0, 255));
        img.at(y, x, 1) = uint8_t(std::clamp(cg, 0, 255));
        img.at(y, x, 2) = uint8_t(std::clamp(cb, 0, 255));
      }
}

void plot_thick(ImageU8& img, const Disc& fundus, int x, int y, int width,
                int cr, int cg, int cb) {
  const int half = width / 2;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) {
      const int px = x + dx, py = y + dy;
      if (px < 0 || px >= img.width || py < 0 || py >= img.height) continue;
      if (!fundus.contains(px, py, 2)) continue;
      img.at(py, px, 0) = uint8_t(cr);
      img.at(py, px, 1) = uint8_t(cg);
      img.at(py, px, 2) = uint8_t(cb);
    }
}

struct VesselState {
  int x256, y256;  // position in 1/256 pixel units
  int dir;         // index into the direction tables
  int segments;
  int width;
};

void draw_vessels(ImageU8& img, const Disc& fundus, const Disc& optic,
                  SplitMix64& rng) {
  const int n = 4 + int(rng.next_below(7));  // 4..10
  const int seg_len = std::max(4, img.width / 12);
  const int cr = 70 + int(rng.next_below(25));
  const int cg = 14 + int(rng.next_below(14));
  const int cb = 12 + int(rng.next_below(12));

  std::deque<VesselState> queue;
  for (int i = 0; i < n; ++i) {
    VesselState v;
    v.dir = int(rng.next_below(16));
    v.x256 = (optic.cx + int(rng.next_below(uint64_t(optic.r + 1))) -
              optic.r / 2) * 256;
    v.y256 = (optic.cy + int(rng.next_below(uint64_t(optic.r + 1))) -
              optic.r / 2) * 256;
    v.segments = 5 + int(rng.next_below(9));
    v.width = 1 + int(rng.next_below(3));
    queue.push_back(v);
  }

  while (!queue.empty()) {
    VesselState v = queue.front();
    queue.pop_front();
    while (v.segments-- > 0) {
      for (int s = 0; s < seg_len; ++s) {
        v.x256 += kDirX[v.dir];
        v.y256 += kDirY[v.dir];
        plot_thick(img, fundus, v.x256 >> 8, v.y256 >> 8, v.width, cr, cg, cb);
      }
      const uint64_t turn = rng.next_below(3);
      v.dir = int((v.dir + 16 + int(turn) - 1) % 16);
      if (v.segments > 1 && rng.next_below(4) == 0 && queue.size() < 24) {
        VesselState branch = v;
        branch.dir = int((v.dir + (rng.next() & 1 ? 3 : 13)) % 16);
        branch.segments = v.segments / 2;
        branch.width = std::max(1, v.width - 1);
        queue.push_back(branch);
      }
    }
  }
}

ImageU8 render_clean(int size, SplitMix64& rng) {
  ImageU8 img(size, size);

  Disc fundus{size / 2, size / 2, (size * 45) / 100};
  const int base_r = 150 + int(rng.next_below(40));
  const int base_g = 62 + int(rng.next_below(30));
  const int base_b = 26 + int(rng.next_below(22));
  const int gx = int(rng.next_below(61)) - 30;
  const int gy = int(rng.next_below(61)) - 30;

  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if (fundus.contains(x, y)) {
        const int grad = (gx * (x - fundus.cx) + gy * (y - fundus.cy)) / size;
        img.at(y, x, 0) = uint8_t(std::clamp(base_r + grad, 0, 255));
        img.at(y, x, 1) = uint8_t(std::clamp(base_g + grad, 0, 255));
        img.at(y, x, 2) = uint8_t(std::clamp(base_b + grad, 0, 255));
      }

  const int side = rng.next() & 1 ? 1 : -1;
  Disc optic{fundus.cx + side * (size / 5), fundus.cy + int(rng.next_below(uint64_t(size / 6 + 1))) - size / 12,
             std::max(3, size / 12)};
  draw_vessels(img, fundus, optic, rng);
  fill_disc(img, optic, 225 + int(rng.next_below(25)),
            195 + int(rng.next_below(30)), 120 + int(rng.next_below(40)));
  return img;
}

void gaussian_blur(std::vector<double>& ch, int w, int h, double sigma) {
  const int radius = int(std::ceil(3.0 * sigma));
  std::vector<double> kernel(size_t(radius) + 1);
  double ksum = 0;
  for (int i = 0; i <= radius; ++i) {
    kernel[size_t(i)] = std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));
    ksum += (i == 0 ? 1.0 : 2.0) * kernel[size_t(i)];
  }
  for (double& k : kernel) k /= ksum;

  std::vector<double> tmp(ch.size());
  // horizontal, edge replication
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = kernel[0] * ch[size_t(y) * w + x];
      for (int i = 1; i <= radius; ++i) {
        const int xl = std::max(0, x - i), xr = std::min(w - 1, x + i);
        acc += kernel[size_t(i)] * (ch[size_t(y) * w + xl] + ch[size_t(y) * w + xr]);
      }
      tmp[size_t(y) * w + x] = acc;
    }
  // vertical
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = kernel[0] * tmp[size_t(y) * w + x];
      for (int i = 1; i <= radius; ++i) {
        const int yt = std::max(0, y - i), yb = std::min(h - 1, y + i);
        acc += kernel[size_t(i)] * (tmp[size_t(yt) * w + x] + tmp[size_t(yb) * w + x]);
      }
      ch[size_t(y) * w + x] = acc;
    }
}

}  // namespace

void DegradationRecipe::validate() const {
  auto in_range = [](double v, double lo, double hi) {
    return std::isfinite(v) && v >= lo && v <= hi;
  };
  if (!blur && !illumination && !color && !noise)
    throw IoError("recipe: at least one effect must be enabled");
  if (blur && !in_range(blur_sigma, 0.5, 2.5))
    throw IoError("recipe: blur_sigma out of range [0.5, 2.5]");
  if (noise && !in_range(noise_sigma, 2.0, 12.0))
    throw IoError("recipe: noise_sigma out of range [2, 12]");
  if (illumination &&
      (!in_range(illum_gain, 0.5, 1.5) || !in_range(illum_off_x, -0.3, 0.3) ||
       !in_range(illum_off_y, -0.3, 0.3)))
    throw IoError("recipe: illumination parameters out of range");
  if (color && (!in_range(gain_r, 0.8, 1.2) || !in_range(gain_g, 0.8, 1.2) ||
                !in_range(gain_b, 0.8, 1.2)))
    throw IoError("recipe: color gain out of range [0.8, 1.2]");
}

DegradationRecipe DegradationRecipe::sample(SplitMix64& rng) {
  DegradationRecipe r;
  r.blur_sigma = rng.uniform(0.5, 2.5);
  r.illum_gain = rng.uniform(0.5, 1.5);
  r.illum_off_x = rng.uniform(-0.3, 0.3);
  r.illum_off_y = rng.uniform(-0.3, 0.3);
  r.gain_r = rng.uniform(0.8, 1.2);
  r.gain_g = rng.uniform(0.8, 1.2);
  r.gain_b = rng.uniform(0.8, 1.2);
  r.noise_sigma = rng.uniform(2.0, 12.0);
  return r;
}

DegradationRecipe DegradationRecipe::from_kv(
    const std::vector<std::pair<std::string, std::string>>& kv) {
  DegradationRecipe r;
  for (const auto& [key, value] : kv) {
    try {
      if (key == "blur") r.blur = std::stoi(value) != 0;
      else if (key == "blur_sigma") r.blur_sigma = std::stod(value);
      else if (key == "illumination") r.illumination = std::stoi(value) != 0;
      else if (key == "illum_gain") r.illum_gain = std::stod(value);
      else if (key == "illum_off_x") r.illum_off_x = std::stod(value);
      else if (key == "illum_off_y") r.illum_off_y = std::stod(value);
      else if (key == "color") r.color = std::stoi(value) != 0;
      else if (key == "gain_r") r.gain_r = std::stod(value);
      else if (key == "gain_g") r.gain_g = std::stod(value);
      else if (key == "gain_b") r.gain_b = std::stod(value);
      else if (key == "noise") r.noise = std::stoi(value) != 0;
      else if (key == "noise_sigma") r.noise_sigma = std::stod(value);
      else throw IoError("recipe: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw IoError("recipe: bad value for '" + key + "'");
    }
  }
  r.validate();
  return r;
}

std::vector<ImageSample> synthesize_clean(uint64_t seed, int size, int count) {
  if (size % 8 != 0)
    throw IoError("synthesize_clean: size must be divisible by 8");
  std::vector<ImageSample> out;
  out.reserve(size_t(count));
  for (int i = 0; i < count; ++i) {
    SplitMix64 rng = derive_stream(seed, "clean." + std::to_string(i));
    ImageSample s;
    s.image = render_clean(size, rng);
    s.domain = Domain::kHigh;
    s.seed = seed;
    s.source = "synthetic:" + std::to_string(i);
    out.push_back(std::move(s));
  }
  return out;
}

ImageU8 degrade(const ImageU8& input, const DegradationRecipe& recipe,
                uint64_t seed) {
  const int w = input.width, h = input.height;
  std::vector<double> ch[3];
  for (int c = 0; c < 3; ++c) {
    ch[c].resize(size_t(w) * h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) ch[c][size_t(y) * w + x] = input.at(y, x, c);
  }

  if (recipe.blur && recipe.blur_sigma > 0)
    for (int c = 0; c < 3; ++c) gaussian_blur(ch[c], w, h, recipe.blur_sigma);

  if (recipe.illumination) {
    const double cx = w * (0.5 + recipe.illum_off_x);
    const double cy = h * (0.5 + recipe.illum_off_y);
    const double rr = 0.75 * double(std::max(w, h));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dx = (x - cx) / rr, dy = (y - cy) / rr;
        const double wgt = std::max(0.0, 1.0 - (dx * dx + dy * dy));
        const double m = 1.0 + (recipe.illum_gain - 1.0) * wgt;
        for (int c = 0; c < 3; ++c) ch[c][size_t(y) * w + x] *= m;
      }
  }

  if (recipe.color) {
    const double gains[3] = {recipe.gain_r, recipe.gain_g, recipe.gain_b};
    for (int c = 0; c < 3; ++c)
      for (double& v : ch[c]) v *= gains[c];
  }

  if (recipe.noise && recipe.noise_sigma > 0) {
    SplitMix64 rng = derive_stream(seed, "noise");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          ch[c][size_t(y) * w + x] += rng.normal(0.0, recipe.noise_sigma);
  }

  ImageU8 out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = uint8_t(
            std::clamp(std::round(ch[c][size_t(y) * w + x]), 0.0, 255.0));
  return out;
}

SynthCounts synthesize_dataset(const std::filesystem::path& out_dir, int count,
                               int size, uint64_t seed,
                               const DegradationRecipe* fixed_recipe) {
  namespace fs = std::filesystem;
  if (count < 1) throw IoError("synth: count must be >= 1");

  SynthCounts counts;
  counts.eval_pairs = std::max(1, count / 5);
  counts.high = std::max(1, (count - counts.eval_pairs + 1) / 2);
  counts.low = std::max(1, count - counts.eval_pairs - counts.high);
  const int total = counts.high + counts.low + counts.eval_pairs;

  for (const char* sub : {"high", "low", "clean", "degraded"})
    fs::create_directories(out_dir / sub);

  std::vector<ImageSample> bases = synthesize_clean(seed, size, total);
  auto name_of = [](int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%04d.ppm", i);
    return std::string(buf);
  };
  auto recipe_for = [&](int i) {
    if (fixed_recipe) return *fixed_recipe;
    SplitMix64 rng = derive_stream(seed, "recipe." + std::to_string(i));
    return DegradationRecipe::sample(rng);
  };

  int idx = 0;
  for (int i = 0; i < counts.high; ++i, ++idx)
    save_ppm(out_dir / "high" / name_of(idx), bases[size_t(idx)].image);
  for (int i = 0; i < counts.low; ++i, ++idx) {
    const ImageU8 deg = degrade(bases[size_t(idx)].image, recipe_for(idx),
                                fnv1a64("degrade." + std::to_string(idx)) ^ seed);
    save_ppm(out_dir / "low" / name_of(idx), deg);
  }
  for (int i = 0; i < counts.eval_pairs; ++i, ++idx) {
    const std::string n = name_of(idx);
    save_ppm(out_dir / "clean" / n, bases[size_t(idx)].image);
    const ImageU8 deg = degrade(bases[size_t(idx)].image, recipe_for(idx),
                                fnv1a64("degrade." + std::to_string(idx)) ^ seed);
    save_ppm(out_dir / "degraded" / n, deg);
  }
  return counts;
}

}  // namespace rgan
