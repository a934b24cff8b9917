#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rgan/image.hpp"
#include "rgan/rng.hpp"

namespace rgan {

// Synthetic fundus-like imagery with a measurable ground truth: a clean
// renderer (integer rasterization only, so images are pixel-identical across
// platforms) and a seeded degradation pipeline covering blur, uneven
// illumination, color gain and sensor noise.

struct DegradationRecipe {
  bool blur = true;
  double blur_sigma = 1.5;  // [0.5, 2.5]
  bool illumination = true;
  double illum_gain = 1.0;    // [0.5, 1.5]
  double illum_off_x = 0.0;   // radial field center offset, fraction of size
  double illum_off_y = 0.0;   // [-0.3, 0.3]
  bool color = true;
  double gain_r = 1.0, gain_g = 1.0, gain_b = 1.0;  // [0.8, 1.2]
  bool noise = true;
  double noise_sigma = 6.0;  // [2, 12] in 8-bit units

  // Enforces the documented parameter ranges and that at least one effect is
  // enabled; used for recipes coming from files.
  void validate() const;

  static DegradationRecipe sample(SplitMix64& rng);
  static DegradationRecipe from_kv(
      const std::vector<std::pair<std::string, std::string>>& kv);
};

// Deterministic per (seed, size, index): dark fundus disc on black, a bright
// optic disc, branching vessel polylines and a mild illumination gradient.
std::vector<ImageSample> synthesize_clean(uint64_t seed, int size, int count);

// Applies, in fixed order: blur, illumination field, color gain, additive
// noise; clamps to [0,255]. Deterministic per (input, recipe, seed).
ImageU8 degrade(const ImageU8& input, const DegradationRecipe& recipe,
                uint64_t seed);

struct SynthCounts {
  int high = 0, low = 0, eval_pairs = 0;
};

// Writes the on-disk dataset layout: high/ (clean training pool), low/
// (degraded training pool, from different base images), and clean/ +
// degraded/ (held-out aligned pairs for evaluation only). `count` is the
// total number of base images; roughly 40/40/20 go to high/low/eval, with
// at least one image per folder.
SynthCounts synthesize_dataset(const std::filesystem::path& out_dir, int count,
                               int size, uint64_t seed,
                               const DegradationRecipe* fixed_recipe = nullptr);

}  // namespace rgan
