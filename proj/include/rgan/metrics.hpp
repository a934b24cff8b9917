#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "rgan/image.hpp"

namespace rgan {

// Full-reference quality metrics on 8-bit rasters, plus the single-image
// enhancement latency harness.

// 10*log10(255^2 / MSE); +infinity when the images are identical.
double psnr(const ImageU8& a, const ImageU8& b);

// Single-scale SSIM: 11x11 Gaussian window sigma 1.5, K1=0.01, K2=0.03,
// L=255, valid-region windows, per channel then averaged.
double ssim(const ImageU8& a, const ImageU8& b);

struct SittResult {
  double mean_ms = 0;
  double std_ms = 0;
  int count = 0;
};

// Times fn per image, wall clock, model assumed loaded; one warm-up call is
// excluded and inputs are pre-decoded so I/O stays outside the timed region.
// Requires at least 5 images.
SittResult measure_sitt(const std::function<ImageU8(const ImageU8&)>& fn,
                        const std::vector<ImageU8>& images);

struct QualityEntry {
  std::string name;
  double psnr_db = 0;  // +inf possible
  double ssim = 0;
};

struct QualityReport {
  std::vector<QualityEntry> per_image;
  double mean_psnr_db = 0;   // over finite entries
  int64_t psnr_inf_count = 0;
  double mean_ssim = 0;
  SittResult sitt;           // count == 0 when not measured
  int64_t count = 0;

  std::string to_text() const;
  std::string to_kv() const;  // one name=value per line
};

// Aggregates per-image metrics; entries are processed in the given order
// with compensated summation.
QualityReport aggregate_quality(std::vector<QualityEntry> entries);

}  // namespace rgan
