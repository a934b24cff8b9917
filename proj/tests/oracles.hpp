#pragma once

#include <cmath>
#include <limits>

#include "rgan/image.hpp"

// Independent reference implementations used to check the production
// metrics. They share only the metric definitions: PSNR by direct
// summation, SSIM by explicit 2D sliding windows (the production code uses
// separable filtering).

namespace rgan_test {

inline double brute_psnr(const rgan::ImageU8& a, const rgan::ImageU8& b) {
  double se = 0;
  for (size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = double(a.pixels[i]) - double(b.pixels[i]);
    se += d * d;
  }
  const double mse = se / double(a.pixels.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(65025.0 / mse);
}

inline double brute_ssim(const rgan::ImageU8& a, const rgan::ImageU8& b) {
  constexpr int win = 11;
  const double sigma = 1.5;
  double k[win];
  double ksum = 0;
  for (int i = 0; i < win; ++i) {
    const double d = i - 5.0;
    k[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    ksum += k[i];
  }
  for (double& v : k) v /= ksum;
  const double c1 = 6.5025, c2 = 58.5225;

  double total = 0;
  for (int c = 0; c < 3; ++c) {
    double acc = 0;
    int64_t n = 0;
    for (int y = 0; y + win <= a.height; ++y)
      for (int x = 0; x + win <= a.width; ++x) {
        double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            const double w = k[i] * k[j];
            const double xv = a.at(y + i, x + j, c);
            const double yv = b.at(y + i, x + j, c);
            mx += w * xv;
            my += w * yv;
            mxx += w * xv * xv;
            myy += w * yv * yv;
            mxy += w * xv * yv;
          }
        const double vx = mxx - mx * mx, vy = myy - my * my,
                     cov = mxy - mx * my;
        acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++n;
      }
    total += acc / double(n);
  }
  return total / 3.0;
}

}  // namespace rgan_test
