#include "rgan/metrics.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace rgan {

namespace {

void require_same_shape(const ImageU8& a, const ImageU8& b, const char* what) {
  if (a.width != b.width || a.height != b.height)
    throw IoError(std::string(what) + ": image sizes differ, " +
                  std::to_string(a.width) + "x" + std::to_string(a.height) +
                  " vs " + std::to_string(b.width) + "x" +
                  std::to_string(b.height));
}

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = (0.01 * 255) * (0.01 * 255);
constexpr double kC2 = (0.03 * 255) * (0.03 * 255);

const std::vector<double>& gaussian_kernel() {
  static const std::vector<double> k = [] {
    std::vector<double> v(kWin);
    double s = 0;
    for (int i = 0; i < kWin; ++i) {
      const double d = i - (kWin - 1) / 2.0;
      v[size_t(i)] = std::exp(-0.5 * d * d / (kSigma * kSigma));
      s += v[size_t(i)];
    }
    for (double& x : v) x /= s;
    return v;
  }();
  return k;
}

// Separable weighted filter, valid region: output is (h-10) x (w-10).
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h,
                                 int& ow, int& oh) {
  const auto& k = gaussian_kernel();
  ow = w - kWin + 1;
  oh = h - kWin + 1;
  std::vector<double> horiz(size_t(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < kWin; ++i) acc += k[size_t(i)] * src[size_t(y) * w + x + i];
      horiz[size_t(y) * ow + x] = acc;
    }
  std::vector<double> out(size_t(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < kWin; ++i) acc += k[size_t(i)] * horiz[size_t(y + i) * ow + x];
      out[size_t(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

double psnr(const ImageU8& a, const ImageU8& b) {
  require_same_shape(a, b, "psnr");
  double se = 0;
  for (size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = double(a.pixels[i]) - double(b.pixels[i]);
    se += d * d;
  }
  const double mse = se / double(a.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const ImageU8& a, const ImageU8& b) {
  require_same_shape(a, b, "ssim");
  if (a.width < kWin || a.height < kWin)
    throw IoError("ssim: image smaller than the 11x11 window");

  const int w = a.width, h = a.height;
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> x(size_t(w) * h), y(size_t(w) * h), xx(size_t(w) * h),
        yy(size_t(w) * h), xy(size_t(w) * h);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const double xv = a.at(i, j, c), yv = b.at(i, j, c);
        x[size_t(i) * w + j] = xv;
        y[size_t(i) * w + j] = yv;
        xx[size_t(i) * w + j] = xv * xv;
        yy[size_t(i) * w + j] = yv * yv;
        xy[size_t(i) * w + j] = xv * yv;
      }
    int ow = 0, oh = 0;
    const auto mx = filter_valid(x, w, h, ow, oh);
    const auto my = filter_valid(y, w, h, ow, oh);
    const auto mxx = filter_valid(xx, w, h, ow, oh);
    const auto myy = filter_valid(yy, w, h, ow, oh);
    const auto mxy = filter_valid(xy, w, h, ow, oh);

    double acc = 0;
    for (size_t i = 0; i < mx.size(); ++i) {
      const double mux = mx[i], muy = my[i];
      const double vx = mxx[i] - mux * mux;
      const double vy = myy[i] - muy * muy;
      const double cov = mxy[i] - mux * muy;
      acc += ((2 * mux * muy + kC1) * (2 * cov + kC2)) /
             ((mux * mux + muy * muy + kC1) * (vx + vy + kC2));
    }
    total += acc / double(mx.size());
  }
  return total / 3.0;
}

SittResult measure_sitt(const std::function<ImageU8(const ImageU8&)>& fn,
                        const std::vector<ImageU8>& images) {
  if (images.size() < 5)
    throw IoError("measure_sitt: need at least 5 images, got " +
                  std::to_string(images.size()));
  using clock = std::chrono::steady_clock;
  fn(images[0]);  // warm-up, not timed

  std::vector<double> ms;
  ms.reserve(images.size());
  for (const ImageU8& img : images) {
    const auto t0 = clock::now();
    fn(img);
    const auto t1 = clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  SittResult r;
  r.count = int(ms.size());
  double s = 0;
  for (double v : ms) s += v;
  r.mean_ms = s / double(ms.size());
  double var = 0;
  for (double v : ms) var += (v - r.mean_ms) * (v - r.mean_ms);
  r.std_ms = std::sqrt(var / double(ms.size()));
  return r;
}

QualityReport aggregate_quality(std::vector<QualityEntry> entries) {
  QualityReport rep;
  rep.per_image = std::move(entries);
  rep.count = int64_t(rep.per_image.size());

  // Kahan sums keep the aggregate stable under any evaluation order.
  double psnr_sum = 0, psnr_c = 0, ssim_sum = 0, ssim_c = 0;
  int64_t finite = 0;
  for (const QualityEntry& e : rep.per_image) {
    if (std::isinf(e.psnr_db)) {
      ++rep.psnr_inf_count;
    } else {
      const double y = e.psnr_db - psnr_c;
      const double t = psnr_sum + y;
      psnr_c = (t - psnr_sum) - y;
      psnr_sum = t;
      ++finite;
    }
    const double y2 = e.ssim - ssim_c;
    const double t2 = ssim_sum + y2;
    ssim_c = (t2 - ssim_sum) - y2;
    ssim_sum = t2;
  }
  rep.mean_psnr_db = finite > 0 ? psnr_sum / double(finite) : 0.0;
  rep.mean_ssim = rep.count > 0 ? ssim_sum / double(rep.count) : 0.0;
  return rep;
}

namespace {
std::string fmt_psnr(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}
}  // namespace

std::string QualityReport::to_text() const {
  std::ostringstream os;
  for (const QualityEntry& e : per_image) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "  psnr=%s ssim=%.6f",
                  fmt_psnr(e.psnr_db).c_str(), e.ssim);
    os << e.name << buf << "\n";
  }
  os << "images: " << count << "\n";
  os << "mean_psnr_db: " << fmt_psnr(mean_psnr_db);
  if (psnr_inf_count > 0) os << " (skipped " << psnr_inf_count << " inf)";
  os << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", mean_ssim);
  os << "mean_ssim: " << buf << "\n";
  if (sitt.count > 0) {
    std::snprintf(buf, sizeof buf, "%.3f / %.3f", sitt.mean_ms, sitt.std_ms);
    os << "sitt_ms mean/std: " << buf << " over " << sitt.count << " images\n";
  }
  return os.str();
}

std::string QualityReport::to_kv() const {
  std::ostringstream os;
  char buf[64];
  os << "count=" << count << "\n";
  os << "mean_psnr_db=" << fmt_psnr(mean_psnr_db) << "\n";
  os << "psnr_inf_count=" << psnr_inf_count << "\n";
  std::snprintf(buf, sizeof buf, "%.6f", mean_ssim);
  os << "mean_ssim=" << buf << "\n";
  if (sitt.count > 0) {
    std::snprintf(buf, sizeof buf, "%.6f", sitt.mean_ms);
    os << "sitt_mean_ms=" << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.6f", sitt.std_ms);
    os << "sitt_std_ms=" << buf << "\n";
    os << "sitt_count=" << sitt.count << "\n";
  }
  for (const QualityEntry& e : per_image) {
    os << "psnr." << e.name << "=" << fmt_psnr(e.psnr_db) << "\n";
    std::snprintf(buf, sizeof buf, "%.6f", e.ssim);
    os << "ssim." << e.name << "=" << buf << "\n";
  }
  return os.str();
}

}  // namespace rgan
