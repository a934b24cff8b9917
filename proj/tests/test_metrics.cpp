#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "oracles.hpp"
#include "rgan/metrics.hpp"
#include "rgan/synth.hpp"
#include "test_util.hpp"

using namespace rgan;
using rgan_test::brute_psnr;
using rgan_test::brute_ssim;

namespace {

ImageU8 random_image(int w, int h, SplitMix64& rng) {
  ImageU8 img(w, h);
  for (uint8_t& p : img.pixels) p = uint8_t(rng.next_below(256));
  return img;
}

}  // namespace

TEST_CASE("psnr of identical images is the infinity sentinel") {
  SplitMix64 rng(1);
  const ImageU8 img = random_image(24, 24, rng);
  CHECK(std::isinf(psnr(img, img)));
}

TEST_CASE("unit mse gives the closed-form peak value") {
  ImageU8 a(16, 16), b(16, 16);
  for (size_t i = 0; i < a.pixels.size(); ++i) {
    a.pixels[i] = uint8_t(40 + (i % 150));
    b.pixels[i] = uint8_t(a.pixels[i] + 1);
  }
  CHECK(std::abs(psnr(a, b) - 48.13080361) < 1e-4);
}

TEST_CASE("psnr matches the direct-summation reference") {
  SplitMix64 rng(2);
  for (int i = 0; i < 10; ++i) {
    const ImageU8 a = random_image(20, 14, rng);
    const ImageU8 b = random_image(20, 14, rng);
    CHECK(std::abs(psnr(a, b) - brute_psnr(a, b)) < 1e-9);
    CHECK(psnr(a, b) == psnr(b, a));
  }
  ImageU8 small(4, 4), big(5, 5);
  CHECK_THROWS_AS(psnr(small, big), IoError);
}

TEST_CASE("ssim of an image with itself is one") {
  SplitMix64 rng(3);
  const ImageU8 img = random_image(20, 20, rng);
  CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("ssim matches the sliding-window reference") {
  SplitMix64 rng(4);
  for (int i = 0; i < 5; ++i) {
    const ImageU8 a = random_image(18, 15, rng);
    const ImageU8 b = random_image(18, 15, rng);
    CHECK(std::abs(ssim(a, b) - brute_ssim(a, b)) < 1e-6);
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  }
  ImageU8 tiny(8, 8), tiny2(8, 8);
  CHECK_THROWS_WITH_AS(ssim(tiny, tiny2), doctest::Contains("window"),
                       IoError);
}

TEST_CASE("inverting a mid-contrast image destroys structural similarity") {
  const auto clean = synthesize_clean(10, 64, 1);
  const ImageU8& img = clean[0].image;
  ImageU8 inv = img;
  for (uint8_t& p : inv.pixels) p = uint8_t(255 - p);
  CHECK(ssim(img, inv) < 0.3);
}

TEST_CASE("psnr strictly decreases with noise amplitude") {
  const auto clean = synthesize_clean(12, 64, 1);
  DegradationRecipe noise_only;
  noise_only.blur = noise_only.illumination = noise_only.color = false;
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {2.0, 6.0, 12.0}) {
    noise_only.noise_sigma = sigma;
    const double p = psnr(degrade(clean[0].image, noise_only, 5), clean[0].image);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("small shifts stay closer than shuffles in ssim") {
  const auto clean = synthesize_clean(13, 64, 1);
  const ImageU8& img = clean[0].image;
  ImageU8 shifted = img;
  for (uint8_t& p : shifted.pixels)
    p = uint8_t(std::min(255, int(p) + 4));

  ImageU8 shuffled = img;
  SplitMix64 rng(14);
  // permute pixel triples
  const int64_t n = int64_t(shuffled.pixels.size() / 3);
  for (int64_t i = n; i > 1; --i) {
    const int64_t j = int64_t(rng.next_below(uint64_t(i)));
    for (int c = 0; c < 3; ++c)
      std::swap(shuffled.pixels[size_t((i - 1) * 3 + c)],
                shuffled.pixels[size_t(j * 3 + c)]);
  }
  CHECK(ssim(img, shifted) > ssim(img, shuffled));
}

TEST_CASE("sitt excludes io and reports stable timing for a fixed workload") {
  std::vector<ImageU8> images;
  SplitMix64 rng(15);
  for (int i = 0; i < 8; ++i) images.push_back(random_image(32, 32, rng));

  auto stub = [](const ImageU8& img) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    return img;
  };
  const SittResult r = measure_sitt(stub, images);
  CHECK(r.count == 8);
  CHECK(r.mean_ms > 4.0);
  CHECK(r.std_ms < 0.5 * r.mean_ms);  // constant sleep, low spread

  std::vector<ImageU8> few(images.begin(), images.begin() + 3);
  CHECK_THROWS_WITH_AS(measure_sitt(stub, few), doctest::Contains("at least 5"),
                       IoError);
}

TEST_CASE("aggregates skip infinite psnr entries and count them") {
  std::vector<QualityEntry> entries{
      {"a.ppm", std::numeric_limits<double>::infinity(), 1.0},
      {"b.ppm", 30.0, 0.9},
      {"c.ppm", 20.0, 0.8},
  };
  const QualityReport rep = aggregate_quality(entries);
  CHECK(rep.count == 3);
  CHECK(rep.psnr_inf_count == 1);
  CHECK(rep.mean_psnr_db == doctest::Approx(25.0));
  CHECK(rep.mean_ssim == doctest::Approx(0.9));
  CHECK(rep.to_kv().find("mean_psnr_db=25.0000") != std::string::npos);
  CHECK(rep.to_text().find("skipped 1 inf") != std::string::npos);
}
