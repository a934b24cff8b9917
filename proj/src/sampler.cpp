#include "rgan/sampler.hpp"

#include <algorithm>

namespace rgan {

std::vector<std::filesystem::path> list_ppm_dir(
    const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ppm")
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .ppm files in " + dir.string());
  return files;
}

UnpairedSampler::UnpairedSampler(const std::filesystem::path& low_dir,
                                 const std::filesystem::path& high_dir,
                                 uint64_t seed)
    : low_(list_ppm_dir(low_dir)), high_(list_ppm_dir(high_dir)), seed_(seed) {}

int64_t UnpairedSampler::epoch_length() const {
  return int64_t(std::max(low_.size(), high_.size()));
}

namespace {

std::vector<size_t> permutation(size_t n, SplitMix64 rng) {
  std::vector<size_t> p(n);
  for (size_t i = 0; i < n; ++i) p[i] = i;
  for (size_t i = n; i > 1; --i)
    std::swap(p[i - 1], p[rng.next_below(i)]);
  return p;
}

}  // namespace

std::vector<UnpairedSampler::Pair> UnpairedSampler::epoch(
    int epoch_index) const {
  const std::string tag = "epoch." + std::to_string(epoch_index);
  const auto pl = permutation(low_.size(), derive_stream(seed_, tag + ".low"));
  const auto ph =
      permutation(high_.size(), derive_stream(seed_, tag + ".high"));
  const int64_t len = epoch_length();
  std::vector<Pair> out;
  out.reserve(size_t(len));
  for (int64_t i = 0; i < len; ++i)
    out.push_back({low_[pl[size_t(i) % pl.size()]],
                   high_[ph[size_t(i) % ph.size()]]});
  return out;
}

}  // namespace rgan
