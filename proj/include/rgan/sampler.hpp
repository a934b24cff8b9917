#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rgan/image.hpp"
#include "rgan/rng.hpp"

namespace rgan {

// Streams unpaired (low, high) file pairs. Each epoch reshuffles both pools
// independently; any pairing within an epoch is incidental. The order is a
// pure function of (seed, epoch); the shorter pool cycles.

class UnpairedSampler {
 public:
  UnpairedSampler(const std::filesystem::path& low_dir,
                  const std::filesystem::path& high_dir, uint64_t seed);

  int64_t epoch_length() const;  // max of the two pool sizes

  struct Pair {
    std::filesystem::path low, high;
  };
  std::vector<Pair> epoch(int epoch_index) const;

  const std::vector<std::filesystem::path>& low_files() const { return low_; }
  const std::vector<std::filesystem::path>& high_files() const { return high_; }

 private:
  std::vector<std::filesystem::path> low_, high_;
  uint64_t seed_;
};

// Sorted *.ppm listing; throws IoError when empty or missing.
std::vector<std::filesystem::path> list_ppm_dir(
    const std::filesystem::path& dir);

}  // namespace rgan
