#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rgan {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat "key = value" text, '#' comments, blank lines ignored.
std::vector<std::pair<std::string, std::string>> parse_kv_text(
    const std::string& text);
std::vector<std::pair<std::string, std::string>> parse_kv_file(
    const std::filesystem::path& path);

// Every hyperparameter and architecture dimension of a run; the single
// source of truth echoed at startup and recorded into checkpoints.
struct TrainConfig {
  int image_size = 256;
  int embed_dim = 1024;
  int depth = 7;
  int heads = 8;
  std::string generator_kind = "vit";  // "vit" | "cnn-baseline"
  int base_channels = 64;              // cnn-baseline encoder width
  int res_blocks = 6;                  // cnn-baseline residual trunk
  int disc_channels = 64;
  double lambda_cycle = 10.0;
  double lambda_identity = 5.0;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int epochs_max = 100;
  int patience = 5;
  int batch_size = 1;
  uint64_t seed = 0;
  std::string low_dir;
  std::string high_dir;
  std::string checkpoint_dir;

  static TrainConfig from_file(const std::filesystem::path& path);
  static TrainConfig from_kv(
      const std::vector<std::pair<std::string, std::string>>& kv);

  // Throws ConfigError naming the offending field.
  void validate() const;

  // Round-trippable echo: parsing the returned text reproduces this config.
  std::string echo() const;
};

}  // namespace rgan
