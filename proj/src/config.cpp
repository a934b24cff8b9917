#include "rgan/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace rgan {

std::vector<std::pair<std::string, std::string>> parse_kv_text(
    const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, value);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_kv_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_kv_text(ss.str());
}

namespace {

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw ConfigError("field '" + key + "': expected integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw ConfigError("field '" + key + "': expected number, got '" + v + "'");
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw ConfigError("field '" + key + "': expected unsigned integer, got '" +
                      v + "'");
  }
}

}  // namespace

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
  return from_kv(parse_kv_file(path));
}

TrainConfig TrainConfig::from_kv(
    const std::vector<std::pair<std::string, std::string>>& kv) {
  TrainConfig c;
  for (const auto& [key, v] : kv) {
    if (key == "image_size") c.image_size = to_int(key, v);
    else if (key == "embed_dim") c.embed_dim = to_int(key, v);
    else if (key == "depth") c.depth = to_int(key, v);
    else if (key == "heads") c.heads = to_int(key, v);
    else if (key == "generator_kind") c.generator_kind = v;
    else if (key == "base_channels") c.base_channels = to_int(key, v);
    else if (key == "res_blocks") c.res_blocks = to_int(key, v);
    else if (key == "disc_channels") c.disc_channels = to_int(key, v);
    else if (key == "lambda_cycle") c.lambda_cycle = to_double(key, v);
    else if (key == "lambda_identity") c.lambda_identity = to_double(key, v);
    else if (key == "lr") c.lr = to_double(key, v);
    else if (key == "beta1") c.beta1 = to_double(key, v);
    else if (key == "beta2") c.beta2 = to_double(key, v);
    else if (key == "epochs_max") c.epochs_max = to_int(key, v);
    else if (key == "patience") c.patience = to_int(key, v);
    else if (key == "batch_size") c.batch_size = to_int(key, v);
    else if (key == "seed") c.seed = to_u64(key, v);
    else if (key == "low_dir") c.low_dir = v;
    else if (key == "high_dir") c.high_dir = v;
    else if (key == "checkpoint_dir") c.checkpoint_dir = v;
    else throw ConfigError("unknown config field '" + key + "'");
  }
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("field '" + field + "': " + why);
  };
  if (image_size < 16 || image_size % 8 != 0)
    fail("image_size", "must be >= 16 and divisible by 8");
  if (generator_kind != "vit" && generator_kind != "cnn-baseline")
    fail("generator_kind", "must be 'vit' or 'cnn-baseline', got '" +
                               generator_kind + "'");
  if (embed_dim < 8 || embed_dim % 8 != 0)
    fail("embed_dim", "must be divisible by 8 (three halving stages)");
  if (heads < 1 || embed_dim % heads != 0)
    fail("heads", "must divide embed_dim");
  if (depth < 1) fail("depth", "must be >= 1");
  if (base_channels < 1) fail("base_channels", "must be >= 1");
  if (res_blocks < 0) fail("res_blocks", "must be >= 0");
  if (disc_channels < 1) fail("disc_channels", "must be >= 1");
  if (lambda_cycle < 0 || !std::isfinite(lambda_cycle))
    fail("lambda_cycle", "must be finite and nonnegative");
  if (lambda_identity < 0 || !std::isfinite(lambda_identity))
    fail("lambda_identity", "must be finite and nonnegative");
  if (!(lr > 0) || !std::isfinite(lr)) fail("lr", "must be positive");
  if (beta1 < 0 || beta1 >= 1) fail("beta1", "must be in [0, 1)");
  if (beta2 < 0 || beta2 >= 1) fail("beta2", "must be in [0, 1)");
  if (epochs_max < 1) fail("epochs_max", "must be >= 1");
  if (patience < 1) fail("patience", "must be >= 1");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (low_dir.empty()) fail("low_dir", "missing dataset path");
  if (high_dir.empty()) fail("high_dir", "missing dataset path");
  if (checkpoint_dir.empty()) fail("checkpoint_dir", "missing path");
}

std::string TrainConfig::echo() const {
  std::ostringstream os;
  os << "image_size = " << image_size << "\n";
  os << "embed_dim = " << embed_dim << "\n";
  os << "depth = " << depth << "\n";
  os << "heads = " << heads << "\n";
  os << "generator_kind = " << generator_kind << "\n";
  os << "base_channels = " << base_channels << "\n";
  os << "res_blocks = " << res_blocks << "\n";
  os << "disc_channels = " << disc_channels << "\n";
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  os << "lambda_cycle = " << num(lambda_cycle) << "\n";
  os << "lambda_identity = " << num(lambda_identity) << "\n";
  os << "lr = " << num(lr) << "\n";
  os << "beta1 = " << num(beta1) << "\n";
  os << "beta2 = " << num(beta2) << "\n";
  os << "epochs_max = " << epochs_max << "\n";
  os << "patience = " << patience << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "seed = " << seed << "\n";
  os << "low_dir = " << low_dir << "\n";
  os << "high_dir = " << high_dir << "\n";
  os << "checkpoint_dir = " << checkpoint_dir << "\n";
  return os.str();
}

}  // namespace rgan
