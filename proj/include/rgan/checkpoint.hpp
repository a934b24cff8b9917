#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rgan/tensor.hpp"

namespace rgan {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Named-tensor archive, little-endian throughout:
//   magic "RGCK" | u32 version=1 | u32 tensor count
//   per tensor: u16 name length | name bytes | u8 ndim | ndim x u32 dims |
//               f32 payload (numel values)
// Writers emit tensors in a canonical deterministic order, so
// save -> load -> save is byte-identical.

struct NamedTensorF {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

std::vector<uint8_t> serialize_checkpoint(
    const std::vector<NamedTensorF>& tensors);
std::vector<NamedTensorF> deserialize_checkpoint(
    const std::vector<uint8_t>& bytes);

// Atomic: writes a temp file in the target directory, then renames.
void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<NamedTensorF>& tensors);
std::vector<NamedTensorF> read_checkpoint(const std::filesystem::path& path);

}  // namespace rgan
