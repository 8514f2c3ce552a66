#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icl/tensor.hpp"

namespace icl {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
  DType dtype = DType::f64;
};

// Binary layout: "ICLC", u32 version, u64 tensor count; per tensor u32 name
// length, UTF-8 name, u32 ndim, u64 dims, u8 dtype code, raw little-endian
// data. All integers little-endian.
struct Checkpoint {
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
  // Throws FormatError when absent.
  const CheckpointTensor& at(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
// Throws FormatError (with the failing byte offset) on bad magic, version,
// dtype or truncation.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace icl
