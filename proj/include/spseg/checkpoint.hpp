#pragma once

#include "spseg/geometry.hpp"

#include <string>
#include <vector>

namespace spseg {

struct NamedTensor {
  std::string name;
  RowMatrix value;
};

// Binary tensor archive, little endian:
//   "SPSEGCK1" | u32 version | u32 tensor count
//   per tensor: u32 name length | name bytes | u64 rows | u64 cols | rows*cols f64 (row-major)
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::string& path);

// Lookup by name; throws std::runtime_error when missing.
const RowMatrix& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace spseg
