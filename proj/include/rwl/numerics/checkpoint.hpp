#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "rwl/numerics/graph.hpp"

namespace rwl::num {

// Binary parameter container:
//   "RWLB" | u32 version | records...
//   record = u32 name_len | name bytes (UTF-8) | u32 rank | u32 extents[rank] | f32 data[]
// All integers and floats little-endian. Records run to end of file.
inline constexpr char kCheckpointMagic[4] = {'R', 'W', 'L', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& records);
std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

std::vector<NamedTensor> snapshot(std::span<const Var> params);
// Assigns values by name; every parameter must be present with a matching shape.
void restore(std::span<const Var> params, const std::vector<NamedTensor>& records);

}  // namespace rwl::num
