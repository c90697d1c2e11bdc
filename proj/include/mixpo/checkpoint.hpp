#pragma once

// Policy checkpoint file, little-endian throughout:
//
//   offset  size  field
//   0       8     magic "MIXPOCKP"
//   8       4     u32 format version (= 1)
//   12      4     u32 vocab size
//   16      4     u32 context window
//   20      4     u32 number of queries
//   24      8     u64 number of contexts (rows)
//   32      8*n   f64 logits, row-major, n = rows * vocab size

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "mixpo/policy.hpp"

namespace mixpo {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const PolicyParams& params, std::ostream& out);
PolicyParams read_checkpoint(std::istream& in);

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_checkpoint(const std::filesystem::path& path);

}  // namespace mixpo
