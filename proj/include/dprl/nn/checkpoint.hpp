#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "dprl/nn/param_set.hpp"

namespace dprl::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary checkpoint, all integers and floats little-endian:
///
///   magic   8 bytes  "DPRLCKPT"
///   version u32      (currently 1)
///   hash    u64      architecture/config hash of the writer
///   n_sets  u32
///   n_sets x { n_params u64, n_buffers u64, step i64,
///              values f64[n_params], adam_m f64[n_params], adam_v f64[n_params],
///              buffers f64[n_buffers] }
///   n_meta  u32, meta i64[n_meta]
struct Checkpoint {
  std::uint64_t hash = 0;
  std::vector<ParamSet<double>> sets;
  std::vector<std::int64_t> meta;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
/// Throws CheckpointError on bad magic/version, truncation, or (when expected_hash != 0) hash mismatch.
Checkpoint read_checkpoint(std::istream& is, std::uint64_t expected_hash = 0);

}  // namespace dprl::nn
