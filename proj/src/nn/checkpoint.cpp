#include "dprl/nn/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace dprl::nn {

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'P', 'R', 'L', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(bytes.data(), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  std::array<char, sizeof(T)> bytes;
  if (!is.read(bytes.data(), sizeof(T))) throw CheckpointError("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

void put_vector(std::ostream& os, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(os, v[i]);
}

Eigen::VectorXd get_vector(std::istream& is, std::uint64_t n) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = get<double>(is);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  os.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, ckpt.hash);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.sets.size()));
  for (const auto& s : ckpt.sets) {
    put<std::uint64_t>(os, static_cast<std::uint64_t>(s.values.size()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(s.buffers.size()));
    put<std::int64_t>(os, s.step);
    put_vector(os, s.values);
    put_vector(os, s.adam_m);
    put_vector(os, s.adam_v);
    put_vector(os, s.buffers);
  }
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto m : ckpt.meta) put<std::int64_t>(os, m);
  if (!os) throw CheckpointError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& is, std::uint64_t expected_hash) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.hash = get<std::uint64_t>(is);
  if (expected_hash != 0 && ckpt.hash != expected_hash) {
    std::ostringstream msg;
    msg << "checkpoint was written for a different architecture/config (hash " << std::hex
        << ckpt.hash << ", expected " << expected_hash << ")";
    throw CheckpointError(msg.str());
  }
  const auto n_sets = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_sets; ++i) {
    const auto n_params = get<std::uint64_t>(is);
    const auto n_buffers = get<std::uint64_t>(is);
    if (n_params > (1ULL << 32) || n_buffers > (1ULL << 32)) {
      throw CheckpointError("implausible parameter count in checkpoint");
    }
    ParamSet<double> s;
    s.step = get<std::int64_t>(is);
    s.values = get_vector(is, n_params);
    s.adam_m = get_vector(is, n_params);
    s.adam_v = get_vector(is, n_params);
    s.buffers = get_vector(is, n_buffers);
    ckpt.sets.push_back(std::move(s));
  }
  const auto n_meta = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_meta; ++i) ckpt.meta.push_back(get<std::int64_t>(is));
  return ckpt;
}

}  // namespace dprl::nn
