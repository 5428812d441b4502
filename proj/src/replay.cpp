#include "dprl/replay.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace dprl {

namespace {

void check_observation(const Observation& o, bool privileged, const char* what) {
  if (o.depth.codes.rows() != kDepthRows || o.depth.codes.cols() != kDepthCols) {
    throw InvalidTransition(std::string(what) + ": depth image must be 80x100");
  }
  if (!o.state.values.allFinite()) throw InvalidTransition(std::string(what) + ": non-finite state");
  if (o.privileged != privileged) {
    throw InvalidTransition(std::string(what) + (privileged ? ": expected a privileged observation"
                                                            : ": expected a corrupted observation"));
  }
}

constexpr std::array<char, 8> kMagic = {'D', 'P', 'R', 'L', 'R', 'P', 'L', 'Y'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  std::array<char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  os.write(b.data(), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  std::array<char, sizeof(T)> b;
  if (!is.read(b.data(), sizeof(T))) throw std::runtime_error("replay snapshot truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

void put_observation(std::ostream& os, const Observation& o) {
  os.write(reinterpret_cast<const char*>(o.depth.codes.data()), o.depth.codes.size());
  for (int i = 0; i < kSelfStateDim; ++i) put<double>(os, o.state.values[i]);
  put<std::uint8_t>(os, o.privileged ? 1 : 0);
}

Observation get_observation(std::istream& is) {
  Observation o;
  if (!is.read(reinterpret_cast<char*>(o.depth.codes.data()), o.depth.codes.size())) {
    throw std::runtime_error("replay snapshot truncated");
  }
  for (int i = 0; i < kSelfStateDim; ++i) o.state.values[i] = get<double>(is);
  o.privileged = get<std::uint8_t>(is) != 0;
  return o;
}

}  // namespace

void validate(const Transition& t) {
  check_observation(t.s_priv, true, "s");
  check_observation(t.o_corrupt, false, "o");
  check_observation(t.next_s_priv, true, "s'");
  check_observation(t.next_o_corrupt, false, "o'");
  if (!t.action.allFinite() || !std::isfinite(t.reward)) {
    throw InvalidTransition("non-finite action or reward");
  }
  if (t.terminal && t.truncated) throw InvalidTransition("terminal and truncated are exclusive");
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

std::uint64_t ReplayBuffer::push(Transition t) {
  validate(t);
  std::lock_guard lock(mutex_);
  const std::uint64_t seq = next_seq_++;
  if (ring_.size() < capacity_) {
    ring_.push_back(StoredTransition{std::move(t), seq});
  } else {
    ring_[head_] = StoredTransition{std::move(t), seq};
    head_ = (head_ + 1) % capacity_;
  }
  return seq;
}

std::vector<StoredTransition> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  std::lock_guard lock(mutex_);
  if (ring_.size() < batch || batch == 0) {
    throw InsufficientData("replay holds " + std::to_string(ring_.size()) + " records, need " +
                           std::to_string(batch));
  }
  std::uniform_int_distribution<std::size_t> pick(0, ring_.size() - 1);
  std::vector<StoredTransition> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) out.push_back(ring_[pick(rng)]);
  return out;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mutex_);
  return ring_.size();
}

std::uint64_t ReplayBuffer::total_pushed() const {
  std::lock_guard lock(mutex_);
  return next_seq_;
}

std::vector<StoredTransition> ReplayBuffer::snapshot() const {
  std::lock_guard lock(mutex_);
  std::vector<StoredTransition> out;
  out.reserve(ring_.size());
  for (std::size_t i = 0; i < ring_.size(); ++i) out.push_back(ring_[(head_ + i) % ring_.size()]);
  return out;
}

std::vector<std::uint64_t> ReplayBuffer::sequence_numbers() const {
  std::lock_guard lock(mutex_);
  std::vector<std::uint64_t> out;
  out.reserve(ring_.size());
  for (std::size_t i = 0; i < ring_.size(); ++i) out.push_back(ring_[(head_ + i) % ring_.size()].seq);
  return out;
}

void ReplayBuffer::save(std::ostream& os) const {
  std::lock_guard lock(mutex_);
  os.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, capacity_);
  put<std::uint64_t>(os, next_seq_);
  put<std::uint64_t>(os, ring_.size());
  for (std::size_t i = 0; i < ring_.size(); ++i) {
    const auto& st = ring_[(head_ + i) % ring_.size()];
    const auto& t = st.transition;
    put<std::uint64_t>(os, st.seq);
    put_observation(os, t.s_priv);
    put_observation(os, t.o_corrupt);
    for (int k = 0; k < 4; ++k) put<double>(os, t.action[k]);
    put<double>(os, t.reward);
    put_observation(os, t.next_s_priv);
    put_observation(os, t.next_o_corrupt);
    put<std::uint8_t>(os, static_cast<std::uint8_t>((t.terminal ? 1 : 0) | (t.truncated ? 2 : 0)));
  }
  if (!os) throw std::runtime_error("failed writing replay snapshot");
}

std::unique_ptr<ReplayBuffer> ReplayBuffer::load(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw std::runtime_error("not a replay snapshot (bad magic)");
  }
  if (get<std::uint32_t>(is) != kVersion) throw std::runtime_error("unsupported replay snapshot version");
  auto out = std::make_unique<ReplayBuffer>(get<std::uint64_t>(is));
  auto& buf = *out;
  buf.next_seq_ = get<std::uint64_t>(is);
  const auto n = get<std::uint64_t>(is);
  if (n > buf.capacity_) throw std::runtime_error("replay snapshot larger than its capacity");
  for (std::uint64_t i = 0; i < n; ++i) {
    StoredTransition st;
    st.seq = get<std::uint64_t>(is);
    auto& t = st.transition;
    t.s_priv = get_observation(is);
    t.o_corrupt = get_observation(is);
    for (int k = 0; k < 4; ++k) t.action[k] = get<double>(is);
    t.reward = get<double>(is);
    t.next_s_priv = get_observation(is);
    t.next_o_corrupt = get_observation(is);
    const auto flags = get<std::uint8_t>(is);
    t.terminal = flags & 1;
    t.truncated = flags & 2;
    validate(t);
    buf.ring_.push_back(std::move(st));
  }
  buf.head_ = 0;
  return out;
}

}  // namespace dprl
