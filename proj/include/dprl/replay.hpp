#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "dprl/rng.hpp"
#include "dprl/sensing.hpp"

namespace dprl {

/// One stored step: privileged and corrupted views of the current and next
/// observation, the normalized action, the reward, and the ending flags.
/// Actions of the 3-D action space leave the last component at zero.
struct Transition {
  Observation s_priv;
  Observation o_corrupt;
  Eigen::Vector4d action = Eigen::Vector4d::Zero();
  double reward = 0.0;
  Observation next_s_priv;
  Observation next_o_corrupt;
  bool terminal = false;
  bool truncated = false;
};

/// A transition together with the global sequence number assigned on push.
struct StoredTransition {
  Transition transition;
  std::uint64_t seq = 0;
};

class InvalidTransition : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InsufficientData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws InvalidTransition when shapes, flags, or values are inconsistent.
void validate(const Transition& t);

/// Capacity-bounded FIFO ring shared by all collectors and the learner.
/// Every operation takes one mutex, so concurrent pushes and samples are
/// linearizable; samples are deep copies.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 50000);

  /// Stores `t`, evicting the oldest record when full. Returns the sequence number.
  std::uint64_t push(Transition t);

  /// `batch` uniform draws with replacement. Throws InsufficientData if size() < batch.
  std::vector<StoredTransition> sample(std::size_t batch, Rng& rng) const;

  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_pushed() const;
  /// Sequence numbers currently held, oldest first.
  std::vector<std::uint64_t> sequence_numbers() const;
  /// Copy of the records currently held, oldest first.
  std::vector<StoredTransition> snapshot() const;

  /// Versioned binary dump for resumable training.
  void save(std::ostream& os) const;
  static std::unique_ptr<ReplayBuffer> load(std::istream& is);

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::vector<StoredTransition> ring_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::uint64_t next_seq_ = 0;
};

}  // namespace dprl
