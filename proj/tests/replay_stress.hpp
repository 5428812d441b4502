#pragma once

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

#include "dprl/replay.hpp"
#include "fixtures.hpp"

namespace stress {

struct Report {
  std::uint64_t pushes = 0;
  std::uint64_t lost = 0;        // sequence numbers never handed out
  std::uint64_t duplicated = 0;  // sequence numbers handed out twice
  std::uint64_t torn = 0;        // sampled records with inconsistent fields
  std::uint64_t mismatched = 0;  // sampled record differs from what was pushed under its seq
  std::uint64_t samples = 0;
  bool fifo_ok = false;  // final contents are exactly the newest `capacity` seqs, oldest first
};

/// `producers` threads push `per_producer` marked records each while one thread samples.
inline Report run(int producers, std::uint64_t per_producer, std::size_t capacity,
                  std::size_t sample_batch = 16) {
  dprl::ReplayBuffer buf(capacity);
  const std::uint64_t total = producers * per_producer;
  // id_of_seq[seq] = id pushed under that seq (+1; 0 = never assigned).
  std::vector<std::atomic<std::uint64_t>> id_of_seq(total);
  std::vector<std::atomic<int>> seq_hits(total);
  std::atomic<std::uint64_t> out_of_range{0};
  std::atomic<bool> done{false};

  Report rep;
  std::vector<std::pair<std::uint64_t, long long>> seen;  // sampled (seq, id)
  std::thread sampler([&] {
    dprl::Rng rng(99);
    while (!done.load()) {
      if (buf.size() < sample_batch) {
        std::this_thread::yield();
        continue;
      }
      for (const auto& st : buf.sample(sample_batch, rng)) {
        seen.emplace_back(st.seq, fixtures::marked_id(st.transition));
      }
    }
  });

  std::vector<std::thread> workers;
  for (int p = 0; p < producers; ++p) {
    workers.emplace_back([&, p] {
      for (std::uint64_t i = 0; i < per_producer; ++i) {
        const std::uint64_t id = p * per_producer + i;
        const std::uint64_t seq = buf.push(fixtures::marked_transition(id));
        if (seq >= total) {
          ++out_of_range;
          continue;
        }
        id_of_seq[seq].store(id + 1);
        ++seq_hits[seq];
      }
    });
  }
  for (auto& w : workers) w.join();
  done = true;
  sampler.join();

  rep.pushes = buf.total_pushed();
  rep.duplicated = out_of_range.load();
  for (std::uint64_t s = 0; s < total; ++s) {
    const int h = seq_hits[s].load();
    if (h == 0) ++rep.lost;
    if (h > 1) rep.duplicated += h - 1;
  }
  rep.samples = seen.size();
  for (const auto& [seq, id] : seen) {
    if (id < 0) {
      ++rep.torn;
    } else if (seq >= total || id_of_seq[seq].load() != static_cast<std::uint64_t>(id) + 1) {
      ++rep.mismatched;
    }
  }
  const auto seqs = buf.sequence_numbers();
  const std::uint64_t keep = std::min<std::uint64_t>(capacity, total);
  rep.fifo_ok = seqs.size() == keep;
  for (std::size_t i = 0; rep.fifo_ok && i < seqs.size(); ++i) {
    rep.fifo_ok = seqs[i] == total - keep + i;
  }
  if (rep.fifo_ok) {
    // contents under each seq are what was pushed under it
    const auto snap = buf.snapshot();
    for (const auto& st : snap) {
      if (fixtures::marked_id(st.transition) + 1 != static_cast<long long>(id_of_seq[st.seq].load())) {
        rep.fifo_ok = false;
        break;
      }
    }
  }
  return rep;
}

}  // namespace stress
