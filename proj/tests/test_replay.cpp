#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dprl/replay.hpp"
#include "fixtures.hpp"
#include "replay_stress.hpp"

using namespace dprl;

TEST_SUITE("replay") {
  TEST_CASE("push to an empty buffer stores one record") {
    ReplayBuffer buf(10);
    CHECK(buf.size() == 0);
    CHECK(buf.push(fixtures::marked_transition(7)) == 0);
    CHECK(buf.size() == 1);
  }

  TEST_CASE("ring keeps the newest records in insertion order") {
    ReplayBuffer buf(3);
    for (int i = 0; i < 4; ++i) buf.push(fixtures::marked_transition(i));
    const auto snap = buf.snapshot();
    REQUIRE(snap.size() == 3);
    for (int i = 0; i < 3; ++i) {
      CHECK(snap[i].seq == static_cast<std::uint64_t>(i + 1));
      CHECK(fixtures::marked_id(snap[i].transition) == i + 1);
    }
  }

  TEST_CASE("size saturates at the default capacity") {
    ReplayBuffer buf;
    CHECK(buf.capacity() == 50000);
    const auto t = fixtures::marked_transition(1);
    for (int i = 0; i < 50001; ++i) buf.push(t);
    CHECK(buf.size() == 50000);
    CHECK(buf.sequence_numbers().front() == 1);
  }

  TEST_CASE("invalid transitions are rejected") {
    ReplayBuffer buf(4);
    auto t = fixtures::marked_transition(1);
    t.terminal = t.truncated = true;
    CHECK_THROWS_AS(buf.push(t), InvalidTransition);
    t = fixtures::marked_transition(1);
    t.o_corrupt.privileged = true;
    CHECK_THROWS_AS(buf.push(t), InvalidTransition);
    t = fixtures::marked_transition(1);
    t.reward = std::nan("");
    CHECK_THROWS_AS(buf.push(t), InvalidTransition);
    t = fixtures::marked_transition(1);
    t.s_priv.depth.codes.resize(10, 10);
    CHECK_THROWS_AS(buf.push(t), InvalidTransition);
    CHECK(buf.size() == 0);
  }

  TEST_CASE("sampling") {
    ReplayBuffer buf(100);
    Rng rng(1);
    CHECK_THROWS_AS(buf.sample(1, rng), InsufficientData);
    buf.push(fixtures::marked_transition(42));
    const auto one = buf.sample(1, rng);
    CHECK(fixtures::marked_id(one[0].transition) == 42);
    CHECK_THROWS_AS(buf.sample(2, rng), InsufficientData);

    for (int i = 1; i < 100; ++i) buf.push(fixtures::marked_transition(i));
    Rng a(5), b(5);
    const auto sa = buf.sample(32, a);
    const auto sb = buf.sample(32, b);
    for (int i = 0; i < 32; ++i) CHECK(sa[i].seq == sb[i].seq);
  }

  TEST_CASE("draw frequencies are uniform within 5 sigma") {
    ReplayBuffer buf(100);
    for (int i = 0; i < 100; ++i) buf.push(fixtures::marked_transition(i));
    Rng rng(11);
    std::vector<int> counts(100, 0);
    const int draws = 100000;
    for (int i = 0; i < draws / 100; ++i) {
      for (const auto& st : buf.sample(100, rng)) ++counts[st.seq];
    }
    const double mean = draws / 100.0;
    const double sigma = std::sqrt(draws * 0.01 * 0.99);
    for (int c : counts) CHECK(std::abs(c - mean) <= 5.0 * sigma);
  }

  TEST_CASE("snapshot round trip") {
    ReplayBuffer buf(3);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 5; ++i) buf.push(fixtures::random_transition(rng));
    std::stringstream ss;
    buf.save(ss);
    const auto back = ReplayBuffer::load(ss);
    CHECK(back->capacity() == 3);
    CHECK(back->total_pushed() == 5);
    const auto a = buf.snapshot();
    const auto b = back->snapshot();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].seq == b[i].seq);
      CHECK(a[i].transition.o_corrupt.depth == b[i].transition.o_corrupt.depth);
      CHECK(a[i].transition.next_s_priv.state == b[i].transition.next_s_priv.state);
      CHECK(a[i].transition.reward == b[i].transition.reward);
      CHECK(a[i].transition.terminal == b[i].transition.terminal);
    }
    // pushes continue the sequence
    CHECK(back->push(fixtures::random_transition(rng)) == 5);

    std::stringstream bad("not a snapshot");
    CHECK_THROWS(ReplayBuffer::load(bad));
  }

  TEST_CASE("concurrent producers and a sampler") {
    const auto rep = stress::run(4, 5000, 1024);
    CHECK(rep.pushes == 20000);
    CHECK(rep.lost == 0);
    CHECK(rep.duplicated == 0);
    CHECK(rep.torn == 0);
    CHECK(rep.mismatched == 0);
    CHECK(rep.fifo_ok);
    CHECK(rep.samples > 0);
  }
}
