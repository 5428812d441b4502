#include <doctest.h>

#include <limits>
#include <random>
#include <sstream>

#include "dprl/nn/checkpoint.hpp"
#include "dprl/nn/network.hpp"
#include "gradcheck.hpp"

using namespace dprl::nn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

NetworkSpec single_trunk_layer(LayerSpec layer, Shape image) {
  NetworkSpec spec;
  spec.image = image;
  spec.trunk = {layer};
  return spec;
}

NetworkSpec single_head_layer(LayerSpec layer, int extra) {
  NetworkSpec spec;
  spec.extra_dim = extra;
  spec.head = {layer};
  return spec;
}

}  // namespace

TEST_SUITE("neuralnet") {

TEST_CASE("actor reproduces the default shape walk") {
  const Network<double> net(actor_spec(ArchConfig{}, 8, 4));
  std::vector<Shape> expected = {
      {8, 80, 100}, {8, 80, 100}, {8, 80, 100}, {8, 40, 50},    // conv, bn, relu, pool
      {16, 40, 50}, {16, 40, 50}, {16, 40, 50}, {16, 20, 25},
      {25, 20, 25}, {25, 20, 25}, {25, 20, 25}, {25, 10, 12},
      {25, 1, 1},                                                // global average pool
      {128, 1, 1}, {128, 1, 1}, {128, 1, 1}, {128, 1, 1}, {4, 1, 1}};
  REQUIRE(net.layer_shapes().size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(net.layer_shapes()[i] == expected[i]);
  CHECK(net.output_dim() == 4);
  // Head input = 25 image features + 8 self-state = 33.
  const int first_fc = 33 * 128 + 128;
  const int trunk = (8 * 9 + 8) + 16 + (16 * 72 + 16) + 32 + (25 * 144 + 25) + 50;
  CHECK(net.param_count() == trunk + first_fc + (128 * 128 + 128) + (128 * 4 + 4));

  const Network<double> critic(critic_spec(ArchConfig{}, 8, 4));
  CHECK(critic.output_dim() == 1);
  CHECK(critic.param_count() == net.param_count() + 4 * 128 - (128 * 4 + 4) + (128 + 1));
}

TEST_CASE("zero weights give zero outputs") {
  const Network<double> net(actor_spec(ArchConfig{}, 8, 4));
  ParamSet<double> p(net.param_count(), net.buffer_count());
  p.buffers.setOnes();
  std::mt19937_64 rng(1);
  const MatrixXd out = net.forward(p, gradcheck::random_matrix(8000, 2, rng),
                                   gradcheck::random_matrix(8, 2, rng), Mode::Eval);
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("1x1 identity convolution passes the image through") {
  const Network<double> net(single_trunk_layer(Conv2D{1, 1, 1, 0}, {1, 4, 5}));
  ParamSet<double> p(net.param_count(), 0);
  p.values << 1.0, 0.0;
  std::mt19937_64 rng(2);
  const MatrixXd img = gradcheck::random_matrix(20, 3, rng);
  CHECK(net.forward(p, img, MatrixXd(), Mode::Eval) == img);
}

TEST_CASE("linear layer gradient equals the input") {
  const Network<double> net(single_head_layer(FullyConnected{1}, 1));
  ParamSet<double> p(net.param_count(), 0);
  p.values << 0.7, 0.0;
  MatrixXd x(1, 1);
  x << 2.5;
  ForwardCache<double> cache;
  net.forward(p, MatrixXd(), x, Mode::Train, &cache);
  const auto g = net.backward(p, cache, MatrixXd::Ones(1, 1));
  CHECK(g.params[0] == 2.5);
  CHECK(g.params[1] == 1.0);
  CHECK(g.extra(0, 0) == 0.7);
}

TEST_CASE("LeakyReLU scales negative-side gradients by its slope") {
  NetworkSpec spec;
  spec.extra_dim = 2;
  spec.head = {LeakyReLU{0.01}};
  const Network<double> net(spec);
  ParamSet<double> p(0, 0);
  MatrixXd x(2, 1);
  x << -3.0, 2.0;
  ForwardCache<double> cache;
  const MatrixXd y = net.forward(p, MatrixXd(), x, Mode::Train, &cache);
  CHECK(y(0, 0) == doctest::Approx(-0.03));
  CHECK(y(1, 0) == 2.0);
  const auto g = net.backward(p, cache, MatrixXd::Ones(2, 1));
  CHECK(g.extra(0, 0) == doctest::Approx(0.01));
  CHECK(g.extra(1, 0) == 1.0);
}

TEST_CASE("gradient check: every layer type in isolation") {
  std::mt19937_64 rng(3);
  const Shape img{2, 6, 7};
  struct Case {
    const char* name;
    NetworkSpec spec;
    Mode mode;
  };
  std::vector<Case> cases = {
      {"conv s1", single_trunk_layer(Conv2D{3, 3, 1, 1}, img), Mode::Train},
      {"conv s2", single_trunk_layer(Conv2D{3, 2, 2, 1}, img), Mode::Train},
      {"conv k2 p0", single_trunk_layer(Conv2D{2, 2, 1, 0}, img), Mode::Train},
      {"batchnorm train", single_trunk_layer(BatchNorm{}, img), Mode::Train},
      {"batchnorm eval", single_trunk_layer(BatchNorm{}, img), Mode::Eval},
      {"maxpool", single_trunk_layer(MaxPool{2, 2}, img), Mode::Train},
      {"global avg pool", single_trunk_layer(GlobalAvgPool{}, img), Mode::Train},
      {"relu", single_trunk_layer(ReLU{}, img), Mode::Train},
      {"fully connected", single_head_layer(FullyConnected{5}, 7), Mode::Train},
      {"leaky relu", single_head_layer(LeakyReLU{0.01}, 7), Mode::Train},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    const Network<double> net(c.spec);
    auto p = net.init(rng);
    gradcheck::perturb(p, rng);
    const MatrixXd image = c.spec.image.channels ? gradcheck::random_matrix(img.size(), 3, rng) : MatrixXd();
    const MatrixXd extra = c.spec.extra_dim ? gradcheck::random_matrix(c.spec.extra_dim, 3, rng) : MatrixXd();
    const auto r = gradcheck::check(net, p, image, extra, c.mode, rng);
    CHECK(r.params < 1e-4);
    CHECK(r.image < 1e-4);
    CHECK(r.extra < 1e-4);
  }
}

TEST_CASE("gradient check: small composite network, all parameters") {
  std::mt19937_64 rng(4);
  ArchConfig arch;
  arch.conv1_channels = 3;
  arch.conv2_channels = 4;
  arch.conv3_channels = 5;
  arch.hidden = 6;
  const Network<double> net(make_policy_spec(arch, 3, 2, {1, 16, 20}));
  auto p = net.init(rng);
  gradcheck::perturb(p, rng);
  const auto r = gradcheck::check(net, p, gradcheck::random_matrix(320, 2, rng),
                                  gradcheck::random_matrix(3, 2, rng), Mode::Train, rng);
  CHECK(r.checked == net.param_count());
  CHECK(r.params < 1e-4);
  CHECK(r.image < 1e-4);
  CHECK(r.extra < 1e-4);
}

TEST_CASE("batchnorm train output is standardized per channel") {
  const Network<double> net(single_trunk_layer(BatchNorm{}, {3, 5, 4}));
  std::mt19937_64 rng(5);
  const auto p = net.init(rng);
  MatrixXd x = gradcheck::random_matrix(60, 7, rng, 4.0);
  x.array() += 3.0;
  const MatrixXd y = net.forward(p, x, MatrixXd(), Mode::Train);
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    double sq = 0.0;
    for (int b = 0; b < 7; ++b) {
      sum += y.col(b).segment(c * 20, 20).sum();
      sq += y.col(b).segment(c * 20, 20).squaredNorm();
    }
    const double mean = sum / 140.0;
    CHECK(std::abs(mean) < 1e-6);
    // eps = 1e-5 in the denominator shrinks the variance by var / (var + eps).
    CHECK(std::abs(sq / 140.0 - mean * mean - 1.0) < 1e-6 + 1e-5);
  }
}

TEST_CASE("running statistics track the batch statistics") {
  const Network<double> net(single_trunk_layer(BatchNorm{1e-5, 0.5}, {1, 2, 2}));
  std::mt19937_64 rng(6);
  auto p = net.init(rng);
  MatrixXd x(4, 2);
  x << 1, 2, 3, 4, 5, 6, 7, 8;
  ForwardCache<double> cache;
  net.forward(p, x, MatrixXd(), Mode::Train, &cache);
  net.update_running_stats(p, cache);
  CHECK(p.buffers[0] == doctest::Approx(0.5 * 4.5));
  // Unbiased variance of 1..8 is 6; running var starts at 1.
  CHECK(p.buffers[1] == doctest::Approx(0.5 + 0.5 * 6.0));
  ForwardCache<double> eval_cache;
  net.forward(p, x, MatrixXd(), Mode::Eval, &eval_cache);
  CHECK_THROWS_AS(net.update_running_stats(p, eval_cache), UsageError);
}

TEST_CASE("eval forward is pure") {
  const Network<double> net(actor_spec(ArchConfig{}, 8, 4));
  std::mt19937_64 rng(7);
  const auto p = net.init(rng);
  const auto before = p;
  const MatrixXd img = gradcheck::random_matrix(8000, 1, rng);
  const MatrixXd st = gradcheck::random_matrix(8, 1, rng);
  const MatrixXd a = net.forward(p, img, st, Mode::Eval);
  const MatrixXd b = net.forward(p, img, st, Mode::Eval);
  CHECK(a == b);
  CHECK(p == before);
}

TEST_CASE("checkpoint round trip reproduces outputs bit for bit") {
  const Network<double> net(actor_spec(ArchConfig{4, 4, 4, 2, 16}, 8, 4));
  std::mt19937_64 rng(8);
  auto p = net.init(rng);
  gradcheck::perturb(p, rng);
  p.adam_m.setConstant(0.25);
  p.step = 17;
  std::stringstream ss;
  write_checkpoint(ss, Checkpoint{net.spec().hash(), {p}, {42}});
  const auto back = read_checkpoint(ss, net.spec().hash());
  REQUIRE(back.sets.size() == 1);
  CHECK(back.sets[0] == p);
  CHECK(back.meta == std::vector<std::int64_t>{42});
  const MatrixXd img = gradcheck::random_matrix(8000, 2, rng);
  const MatrixXd st = gradcheck::random_matrix(8, 2, rng);
  CHECK(net.forward(back.sets[0], img, st, Mode::Eval) == net.forward(p, img, st, Mode::Eval));
}

TEST_CASE("checkpoint rejects foreign hashes and garbage") {
  std::stringstream ss;
  write_checkpoint(ss, Checkpoint{123, {}, {}});
  CHECK_THROWS_AS(read_checkpoint(ss, 456), CheckpointError);
  std::stringstream junk("not a checkpoint at all");
  CHECK_THROWS_AS(read_checkpoint(junk), CheckpointError);
  std::stringstream cut;
  write_checkpoint(cut, Checkpoint{1, {ParamSet<double>(10, 2)}, {}});
  std::string bytes = cut.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 20));
  CHECK_THROWS_AS(read_checkpoint(truncated), CheckpointError);
}

TEST_CASE("spec hash distinguishes architectures") {
  CHECK(actor_spec(ArchConfig{}, 8, 4).hash() == actor_spec(ArchConfig{}, 8, 4).hash());
  CHECK(actor_spec(ArchConfig{}, 8, 4).hash() != actor_spec(ArchConfig{}, 6, 3).hash());
  CHECK(actor_spec(ArchConfig{}, 8, 4).hash() != critic_spec(ArchConfig{}, 8, 4).hash());
}

TEST_CASE("Adam: zero gradient, first step, determinism") {
  ParamSet<double> p(3, 0);
  p.values << 1.0, -2.0, 0.5;
  p.adam_m << 0.1, 0.1, 0.1;
  p.adam_v << 0.01, 0.01, 0.01;
  auto q = p;
  adam_step(q, VectorXd::Zero(3));
  CHECK(q.step == 1);
  CHECK(q.adam_m[0] == doctest::Approx(0.09));
  CHECK(q.adam_v[0] == doctest::Approx(0.00999));

  ParamSet<double> fresh(3, 0);
  fresh.values << 1.0, -2.0, 0.5;
  auto unchanged = fresh;
  adam_step(unchanged, VectorXd::Zero(3));
  CHECK(unchanged.values == fresh.values);

  VectorXd g(3);
  g << 0.3, -4.0, 1e-3;
  auto s = fresh;
  adam_step(s, g);
  const VectorXd delta = s.values - fresh.values;
  CHECK(delta[0] == doctest::Approx(-3e-4).epsilon(1e-6));
  CHECK(delta[1] == doctest::Approx(3e-4).epsilon(1e-6));
  CHECK(delta[2] == doctest::Approx(-3e-4).epsilon(1e-4));
  auto t = fresh;
  adam_step(t, g);
  CHECK(t == s);
  CHECK_THROWS(adam_step(t, VectorXd::Zero(2)));
}

TEST_CASE("soft update blends values and buffers") {
  ParamSet<double> src(2, 1);
  src.values.setOnes();
  src.buffers.setOnes();
  ParamSet<double> tgt(2, 1);
  auto a = tgt;
  soft_update(a, src, 0.005);
  CHECK(a.values[0] == doctest::Approx(0.005));
  CHECK(a.buffers[0] == doctest::Approx(0.005));
  auto b = tgt;
  soft_update(b, src, 1.0);
  CHECK(b.values == src.values);
  auto c = tgt;
  soft_update(c, src, 0.0);
  CHECK(c.values == tgt.values);
}

TEST_CASE("structural and usage errors") {
  const Network<double> net(actor_spec(ArchConfig{}, 8, 4));
  std::mt19937_64 rng(9);
  const auto p = net.init(rng);
  CHECK_THROWS_AS(net.forward(p, MatrixXd::Zero(100, 1), MatrixXd::Zero(8, 1), Mode::Eval),
                  StructuralError);
  CHECK_THROWS_AS(net.forward(p, MatrixXd::Zero(8000, 1), MatrixXd::Zero(7, 1), Mode::Eval),
                  StructuralError);
  ForwardCache<double> empty;
  CHECK_THROWS_AS(net.backward(p, empty, MatrixXd::Zero(4, 1)), UsageError);
  MatrixXd bad = MatrixXd::Zero(8000, 1);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(net.forward(p, bad, MatrixXd::Zero(8, 1), Mode::Eval), NumericError);
  NetworkSpec pool_in_head;
  pool_in_head.extra_dim = 4;
  pool_in_head.head = {MaxPool{}};
  CHECK_THROWS_AS(Network<double>{pool_in_head}, StructuralError);
}

TEST_CASE("32-bit inference tracks the 64-bit network") {
  const auto spec = actor_spec(ArchConfig{}, 8, 4);
  const Network<double> net64(spec);
  const Network<float> net32(spec);
  std::mt19937_64 rng(10);
  const auto p = net64.init(rng);
  const MatrixXd img = gradcheck::random_matrix(8000, 2, rng);
  const MatrixXd st = gradcheck::random_matrix(8, 2, rng);
  const MatrixXd y64 = net64.forward(p, img, st, Mode::Eval);
  const Eigen::MatrixXf y32 =
      net32.forward(p.cast<float>(), img.cast<float>(), st.cast<float>(), Mode::Eval);
  CHECK((y64 - y32.cast<double>()).cwiseAbs().maxCoeff() < 1e-3 * (1.0 + y64.cwiseAbs().maxCoeff()));
}

}
