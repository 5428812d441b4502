#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "dprl/nn/param_set.hpp"
#include "dprl/rng.hpp"

namespace dprl::nn {

class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Per-sample activation shape; vectors are (n, 1, 1).
struct Shape {
  int channels = 0;
  int height = 1;
  int width = 1;

  int size() const { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct Conv2D {
  int kernel = 3;
  int out_channels = 1;
  int stride = 1;
  int padding = -1;  // -1: kernel / 2
};
struct BatchNorm {
  double eps = 1e-5;
  double momentum = 0.1;
};
struct MaxPool {
  int kernel = 2;
  int stride = 2;
};
struct GlobalAvgPool {};
struct FullyConnected {
  int out = 1;
};
struct ReLU {};
struct LeakyReLU {
  double slope = 0.01;
};

using LayerSpec =
    std::variant<Conv2D, BatchNorm, MaxPool, GlobalAvgPool, FullyConnected, ReLU, LeakyReLU>;

/// An image trunk (may be empty) whose flattened output is concatenated with an
/// extra input vector and fed to a head.
struct NetworkSpec {
  Shape image{};  // channels == 0 means no image input
  std::vector<LayerSpec> trunk;
  int extra_dim = 0;
  std::vector<LayerSpec> head;

  /// Canonical one-line description; equal descriptions mean equal architectures.
  std::string describe() const;
  std::uint64_t hash() const;
};

struct ArchConfig {
  int conv1_channels = 8;
  int conv2_channels = 16;
  int conv3_channels = 25;
  int first_stride = 1;
  int hidden = 128;
  double leaky_slope = 0.01;
  bool batch_norm = true;
};

/// Depth trunk (conv, BatchNorm, ReLU, max-pool x3, global average pool)
/// followed by concat(features, extra) -> FC -> LeakyReLU -> FC -> LeakyReLU -> FC(out).
NetworkSpec make_policy_spec(const ArchConfig& arch, int extra_dim, int out_dim,
                             Shape image = {1, 80, 100});

/// Actor: extra = self-state, output = normalized action.
NetworkSpec actor_spec(const ArchConfig& arch, int state_dim, int action_dim);
/// Critic: extra = [self-state, action], output = Q.
NetworkSpec critic_spec(const ArchConfig& arch, int state_dim, int action_dim);

enum class Mode { Train, Eval };

template <typename Scalar>
class LayerImpl;

template <typename Scalar>
struct LayerCache {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vector mean;
  Vector var;
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> argmax;
};

/// Activations recorded by a forward pass, consumed by backward().
template <typename Scalar>
struct ForwardCache {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  std::vector<Matrix> inputs;  // input of every layer, trunk then head
  std::vector<LayerCache<Scalar>> layers;
  Matrix output;
  Mode mode = Mode::Eval;
  bool valid = false;
};

template <typename Scalar>
struct Gradients {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vector params;  // empty when not requested
  Matrix image;   // empty when not requested
  Matrix extra;
};

struct BackwardOptions {
  bool param_grads = true;
  bool image_grad = false;
};

/// Batched network. Activations are (features x batch) matrices with one
/// sample per column in channel-height-width order.
template <typename Scalar>
class Network {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  Eigen::Index param_count() const { return param_count_; }
  Eigen::Index buffer_count() const { return buffer_count_; }
  int output_dim() const { return output_shape_.size(); }
  /// Output shape of every layer, trunk then head.
  const std::vector<Shape>& layer_shapes() const { return shapes_; }

  /// Kaiming-uniform (fan-in) weights, zero biases, BatchNorm gamma = 1, beta = 0.
  ParamSet<Scalar> init(Rng& rng) const;

  /// `cache` may be null. Eval mode uses BatchNorm running statistics and never mutates anything.
  Matrix forward(const ParamSet<Scalar>& params, const Matrix& image, const Matrix& extra,
                 Mode mode, ForwardCache<Scalar>* cache = nullptr) const;

  Gradients<Scalar> backward(const ParamSet<Scalar>& params, const ForwardCache<Scalar>& cache,
                             const Matrix& output_grad, BackwardOptions opts = {}) const;

  /// Folds the batch statistics of a train-mode forward into the running statistics.
  void update_running_stats(ParamSet<Scalar>& params, const ForwardCache<Scalar>& cache) const;

 private:
  NetworkSpec spec_;
  std::vector<std::shared_ptr<const LayerImpl<Scalar>>> layers_;
  std::vector<Shape> shapes_;
  std::size_t trunk_layers_ = 0;
  Shape output_shape_{};
  Eigen::Index param_count_ = 0;
  Eigen::Index buffer_count_ = 0;
};

extern template class Network<double>;
extern template class Network<float>;

}  // namespace dprl::nn
