#include "dprl/nn/network.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace dprl::nn {

template <typename Scalar>
class LayerImpl {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Cache = LayerCache<Scalar>;

  virtual ~LayerImpl() = default;

  Shape in{};
  Shape out{};
  Eigen::Index param_offset = 0;
  Eigen::Index param_count = 0;
  Eigen::Index buffer_offset = 0;
  Eigen::Index buffer_count = 0;

  virtual void init(Scalar* /*params*/, Scalar* /*buffers*/, Rng& /*rng*/) const {}
  virtual void forward(const Scalar* params, const Scalar* buffers, const Matrix& x, Matrix& y,
                       Cache& cache, Mode mode) const = 0;
  /// Writes dx when non-null; accumulates into dparams when non-null.
  virtual void backward(const Scalar* params, const Scalar* buffers, const Matrix& x,
                        const Matrix& dy, const Cache& cache, Mode mode, Matrix* dx,
                        Scalar* dparams) const = 0;
  virtual void update_stats(Scalar* /*buffers*/, const Cache& /*cache*/, Eigen::Index /*batch*/) const {}
};

namespace {

template <typename Scalar>
using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
void kaiming_uniform(Scalar* w, Eigen::Index n, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < n; ++i) w[i] = static_cast<Scalar>(dist(rng));
}

template <typename Scalar>
class ConvImpl final : public LayerImpl<Scalar> {
 public:
  using typename LayerImpl<Scalar>::Matrix;
  using typename LayerImpl<Scalar>::Cache;

  ConvImpl(const Conv2D& s, Shape input) : spec_(s) {
    pad_ = s.padding < 0 ? s.kernel / 2 : s.padding;
    if (s.kernel < 1 || s.stride < 1 || s.out_channels < 1 || pad_ < 0) {
      throw StructuralError("invalid Conv2D parameters");
    }
    const int ho = (input.height + 2 * pad_ - s.kernel) / s.stride + 1;
    const int wo = (input.width + 2 * pad_ - s.kernel) / s.stride + 1;
    if (input.height + 2 * pad_ < s.kernel || input.width + 2 * pad_ < s.kernel || ho < 1 || wo < 1) {
      throw StructuralError("Conv2D kernel larger than its padded input");
    }
    this->in = input;
    this->out = {s.out_channels, ho, wo};
    k_ = input.channels * s.kernel * s.kernel;
    this->param_count = static_cast<Eigen::Index>(s.out_channels) * k_ + s.out_channels;
  }

  void init(Scalar* p, Scalar*, Rng& rng) const override {
    kaiming_uniform(p, static_cast<Eigen::Index>(spec_.out_channels) * k_, k_, rng);
    for (int i = 0; i < spec_.out_channels; ++i) p[spec_.out_channels * k_ + i] = Scalar(0);
  }

  void forward(const Scalar* p, const Scalar*, const Matrix& x, Matrix& y, Cache&,
               Mode) const override {
    const Eigen::Index batch = x.cols();
    const int hw_out = this->out.height * this->out.width;
    Eigen::Map<const RowMajor<Scalar>> w(p, spec_.out_channels, k_);
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> bias(p + spec_.out_channels * k_,
                                                                    spec_.out_channels);
    y.resize(this->out.size(), batch);
    RowMajor<Scalar> col(k_, hw_out);
    for (Eigen::Index b = 0; b < batch; ++b) {
      im2col(x.col(b).data(), col);
      Eigen::Map<RowMajor<Scalar>> yb(y.col(b).data(), spec_.out_channels, hw_out);
      yb.noalias() = w * col;
      yb.colwise() += bias;
    }
  }

  void backward(const Scalar* p, const Scalar*, const Matrix& x, const Matrix& dy, const Cache&,
                Mode, Matrix* dx, Scalar* dp) const override {
    const Eigen::Index batch = x.cols();
    const int hw_out = this->out.height * this->out.width;
    Eigen::Map<const RowMajor<Scalar>> w(p, spec_.out_channels, k_);
    RowMajor<Scalar> col(k_, hw_out);
    RowMajor<Scalar> dcol(k_, hw_out);
    if (dx) dx->setZero(x.rows(), batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
      Eigen::Map<const RowMajor<Scalar>> dyb(dy.col(b).data(), spec_.out_channels, hw_out);
      if (dp) {
        im2col(x.col(b).data(), col);
        Eigen::Map<RowMajor<Scalar>> dw(dp, spec_.out_channels, k_);
        Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> db(dp + spec_.out_channels * k_,
                                                               spec_.out_channels);
        dw.noalias() += dyb * col.transpose();
        db += dyb.rowwise().sum();
      }
      if (dx) {
        dcol.noalias() = w.transpose() * dyb;
        col2im(dcol, dx->col(b).data());
      }
    }
  }

 private:
  void im2col(const Scalar* img, RowMajor<Scalar>& col) const {
    const int k = spec_.kernel;
    const int s = spec_.stride;
    const int h = this->in.height;
    const int wd = this->in.width;
    const int ho = this->out.height;
    const int wo = this->out.width;
    for (int c = 0; c < this->in.channels; ++c) {
      const Scalar* plane = img + static_cast<Eigen::Index>(c) * h * wd;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          Scalar* row = col.row((c * k + ky) * k + kx).data();
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * s - pad_ + ky;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * s - pad_ + kx;
              row[oy * wo + ox] =
                  (iy >= 0 && iy < h && ix >= 0 && ix < wd) ? plane[iy * wd + ix] : Scalar(0);
            }
          }
        }
      }
    }
  }

  void col2im(const RowMajor<Scalar>& col, Scalar* img) const {
    const int k = spec_.kernel;
    const int s = spec_.stride;
    const int h = this->in.height;
    const int wd = this->in.width;
    const int ho = this->out.height;
    const int wo = this->out.width;
    for (int c = 0; c < this->in.channels; ++c) {
      Scalar* plane = img + static_cast<Eigen::Index>(c) * h * wd;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const Scalar* row = col.row((c * k + ky) * k + kx).data();
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * s - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * s - pad_ + kx;
              if (ix >= 0 && ix < wd) plane[iy * wd + ix] += row[oy * wo + ox];
            }
          }
        }
      }
    }
  }

  Conv2D spec_;
  int pad_ = 0;
  int k_ = 0;
};

// Normalizes each channel over batch and spatial positions.
template <typename Scalar>
class BatchNormImpl final : public LayerImpl<Scalar> {
 public:
  using typename LayerImpl<Scalar>::Matrix;
  using typename LayerImpl<Scalar>::Vector;
  using typename LayerImpl<Scalar>::Cache;

  BatchNormImpl(const BatchNorm& s, Shape input) : spec_(s) {
    if (!(s.eps > 0.0) || s.momentum < 0.0 || s.momentum > 1.0) {
      throw StructuralError("invalid BatchNorm parameters");
    }
    this->in = input;
    this->out = input;
    this->param_count = 2 * input.channels;
    this->buffer_count = 2 * input.channels;
  }

  void init(Scalar* p, Scalar* buf, Rng&) const override {
    const int c = this->in.channels;
    for (int i = 0; i < c; ++i) {
      p[i] = Scalar(1);
      p[c + i] = Scalar(0);
      buf[i] = Scalar(0);
      buf[c + i] = Scalar(1);
    }
  }

  void forward(const Scalar* p, const Scalar* buf, const Matrix& x, Matrix& y, Cache& cache,
               Mode mode) const override {
    const int channels = this->in.channels;
    const int hw = this->in.height * this->in.width;
    const Eigen::Index batch = x.cols();
    Vector mean(channels);
    Vector var(channels);
    if (mode == Mode::Train) {
      const auto m = static_cast<Scalar>(static_cast<double>(batch) * hw);
      for (int c = 0; c < channels; ++c) {
        Scalar sum(0);
        for (Eigen::Index b = 0; b < batch; ++b) sum += x.col(b).segment(c * hw, hw).sum();
        mean[c] = sum / m;
        Scalar sq(0);
        for (Eigen::Index b = 0; b < batch; ++b) {
          sq += (x.col(b).segment(c * hw, hw).array() - mean[c]).square().sum();
        }
        var[c] = sq / m;
      }
      cache.mean = mean;
      cache.var = var;
    } else {
      mean = Eigen::Map<const Vector>(buf, channels);
      var = Eigen::Map<const Vector>(buf + channels, channels);
    }
    y.resize(x.rows(), batch);
    const auto eps = static_cast<Scalar>(spec_.eps);
    for (int c = 0; c < channels; ++c) {
      const Scalar scale = p[c] / std::sqrt(var[c] + eps);
      const Scalar shift = p[channels + c] - mean[c] * scale;
      for (Eigen::Index b = 0; b < batch; ++b) {
        y.col(b).segment(c * hw, hw) = x.col(b).segment(c * hw, hw).array() * scale + shift;
      }
    }
  }

  void backward(const Scalar* p, const Scalar* buf, const Matrix& x, const Matrix& dy,
                const Cache& cache, Mode mode, Matrix* dx, Scalar* dp) const override {
    const int channels = this->in.channels;
    const int hw = this->in.height * this->in.width;
    const Eigen::Index batch = x.cols();
    const auto eps = static_cast<Scalar>(spec_.eps);
    if (dx) dx->resize(x.rows(), batch);
    const auto m = static_cast<Scalar>(static_cast<double>(batch) * hw);
    for (int c = 0; c < channels; ++c) {
      const Scalar mean = mode == Mode::Train ? cache.mean[c] : buf[c];
      const Scalar var = mode == Mode::Train ? cache.var[c] : buf[channels + c];
      const Scalar inv_std = Scalar(1) / std::sqrt(var + eps);
      Scalar sum_dy(0);
      Scalar sum_dy_xhat(0);
      for (Eigen::Index b = 0; b < batch; ++b) {
        const auto xs = x.col(b).segment(c * hw, hw).array();
        const auto ds = dy.col(b).segment(c * hw, hw).array();
        sum_dy += ds.sum();
        sum_dy_xhat += (ds * (xs - mean)).sum() * inv_std;
      }
      if (dp) {
        dp[c] += sum_dy_xhat;
        dp[channels + c] += sum_dy;
      }
      if (!dx) continue;
      const Scalar gamma = p[c];
      for (Eigen::Index b = 0; b < batch; ++b) {
        const auto xs = x.col(b).segment(c * hw, hw).array();
        const auto ds = dy.col(b).segment(c * hw, hw).array();
        if (mode == Mode::Train) {
          // dx = gamma * inv_std / m * (m * dy - sum(dy) - xhat * sum(dy * xhat))
          dx->col(b).segment(c * hw, hw) =
              (gamma * inv_std / m) *
              (m * ds - sum_dy - (xs - mean) * inv_std * sum_dy_xhat);
        } else {
          dx->col(b).segment(c * hw, hw) = ds * (gamma * inv_std);
        }
      }
    }
  }

  void update_stats(Scalar* buf, const Cache& cache, Eigen::Index batch) const override {
    const int channels = this->in.channels;
    const double m = static_cast<double>(batch) * this->in.height * this->in.width;
    const auto mom = static_cast<Scalar>(spec_.momentum);
    const auto unbias = static_cast<Scalar>(m > 1.0 ? m / (m - 1.0) : 1.0);
    for (int c = 0; c < channels; ++c) {
      buf[c] = (Scalar(1) - mom) * buf[c] + mom * cache.mean[c];
      buf[channels + c] = (Scalar(1) - mom) * buf[channels + c] + mom * cache.var[c] * unbias;
    }
  }

 private:
  BatchNorm spec_;
};

template <typename Scalar>
class MaxPoolImpl final : public LayerImpl<Scalar> {
 public:
  using typename LayerImpl<Scalar>::Matrix;
  using typename LayerImpl<Scalar>::Cache;

  MaxPoolImpl(const MaxPool& s, Shape input) : spec_(s) {
    if (s.kernel < 1 || s.stride < 1 || input.height < s.kernel || input.width < s.kernel) {
      throw StructuralError("invalid MaxPool parameters for its input");
    }
    this->in = input;
    this->out = {input.channels, (input.height - s.kernel) / s.stride + 1,
                 (input.width - s.kernel) / s.stride + 1};
  }

  void forward(const Scalar*, const Scalar*, const Matrix& x, Matrix& y, Cache& cache,
               Mode) const override {
    const Eigen::Index batch = x.cols();
    const int h = this->in.height;
    const int w = this->in.width;
    const int ho = this->out.height;
    const int wo = this->out.width;
    y.resize(this->out.size(), batch);
    cache.argmax.resize(this->out.size(), batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const Scalar* xb = x.col(b).data();
      for (int c = 0; c < this->in.channels; ++c) {
        for (int oy = 0; oy < ho; ++oy) {
          for (int ox = 0; ox < wo; ++ox) {
            int best = -1;
            Scalar best_v = -std::numeric_limits<Scalar>::infinity();
            for (int ky = 0; ky < spec_.kernel; ++ky) {
              for (int kx = 0; kx < spec_.kernel; ++kx) {
                const int idx = (c * h + oy * spec_.stride + ky) * w + ox * spec_.stride + kx;
                if (best < 0 || xb[idx] > best_v) {
                  best = idx;
                  best_v = xb[idx];
                }
              }
            }
            const int o = (c * ho + oy) * wo + ox;
            y(o, b) = best_v;
            cache.argmax(o, b) = best;
          }
        }
      }
    }
  }

  void backward(const Scalar*, const Scalar*, const Matrix& x, const Matrix& dy,
                const Cache& cache, Mode, Matrix* dx, Scalar*) const override {
    if (!dx) return;
    dx->setZero(x.rows(), x.cols());
    for (Eigen::Index b = 0; b < x.cols(); ++b) {
      for (Eigen::Index o = 0; o < dy.rows(); ++o) (*dx)(cache.argmax(o, b), b) += dy(o, b);
    }
  }

 private:
  MaxPool spec_;
};

template <typename Scalar>
class GlobalAvgPoolImpl final : public LayerImpl<Scalar> {
 public:
  using typename LayerImpl<Scalar>::Matrix;
  using typename LayerImpl<Scalar>::Cache;

  explicit GlobalAvgPoolImpl(Shape input) {
    this->in = input;
    this->out = {input.channels, 1, 1};
  }

  void forward(const Scalar*, const Scalar*, const Matrix& x, Matrix& y, Cache&,
               Mode) const override {
    const int hw = this->in.height * this->in.width;
    y.resize(this->in.channels, x.cols());
    for (Eigen::Index b = 0; b < x.cols(); ++b) {
      for (int c = 0; c < this->in.channels; ++c) {
        y(c, b) = x.col(b).segment(c * hw, hw).sum() / static_cast<Scalar>(hw);
      }
    }
  }

  void backward(const Scalar*, const Scalar*, const Matrix& x, const Matrix& dy, const Cache&,
                Mode, Matrix* dx, Scalar*) const override {
    if (!dx) return;
    const int hw = this->in.height * this->in.width;
    dx->resize(x.rows(), x.cols());
    for (Eigen::Index b = 0; b < x.cols(); ++b) {
      for (int c = 0; c < this->in.channels; ++c) {
        dx->col(b).segment(c * hw, hw).setConstant(dy(c, b) / static_cast<Scalar>(hw));
      }
    }
  }
};

template <typename Scalar>
class FullyConnectedImpl final : public LayerImpl<Scalar> {
 public:
  using typename LayerImpl<Scalar>::Matrix;
  using typename LayerImpl<Scalar>::Vector;
  using typename LayerImpl<Scalar>::Cache;

  FullyConnectedImpl(const FullyConnected& s, Shape input) {
    if (s.out < 1) throw StructuralError("FullyConnected output width must be positive");
    this->in = {input.size(), 1, 1};
    this->out = {s.out, 1, 1};
    this->param_count = static_cast<Eigen::Index>(s.out) * input.size() + s.out;
  }

  void init(Scalar* p, Scalar*, Rng& rng) const override {
    const int n_in = this->in.size();
    const int n_out = this->out.size();
    kaiming_uniform(p, static_cast<Eigen::Index>(n_out) * n_in, n_in, rng);
    for (int i = 0; i < n_out; ++i) p[static_cast<Eigen::Index>(n_out) * n_in + i] = Scalar(0);
  }

  void forward(const Scalar* p, const Scalar*, const Matrix& x, Matrix& y, Cache&,
               Mode) const override {
    const int n_in = this->in.size();
    const int n_out = this->out.size();
    Eigen::Map<const Matrix> w(p, n_out, n_in);
    Eigen::Map<const Vector> bias(p + static_cast<Eigen::Index>(n_out) * n_in, n_out);
    y.noalias() = w * x;
    y.colwise() += bias;
  }

  void backward(const Scalar* p, const Scalar*, const Matrix& x, const Matrix& dy, const Cache&,
                Mode, Matrix* dx, Scalar* dp) const override {
    const int n_in = this->in.size();
    const int n_out = this->out.size();
    Eigen::Map<const Matrix> w(p, n_out, n_in);
    if (dp) {
      Eigen::Map<Matrix> dw(dp, n_out, n_in);
      Eigen::Map<Vector> db(dp + static_cast<Eigen::Index>(n_out) * n_in, n_out);
      dw.noalias() += dy * x.transpose();
      db += dy.rowwise().sum();
    }
    if (dx) dx->noalias() = w.transpose() * dy;
  }
};

template <typename Scalar>
class LeakyReLUImpl final : public LayerImpl<Scalar> {
 public:
  using typename LayerImpl<Scalar>::Matrix;
  using typename LayerImpl<Scalar>::Cache;

  LeakyReLUImpl(double slope, Shape input) : slope_(static_cast<Scalar>(slope)) {
    this->in = input;
    this->out = input;
  }

  void forward(const Scalar*, const Scalar*, const Matrix& x, Matrix& y, Cache&,
               Mode) const override {
    y = (x.array() > Scalar(0)).select(x.array(), slope_ * x.array()).matrix();
  }

  void backward(const Scalar*, const Scalar*, const Matrix& x, const Matrix& dy, const Cache&,
                Mode, Matrix* dx, Scalar*) const override {
    if (dx) *dx = (x.array() > Scalar(0)).select(dy.array(), slope_ * dy.array()).matrix();
  }

 private:
  Scalar slope_;
};

template <typename Scalar>
std::shared_ptr<LayerImpl<Scalar>> make_layer(const LayerSpec& spec, Shape input) {
  return std::visit(
      [&](const auto& s) -> std::shared_ptr<LayerImpl<Scalar>> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Conv2D>) {
          return std::make_shared<ConvImpl<Scalar>>(s, input);
        } else if constexpr (std::is_same_v<T, BatchNorm>) {
          return std::make_shared<BatchNormImpl<Scalar>>(s, input);
        } else if constexpr (std::is_same_v<T, MaxPool>) {
          return std::make_shared<MaxPoolImpl<Scalar>>(s, input);
        } else if constexpr (std::is_same_v<T, GlobalAvgPool>) {
          return std::make_shared<GlobalAvgPoolImpl<Scalar>>(input);
        } else if constexpr (std::is_same_v<T, FullyConnected>) {
          return std::make_shared<FullyConnectedImpl<Scalar>>(s, input);
        } else if constexpr (std::is_same_v<T, ReLU>) {
          return std::make_shared<LeakyReLUImpl<Scalar>>(0.0, input);
        } else {
          return std::make_shared<LeakyReLUImpl<Scalar>>(s.slope, input);
        }
      },
      spec);
}

std::string describe_layer(const LayerSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Conv2D>) {
          os << "conv k" << s.kernel << " o" << s.out_channels << " s" << s.stride << " p"
             << (s.padding < 0 ? s.kernel / 2 : s.padding);
        } else if constexpr (std::is_same_v<T, BatchNorm>) {
          os << "bn eps" << s.eps << " m" << s.momentum;
        } else if constexpr (std::is_same_v<T, MaxPool>) {
          os << "maxpool k" << s.kernel << " s" << s.stride;
        } else if constexpr (std::is_same_v<T, GlobalAvgPool>) {
          os << "gap";
        } else if constexpr (std::is_same_v<T, FullyConnected>) {
          os << "fc " << s.out;
        } else if constexpr (std::is_same_v<T, ReLU>) {
          os << "relu";
        } else {
          os << "lrelu " << s.slope;
        }
      },
      spec);
  return os.str();
}

}  // namespace

std::string NetworkSpec::describe() const {
  std::ostringstream os;
  os << "image " << image.channels << 'x' << image.height << 'x' << image.width;
  for (const auto& l : trunk) os << " | " << describe_layer(l);
  os << " || extra " << extra_dim;
  for (const auto& l : head) os << " | " << describe_layer(l);
  return os.str();
}

std::uint64_t NetworkSpec::hash() const { return fnv1a(describe()); }

NetworkSpec make_policy_spec(const ArchConfig& arch, int extra_dim, int out_dim, Shape image) {
  NetworkSpec spec;
  spec.image = image;
  const int channels[3] = {arch.conv1_channels, arch.conv2_channels, arch.conv3_channels};
  for (int i = 0; i < 3; ++i) {
    spec.trunk.emplace_back(Conv2D{3, channels[i], i == 0 ? arch.first_stride : 1, 1});
    if (arch.batch_norm) spec.trunk.emplace_back(BatchNorm{});
    spec.trunk.emplace_back(ReLU{});
    spec.trunk.emplace_back(MaxPool{2, 2});
  }
  spec.trunk.emplace_back(GlobalAvgPool{});
  spec.extra_dim = extra_dim;
  spec.head = {FullyConnected{arch.hidden}, LeakyReLU{arch.leaky_slope},
               FullyConnected{arch.hidden}, LeakyReLU{arch.leaky_slope},
               FullyConnected{out_dim}};
  return spec;
}

NetworkSpec actor_spec(const ArchConfig& arch, int state_dim, int action_dim) {
  return make_policy_spec(arch, state_dim, action_dim);
}

NetworkSpec critic_spec(const ArchConfig& arch, int state_dim, int action_dim) {
  return make_policy_spec(arch, state_dim + action_dim, 1);
}

template <typename Scalar>
Network<Scalar>::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  if (spec_.extra_dim < 0) throw StructuralError("extra input width must be non-negative");
  Shape shape = spec_.image;
  if (spec_.image.channels == 0 && !spec_.trunk.empty()) {
    throw StructuralError("image trunk declared without an image input");
  }
  if (spec_.image.channels < 0 || spec_.image.height < 1 || spec_.image.width < 1) {
    throw StructuralError("invalid image shape");
  }
  auto add = [&](const LayerSpec& l) {
    auto layer = make_layer<Scalar>(l, shape);
    layer->param_offset = param_count_;
    layer->buffer_offset = buffer_count_;
    param_count_ += layer->param_count;
    buffer_count_ += layer->buffer_count;
    shape = layer->out;
    shapes_.push_back(shape);
    layers_.push_back(std::move(layer));
  };
  for (const auto& l : spec_.trunk) add(l);
  trunk_layers_ = layers_.size();
  const int features = spec_.image.channels == 0 ? 0 : shape.size();
  shape = Shape{features + spec_.extra_dim, 1, 1};
  if (shape.channels < 1) throw StructuralError("network has no inputs");
  for (const auto& l : spec_.head) {
    if (std::holds_alternative<Conv2D>(l) || std::holds_alternative<MaxPool>(l) ||
        std::holds_alternative<GlobalAvgPool>(l)) {
      throw StructuralError("spatial layer after the concatenation point");
    }
    add(l);
  }
  output_shape_ = shape;
}

template <typename Scalar>
ParamSet<Scalar> Network<Scalar>::init(Rng& rng) const {
  ParamSet<Scalar> ps(param_count_, buffer_count_);
  for (const auto& l : layers_) {
    l->init(ps.values.data() + l->param_offset, ps.buffers.data() + l->buffer_offset, rng);
  }
  return ps;
}

template <typename Scalar>
typename Network<Scalar>::Matrix Network<Scalar>::forward(const ParamSet<Scalar>& params,
                                                          const Matrix& image,
                                                          const Matrix& extra, Mode mode,
                                                          ForwardCache<Scalar>* cache) const {
  if (params.values.size() != param_count_ || params.buffers.size() != buffer_count_) {
    throw StructuralError("parameter set does not match network layout");
  }
  const bool has_image = spec_.image.channels > 0;
  const Eigen::Index batch = has_image ? image.cols() : extra.cols();
  if (has_image && image.rows() != spec_.image.size()) {
    throw StructuralError("image input has " + std::to_string(image.rows()) + " rows, expected " +
                          std::to_string(spec_.image.size()));
  }
  if (spec_.extra_dim > 0 && (extra.rows() != spec_.extra_dim || extra.cols() != batch)) {
    throw StructuralError("extra input shape mismatch");
  }
  if (batch < 1) throw StructuralError("empty batch");

  ForwardCache<Scalar> local;
  ForwardCache<Scalar>& c = cache ? *cache : local;
  c.inputs.clear();
  c.layers.assign(layers_.size(), LayerCache<Scalar>{});
  c.mode = mode;
  c.valid = false;
  const bool keep = cache != nullptr;

  auto run = [&](std::size_t i, Matrix x) {
    Matrix y;
    const auto& l = *layers_[i];
    l.forward(params.values.data() + l.param_offset, params.buffers.data() + l.buffer_offset, x,
              y, c.layers[i], mode);
    if (!y.allFinite()) {
      throw NumericError("non-finite activation after layer " + std::to_string(i));
    }
    if (keep) c.inputs.push_back(std::move(x));
    return y;
  };

  Matrix x;
  if (has_image) {
    x = image;
    for (std::size_t i = 0; i < trunk_layers_; ++i) x = run(i, std::move(x));
  }
  Matrix h(static_cast<Eigen::Index>((has_image ? x.rows() : 0) + spec_.extra_dim), batch);
  if (has_image) h.topRows(x.rows()) = x;
  if (spec_.extra_dim > 0) h.bottomRows(spec_.extra_dim) = extra;
  for (std::size_t i = trunk_layers_; i < layers_.size(); ++i) h = run(i, std::move(h));
  if (!h.allFinite()) throw NumericError("non-finite network output");
  if (keep) {
    c.output = h;
    c.valid = true;
  }
  return h;
}

template <typename Scalar>
Gradients<Scalar> Network<Scalar>::backward(const ParamSet<Scalar>& params,
                                            const ForwardCache<Scalar>& cache,
                                            const Matrix& output_grad,
                                            BackwardOptions opts) const {
  if (!cache.valid || cache.inputs.size() != layers_.size()) {
    throw UsageError("backward requires the cache of a forward pass on this network");
  }
  if (output_grad.rows() != cache.output.rows() || output_grad.cols() != cache.output.cols()) {
    throw StructuralError("output gradient shape mismatch");
  }
  Gradients<Scalar> g;
  if (opts.param_grads) g.params = Vector::Zero(param_count_);
  auto step = [&](std::size_t i, const Matrix& dy, bool need_dx) {
    const auto& l = *layers_[i];
    Matrix dx;
    l.backward(params.values.data() + l.param_offset, params.buffers.data() + l.buffer_offset,
               cache.inputs[i], dy, cache.layers[i], cache.mode, need_dx ? &dx : nullptr,
               opts.param_grads ? g.params.data() + l.param_offset : nullptr);
    return dx;
  };

  Matrix dy = output_grad;
  for (std::size_t i = layers_.size(); i-- > trunk_layers_;) dy = step(i, dy, true);
  const Eigen::Index features = dy.rows() - spec_.extra_dim;
  g.extra = dy.bottomRows(spec_.extra_dim);
  if (trunk_layers_ == 0) {
    if (opts.image_grad && spec_.image.channels > 0) g.image = dy.topRows(features);
    return g;
  }
  if (!opts.param_grads && !opts.image_grad) return g;
  Matrix dt = dy.topRows(features);
  for (std::size_t i = trunk_layers_; i-- > 0;) {
    const bool need_dx = i > 0 || opts.image_grad;
    dt = step(i, dt, need_dx);
  }
  if (opts.image_grad) g.image = std::move(dt);
  return g;
}

template <typename Scalar>
void Network<Scalar>::update_running_stats(ParamSet<Scalar>& params,
                                           const ForwardCache<Scalar>& cache) const {
  if (!cache.valid || cache.mode != Mode::Train) {
    throw UsageError("running statistics need the cache of a train-mode forward pass");
  }
  const Eigen::Index batch = cache.output.cols();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = *layers_[i];
    l.update_stats(params.buffers.data() + l.buffer_offset, cache.layers[i], batch);
  }
}

template class Network<double>;
template class Network<float>;

}  // namespace dprl::nn
