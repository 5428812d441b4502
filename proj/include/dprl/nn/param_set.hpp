#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace dprl::nn {

/// Flat trainable parameters with Adam moments, plus non-trainable buffers
/// (BatchNorm running statistics). One per network instance.
template <typename Scalar>
struct ParamSet {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector values;
  Vector adam_m;
  Vector adam_v;
  Vector buffers;
  std::int64_t step = 0;

  ParamSet() = default;
  ParamSet(Eigen::Index n_params, Eigen::Index n_buffers)
      : values(Vector::Zero(n_params)),
        adam_m(Vector::Zero(n_params)),
        adam_v(Vector::Zero(n_params)),
        buffers(Vector::Zero(n_buffers)) {}

  Eigen::Index size() const { return values.size(); }

  template <typename Other>
  ParamSet<Other> cast() const {
    ParamSet<Other> out;
    out.values = values.template cast<Other>();
    out.adam_m = adam_m.template cast<Other>();
    out.adam_v = adam_v.template cast<Other>();
    out.buffers = buffers.template cast<Other>();
    out.step = step;
    return out;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    return a.step == b.step && a.values == b.values && a.adam_m == b.adam_m &&
           a.adam_v == b.adam_v && a.buffers == b.buffers;
  }
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update of `params.values` in place; increments `params.step`.
template <typename Scalar>
void adam_step(ParamSet<Scalar>& params, const typename ParamSet<Scalar>::Vector& grad,
               const AdamConfig& cfg = {});

/// target <- tau * source + (1 - tau) * target, for values and buffers.
template <typename Scalar>
void soft_update(ParamSet<Scalar>& target, const ParamSet<Scalar>& source, double tau);

}  // namespace dprl::nn
