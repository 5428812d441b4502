#include "dprl/nn/param_set.hpp"

#include <cmath>
#include <stdexcept>

namespace dprl::nn {

template <typename Scalar>
void adam_step(ParamSet<Scalar>& params, const typename ParamSet<Scalar>::Vector& grad,
               const AdamConfig& cfg) {
  if (grad.size() != params.values.size()) {
    throw std::invalid_argument("gradient length does not match parameter count");
  }
  params.step += 1;
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  params.adam_m = b1 * params.adam_m + (Scalar(1) - b1) * grad;
  params.adam_v = b2 * params.adam_v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
  const auto t = static_cast<double>(params.step);
  const auto m_scale = static_cast<Scalar>(1.0 / (1.0 - std::pow(cfg.beta1, t)));
  const auto v_scale = static_cast<Scalar>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
  const auto lr = static_cast<Scalar>(cfg.lr);
  const auto eps = static_cast<Scalar>(cfg.eps);
  params.values.array() -= lr * (params.adam_m.array() * m_scale) /
                           ((params.adam_v.array() * v_scale).sqrt() + eps);
}

template <typename Scalar>
void soft_update(ParamSet<Scalar>& target, const ParamSet<Scalar>& source, double tau) {
  if (target.values.size() != source.values.size() ||
      target.buffers.size() != source.buffers.size()) {
    throw std::invalid_argument("soft update between structurally different parameter sets");
  }
  const auto t = static_cast<Scalar>(tau);
  target.values = t * source.values + (Scalar(1) - t) * target.values;
  target.buffers = t * source.buffers + (Scalar(1) - t) * target.buffers;
}

template void adam_step<double>(ParamSet<double>&, const ParamSet<double>::Vector&,
                                const AdamConfig&);
template void adam_step<float>(ParamSet<float>&, const ParamSet<float>::Vector&,
                               const AdamConfig&);
template void soft_update<double>(ParamSet<double>&, const ParamSet<double>&, double);
template void soft_update<float>(ParamSet<float>&, const ParamSet<float>&, double);

}  // namespace dprl::nn
