#pragma once

#include <random>
#include <variant>
#include <vector>

#include "dprl/nn/network.hpp"
#include "oracles.hpp"

namespace gradcheck {

using dprl::nn::Mode;
using dprl::nn::Network;
using dprl::nn::ParamSet;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Magnitudes below this are treated as this when forming relative errors;
// central differences at h = 1e-5 carry ~1e-10 absolute roundoff, so exact
// zeros (e.g. conv biases feeding BatchNorm) otherwise read as 100% error.
// The floor is for a loss of order one: the roundoff grows with |L|, so
// check() scales it by max(1, |L|).
inline constexpr double kRelativeFloor = 1e-5;

struct Result {
  double params = 0.0;
  double image = 0.0;
  double extra = 0.0;
  long checked = 0;
  long skipped = 0;  // entries whose +-h interval crosses a kink (only with skip_kinks)
};

/// ReLU signs and max-pool winners of a forward pass. Two points with equal
/// patterns lie in the same smooth piece of the network function.
inline std::vector<int> activation_pattern(const Network<double>& net,
                                           const dprl::nn::ForwardCache<double>& cache) {
  std::vector<dprl::nn::LayerSpec> layers = net.spec().trunk;
  layers.insert(layers.end(), net.spec().head.begin(), net.spec().head.end());
  std::vector<int> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (std::holds_alternative<dprl::nn::ReLU>(layers[i]) ||
        std::holds_alternative<dprl::nn::LeakyReLU>(layers[i])) {
      const auto& x = cache.inputs[i];
      for (Eigen::Index k = 0; k < x.size(); ++k) out.push_back(x.data()[k] > 0.0);
    } else if (std::holds_alternative<dprl::nn::MaxPool>(layers[i])) {
      const auto& a = cache.layers[i].argmax;
      out.insert(out.end(), a.data(), a.data() + a.size());
    }
  }
  return out;
}

/// Compares analytic gradients of L = sum(weights .* output) against central
/// differences. `param_subset` restricts which parameter indices are perturbed
/// (empty: all of them); `image_subset` does the same for image entries.
inline Result check(const Network<double>& net, const ParamSet<double>& params,
                    const MatrixXd& image, const MatrixXd& extra, Mode mode, std::mt19937_64& rng,
                    const std::vector<Eigen::Index>& param_subset = {}, double h = 1e-5,
                    const std::vector<Eigen::Index>& image_subset = {}, bool skip_kinks = false) {
  std::normal_distribution<double> n01(0.0, 1.0);
  dprl::nn::ForwardCache<double> cache;
  const MatrixXd out = net.forward(params, image, extra, mode, &cache);
  MatrixXd weights(out.rows(), out.cols());
  for (Eigen::Index i = 0; i < weights.size(); ++i) weights.data()[i] = n01(rng);
  const auto g = net.backward(params, cache, weights, {true, image.size() > 0});
  const double floor = kRelativeFloor * std::max(1.0, std::abs(out.cwiseProduct(weights).sum()));

  // With skip_kinks, `smooth` is cleared when the two sides of a central
  // difference fall in different smooth pieces; such entries are not compared.
  bool smooth = true;
  std::vector<int> side_pattern;
  bool first_side = true;
  auto loss = [&](const ParamSet<double>& p, const MatrixXd& img, const MatrixXd& ex) {
    if (!skip_kinks) return net.forward(p, img, ex, mode).cwiseProduct(weights).sum();
    dprl::nn::ForwardCache<double> c;
    const double v = net.forward(p, img, ex, mode, &c).cwiseProduct(weights).sum();
    auto pat = activation_pattern(net, c);
    if (first_side) {
      side_pattern = std::move(pat);
    } else if (pat != side_pattern) {
      smooth = false;
    }
    first_side = !first_side;
    return v;
  };
  Result r;

  std::vector<Eigen::Index> idx = param_subset;
  if (idx.empty()) {
    for (Eigen::Index i = 0; i < params.values.size(); ++i) idx.push_back(i);
  }
  VectorXd analytic(static_cast<Eigen::Index>(idx.size()));
  VectorXd numeric(analytic.size());
  ParamSet<double> p = params;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Eigen::Index i = idx[k];
    const double orig = p.values[i];
    smooth = true;
    p.values[i] = orig + h;
    const double fp = loss(p, image, extra);
    p.values[i] = orig - h;
    const double fm = loss(p, image, extra);
    p.values[i] = orig;
    numeric[static_cast<Eigen::Index>(k)] = (fp - fm) / (2.0 * h);
    analytic[static_cast<Eigen::Index>(k)] = g.params[i];
    if (!smooth) {
      numeric[static_cast<Eigen::Index>(k)] = analytic[static_cast<Eigen::Index>(k)];
      ++r.skipped;
    }
  }
  r.params = oracle::max_relative_error(analytic, numeric, floor);
  r.checked = static_cast<long>(idx.size());

  if (image.size() > 0) {
    std::vector<Eigen::Index> pix = image_subset;
    if (pix.empty()) {
      for (Eigen::Index i = 0; i < image.size(); ++i) pix.push_back(i);
    }
    VectorXd a(static_cast<Eigen::Index>(pix.size()));
    VectorXd num(a.size());
    MatrixXd img = image;
    for (std::size_t k = 0; k < pix.size(); ++k) {
      const Eigen::Index i = pix[k];
      const double orig = img.data()[i];
      smooth = true;
      img.data()[i] = orig + h;
      const double fp = loss(params, img, extra);
      img.data()[i] = orig - h;
      const double fm = loss(params, img, extra);
      img.data()[i] = orig;
      num[static_cast<Eigen::Index>(k)] = (fp - fm) / (2.0 * h);
      a[static_cast<Eigen::Index>(k)] = g.image.data()[i];
      if (!smooth) {
        num[static_cast<Eigen::Index>(k)] = a[static_cast<Eigen::Index>(k)];
        ++r.skipped;
      }
    }
    r.image = oracle::max_relative_error(a, num, floor);
  }
  if (extra.size() > 0) {
    const VectorXd flat = Eigen::Map<const VectorXd>(extra.data(), extra.size());
    const VectorXd num = oracle::central_difference(
        [&](const VectorXd& v) {
          return loss(params, image, Eigen::Map<const MatrixXd>(v.data(), extra.rows(), extra.cols()));
        },
        flat, h);
    r.extra = oracle::max_relative_error(Eigen::Map<const VectorXd>(g.extra.data(), g.extra.size()), num, floor);
  }
  return r;
}

inline MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                              double scale = 1.0) {
  std::normal_distribution<double> n01(0.0, scale);
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
  return m;
}

/// Randomizes every parameter (including BatchNorm affine terms and running stats).
inline void perturb(ParamSet<double>& p, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 0.3);
  for (Eigen::Index i = 0; i < p.values.size(); ++i) p.values[i] += n01(rng);
  std::uniform_real_distribution<double> pos(0.5, 1.5);
  for (Eigen::Index i = 0; i < p.buffers.size(); ++i) p.buffers[i] = pos(rng);
}

}  // namespace gradcheck
