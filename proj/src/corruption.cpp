#include "dprl/corruption.hpp"

#include <algorithm>
#include <cmath>

namespace dprl {

namespace {

std::uint8_t to_code(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

}  // namespace

void NoiseConfig::validate() const {
  if (!(p_sp >= 0.0 && p_sp <= 1.0)) throw std::invalid_argument("noise.p_sp must lie in [0, 1]");
  if (!(sigma_g >= 0.0)) throw std::invalid_argument("noise.sigma_g must be >= 0");
  if (k_mb < 1 || k_mb % 2 == 0) throw std::invalid_argument("noise.k_mb must be odd and >= 1");
  if (!(sigma_s >= 0.0)) throw std::invalid_argument("noise.sigma_s must be >= 0");
  if (!(state_clip >= 0.0)) throw std::invalid_argument("noise.state_clip must be >= 0");
}

DepthImage apply_salt_pepper(const DepthImage& img, double p, Rng& rng) {
  DepthImage out = img;
  if (p <= 0.0) return out;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < out.codes.size(); ++i) {
    if (unit(rng) < p) out.codes.data()[i] = unit(rng) < 0.5 ? 0 : 255;
  }
  return out;
}

DepthImage apply_gaussian(const DepthImage& img, double mu, double sigma, Rng& rng) {
  DepthImage out = img;
  if (sigma <= 0.0 && mu == 0.0) return out;
  std::normal_distribution<double> noise(mu, sigma > 0.0 ? sigma : 0.0);
  for (Eigen::Index i = 0; i < out.codes.size(); ++i) {
    const double shift = sigma > 0.0 ? noise(rng) : mu;
    out.codes.data()[i] = to_code(out.codes.data()[i] + shift);
  }
  return out;
}

DepthImage apply_motion_blur(const DepthImage& img, int k, bool horizontal) {
  if (k <= 1) return img;
  const int half = k / 2;
  const int rows = static_cast<int>(img.codes.rows());
  const int cols = static_cast<int>(img.codes.cols());
  DepthImage out = img;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      int sum = 0;
      for (int o = -half; o <= half; ++o) {
        const int rr = horizontal ? r : std::clamp(r + o, 0, rows - 1);
        const int cc = horizontal ? std::clamp(c + o, 0, cols - 1) : c;
        sum += img.codes(rr, cc);
      }
      out.codes(r, c) = to_code(static_cast<double>(sum) / k);
    }
  }
  return out;
}

DepthCorruptionStages corrupt_depth_stages(const DepthImage& img, const NoiseConfig& cfg,
                                           Rng& rng) {
  DepthCorruptionStages st;
  st.clean = img;
  st.salt_pepper = apply_salt_pepper(img, cfg.p_sp, rng);
  st.gaussian = apply_gaussian(st.salt_pepper, cfg.mu_g, cfg.sigma_g, rng);
  bool horizontal = true;
  if (cfg.k_mb > 1) horizontal = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
  st.blurred = apply_motion_blur(st.gaussian, cfg.k_mb, horizontal);
  return st;
}

DepthImage corrupt_depth(const DepthImage& img, const NoiseConfig& cfg, Rng& rng) {
  return corrupt_depth_stages(img, cfg, rng).blurred;
}

SelfState corrupt_state(const SelfState& s, const NoiseConfig& cfg, Rng& rng) {
  SelfState out = s;
  if (cfg.sigma_s <= 0.0 && cfg.mu_s == 0.0) return out;
  const double bound = cfg.state_clip * cfg.sigma_s;
  std::normal_distribution<double> noise(cfg.mu_s, cfg.sigma_s > 0.0 ? cfg.sigma_s : 0.0);
  for (int i = 0; i < kSelfStateDim; ++i) {
    const double draw = cfg.sigma_s > 0.0 ? noise(rng) : cfg.mu_s;
    out.values[i] += std::clamp(draw, -bound, bound);
  }
  out.values[6] = wrap_angle(out.values[6]);
  return out;
}

Observation corrupt(const Observation& obs, const NoiseConfig& cfg, Rng& rng) {
  Observation out;
  out.depth = corrupt_depth(obs.depth, cfg, rng);
  out.state = corrupt_state(obs.state, cfg, rng);
  out.privileged = false;
  return out;
}

}  // namespace dprl
