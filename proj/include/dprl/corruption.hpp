#pragma once

#include <stdexcept>

#include "dprl/rng.hpp"
#include "dprl/sensing.hpp"

namespace dprl {

/// Partial-observability model. Image parameters are in 8-bit code units,
/// state parameters in the units of each self-state component.
struct NoiseConfig {
  double p_sp = 0.005;
  double mu_g = 0.0;
  double sigma_g = 3.0;
  int k_mb = 5;
  double mu_s = 0.0;
  double sigma_s = 0.016;
  double state_clip = 3.0;  // in multiples of sigma_s

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;

  static NoiseConfig none() { return {0.0, 0.0, 0.0, 1, 0.0, 0.0, 3.0}; }
};

/// Images after each stage of the depth-noise ladder.
struct DepthCorruptionStages {
  DepthImage clean;
  DepthImage salt_pepper;
  DepthImage gaussian;
  DepthImage blurred;
};

DepthImage apply_salt_pepper(const DepthImage& img, double p, Rng& rng);
DepthImage apply_gaussian(const DepthImage& img, double mu, double sigma, Rng& rng);
/// Uniform 1-D kernel of odd length k, replicate padding; horizontal when `horizontal`.
DepthImage apply_motion_blur(const DepthImage& img, int k, bool horizontal);

/// Salt-and-pepper, then Gaussian, then motion blur along a random axis.
DepthCorruptionStages corrupt_depth_stages(const DepthImage& img, const NoiseConfig& cfg, Rng& rng);
DepthImage corrupt_depth(const DepthImage& img, const NoiseConfig& cfg, Rng& rng);

SelfState corrupt_state(const SelfState& s, const NoiseConfig& cfg, Rng& rng);

/// Corrupted copy of a privileged observation (privileged flag cleared).
Observation corrupt(const Observation& obs, const NoiseConfig& cfg, Rng& rng);

}  // namespace dprl
