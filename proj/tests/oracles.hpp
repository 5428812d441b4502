#pragma once

// Independent brute-force references used by the unit and acceptance tests.
// Nothing here calls into the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include <Eigen/Core>

#include "dprl/world.hpp"

namespace oracle {

inline bool inside_solid(const dprl::Cylinder& c, const Eigen::Vector3d& p) {
  const double dx = p.x() - c.center_xy.x();
  const double dy = p.y() - c.center_xy.y();
  return dx * dx + dy * dy <= c.radius * c.radius && p.z() >= 0.0 && p.z() <= c.height;
}

/// Minimum distance to sampled surface points, refined by repeated local
/// resampling around the best sample of each surface patch.
inline double sampled_surface_distance(const dprl::Cylinder& c, const Eigen::Vector3d& p) {
  using Fn = std::function<Eigen::Vector3d(double, double)>;
  const double two_pi = 2.0 * std::numbers::pi;
  const Fn wall = [&](double theta, double z) {
    return Eigen::Vector3d(c.center_xy.x() + c.radius * std::cos(theta),
                           c.center_xy.y() + c.radius * std::sin(theta), z);
  };
  auto cap = [&](double height) {
    return Fn([&c, height](double theta, double rho) {
      return Eigen::Vector3d(c.center_xy.x() + rho * std::cos(theta),
                             c.center_xy.y() + rho * std::sin(theta), height);
    });
  };
  struct Patch {
    Fn f;
    double u_hi;
    double v_hi;
  };
  const Patch patches[3] = {{wall, two_pi, c.height}, {cap(c.height), two_pi, c.radius},
                            {cap(0.0), two_pi, c.radius}};
  double best = std::numeric_limits<double>::infinity();
  for (const auto& patch : patches) {
    double bu = 0.0;
    double bv = 0.0;
    double bd = std::numeric_limits<double>::infinity();
    const int n = 48;
    double du = patch.u_hi / n;
    double dv = patch.v_hi / n;
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; j <= n; ++j) {
        const double d = (patch.f(i * du, j * dv) - p).norm();
        if (d < bd) { bd = d; bu = i * du; bv = j * dv; }
      }
    }
    for (int round = 0; round < 14; ++round) {
      const double cu = bu;
      const double cv = bv;
      for (int i = -6; i <= 6; ++i) {
        for (int j = -6; j <= 6; ++j) {
          const double u = cu + i * du / 3.0;
          const double v = std::clamp(cv + j * dv / 3.0, 0.0, patch.v_hi);
          const double d = (patch.f(u, v) - p).norm();
          if (d < bd) { bd = d; bu = u; bv = v; }
        }
      }
      du /= 3.0;
      dv /= 3.0;
    }
    best = std::min(best, bd);
  }
  return best;
}

inline double field_distance(const dprl::ObstacleField& f, const Eigen::Vector3d& p, double cap) {
  double best = cap;
  for (const auto& c : f.cylinders) {
    best = std::min(best, inside_solid(c, p) ? 0.0 : sampled_surface_distance(c, p));
  }
  return best;
}

/// First sample along the ray that lies inside any cylinder, stepping `step` meters.
inline double march_ray(const dprl::ObstacleField& f, const Eigen::Vector3d& origin,
                        const Eigen::Vector3d& dir, double d_max, double step) {
  const auto n = static_cast<long>(std::ceil(d_max / step));
  for (long i = 0; i <= n; ++i) {
    const double t = std::min(i * step, d_max);
    const Eigen::Vector3d q = origin + t * dir;
    for (const auto& c : f.cylinders) {
      if (inside_solid(c, q)) return t;
    }
  }
  return d_max;
}

/// The continuous reward written out term by term.
inline double reward_straight_line(double d_t, double d_prev, double d_g, double d_l, double z,
                                   double z_g, double d_o, double eta_r, double eta_p,
                                   double eta_o, double d_c, double d_s) {
  auto clip = [](double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); };
  const double r_e = (d_prev - d_t) / d_g;
  const double p_p = std::fabs(clip(d_l / 10.0, 0.0, 1.0)) + 2.0 * std::fabs(clip((z - z_g) / 5.0, -1.0, 1.0));
  double p_o = 0.0;
  if (d_o < d_s) p_o = 1.0 - clip((d_o - d_c) / (d_s - d_c), 0.0, 1.0);
  return clip(eta_r * r_e - eta_p * p_p - eta_o * p_o, -1.0, 1.0);
}

/// Central finite-difference gradient of a scalar function of a vector.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          Eigen::VectorXd x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                 double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace oracle
