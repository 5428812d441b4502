#include "dprl/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace dprl {

std::uint8_t encode_depth(double meters, double d_max) {
  const double unit = std::clamp(meters / d_max, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(unit * 255.0));
}

double decode_depth(std::uint8_t code, double d_max) { return code / 255.0 * d_max; }

double CameraModel::focal_px() const {
  return 0.5 * kDepthCols / std::tan(0.5 * horizontal_fov);
}

std::optional<double> intersect_cylinder(const Cylinder& c, const Eigen::Vector3d& origin,
                                         const Eigen::Vector3d& dir, double t_max) {
  const Eigen::Vector2d rel = origin.head<2>() - c.center_xy;
  const double r2 = c.radius * c.radius;
  const bool inside_xy = rel.squaredNorm() <= r2;
  if (inside_xy && origin.z() >= 0.0 && origin.z() <= c.height) return 0.0;

  std::optional<double> best;
  auto consider = [&](double t) {
    if (t >= 0.0 && t <= t_max && (!best || t < *best)) best = t;
  };

  // Lateral wall: entry root of |rel + t d_xy|^2 = r^2.
  const Eigen::Vector2d dxy = dir.head<2>();
  const double a = dxy.squaredNorm();
  if (a > 0.0 && !inside_xy) {
    const double b = rel.dot(dxy);
    const double disc = b * b - a * (rel.squaredNorm() - r2);
    if (disc >= 0.0) {
      const double t = (-b - std::sqrt(disc)) / a;
      const double z = origin.z() + t * dir.z();
      if (z >= 0.0 && z <= c.height) consider(t);
    }
  }
  // Caps.
  if (dir.z() != 0.0) {
    for (const double plane : {0.0, c.height}) {
      const double t = (plane - origin.z()) / dir.z();
      if (t < 0.0) continue;
      if ((rel + t * dxy).squaredNorm() <= r2) consider(t);
    }
  }
  return best;
}

double cast_ray(const ObstacleField& field, const Eigen::Vector3d& origin,
                const Eigen::Vector3d& dir, double d_max) {
  double best = d_max;
  for (const auto& c : field.cylinders) {
    if (auto t = intersect_cylinder(c, origin, dir, best)) best = std::min(best, *t);
  }
  return best;
}

Eigen::Vector3d pixel_ray(const CameraModel& cam, double yaw, int row, int col) {
  const double f = cam.focal_px();
  const double x = (col + 0.5 - 0.5 * kDepthCols) / f;
  const double y = (row + 0.5 - 0.5 * kDepthRows) / f;
  const Eigen::Vector3d forward(std::cos(yaw), std::sin(yaw), 0.0);
  const Eigen::Vector3d right(std::sin(yaw), -std::cos(yaw), 0.0);
  const Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
  return (forward + x * right - y * up).normalized();
}

DepthImage render_depth(const ObstacleField& field, const VehicleState& pose,
                        const CameraModel& cam) {
  DepthImage img;
  // Only cylinders within sensing range and the horizontal field of view can produce hits.
  ObstacleField visible;
  const double half_fov = 0.5 * cam.horizontal_fov;
  for (const auto& c : field.cylinders) {
    if (distance_to_cylinder(c, pose.position) >= cam.d_max) continue;
    const Eigen::Vector2d rel = c.center_xy - pose.position.head<2>();
    const double dist = rel.norm();
    if (dist > c.radius + 1e-9) {
      const double off = std::abs(wrap_angle(std::atan2(rel.y(), rel.x()) - pose.yaw));
      if (off - std::asin(c.radius / dist) > half_fov + 1e-6) continue;
    }
    visible.cylinders.push_back(c);
  }
  if (visible.cylinders.empty()) return img;
  for (int row = 0; row < kDepthRows; ++row) {
    for (int col = 0; col < kDepthCols; ++col) {
      const double d = cast_ray(visible, pose.position, pixel_ray(cam, pose.yaw, row, col), cam.d_max);
      img.codes(row, col) = encode_depth(d, cam.d_max);
    }
  }
  return img;
}

SelfState make_self_state(const VehicleState& vehicle, const Eigen::Vector3d& goal) {
  SelfState s;
  const Eigen::Vector3d d = goal - vehicle.position;
  const double bearing = std::atan2(d.y(), d.x());
  s.values << d, vehicle.velocity, wrap_angle(bearing - vehicle.yaw), vehicle.yaw_rate;
  return s;
}

Observation observe(const ObstacleField& field, const VehicleState& vehicle,
                    const Eigen::Vector3d& goal, const CameraModel& cam) {
  return Observation{render_depth(field, vehicle, cam), make_self_state(vehicle, goal), true};
}

double min_image_depth(const DepthImage& img, double d_max) {
  return decode_depth(img.codes.minCoeff(), d_max);
}

void write_pgm(std::ostream& os, const DepthImage& img) {
  os << "P5\n" << img.codes.cols() << ' ' << img.codes.rows() << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.codes.data()),
           static_cast<std::streamsize>(img.codes.size()));
}

}  // namespace dprl
