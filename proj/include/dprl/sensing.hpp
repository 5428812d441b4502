#pragma once

#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <optional>

#include <Eigen/Core>

#include "dprl/vehicle.hpp"
#include "dprl/world.hpp"

namespace dprl {

inline constexpr int kDepthRows = 80;
inline constexpr int kDepthCols = 100;
inline constexpr int kSelfStateDim = 8;

using DepthCodes = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 80x100 image of 8-bit depth codes; 255 means "at or beyond the sensing cap".
struct DepthImage {
  DepthCodes codes = DepthCodes::Constant(kDepthRows, kDepthCols, 255);

  friend bool operator==(const DepthImage& a, const DepthImage& b) { return a.codes == b.codes; }
};

std::uint8_t encode_depth(double meters, double d_max);
double decode_depth(std::uint8_t code, double d_max);

/// Goal-relative self-state: [d_x, d_y, d_z, v_x, v_y, v_z, heading_error, yaw_rate].
struct SelfState {
  Eigen::Matrix<double, kSelfStateDim, 1> values = Eigen::Matrix<double, kSelfStateDim, 1>::Zero();

  Eigen::Vector3d to_goal() const { return values.segment<3>(0); }
  Eigen::Vector3d velocity() const { return values.segment<3>(3); }
  double heading_error() const { return values[6]; }
  double yaw_rate() const { return values[7]; }

  friend bool operator==(const SelfState& a, const SelfState& b) { return a.values == b.values; }
};

struct Observation {
  DepthImage depth;
  SelfState state;
  bool privileged = true;
};

/// Forward-looking level pinhole camera mounted at the vehicle position.
struct CameraModel {
  double horizontal_fov = std::numbers::pi / 2.0;
  double d_max = 20.0;

  double focal_px() const;
};

/// Distance along a unit-direction ray to the first solid-cylinder hit, if any within t_max.
std::optional<double> intersect_cylinder(const Cylinder& c, const Eigen::Vector3d& origin,
                                         const Eigen::Vector3d& dir, double t_max);

/// Nearest hit over the field, capped at d_max.
double cast_ray(const ObstacleField& field, const Eigen::Vector3d& origin,
                const Eigen::Vector3d& dir, double d_max);

/// Unit world-frame direction of the ray through pixel (row, col) for a camera at `yaw`.
Eigen::Vector3d pixel_ray(const CameraModel& cam, double yaw, int row, int col);

DepthImage render_depth(const ObstacleField& field, const VehicleState& pose,
                        const CameraModel& cam = {});

SelfState make_self_state(const VehicleState& vehicle, const Eigen::Vector3d& goal);

/// Ground-truth observation; corruption is applied separately.
Observation observe(const ObstacleField& field, const VehicleState& vehicle,
                    const Eigen::Vector3d& goal, const CameraModel& cam = {});

/// Minimum decoded depth over the image (the non-privileged obstacle distance).
double min_image_depth(const DepthImage& img, double d_max);

/// Binary PGM (P5, maxval 255).
void write_pgm(std::ostream& os, const DepthImage& img);

}  // namespace dprl
