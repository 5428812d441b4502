#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dprl {

/// Vertical solid cylinder standing on the ground plane (z = 0).
struct Cylinder {
  Eigen::Vector2d center_xy = Eigen::Vector2d::Zero();
  double radius = 2.5;
  double height = 15.0;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct Bounds {
  Interval x{-85.0, 85.0};
  Interval y{-85.0, 85.0};
  Interval z{0.2, 15.0};
};

/// Parameters of the procedural obstacle layout.
struct FieldSpec {
  int count = 70;
  double radius = 2.5;
  double height = 15.0;
  double disc_radius = 60.0;
  double clearance = 5.0;
  Eigen::Vector2d start_xy = Eigen::Vector2d::Zero();
  double goal_ring_radius = 65.0;
  Bounds bounds{};
};

struct ObstacleField {
  std::vector<Cylinder> cylinders;
  Bounds bounds{};
  std::uint64_t seed = 0;
};

class InfeasibleFieldSpec : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FieldFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniform placement over the spawn disc with rejection against the start
/// clearance disc and the goal-ring clearance band. Deterministic in (seed, spec).
/// Throws InfeasibleFieldSpec when the attempt budget is exhausted.
ObstacleField generate_field(std::uint64_t seed, const FieldSpec& spec);

/// Distance from p to the nearest solid cylinder (0 inside one), capped at d_max.
double distance_to_nearest_obstacle(const ObstacleField& field, const Eigen::Vector3d& p,
                                    double d_max = 20.0);

/// Distance from p to a single solid cylinder (0 inside).
double distance_to_cylinder(const Cylinder& c, const Eigen::Vector3d& p);

bool in_bounds(const Bounds& bounds, const Eigen::Vector3d& p);

// Text format: `bounds x0 x1 y0 y1 z0 z1` followed by one `cx cy r h` line per cylinder.
void write_field(std::ostream& os, const ObstacleField& field);
ObstacleField read_field(std::istream& is);
std::string field_to_string(const ObstacleField& field);

}  // namespace dprl
