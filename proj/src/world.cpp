#include "dprl/world.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "dprl/rng.hpp"

namespace dprl {

namespace {

constexpr int kAttemptsPerCylinder = 10000;

bool respects_clearance(const FieldSpec& spec, const Eigen::Vector2d& c) {
  const double keep_out = spec.radius + spec.clearance;
  if ((c - spec.start_xy).norm() < keep_out) return false;
  if (spec.goal_ring_radius > 0.0 &&
      std::abs((c - spec.start_xy).norm() - spec.goal_ring_radius) < keep_out) {
    return false;
  }
  return true;
}

}  // namespace

ObstacleField generate_field(std::uint64_t seed, const FieldSpec& spec) {
  if (spec.count < 0) throw InfeasibleFieldSpec("obstacle count must be non-negative");
  if (spec.clearance < 0.0) throw InfeasibleFieldSpec("clearance must be non-negative");
  if (!(spec.disc_radius > 0.0)) throw InfeasibleFieldSpec("disc radius must be positive");
  if (spec.count > 0 && !(spec.radius > 0.0 && spec.height > 0.0)) {
    throw InfeasibleFieldSpec("cylinder radius and height must be positive");
  }

  ObstacleField field;
  field.bounds = spec.bounds;
  field.seed = seed;
  if (spec.count == 0) return field;

  // Centers must keep the whole footprint inside the spawn disc.
  const double center_radius = spec.disc_radius - spec.radius;
  if (center_radius < 0.0) {
    throw InfeasibleFieldSpec("cylinder radius exceeds spawn disc radius");
  }

  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  field.cylinders.reserve(static_cast<std::size_t>(spec.count));
  const long budget = static_cast<long>(spec.count) * kAttemptsPerCylinder;
  long attempts = 0;
  while (static_cast<int>(field.cylinders.size()) < spec.count) {
    if (++attempts > budget) {
      std::ostringstream msg;
      msg << "placed only " << field.cylinders.size() << " of " << spec.count
          << " cylinders after " << budget << " attempts; clearance constraints leave no room";
      throw InfeasibleFieldSpec(msg.str());
    }
    // Area-uniform sample over the disc of admissible centers.
    const double rho = center_radius * std::sqrt(unit(rng));
    const double phi = 2.0 * std::numbers::pi * unit(rng);
    const Eigen::Vector2d c(rho * std::cos(phi), rho * std::sin(phi));
    if (!respects_clearance(spec, c)) continue;
    field.cylinders.push_back(Cylinder{c, spec.radius, spec.height});
  }
  return field;
}

double distance_to_cylinder(const Cylinder& c, const Eigen::Vector3d& p) {
  const double radial = std::max((p.head<2>() - c.center_xy).norm() - c.radius, 0.0);
  const double vertical = std::max({-p.z(), p.z() - c.height, 0.0});
  return std::hypot(radial, vertical);
}

double distance_to_nearest_obstacle(const ObstacleField& field, const Eigen::Vector3d& p,
                                    double d_max) {
  double best = d_max;
  for (const auto& c : field.cylinders) best = std::min(best, distance_to_cylinder(c, p));
  return best;
}

bool in_bounds(const Bounds& bounds, const Eigen::Vector3d& p) {
  return bounds.x.contains(p.x()) && bounds.y.contains(p.y()) && bounds.z.contains(p.z());
}

void write_field(std::ostream& os, const ObstacleField& field) {
  const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
  const auto& b = field.bounds;
  os << "bounds " << b.x.lo << ' ' << b.x.hi << ' ' << b.y.lo << ' ' << b.y.hi << ' ' << b.z.lo
     << ' ' << b.z.hi << '\n';
  for (const auto& c : field.cylinders) {
    os << c.center_xy.x() << ' ' << c.center_xy.y() << ' ' << c.radius << ' ' << c.height << '\n';
  }
  os.precision(old_precision);
}

ObstacleField read_field(std::istream& is) {
  ObstacleField field;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    if (!have_header) {
      std::string tag;
      auto& b = field.bounds;
      if (!(ls >> tag >> b.x.lo >> b.x.hi >> b.y.lo >> b.y.hi >> b.z.lo >> b.z.hi) ||
          tag != "bounds") {
        throw FieldFormatError("line " + std::to_string(line_no) +
                               ": expected `bounds x0 x1 y0 y1 z0 z1`");
      }
      if (b.x.lo > b.x.hi || b.y.lo > b.y.hi || b.z.lo > b.z.hi) {
        throw FieldFormatError("line " + std::to_string(line_no) + ": empty bounds interval");
      }
      have_header = true;
      continue;
    }
    Cylinder c;
    double cx = 0.0;
    double cy = 0.0;
    if (!(ls >> cx >> cy >> c.radius >> c.height)) {
      throw FieldFormatError("line " + std::to_string(line_no) + ": expected `cx cy r h`");
    }
    std::string extra;
    if (ls >> extra) {
      throw FieldFormatError("line " + std::to_string(line_no) + ": trailing token `" + extra + "`");
    }
    if (!(c.radius > 0.0 && c.height > 0.0)) {
      throw FieldFormatError("line " + std::to_string(line_no) + ": radius and height must be > 0");
    }
    c.center_xy = {cx, cy};
    field.cylinders.push_back(c);
  }
  if (!have_header) throw FieldFormatError("missing bounds header");
  return field;
}

std::string field_to_string(const ObstacleField& field) {
  std::ostringstream os;
  write_field(os, field);
  return os.str();
}

}  // namespace dprl
