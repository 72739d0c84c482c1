#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace morph {

using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;
using Mat3 = Eigen::Matrix3d;

struct AxisBox {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;

  bool contains(const Vec3& p) const { return (p - center).norm() <= radius; }
};

using Obstacle = std::variant<AxisBox, Sphere>;

bool obstacle_contains(const Obstacle& obstacle, const Vec3& p);

/// Thrown when a query point falls outside the voxelized volume.
class OutOfMapError : public std::out_of_range {
 public:
  explicit OutOfMapError(const Vec3& point);
  const Vec3& point() const { return point_; }

 private:
  Vec3 point_;
};

/// Axis-aligned occupancy grid. Voxel (i, j, k) has its center at
/// origin + (idx + 0.5) * resolution; storage is row-major x-fastest.
class VoxelGrid {
 public:
  VoxelGrid(const Vec3& origin, double resolution, const Vec3i& dims);

  const Vec3& origin() const { return origin_; }
  double resolution() const { return resolution_; }
  const Vec3i& dims() const { return dims_; }
  std::size_t size() const { return occupancy_.size(); }

  std::size_t linear_index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_.x()) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_.y()) * static_cast<std::size_t>(k));
  }
  bool in_range(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims_.x() && j < dims_.y() && k < dims_.z();
  }

  bool occupied(int i, int j, int k) const { return occupancy_[linear_index(i, j, k)] != 0; }
  void set_occupied(int i, int j, int k, bool value);
  std::size_t occupied_count() const;

  Vec3 voxel_center(int i, int j, int k) const;
  /// Upper corner of the voxelized volume.
  Vec3 upper() const { return origin_ + dims_.cast<double>() * resolution_; }
  bool inside(const Vec3& p) const;

 private:
  Vec3 origin_;
  double resolution_;
  Vec3i dims_;
  std::vector<std::uint8_t> occupancy_;
};

/// Voxel occupied iff its center lies inside any obstacle primitive.
VoxelGrid build_grid(const std::vector<Obstacle>& obstacles, const AxisBox& bounds, double resolution);

inline constexpr double kDefaultTruncation = 5.0;

/// Signed Euclidean distance field over a VoxelGrid.
///
/// Free voxels hold the distance from their center to the nearest occupied
/// voxel center. Occupied voxels hold -(d_free - resolution), where d_free is
/// the distance to the nearest free voxel center, so the boundary layer of an
/// obstacle reads exactly 0 and the field stays resolution-Lipschitz across
/// the surface. Magnitudes are capped at the truncation distance.
///
/// Immutable after construction; concurrent const queries are safe.
class EsdfField {
 public:
  EsdfField(VoxelGrid grid, std::vector<double> distance, double truncation);

  const VoxelGrid& grid() const { return grid_; }
  double truncation() const { return truncation_; }
  const std::vector<double>& distances() const { return distance_; }
  double voxel_distance(int i, int j, int k) const { return distance_[grid_.linear_index(i, j, k)]; }

  /// Trilinear interpolation of the surrounding voxel-center distances.
  double distance(const Vec3& p) const;
  /// Analytic gradient of the trilinear interpolant. On a cell face the
  /// lower (left) cell is used.
  Vec3 gradient(const Vec3& p) const;
  double distance_and_gradient(const Vec3& p, Vec3* grad) const;

  /// Distance with the volume boundary treated as an obstacle surface:
  /// min(distance(clamp(p)), signed distance from p to the bounds faces).
  /// Defined everywhere; used by penalty terms that must not throw.
  double bounded_distance(const Vec3& p, Vec3* grad) const;

  bool inside(const Vec3& p) const { return grid_.inside(p); }

 private:
  VoxelGrid grid_;
  std::vector<double> distance_;
  double truncation_;
};

/// Exact ESDF via three separable 1-D squared-distance lower-envelope passes.
/// The passes are parallelized over scanlines with OpenMP.
EsdfField compute_esdf(const VoxelGrid& grid, double truncation = kDefaultTruncation);
/// Single-threaded version of the same transform; reference for the parallel kernel.
EsdfField compute_esdf_serial(const VoxelGrid& grid, double truncation = kDefaultTruncation);

double query_distance(const EsdfField& field, const Vec3& point);
Vec3 query_gradient(const EsdfField& field, const Vec3& point);

// ---------------------------------------------------------------------------
// Whole-body clearance

/// Cylinder of radius r and height h sampled on its lateral surface, plus any
/// fixed body-frame attachment points (a grasped payload).
struct BodyGeometry {
  double radius = 0.211;
  double height = 0.1;
  int angular_samples = 16;
  int axial_samples = 2;
  std::vector<Vec3> attachments;
  double r_min = 0.131;
  double r_max = 0.211;

  void validate() const;
  /// Number of lateral samples: angular_samples * (axial_samples + 1).
  int lateral_count() const { return angular_samples * (axial_samples + 1); }
  /// Largest distance of any sample point from the body center at radius r.
  double max_extent(double r) const;
};

/// Body-frame lateral sample q_B for angular index o and axial index l.
Vec3 lateral_sample(double r, double h, int o, int n_theta, int l, int n_l);
/// Unit radial direction of lateral sample o (derivative of q_B wrt r).
Vec3 lateral_direction(int o, int n_theta);

/// All body-frame sample offsets at radius r (lateral then attachments).
std::vector<Vec3> body_samples(const BodyGeometry& body, double r);

struct Clearance {
  double distance = 0.0;
  Vec3 worst_point = Vec3::Zero();
  Vec3 grad_position = Vec3::Zero();
  double grad_radius = 0.0;
};

/// min over sampled surface points of distance(p + R q_B); gradient through
/// the active (minimizing) sample. Throws OutOfMapError for any sample outside.
Clearance body_clearance(const EsdfField& field, const Vec3& center, const Mat3& rotation, const BodyGeometry& body,
                         double radius);
inline Clearance body_clearance(const EsdfField& field, const Vec3& center, const Mat3& rotation,
                                const BodyGeometry& body) {
  return body_clearance(field, center, rotation, body, body.radius);
}

/// Upper bound on the Lipschitz constant of the trilinear interpolant, in m/m.
inline constexpr double kInterpolantLipschitz = 1.7320508075688772;

/// True iff body_clearance(...) >= margin. Skips the per-sample sweep when the
/// center distance already guarantees it. Out-of-map samples yield false.
bool clearance_at_least(const EsdfField& field, const Vec3& center, const BodyGeometry& body, double radius,
                        double margin);

/// Binary dump: int32 dims[3], float64 origin[3], resolution, truncation,
/// then float64 distances x-fastest.
void write_esdf_binary(const EsdfField& field, std::ostream& out);
/// CSV dump with header i,j,k,x,y,z,distance, x-fastest.
void write_esdf_csv(const EsdfField& field, std::ostream& out);

}  // namespace morph
