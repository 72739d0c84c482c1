#include "morph/esdf_map.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numbers>
#include <ostream>

namespace morph {

bool obstacle_contains(const Obstacle& obstacle, const Vec3& p) {
  return std::visit([&](const auto& shape) { return shape.contains(p); }, obstacle);
}

OutOfMapError::OutOfMapError(const Vec3& point)
    : std::out_of_range(fmt::format("query point ({:.6f}, {:.6f}, {:.6f}) is outside the map", point.x(), point.y(),
                                    point.z())),
      point_(point) {}

VoxelGrid::VoxelGrid(const Vec3& origin, double resolution, const Vec3i& dims)
    : origin_(origin), resolution_(resolution), dims_(dims) {
  if (!(resolution > 0.0)) throw std::invalid_argument("voxel resolution must be positive");
  if ((dims.array() < 1).any()) throw std::invalid_argument("voxel grid dims must be >= 1");
  occupancy_.assign(static_cast<std::size_t>(dims.x()) * dims.y() * dims.z(), 0);
}

void VoxelGrid::set_occupied(int i, int j, int k, bool value) {
  if (!in_range(i, j, k)) throw std::out_of_range("voxel index outside grid");
  occupancy_[linear_index(i, j, k)] = value ? 1 : 0;
}

std::size_t VoxelGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count(occupancy_.begin(), occupancy_.end(), std::uint8_t{1}));
}

Vec3 VoxelGrid::voxel_center(int i, int j, int k) const {
  return origin_ + (Vec3(i, j, k).array() + 0.5).matrix() * resolution_;
}

bool VoxelGrid::inside(const Vec3& p) const {
  const Vec3 hi = upper();
  return (p.array() >= origin_.array()).all() && (p.array() <= hi.array()).all();
}

VoxelGrid build_grid(const std::vector<Obstacle>& obstacles, const AxisBox& bounds, double resolution) {
  if (!(resolution > 0.0)) throw std::invalid_argument("resolution must be positive");
  const Vec3 extent = bounds.max - bounds.min;
  if ((extent.array() <= 0.0).any()) throw std::invalid_argument("map bounds must have positive extent");
  Vec3i dims;
  for (int a = 0; a < 3; ++a) {
    // Tolerate representation error when the extent is a multiple of resolution.
    dims[a] = std::max(1, static_cast<int>(std::ceil(extent[a] / resolution - 1e-9)));
  }
  VoxelGrid grid(bounds.min, resolution, dims);
  for (int k = 0; k < dims.z(); ++k) {
    for (int j = 0; j < dims.y(); ++j) {
      for (int i = 0; i < dims.x(); ++i) {
        const Vec3 c = grid.voxel_center(i, j, k);
        for (const auto& obstacle : obstacles) {
          if (obstacle_contains(obstacle, c)) {
            grid.set_occupied(i, j, k, true);
            break;
          }
        }
      }
    }
  }
  return grid;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Exact 1-D squared distance transform (lower envelope of parabolas) along a
// strided line. Infinite entries are skipped so the envelope only spans seeds.
struct LineScratch {
  std::vector<double> f, d;
  std::vector<int> v;
  std::vector<double> z;
  void resize(int n) {
    f.resize(n);
    d.resize(n);
    v.resize(n);
    z.resize(n + 1);
  }
};

void transform_line(double* data, int n, std::size_t stride, LineScratch& s) {
  for (int q = 0; q < n; ++q) s.f[q] = data[q * stride];
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (s.f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      s.v[0] = q;
      s.z[0] = -kInf;
      s.z[1] = kInf;
      continue;
    }
    const auto intersect = [&](int a, int b) {
      return ((s.f[a] + double(a) * a) - (s.f[b] + double(b) * b)) / (2.0 * a - 2.0 * b);
    };
    double sep = intersect(q, s.v[k]);
    while (sep <= s.z[k]) {
      --k;
      sep = intersect(q, s.v[k]);
    }
    ++k;
    s.v[k] = q;
    s.z[k] = sep;
    s.z[k + 1] = kInf;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) data[q * stride] = kInf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (s.z[j + 1] < q) ++j;
    const double dq = double(q - s.v[j]);
    s.d[q] = dq * dq + s.f[s.v[j]];
  }
  for (int q = 0; q < n; ++q) data[q * stride] = s.d[q];
}

// Squared voxel-unit distance to the nearest seed voxel, for every voxel.
template <bool Parallel>
void squared_transform(std::vector<double>& sq, const Vec3i& dims) {
  const int nx = dims.x(), ny = dims.y(), nz = dims.z();
  const std::size_t sx = 1, sy = static_cast<std::size_t>(nx), sz = static_cast<std::size_t>(nx) * ny;

#pragma omp parallel if (Parallel)
  {
    LineScratch s;
    s.resize(std::max({nx, ny, nz}));
#pragma omp for collapse(2) schedule(static)
    for (int k = 0; k < nz; ++k)
      for (int j = 0; j < ny; ++j) transform_line(sq.data() + j * sy + k * sz, nx, sx, s);
#pragma omp for collapse(2) schedule(static)
    for (int k = 0; k < nz; ++k)
      for (int i = 0; i < nx; ++i) transform_line(sq.data() + i * sx + k * sz, ny, sy, s);
#pragma omp for collapse(2) schedule(static)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) transform_line(sq.data() + i * sx + j * sy, nz, sz, s);
  }
}

template <bool Parallel>
EsdfField compute_esdf_impl(const VoxelGrid& grid, double truncation) {
  if (!(truncation > 0.0)) throw std::invalid_argument("truncation must be positive");
  const std::size_t n = grid.size();
  const Vec3i& dims = grid.dims();
  std::vector<double> outside(n), inside(n);
  for (int k = 0; k < dims.z(); ++k)
    for (int j = 0; j < dims.y(); ++j)
      for (int i = 0; i < dims.x(); ++i) {
        const std::size_t idx = grid.linear_index(i, j, k);
        const bool occ = grid.occupied(i, j, k);
        outside[idx] = occ ? 0.0 : kInf;
        inside[idx] = occ ? kInf : 0.0;
      }
  squared_transform<Parallel>(outside, dims);
  squared_transform<Parallel>(inside, dims);

  const double res = grid.resolution();
  std::vector<double> dist(n);
#pragma omp parallel for if (Parallel) schedule(static)
  for (std::ptrdiff_t idx = 0; idx < static_cast<std::ptrdiff_t>(n); ++idx) {
    if (inside[idx] == 0.0) {
      dist[idx] = std::min(truncation, std::sqrt(outside[idx]) * res);
    } else {
      dist[idx] = std::max(-truncation, -(std::sqrt(inside[idx]) * res - res));
    }
  }
  return EsdfField(grid, std::move(dist), truncation);
}

struct AxisWeights {
  int i0, i1;
  double frac;
  double dfrac;  // d frac / d p (0 when clamped or degenerate)
};

AxisWeights axis_weights(double p, double origin, double res, int n) {
  if (n == 1) return {0, 0, 0.0, 0.0};
  double u = (p - origin) / res - 0.5;
  // Voxel centers land a few ulps off the integer; snap so they read back exactly.
  if (std::abs(u - std::round(u)) < 1e-9) u = std::round(u);
  const double hi = double(n - 1);
  const bool clamped = (u < 0.0) || (u > hi);
  const double cu = std::clamp(u, 0.0, hi);
  int i0 = static_cast<int>(std::ceil(cu)) - 1;
  i0 = std::clamp(i0, 0, n - 2);
  return {i0, i0 + 1, cu - i0, clamped ? 0.0 : 1.0 / res};
}

}  // namespace

EsdfField::EsdfField(VoxelGrid grid, std::vector<double> distance, double truncation)
    : grid_(std::move(grid)), distance_(std::move(distance)), truncation_(truncation) {
  if (distance_.size() != grid_.size()) throw std::invalid_argument("distance buffer size mismatch");
}

double EsdfField::distance_and_gradient(const Vec3& p, Vec3* grad) const {
  if (!grid_.inside(p)) throw OutOfMapError(p);
  const Vec3i& n = grid_.dims();
  const AxisWeights wx = axis_weights(p.x(), grid_.origin().x(), grid_.resolution(), n.x());
  const AxisWeights wy = axis_weights(p.y(), grid_.origin().y(), grid_.resolution(), n.y());
  const AxisWeights wz = axis_weights(p.z(), grid_.origin().z(), grid_.resolution(), n.z());

  const double c000 = voxel_distance(wx.i0, wy.i0, wz.i0), c100 = voxel_distance(wx.i1, wy.i0, wz.i0);
  const double c010 = voxel_distance(wx.i0, wy.i1, wz.i0), c110 = voxel_distance(wx.i1, wy.i1, wz.i0);
  const double c001 = voxel_distance(wx.i0, wy.i0, wz.i1), c101 = voxel_distance(wx.i1, wy.i0, wz.i1);
  const double c011 = voxel_distance(wx.i0, wy.i1, wz.i1), c111 = voxel_distance(wx.i1, wy.i1, wz.i1);

  const double fx = wx.frac, fy = wy.frac, fz = wz.frac;
  const double c00 = std::lerp(c000, c100, fx);
  const double c10 = std::lerp(c010, c110, fx);
  const double c01 = std::lerp(c001, c101, fx);
  const double c11 = std::lerp(c011, c111, fx);
  const double c0 = std::lerp(c00, c10, fy);
  const double c1 = std::lerp(c01, c11, fy);
  const double value = std::lerp(c0, c1, fz);

  if (grad != nullptr) {
    const double dx0 = (c100 - c000) + ((c110 - c010) - (c100 - c000)) * fy;
    const double dx1 = (c101 - c001) + ((c111 - c011) - (c101 - c001)) * fy;
    const double ddx = dx0 + (dx1 - dx0) * fz;
    const double ddy = (c10 - c00) + ((c11 - c01) - (c10 - c00)) * fz;
    const double ddz = c1 - c0;
    *grad = Vec3(ddx * wx.dfrac, ddy * wy.dfrac, ddz * wz.dfrac);
  }
  return value;
}

double EsdfField::distance(const Vec3& p) const { return distance_and_gradient(p, nullptr); }

Vec3 EsdfField::gradient(const Vec3& p) const {
  Vec3 g;
  distance_and_gradient(p, &g);
  return g;
}

double EsdfField::bounded_distance(const Vec3& p, Vec3* grad) const {
  const Vec3 lo = grid_.origin();
  const Vec3 hi = grid_.upper();
  const Vec3 clamped = p.cwiseMax(lo).cwiseMin(hi);
  Vec3 g_in;
  const double d_in = distance_and_gradient(clamped, &g_in);
  for (int a = 0; a < 3; ++a)
    if (clamped[a] != p[a]) g_in[a] = 0.0;

  double d_face;
  Vec3 g_face = Vec3::Zero();
  const Vec3 out = p - clamped;
  if (out.squaredNorm() > 0.0) {
    const double o = out.norm();
    d_face = -o;
    g_face = -out / o;
  } else {
    d_face = kInf;
    for (int a = 0; a < 3; ++a) {
      if (p[a] - lo[a] < d_face) {
        d_face = p[a] - lo[a];
        g_face = Vec3::Unit(a);
      }
      if (hi[a] - p[a] < d_face) {
        d_face = hi[a] - p[a];
        g_face = -Vec3::Unit(a);
      }
    }
  }
  if (d_face < d_in) {
    if (grad) *grad = g_face;
    return d_face;
  }
  if (grad) *grad = g_in;
  return d_in;
}

EsdfField compute_esdf(const VoxelGrid& grid, double truncation) { return compute_esdf_impl<true>(grid, truncation); }

EsdfField compute_esdf_serial(const VoxelGrid& grid, double truncation) {
  return compute_esdf_impl<false>(grid, truncation);
}

double query_distance(const EsdfField& field, const Vec3& point) { return field.distance(point); }

Vec3 query_gradient(const EsdfField& field, const Vec3& point) { return field.gradient(point); }

// ---------------------------------------------------------------------------

void BodyGeometry::validate() const {
  if (!(height > 0.0)) throw std::invalid_argument("body height must be positive");
  if (angular_samples < 3) throw std::invalid_argument("angular samples must be >= 3");
  if (axial_samples < 1) throw std::invalid_argument("axial samples must be >= 1");
  if (!(r_min > 0.0) || r_min > r_max) throw std::invalid_argument("radius bounds must satisfy 0 < r_min <= r_max");
  if (radius < r_min - 1e-12 || radius > r_max + 1e-12) throw std::invalid_argument("radius outside [r_min, r_max]");
}

double BodyGeometry::max_extent(double r) const {
  double e = std::hypot(r, 0.5 * height);
  for (const auto& a : attachments) e = std::max(e, a.norm());
  return e;
}

Vec3 lateral_direction(int o, int n_theta) {
  const double angle = 2.0 * std::numbers::pi * (double(o) / double(n_theta));
  return Vec3(std::cos(angle), std::sin(angle), 0.0);
}

Vec3 lateral_sample(double r, double h, int o, int n_theta, int l, int n_l) {
  const Vec3 dir = lateral_direction(o, n_theta);
  return Vec3(r * dir.x(), r * dir.y(), -0.5 * h + h * (double(l) / double(n_l)));
}

std::vector<Vec3> body_samples(const BodyGeometry& body, double r) {
  std::vector<Vec3> out;
  out.reserve(body.lateral_count() + body.attachments.size());
  for (int l = 0; l <= body.axial_samples; ++l)
    for (int o = 0; o < body.angular_samples; ++o)
      out.push_back(lateral_sample(r, body.height, o, body.angular_samples, l, body.axial_samples));
  out.insert(out.end(), body.attachments.begin(), body.attachments.end());
  return out;
}

Clearance body_clearance(const EsdfField& field, const Vec3& center, const Mat3& rotation, const BodyGeometry& body,
                         double radius) {
  Clearance best;
  best.distance = kInf;
  Vec3 best_grad = Vec3::Zero();
  Vec3 best_dir = Vec3::Zero();

  auto visit = [&](const Vec3& offset, const Vec3& radial_dir) {
    const Vec3 world = center + rotation * offset;
    if (!field.inside(world)) throw OutOfMapError(world);
    Vec3 g;
    const double d = field.distance_and_gradient(world, &g);
    if (d < best.distance) {
      best.distance = d;
      best.worst_point = world;
      best_grad = g;
      best_dir = radial_dir;
    }
  };
  for (int l = 0; l <= body.axial_samples; ++l) {
    for (int o = 0; o < body.angular_samples; ++o) {
      visit(lateral_sample(radius, body.height, o, body.angular_samples, l, body.axial_samples),
            lateral_direction(o, body.angular_samples));
    }
  }
  for (const auto& a : body.attachments) visit(a, Vec3::Zero());

  best.grad_position = best_grad;
  best.grad_radius = best_grad.dot(rotation * best_dir);
  return best;
}

bool clearance_at_least(const EsdfField& field, const Vec3& center, const BodyGeometry& body, double radius,
                        double margin) {
  const double extent = body.max_extent(radius);
  const Vec3 ext = Vec3::Constant(extent);
  const bool box_inside = field.inside(center - ext) && field.inside(center + ext);
  if (box_inside) {
    const double dc = field.distance(center);
    if (dc - kInterpolantLipschitz * extent >= margin) return true;
  }
  for (int l = 0; l <= body.axial_samples; ++l) {
    for (int o = 0; o < body.angular_samples; ++o) {
      const Vec3 w = center + lateral_sample(radius, body.height, o, body.angular_samples, l, body.axial_samples);
      if (!field.inside(w) || field.distance(w) < margin) return false;
    }
  }
  for (const auto& a : body.attachments) {
    const Vec3 w = center + a;
    if (!field.inside(w) || field.distance(w) < margin) return false;
  }
  return true;
}

void write_esdf_binary(const EsdfField& field, std::ostream& out) {
  const auto& g = field.grid();
  const std::int32_t dims[3] = {g.dims().x(), g.dims().y(), g.dims().z()};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  const double header[5] = {g.origin().x(), g.origin().y(), g.origin().z(), g.resolution(), field.truncation()};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(field.distances().data()),
            static_cast<std::streamsize>(field.distances().size() * sizeof(double)));
}

void write_esdf_csv(const EsdfField& field, std::ostream& out) {
  const auto& g = field.grid();
  out << "i,j,k,x,y,z,distance\n";
  for (int k = 0; k < g.dims().z(); ++k)
    for (int j = 0; j < g.dims().y(); ++j)
      for (int i = 0; i < g.dims().x(); ++i) {
        const Vec3 c = g.voxel_center(i, j, k);
        out << fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", i, j, k, c.x(), c.y(), c.z(),
                           field.voxel_distance(i, j, k));
      }
}

}  // namespace morph
