#include "morph/kinodynamic_search.hpp"

#include "morph/log.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <queue>
#include <unordered_map>
#include <unordered_set>

namespace morph {

PlanState PlanState::from4(const Vec4& pos, const Vec4& vel) {
  PlanState s;
  s.p = pos.head<3>();
  s.r = pos[3];
  s.v = vel.head<3>();
  s.v_r = vel[3];
  return s;
}

void SearchConfig::validate() const {
  if ((u_max.array() < 0.0).any()) throw std::invalid_argument("u_max must be non-negative");
  if (!(dt_min > 0.0) || dt_min > dt_max) throw std::invalid_argument("need 0 < dt_min <= dt_max");
  if (input_samples < 1 || input_samples % 2 == 0) throw std::invalid_argument("input_samples must be odd");
  if (duration_samples < 1) throw std::invalid_argument("duration_samples must be >= 1");
  if (!(v_max > 0.0) || !(omega_max >= 0.0)) throw std::invalid_argument("velocity bounds must be positive");
  if (margin < 0.0 || a < 0.0 || w_t < 0.0) throw std::invalid_argument("margin and weights must be >= 0");
  if (!(r_min > 0.0) || r_min > r_max) throw std::invalid_argument("need 0 < r_min <= r_max");
  if (!(position_resolution > 0.0) || !(radius_resolution > 0.0))
    throw std::invalid_argument("state-grid resolutions must be positive");
  if (node_budget < 1) throw std::invalid_argument("node budget must be positive");
}

const char* to_string(SearchFailure failure) {
  switch (failure) {
    case SearchFailure::kNoPath:
      return "NoPath";
    case SearchFailure::kNodeBudgetExceeded:
      return "NodeBudgetExceeded";
    case SearchFailure::kInvalidStart:
      return "InvalidStart";
    case SearchFailure::kInvalidGoal:
      return "InvalidGoal";
  }
  return "Unknown";
}

PlanState propagate(const PlanState& state, const Vec4& u, double dt) {
  const Vec4 x = state.position4();
  const Vec4 v = state.velocity4();
  return PlanState::from4(x + v * dt + 0.5 * u * dt * dt, v + u * dt);
}

double primitive_cost(const Vec4& u, double r_end, double dt, const SearchConfig& config) {
  const double shrink = (r_end - config.r_max) / config.r_max;
  return u.squaredNorm() * dt + config.a * shrink * shrink * dt + config.w_t * dt;
}

namespace {

bool within_bounds(const PlanState& s, const SearchConfig& c) {
  constexpr double eps = 1e-12;
  return s.r >= c.r_min - eps && s.r <= c.r_max + eps && s.v.norm() <= c.v_max + eps &&
         std::abs(s.v_r) <= c.omega_max + eps;
}

}  // namespace

bool is_valid(const PlanState& state, const EsdfField& field, const BodyGeometry& body, const SearchConfig& config) {
  if (!within_bounds(state, config)) return false;
  return clearance_at_least(field, state.p, body, state.r, config.margin);
}

// ---------------------------------------------------------------------------
// Heuristic

namespace {

struct ConnectionPoly {
  double c3 = 0.0, c2 = 0.0, c1 = 0.0;  // f(T) = c3/T^3 + c2/T^2 + c1/T + w T
  double w = 0.0;
  double value(double t) const { return c3 / (t * t * t) + c2 / (t * t) + c1 / t + w * t; }
};

ConnectionPoly connection_poly(const PlanState& s, const PlanState& g, double w) {
  const Vec4 d = g.position4() - s.position4();
  const Vec4 v0 = s.velocity4();
  const Vec4 v1 = g.velocity4();
  ConnectionPoly poly;
  poly.w = w;
  for (int a = 0; a < 4; ++a) {
    poly.c3 += 12.0 * d[a] * d[a];
    poly.c2 += -12.0 * d[a] * (v0[a] + v1[a]);
    poly.c1 += 4.0 * (v0[a] * v0[a] + v0[a] * v1[a] + v1[a] * v1[a]);
  }
  return poly;
}

// Positive real roots of w T^4 - c1 T^2 - 2 c2 T - 3 c3 = 0.
std::vector<double> stationary_times(const ConnectionPoly& poly) {
  Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
  // Monic form: T^4 + 0 T^3 + a2 T^2 + a1 T + a0.
  const double a2 = -poly.c1 / poly.w, a1 = -2.0 * poly.c2 / poly.w, a0 = -3.0 * poly.c3 / poly.w;
  companion(1, 0) = 1.0;
  companion(2, 1) = 1.0;
  companion(3, 2) = 1.0;
  companion(0, 3) = -a0;
  companion(1, 3) = -a1;
  companion(2, 3) = -a2;
  companion(3, 3) = 0.0;
  Eigen::EigenSolver<Eigen::Matrix4d> solver(companion, false);
  std::vector<double> roots;
  const auto quartic = [&](double t) { return ((t * t + a2) * t + a1) * t + a0; };
  const auto dquartic = [&](double t) { return (4.0 * t * t + 2.0 * a2) * t + a1; };
  for (int i = 0; i < 4; ++i) {
    const auto ev = solver.eigenvalues()[i];
    const double scale = std::max(1.0, std::abs(ev));
    if (std::abs(ev.imag()) > 1e-7 * scale || ev.real() <= 0.0) continue;
    double t = ev.real();
    for (int it = 0; it < 4; ++it) {  // Newton polish
      const double d = dquartic(t);
      if (d == 0.0) break;
      const double step = quartic(t) / d;
      if (!(t - step > 0.0)) break;
      t -= step;
    }
    roots.push_back(t);
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

}  // namespace

double heuristic(const PlanState& state, const PlanState& goal, const SearchConfig& config, double* best_time) {
  // A frozen radius pays its shrink term at a constant rate, so it folds into the time weight.
  double w_t = config.w_t;
  if (config.freeze_radius) {
    const double shrink = (state.r - config.r_max) / config.r_max;
    w_t += config.a * shrink * shrink;
  }
  const ConnectionPoly poly = connection_poly(state, goal, w_t);
  if (best_time) *best_time = 0.0;
  if (poly.c3 == 0.0 && poly.c2 == 0.0 && poly.c1 == 0.0) return 0.0;
  if (poly.w <= 0.0) {
    // Infimum approached as T grows without bound.
    if (best_time) *best_time = std::numeric_limits<double>::infinity();
    return 0.0;
  }
  double best = std::numeric_limits<double>::infinity();
  double best_t = 0.0;
  for (const double t : stationary_times(poly)) {
    const double f = poly.value(t);
    if (f < best - 1e-9) {
      best = f;
      best_t = t;
    }
  }
  if (!std::isfinite(best)) {
    // Numerical fallback; f is coercive in T so a positive minimizer exists.
    double t = 1.0;
    best = poly.value(t);
    for (double tt = 1e-3; tt < 1e3; tt *= 1.01) {
      if (poly.value(tt) < best) {
        best = poly.value(tt);
        t = tt;
      }
    }
    best_t = t;
  }
  if (best_time) *best_time = best_t;
  return std::max(0.0, best);
}

double heuristic(const PlanState& state, const PlanState& goal, const SearchConfig& config) {
  return heuristic(state, goal, config, nullptr);
}

PlanState cubic_connection(const PlanState& from, const PlanState& to, double duration, double t) {
  const double T = duration;
  const Vec4 p0 = from.position4(), v0 = from.velocity4();
  const Vec4 v1 = to.velocity4();
  const Vec4 d = to.position4() - p0;
  const Vec4 c2 = (3.0 * d - (2.0 * v0 + v1) * T) / (T * T);
  const Vec4 c3 = (-2.0 * d + (v0 + v1) * T) / (T * T * T);
  return PlanState::from4(p0 + v0 * t + c2 * t * t + c3 * t * t * t, v0 + 2.0 * c2 * t + 3.0 * c3 * t * t);
}

// ---------------------------------------------------------------------------
// Search

std::vector<Vec4> sample_inputs(const SearchConfig& config) {
  std::array<std::vector<double>, 4> axis;
  for (int a = 0; a < 4; ++a) {
    const bool frozen = (a == 3 && config.freeze_radius) || config.u_max[a] == 0.0 || config.input_samples == 1;
    if (frozen) {
      axis[a] = {0.0};
      continue;
    }
    const int n = config.input_samples;
    for (int i = 0; i < n; ++i) axis[a].push_back(-config.u_max[a] + 2.0 * config.u_max[a] * i / (n - 1));
    axis[a][n / 2] = 0.0;
  }
  std::vector<Vec4> out;
  for (double ux : axis[0])
    for (double uy : axis[1])
      for (double uz : axis[2])
        for (double ur : axis[3]) out.emplace_back(ux, uy, uz, ur);
  return out;
}

std::vector<double> sample_durations(const SearchConfig& config) {
  if (config.duration_samples == 1 || config.dt_min == config.dt_max) return {config.dt_max};
  std::vector<double> out;
  const int n = config.duration_samples;
  for (int i = 0; i < n; ++i) out.push_back(config.dt_min + (config.dt_max - config.dt_min) * i / (n - 1));
  return out;
}

namespace {

struct GridKey {
  std::int64_t x, y, z, r;
  bool operator==(const GridKey&) const = default;
};

struct GridKeyHash {
  std::size_t operator()(const GridKey& k) const {
    std::uint64_t h = 1469598103934665603ull;
    for (const std::int64_t v : {k.x, k.y, k.z, k.r}) {
      h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

struct Node {
  PlanState state;
  double g = 0.0;
  double h = 0.0;
  int parent = -1;
  Vec4 u = Vec4::Zero();
  double dt = 0.0;
  GridKey key{};
};

struct OpenEntry {
  double f, h;
  std::int64_t order;
  int index;
  // Min-heap ordering: lower f, then lower h, then earlier insertion.
  bool operator<(const OpenEntry& o) const {
    if (f != o.f) return f > o.f;
    if (h != o.h) return h > o.h;
    return order > o.order;
  }
};

GridKey key_of(const PlanState& s, const SearchConfig& c) {
  return {static_cast<std::int64_t>(std::floor(s.p.x() / c.position_resolution)),
          static_cast<std::int64_t>(std::floor(s.p.y() / c.position_resolution)),
          static_cast<std::int64_t>(std::floor(s.p.z() / c.position_resolution)),
          static_cast<std::int64_t>(std::floor((s.r - c.r_min) / c.radius_resolution))};
}

bool reached_goal(const PlanState& s, const PlanState& goal, const SearchConfig& c) {
  if ((s.p - goal.p).norm() > c.goal_position_tolerance) return false;
  if (std::abs(s.r - goal.r) > c.goal_radius_tolerance) return false;
  if (c.goal_velocity_tolerance >= 0.0 && (s.velocity4() - goal.velocity4()).norm() > c.goal_velocity_tolerance)
    return false;
  return true;
}

// Sub-sampled validity of a primitive: arc steps of at most half a voxel.
bool primitive_valid(const PlanState& from, const Vec4& u, double dt, const EsdfField& field,
                     const BodyGeometry& body, const SearchConfig& config) {
  const double length = from.velocity4().norm() * dt + 0.5 * u.norm() * dt * dt;
  const double step = 0.5 * field.grid().resolution();
  const int n = std::max(1, static_cast<int>(std::ceil(length / step)));
  // A fully checked sample with clearance slack certifies later samples whose
  // centre and radius stay within slack / L of it.
  PlanState anchor;
  double slack = -1.0;
  for (int k = 1; k <= n; ++k) {
    const PlanState s = propagate(from, u, dt * k / n);
    if (!within_bounds(s, config)) return false;
    const Vec3 ext = Vec3::Constant(body.max_extent(s.r));
    const bool box_inside = field.inside(s.p - ext) && field.inside(s.p + ext);
    if (box_inside && slack > 0.0 &&
        kInterpolantLipschitz * ((s.p - anchor.p).norm() + std::abs(s.r - anchor.r)) <= slack)
      continue;
    if (!clearance_at_least(field, s.p, body, s.r, config.margin)) return false;
    if (box_inside) {
      anchor = s;
      slack = field.distance(s.p) - kInterpolantLipschitz * ext.x() - config.margin;
    }
  }
  return true;
}

std::vector<PathSegment> reconstruct(const std::vector<Node>& nodes, int index) {
  std::vector<PathSegment> out;
  for (int i = index; i >= 0; i = nodes[i].parent) out.push_back({nodes[i].state, nodes[i].u, nodes[i].dt});
  std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace

SearchResult search(const PlanState& start, const PlanState& goal, const EsdfField& field, const BodyGeometry& body,
                    const SearchConfig& config) {
  config.validate();
  if (!is_valid(start, field, body, config)) throw SearchError(SearchFailure::kInvalidStart, "start state is invalid");
  if (!is_valid(goal, field, body, config)) throw SearchError(SearchFailure::kInvalidGoal, "goal state is invalid");
  if (config.freeze_radius && (start.v_r != 0.0 || std::abs(goal.r - start.r) > config.goal_radius_tolerance))
    throw SearchError(SearchFailure::kInvalidGoal, "frozen radius requires constant radius between start and goal");

  const std::vector<Vec4> inputs = sample_inputs(config);
  const std::vector<double> durations = sample_durations(config);
  const auto h_of = [&](const PlanState& s) { return config.use_heuristic ? heuristic(s, goal, config) : 0.0; };

  std::vector<Node> nodes;
  std::unordered_map<GridKey, int, GridKeyHash> open_index;
  std::unordered_set<GridKey, GridKeyHash> closed;
  std::priority_queue<OpenEntry> open;
  std::int64_t order = 0;

  Node root;
  root.state = start;
  root.h = h_of(start);
  root.key = key_of(start, config);
  nodes.push_back(root);
  open_index[root.key] = 0;
  open.push({root.g + root.h, root.h, order++, 0});
  const double h_start = root.h;

  SearchResult result;
  const auto finish = [&](int index) {
    result.path = reconstruct(nodes, index);
    result.cost = nodes[index].g;
    if (config.use_heuristic && h_start > result.cost + 1e-9) {
      result.heuristic_exceeded_cost = true;
      logger().warn("heuristic at start ({:.6f}) exceeds returned path cost ({:.6f})", h_start, result.cost);
    }
    return result;
  };

  while (!open.empty()) {
    const OpenEntry top = open.top();
    open.pop();
    const Node current = nodes[top.index];
    if (closed.contains(current.key)) continue;
    const auto it = open_index.find(current.key);
    if (it == open_index.end() || it->second != top.index) continue;  // superseded entry
    open_index.erase(it);

    if (reached_goal(current.state, goal, config)) return finish(top.index);
    closed.insert(current.key);
    ++result.expanded;
    if (result.expanded > config.node_budget)
      throw SearchError(SearchFailure::kNodeBudgetExceeded,
                        fmt::format("node budget of {} expansions exceeded", config.node_budget));

    if (config.one_shot_distance > 0.0 && (current.state.p - goal.p).norm() <= config.one_shot_distance) {
      double shot_time = 0.0;
      heuristic(current.state, goal, config, &shot_time);
      if (std::isfinite(shot_time) && shot_time > 0.0) {
        const double len = (goal.position4() - current.state.position4()).norm() +
                           0.5 * (current.state.velocity4().norm() + goal.velocity4().norm()) * shot_time;
        const int n = std::max(1, static_cast<int>(std::ceil(len / (0.5 * field.grid().resolution()))));
        bool ok = true;
        for (int k = 1; k <= n && ok; ++k)
          ok = is_valid(cubic_connection(current.state, goal, shot_time, shot_time * k / n), field, body, config);
        if (ok) {
          int parent = top.index;
          PlanState prev = current.state;
          double g = current.g;
          for (int k = 1; k <= n; ++k) {
            Node shot;
            shot.state = cubic_connection(current.state, goal, shot_time, shot_time * k / n);
            shot.dt = shot_time / n;
            shot.u = (shot.state.velocity4() - prev.velocity4()) / shot.dt;
            g += primitive_cost(shot.u, shot.state.r, shot.dt, config);
            shot.g = g;
            shot.parent = parent;
            shot.key = key_of(shot.state, config);
            nodes.push_back(shot);
            parent = static_cast<int>(nodes.size()) - 1;
            prev = shot.state;
          }
          return finish(parent);
        }
      }
    }

    for (const double dt : durations) {
      for (const Vec4& u : inputs) {
        const PlanState child = propagate(current.state, u, dt);
        if (!within_bounds(child, config)) continue;
        const GridKey key = key_of(child, config);
        if (closed.contains(key)) continue;
        const double g = current.g + primitive_cost(u, child.r, dt, config);
        const auto existing = open_index.find(key);
        if (existing != open_index.end() && nodes[existing->second].g <= g) continue;
        if (!primitive_valid(current.state, u, dt, field, body, config)) continue;

        Node node;
        node.state = child;
        node.g = g;
        node.h = h_of(child);
        node.parent = top.index;
        node.u = u;
        node.dt = dt;
        node.key = key;
        nodes.push_back(node);
        const int index = static_cast<int>(nodes.size()) - 1;
        open_index[key] = index;
        open.push({node.g + node.h, node.h, order++, index});
      }
    }
  }
  throw SearchError(SearchFailure::kNoPath, fmt::format("open set exhausted after {} expansions", result.expanded));
}

void write_search_csv(const SearchResult& result, std::ostream& out) {
  out << "t,x,y,z,r,vx,vy,vz,vr,ux,uy,uz,ur\n";
  double t = 0.0;
  for (const auto& seg : result.path) {
    t += seg.dt;
    const auto& s = seg.state;
    out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n",
                       t, s.p.x(), s.p.y(), s.p.z(), s.r, s.v.x(), s.v.y(), s.v.z(), s.v_r, seg.u[0], seg.u[1],
                       seg.u[2], seg.u[3]);
  }
}

}  // namespace morph
