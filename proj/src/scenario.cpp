#include "morph/scenario.hpp"

#include "json.hpp"

#include <fmt/format.h>

#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace morph {

using nlohmann::json;

const char* to_string(PlanMode mode) {
  switch (mode) {
    case PlanMode::kAdaptive:
      return "adaptive";
    case PlanMode::kFixedMax:
      return "fixed-max";
    case PlanMode::kFixedMin:
      return "fixed-min";
  }
  return "unknown";
}

PlanMode parse_mode(const std::string& text) {
  if (text == "adaptive") return PlanMode::kAdaptive;
  if (text == "fixed-max") return PlanMode::kFixedMax;
  if (text == "fixed-min") return PlanMode::kFixedMin;
  throw ScenarioError(fmt::format("unknown mode '{}'", text));
}

namespace {

// Object reader that records consumed keys and rejects the rest.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ScenarioError(fmt::format("{}: expected an object", path_));
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& at(const std::string& key) {
    if (!j_.contains(key)) throw ScenarioError(fmt::format("{}: missing key '{}'", path_, key));
    used_.insert(key);
    return j_.at(key);
  }

  std::string child(const std::string& key) const { return path_ + "." + key; }

  template <typename T>
  T get(const std::string& key, const T& fallback) {
    if (!j_.contains(key)) return fallback;
    used_.insert(key);
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ScenarioError(fmt::format("{}: bad value type", child(key)));
    }
  }

  template <typename T>
  T require(const std::string& key) {
    const json& v = at(key);
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw ScenarioError(fmt::format("{}: bad value type", child(key)));
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) throw ScenarioError(fmt::format("{}: unknown key '{}'", path_, key));
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <int N>
Eigen::Matrix<double, N, 1> vector_of(const json& j, const std::string& path) {
  if (!j.is_array() || static_cast<int>(j.size()) != N)
    throw ScenarioError(fmt::format("{}: expected an array of {} numbers", path, N));
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    if (!j[i].is_number()) throw ScenarioError(fmt::format("{}: expected numbers", path));
    v[i] = j[i].get<double>();
  }
  return v;
}

template <int N>
Eigen::Matrix<double, N, 1> vec_or(Reader& r, const std::string& key, const Eigen::Matrix<double, N, 1>& fallback) {
  if (!r.has(key)) return fallback;
  return vector_of<N>(r.at(key), r.child(key));
}

Obstacle parse_obstacle(const json& j, const std::string& path) {
  Reader r(j, path);
  const std::string type = r.require<std::string>("type");
  Obstacle out;
  if (type == "box") {
    AxisBox b;
    b.min = vector_of<3>(r.at("min"), r.child("min"));
    b.max = vector_of<3>(r.at("max"), r.child("max"));
    if ((b.min.array() > b.max.array()).any()) throw ScenarioError(path + ": box min exceeds max");
    out = b;
  } else if (type == "sphere") {
    Sphere s;
    s.center = vector_of<3>(r.at("center"), r.child("center"));
    s.radius = r.require<double>("radius");
    if (!(s.radius >= 0.0)) throw ScenarioError(path + ": negative sphere radius");
    out = s;
  } else {
    throw ScenarioError(fmt::format("{}: unknown obstacle type '{}'", path, type));
  }
  r.finish();
  return out;
}

PlanState parse_state(const json& j, const std::string& path, double default_radius) {
  Reader r(j, path);
  PlanState s;
  s.p = vector_of<3>(r.at("position"), r.child("position"));
  s.r = r.get<double>("radius", default_radius);
  s.v = vec_or<3>(r, "velocity", Vec3::Zero());
  s.v_r = r.get<double>("radius_rate", 0.0);
  r.finish();
  return s;
}

void parse_nmpc(const json& j, const std::string& path, NmpcConfig& c) {
  Reader r(j, path);
  c.horizon = r.get<int>("horizon", c.horizon);
  c.dt = r.get<double>("dt", c.dt);
  c.q_p = vec_or<3>(r, "q_p", c.q_p);
  c.q_v = vec_or<3>(r, "q_v", c.q_v);
  c.q_q = vec_or<3>(r, "q_q", c.q_q);
  c.q_w = vec_or<3>(r, "q_w", c.q_w);
  c.terminal_scale = r.get<double>("terminal_scale", c.terminal_scale);
  c.w_u = vec_or<4>(r, "w_u", c.w_u);
  c.u_min = vec_or<4>(r, "u_min", c.u_min);
  c.u_max = vec_or<4>(r, "u_max", c.u_max);
  c.max_iterations = r.get<int>("max_iterations", c.max_iterations);
  c.tolerance = r.get<double>("tolerance", c.tolerance);
  r.finish();
}

DisturbanceProfile parse_disturbance(const json& j, const std::string& path) {
  Reader r(j, path);
  DisturbanceProfile d;
  const std::string kind = r.get<std::string>("kind", "none");
  if (kind == "none") {
    d.kind = DisturbanceProfile::Kind::kNone;
  } else if (kind == "constant") {
    d.kind = DisturbanceProfile::Kind::kConstant;
  } else if (kind == "ramp") {
    d.kind = DisturbanceProfile::Kind::kRamp;
  } else {
    throw ScenarioError(fmt::format("{}: unknown disturbance kind '{}'", path, kind));
  }
  d.value.force = vec_or<3>(r, "force", Vec3::Zero());
  d.value.torque = vec_or<3>(r, "torque", Vec3::Zero());
  d.start_time = r.get<double>("start_time", 0.0);
  d.ramp_duration = r.get<double>("ramp_duration", 1.0);
  d.noise_force_std = r.get<double>("noise_force_std", 0.0);
  d.noise_torque_std = r.get<double>("noise_torque_std", 0.0);
  d.noise_bandwidth_hz = r.get<double>("noise_bandwidth_hz", 2.0);
  r.finish();
  return d;
}

}  // namespace

void Scenario::validate() const {
  if (!(map.resolution > 0.0)) throw ScenarioError("map.resolution must be positive");
  if ((map.bounds.min.array() >= map.bounds.max.array()).any()) throw ScenarioError("map.bounds are empty");
  try {
    body.validate();
    search.validate();
    tracking.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(e.what());
  }
  for (const auto* s : {&start, &goal}) {
    if (!map.bounds.contains(s->p)) throw ScenarioError("start/goal outside the map bounds");
    for (const auto& o : map.obstacles)
      if (obstacle_contains(o, s->p)) throw ScenarioError("start/goal lies inside an obstacle");
    if (s->r < body.r_min - 1e-12 || s->r > body.r_max + 1e-12)
      throw ScenarioError("start/goal radius outside [r_min, r_max]");
  }
  for (const int idx : benchmark.jitter.obstacles)
    if (idx < 0 || idx >= static_cast<int>(map.obstacles.size()))
      throw ScenarioError("benchmark.jitter refers to a missing obstacle");
  if (payload && (payload->size.array() < 0.0).any()) throw ScenarioError("payload size must be non-negative");
}

Scenario parse_scenario(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(fmt::format("invalid JSON: {}", e.what()));
  }
  Reader top(doc, "scenario");
  const int version = top.require<int>("schema_version");
  if (version != kScenarioSchemaVersion)
    throw ScenarioError(fmt::format("unsupported schema_version {} (expected {})", version, kScenarioSchemaVersion));

  Scenario sc;
  sc.name = top.get<std::string>("name", "scenario");
  sc.seed = top.get<std::uint64_t>("seed", 0);
  sc.mode = parse_mode(top.get<std::string>("mode", "adaptive"));
  const double margin = top.get<double>("margin", 0.05);

  if (top.has("body")) {
    Reader r(top.at("body"), "scenario.body");
    sc.body.height = r.get<double>("height", sc.body.height);
    sc.body.angular_samples = r.get<int>("angular_samples", sc.body.angular_samples);
    sc.body.axial_samples = r.get<int>("axial_samples", sc.body.axial_samples);
    sc.body.r_min = r.get<double>("r_min", sc.body.r_min);
    sc.body.r_max = r.get<double>("r_max", sc.body.r_max);
    r.finish();
  }
  sc.body.radius = sc.body.r_max;

  {
    Reader r(top.at("map"), "scenario.map");
    Reader b(r.at("bounds"), "scenario.map.bounds");
    sc.map.bounds.min = vector_of<3>(b.at("min"), b.child("min"));
    sc.map.bounds.max = vector_of<3>(b.at("max"), b.child("max"));
    b.finish();
    sc.map.resolution = r.get<double>("resolution", sc.map.resolution);
    sc.map.truncation = r.get<double>("truncation", sc.map.truncation);
    if (r.has("obstacles")) {
      const json& list = r.at("obstacles");
      if (!list.is_array()) throw ScenarioError("scenario.map.obstacles: expected an array");
      for (std::size_t i = 0; i < list.size(); ++i)
        sc.map.obstacles.push_back(parse_obstacle(list[i], fmt::format("scenario.map.obstacles[{}]", i)));
    }
    r.finish();
  }

  sc.start = parse_state(top.at("start"), "scenario.start", sc.body.r_max);
  sc.goal = parse_state(top.at("goal"), "scenario.goal", sc.body.r_max);

  if (top.has("payload")) {
    Reader r(top.at("payload"), "scenario.payload");
    PayloadBox box;
    box.size = vector_of<3>(r.at("size"), r.child("size"));
    box.offset = vec_or<3>(r, "offset", Vec3::Zero());
    r.finish();
    sc.payload = box;
  }

  SearchConfig& s = sc.search;
  s.margin = margin;
  s.r_min = sc.body.r_min;
  s.r_max = sc.body.r_max;
  if (top.has("search")) {
    Reader r(top.at("search"), "scenario.search");
    s.u_max = vec_or<4>(r, "u_max", s.u_max);
    s.dt_min = r.get<double>("dt_min", s.dt_min);
    s.dt_max = r.get<double>("dt_max", s.dt_max);
    s.input_samples = r.get<int>("input_samples", s.input_samples);
    s.duration_samples = r.get<int>("duration_samples", s.duration_samples);
    s.v_max = r.get<double>("v_max", s.v_max);
    s.omega_max = r.get<double>("omega_max", s.omega_max);
    s.a = r.get<double>("a", s.a);
    s.w_t = r.get<double>("w_t", s.w_t);
    s.position_resolution = r.get<double>("position_resolution", s.position_resolution);
    s.radius_resolution = r.get<double>("radius_resolution", s.radius_resolution);
    s.node_budget = r.get<std::int64_t>("node_budget", s.node_budget);
    s.goal_position_tolerance = r.get<double>("goal_position_tolerance", s.goal_position_tolerance);
    s.goal_radius_tolerance = r.get<double>("goal_radius_tolerance", s.goal_radius_tolerance);
    s.goal_velocity_tolerance = r.get<double>("goal_velocity_tolerance", s.goal_velocity_tolerance);
    s.one_shot_distance = r.get<double>("one_shot_distance", s.one_shot_distance);
    r.finish();
  }

  OptProblem& o = sc.optimization;
  o.body = sc.body;
  o.margin = margin;
  if (top.has("optimization")) {
    Reader r(top.at("optimization"), "scenario.optimization");
    o.v_max = r.get<double>("v_max", o.v_max);
    o.a_max = r.get<double>("a_max", o.a_max);
    o.omega_max = r.get<double>("omega_max", o.omega_max);
    o.alpha_max = r.get<double>("alpha_max", o.alpha_max);
    o.a = r.get<double>("a", o.a);
    o.w_t = r.get<double>("w_t", o.w_t);
    o.weights.clearance = r.get<double>("clearance_weight", o.weights.clearance);
    o.weights.dynamics = r.get<double>("dynamics_weight", o.weights.dynamics);
    o.samples_per_piece = r.get<int>("samples_per_piece", o.samples_per_piece);
    o.clearance_buffer = r.get<double>("clearance_buffer", o.clearance_buffer);
    o.dynamics_scale = r.get<double>("dynamics_scale", o.dynamics_scale);
    o.min_piece_duration = r.get<double>("min_piece_duration", o.min_piece_duration);
    o.verify_tolerance = r.get<double>("verify_tolerance", o.verify_tolerance);
    o.solver.max_iterations = r.get<int>("max_iterations", o.solver.max_iterations);
    o.solver.g_epsilon = r.get<double>("g_epsilon", o.solver.g_epsilon);
    r.finish();
  }

  VehicleParams& v = sc.tracking.vehicle;
  v.r_min = sc.body.r_min;
  v.r_max = sc.body.r_max;
  v.height = sc.body.height;
  if (top.has("vehicle")) {
    Reader r(top.at("vehicle"), "scenario.vehicle");
    v.mass = r.get<double>("mass", v.mass);
    v.central_fraction = r.get<double>("central_fraction", v.central_fraction);
    v.central_radius = r.get<double>("central_radius", v.central_radius);
    v.central_height = r.get<double>("central_height", v.central_height);
    v.k_t = r.get<double>("k_t", v.k_t);
    v.k_c = r.get<double>("k_c", v.k_c);
    v.t_min = r.get<double>("t_min", v.t_min);
    v.t_max = r.get<double>("t_max", v.t_max);
    v.servo_gamma = r.get<double>("servo_gamma", v.servo_gamma);
    v.servo_rate_max = r.get<double>("servo_rate_max", v.servo_rate_max);
    r.finish();
  }

  TrackingConfig& t = sc.tracking;
  t.seed = sc.seed;
  if (top.has("controller")) {
    Reader r(top.at("controller"), "scenario.controller");
    t.sim_dt = r.get<double>("sim_dt", t.sim_dt);
    t.nmpc_decimation = r.get<int>("nmpc_decimation", t.nmpc_decimation);
    t.force_compensation = r.get<bool>("force_compensation", t.force_compensation);
    t.indi = r.get<bool>("indi", t.indi);
    t.force_cutoff_hz = r.get<double>("force_cutoff_hz", t.force_cutoff_hz);
    t.indi_cutoff_hz = r.get<double>("indi_cutoff_hz", t.indi_cutoff_hz);
    t.accel_noise_std = r.get<double>("accel_noise_std", t.accel_noise_std);
    t.gyro_noise_std = r.get<double>("gyro_noise_std", t.gyro_noise_std);
    if (r.has("nmpc")) parse_nmpc(r.at("nmpc"), "scenario.controller.nmpc", t.nmpc);
    r.finish();
  }
  if (top.has("disturbance")) t.disturbance = parse_disturbance(top.at("disturbance"), "scenario.disturbance");
  t.disturbance.seed = sc.seed;

  if (top.has("energy")) {
    Reader r(top.at("energy"), "scenario.energy");
    sc.energy.c1 = r.get<double>("c1", sc.energy.c1);
    sc.energy.c2 = r.get<double>("c2", sc.energy.c2);
    r.finish();
  }

  if (top.has("benchmark")) {
    Reader r(top.at("benchmark"), "scenario.benchmark");
    if (r.has("seeds")) {
      const json& seeds = r.at("seeds");
      if (seeds.is_number_unsigned() || seeds.is_number_integer()) {
        const auto n = seeds.get<std::int64_t>();
        if (n < 1) throw ScenarioError("scenario.benchmark.seeds must be >= 1");
        for (std::int64_t i = 0; i < n; ++i) sc.benchmark.seeds.push_back(static_cast<std::uint64_t>(i));
      } else if (seeds.is_array()) {
        for (const auto& e : seeds) sc.benchmark.seeds.push_back(e.get<std::uint64_t>());
      } else {
        throw ScenarioError("scenario.benchmark.seeds: expected a count or a list");
      }
    }
    if (r.has("jitter")) {
      Reader jr(r.at("jitter"), "scenario.benchmark.jitter");
      sc.benchmark.jitter.obstacles = jr.get<std::vector<int>>("obstacles", {});
      sc.benchmark.jitter.amplitude = vec_or<3>(jr, "amplitude", Vec3::Zero());
      jr.finish();
    }
    r.finish();
  }
  if (sc.benchmark.seeds.empty())
    for (std::uint64_t i = 0; i < 20; ++i) sc.benchmark.seeds.push_back(i);

  top.finish();
  sc.validate();
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(fmt::format("cannot open scenario '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

MapSpec jittered_map(const MapSpec& map, const JitterSpec& jitter, std::uint64_t seed) {
  MapSpec out = map;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (const int idx : jitter.obstacles) {
    Vec3 shift;
    for (int k = 0; k < 3; ++k) shift[k] = jitter.amplitude[k] * unit(rng);
    std::visit(
        [&](auto& o) {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, AxisBox>) {
            o.min += shift;
            o.max += shift;
          } else {
            o.center += shift;
          }
        },
        out.obstacles[idx]);
  }
  return out;
}

EsdfField build_field(const MapSpec& map) {
  return compute_esdf(build_grid(map.obstacles, map.bounds, map.resolution), map.truncation);
}

}  // namespace morph
