#pragma once

#include "morph/esdf_map.hpp"
#include "morph/kinodynamic_search.hpp"
#include "morph/tracking.hpp"
#include "morph/traj_opt.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace morph {

inline constexpr int kScenarioSchemaVersion = 1;

enum class PlanMode { kAdaptive, kFixedMax, kFixedMin };

const char* to_string(PlanMode mode);
PlanMode parse_mode(const std::string& text);

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MapSpec {
  AxisBox bounds;
  double resolution = 0.05;
  double truncation = kDefaultTruncation;
  std::vector<Obstacle> obstacles;
};

/// Per-seed obstacle perturbation for benchmark families.
struct JitterSpec {
  std::vector<int> obstacles;  // indices into MapSpec::obstacles
  Vec3 amplitude = Vec3::Zero();  // uniform +- per axis
};

struct BenchmarkSpec {
  std::vector<std::uint64_t> seeds;
  JitterSpec jitter;
};

struct EnergySpec {
  double c1 = 1.0;
  double c2 = 1.0;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  PlanMode mode = PlanMode::kAdaptive;
  MapSpec map;
  PlanState start;
  PlanState goal;
  BodyGeometry body;
  std::optional<PayloadBox> payload;
  SearchConfig search;
  OptProblem optimization;  // field, boundary states and radius mode are filled per run
  TrackingConfig tracking;
  EnergySpec energy;
  BenchmarkSpec benchmark;

  void validate() const;
};

/// Parses and validates a scenario document. Unknown keys are rejected.
Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::string& path);

/// Copy of the map with the jittered obstacles moved for the given seed.
MapSpec jittered_map(const MapSpec& map, const JitterSpec& jitter, std::uint64_t seed);

EsdfField build_field(const MapSpec& map);

}  // namespace morph
