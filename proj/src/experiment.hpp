#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "auxiliary.hpp"
#include "estimate.hpp"

namespace kcsm {

enum class ExperimentKind {
  DScaling,
  Sandwich,
  EastRatio,
  AuxDynamics,
  GapTable,
  HittingTimes,
  AppendixFunctionals,
  ClusterMobility,
  AxiomChecks,
};

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

/// Declarative experiment description. Parsed from a JSON config file; every
/// run is fully determined by the config plus the root seed (no wall-clock
/// seeding anywhere).
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::AxiomChecks;
  uint64_t seed = 0;
  nlohmann::json params;  // kind-specific fields, validated before running
  std::string out_dir;    // empty: no files written
  int jobs = 1;
  uint64_t config_hash = 0;
  std::string source_path;
};

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& source_path = "");
ExperimentConfig parse_config_file(const std::string& path);

struct ValidationReport {
  bool schema_ok = true;
  std::vector<std::string> schema_errors;
  std::vector<std::string> resource_errors;  // projected cap violations
  double projected_events = 0;               // simulation cost estimate
  double projected_seconds = 0;
  int64_t projected_states = 0;              // largest exact state space
  bool runnable() const { return schema_ok && resource_errors.empty(); }
  nlohmann::json to_json() const;
};

ValidationReport validate(const ExperimentConfig& config);

struct AssertionResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct CsvRow {
  std::string metric;
  std::string model;
  int d = 1;
  double q = 0;
  int64_t size = 0;
  double value = 0;
  double stderr_val = 0;
  int64_t n = 0;
  std::string flag;
};

struct ExperimentSummary {
  bool pass = true;
  std::vector<AssertionResult> assertions;
  std::vector<CsvRow> rows;
  nlohmann::json metrics;
};

struct RunOverrides {
  std::optional<uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out_dir;
};

/// Execute the experiment; writes results.csv and summary.json under the
/// output directory when one is configured. pass == every assertion passed.
ExperimentSummary run_experiment(const ExperimentConfig& config,
                                 const RunOverrides& overrides = {});

std::vector<std::pair<std::string, std::string>> list_experiments();

/// Deterministic helper used by all experiments: run n seeded trajectories of
/// the joint process and estimate D along e1 (or the requested axis).
EstimateReport measure_tracer_D(const ConstraintModel& model, const Params& params,
                                const std::vector<int64_t>& dims, double horizon,
                                int64_t n_trajectories, uint64_t seed, int jobs,
                                int axis = 0, int n_grid = 64);

/// Run indexed jobs on a small thread pool; results must be written to
/// per-index slots by the callable (deterministic regardless of jobs).
void parallel_for(int64_t n, int jobs, const std::function<void(int64_t)>& fn);

/// FNV-1a content hash used for config provenance.
uint64_t fnv1a64(const std::string& bytes);

}  // namespace kcsm
