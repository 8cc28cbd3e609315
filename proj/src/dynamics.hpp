#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "constraints.hpp"
#include "lattice.hpp"

namespace kcsm {

/// One entry of the graphical construction: every Poisson ring is recorded,
/// including rejected ones (constraint not satisfied), so logs can be
/// replayed and coupled path arguments tested.
enum class EventKind : uint8_t {
  EnvRejected,    // clock rang, constraint failed, no change
  EnvSetEmpty,    // legal ring, site resampled to 0
  EnvSetOccupied, // legal ring, site resampled to 1
  TracerMoved,
  TracerBlocked,
};

struct Event {
  double t;
  int32_t site;   // environment site index; -1 for tracer events
  EventKind kind;
  int8_t axis;    // tracer attempt axis
  int8_t sign;    // tracer attempt direction (+1/-1)
};

/// Time-stamped record of one joint run: unwrapped tracer displacement on a
/// fixed sample grid plus provenance.
struct Trajectory {
  std::vector<double> sample_times;
  std::vector<std::vector<int64_t>> displacements;  // [sample][axis]
  uint64_t seed = 0;
  std::string model;
  double q = 0;
  std::vector<int64_t> dims;
  double horizon = 0;
  bool wrap_risk = false;  // |X| exceeded N/4 on some axis
};

struct EnvRunResult {
  SpinConfig final_config;
  std::vector<Event> events;  // empty unless record_events
  int64_t n_rings = 0;
  int64_t n_flips = 0;
};

struct JointRunResult {
  Trajectory trajectory;
  SpinConfig final_config;
  std::vector<int64_t> final_displacement;
  std::vector<Event> events;
  int64_t n_tracer_moves = 0;
};

/// Exact event-driven realization of the environment process: rate-1 Poisson
/// clock per site; at a ring, if the constraint holds, the site resamples to
/// empty with probability q. Reproducible from the seed.
EnvRunResult simulate_env(const ConstraintModel& model, const Params& params,
                          const SpinConfig& config0, double horizon,
                          uint64_t seed, bool record_events = false);

/// Joint environment + tracer process: the environment evolves exactly as in
/// simulate_env (unaffected by the tracer); the tracer attempts each of the
/// 2d neighbour jumps at rate 1 and moves only when both sites are empty.
JointRunResult simulate_joint(const ConstraintModel& model, const Params& params,
                              const SpinConfig& config0, double horizon,
                              const std::vector<double>& sample_times,
                              uint64_t seed, bool record_events = false);

struct SeenFromTracerResult {
  std::vector<double> sample_times;
  std::vector<SpinConfig> samples;  // environment recentred at the tracer
  SpinConfig final_recentred;
};

/// The environment seen from the tracer: simulate_joint followed by the
/// recentring shift at each sample time. Same seed, same underlying path.
SeenFromTracerResult simulate_seen_from_tracer(
    const ConstraintModel& model, const Params& params, const SpinConfig& config0,
    double horizon, const std::vector<double>& sample_times, uint64_t seed);

struct DistinguishedZeroTrack {
  std::vector<double> jump_times;
  std::vector<int64_t> positions;  // unwrapped; strictly increasing by 1
  int64_t violations = 0;          // times the tracked site was found occupied
};

/// Replay an East event log and advance the distinguished zero: the tracked
/// position moves +1 exactly at legal rings of the tracked site. Asserts the
/// tracked site is empty at every event time.
DistinguishedZeroTrack track_distinguished_zero(const std::vector<Event>& events,
                                                const SpinConfig& config0,
                                                const Site& start);

struct HittingSample {
  double t = 0;
  bool censored = false;
  double cap = 0;
};

/// East energy-barrier experiment: sites 1..l start occupied with a frozen
/// empty site at l+1; returns the first time site 1 is empty. The frozen zero
/// stands in for the arbitrary exterior of the infinite-volume statement.
HittingSample hitting_time_T0(int l, const Params& params, uint64_t seed,
                              double t_cap = 1e9);

/// Isolated zero-cluster run for the mobility experiment: a block of k zeros
/// in an otherwise full ring. Tracks the centroid of the zero set (unwrapped)
/// on a sample grid; censors when the zero set spreads beyond span_cap sites
/// or grows beyond count_cap zeros.
struct ClusterRun {
  std::vector<double> sample_times;
  std::vector<double> centroids;   // valid entries only while alive
  std::vector<uint8_t> alive;      // 1 while not yet censored
  bool censored = false;
  double censor_time = 0;
};
ClusterRun simulate_cluster(const ConstraintModel& model, const Params& params,
                            int64_t ring, double horizon,
                            const std::vector<double>& sample_times,
                            uint64_t seed, int count_cap, int64_t span_cap);

/// Line-oriented event log serialization (time, site, outcome), replayable.
void write_event_log(std::ostream& os, const std::vector<Event>& events);
std::vector<Event> read_event_log(std::istream& is);

/// Apply a recorded environment event log to a configuration (replay).
SpinConfig replay_events(const SpinConfig& config0, const std::vector<Event>& events);

}  // namespace kcsm
