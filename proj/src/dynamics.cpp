#include "dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "rng.hpp"
#include "tables.hpp"

namespace kcsm {

using detail::Bits;
using detail::build_constraint_table;
using detail::constraint_ok;
using detail::ConstraintTable;

namespace {

struct TracerTables {
  // target site per (site, direction); direction = 2*axis + (sign>0 ? 1 : 0)
  std::vector<int32_t> step;
  int ndir = 0;
};

TracerTables build_tracer_tables(const SpinConfig& probe) {
  const int d = probe.dim();
  TracerTables t;
  t.ndir = 2 * d;
  t.step.resize(static_cast<size_t>(probe.n_sites()) * t.ndir);
  for (int64_t i = 0; i < probe.n_sites(); ++i) {
    Site s = probe.site_of_index(i);
    for (int axis = 0; axis < d; ++axis) {
      for (int sgn : {0, 1}) {
        Site y = s;
        y.coords[axis] += sgn ? 1 : -1;
        t.step[static_cast<size_t>(i) * t.ndir + 2 * axis + sgn] =
            static_cast<int32_t>(probe.index_of(y));
      }
    }
  }
  return t;
}

struct RunCore {
  ConstraintModel model;
  Params params;
  std::vector<int64_t> dims;
  Boundary boundary;
  ConstraintTable ct;
  Bits bits;
  Rng rng;
  double t = 0;

  RunCore(const ConstraintModel& m, const Params& pr, const SpinConfig& c0,
          uint64_t seed)
      : model(m),
        params(pr),
        dims(c0.dims()),
        boundary(c0.boundary()),
        ct(build_constraint_table(m, c0.dims(), c0.boundary())),
        bits(detail::to_bits(c0)),
        rng(seed) {}
};

}  // namespace

EnvRunResult simulate_env(const ConstraintModel& model, const Params& params,
                          const SpinConfig& config0, double horizon,
                          uint64_t seed, bool record_events) {
  if (horizon <= 0) throw Error(ErrorCode::InvalidArgument, "horizon must be > 0");
  RunCore core(model, params, config0, seed);
  const int64_t n = config0.n_sites();
  const double Lambda = static_cast<double>(n);
  EnvRunResult out{config0, {}, 0, 0};
  for (;;) {
    double tn = core.t + core.rng.exponential(Lambda);
    if (tn > horizon) break;
    core.t = tn;
    int64_t x = static_cast<int64_t>(core.rng.below(static_cast<uint64_t>(n)));
    ++out.n_rings;
    if (constraint_ok(core.bits, core.ct, x)) {
      bool occ = !core.rng.bernoulli(params.q);  // refresh mark
      core.bits.set(x, occ);
      ++out.n_flips;
      if (record_events)
        out.events.push_back({tn, static_cast<int32_t>(x),
                              occ ? EventKind::EnvSetOccupied : EventKind::EnvSetEmpty,
                              0, 0});
    } else if (record_events) {
      out.events.push_back({tn, static_cast<int32_t>(x), EventKind::EnvRejected, 0, 0});
    }
  }
  out.final_config = detail::from_bits(core.bits, config0.dims(), config0.boundary());
  return out;
}

JointRunResult simulate_joint(const ConstraintModel& model, const Params& params,
                              const SpinConfig& config0, double horizon,
                              const std::vector<double>& sample_times,
                              uint64_t seed, bool record_events) {
  if (horizon <= 0) throw Error(ErrorCode::InvalidArgument, "horizon must be > 0");
  if (config0.boundary() != Boundary::Periodic)
    throw Error(ErrorCode::BoundaryViolation, "tracer runs need a periodic torus");
  for (size_t i = 1; i < sample_times.size(); ++i)
    if (!(sample_times[i] > sample_times[i - 1]))
      throw Error(ErrorCode::InvalidArgument, "sample times must increase");

  RunCore core(model, params, config0, seed);
  TracerTables tt = build_tracer_tables(config0);
  const int d = config0.dim();
  const int64_t n = config0.n_sites();
  const double Lambda = static_cast<double>(n + 2 * d);

  JointRunResult out{Trajectory{}, config0, {}, {}, 0};
  Trajectory& traj = out.trajectory;
  traj.sample_times = sample_times;
  traj.seed = seed;
  traj.model = model.name();
  traj.q = params.q;
  traj.dims = config0.dims();
  traj.horizon = horizon;

  int64_t tracer = 0;  // starts at the origin regardless of occupancy
  std::vector<int64_t> unwrapped(static_cast<size_t>(d), 0);
  size_t next_sample = 0;
  auto record_until = [&](double limit) {
    while (next_sample < sample_times.size() && sample_times[next_sample] < limit) {
      traj.displacements.push_back(unwrapped);
      ++next_sample;
    }
  };

  for (;;) {
    double tn = core.t + core.rng.exponential(Lambda);
    record_until(std::min(tn, horizon + 1e-300));
    if (tn > horizon) break;
    core.t = tn;
    uint64_t clock = core.rng.below(static_cast<uint64_t>(n + 2 * d));
    if (clock < static_cast<uint64_t>(n)) {
      int64_t x = static_cast<int64_t>(clock);
      if (constraint_ok(core.bits, core.ct, x)) {
        bool occ = !core.rng.bernoulli(params.q);
        core.bits.set(x, occ);
        if (record_events)
          out.events.push_back({tn, static_cast<int32_t>(x),
                                occ ? EventKind::EnvSetOccupied : EventKind::EnvSetEmpty,
                                0, 0});
      } else if (record_events) {
        out.events.push_back(
            {tn, static_cast<int32_t>(x), EventKind::EnvRejected, 0, 0});
      }
    } else {
      int dir = static_cast<int>(clock - static_cast<uint64_t>(n));
      int axis = dir >> 1;
      int sgn = (dir & 1) ? 1 : -1;
      int32_t target = tt.step[static_cast<size_t>(tracer) * tt.ndir + dir];
      bool can = !core.bits.get(tracer) && !core.bits.get(target);
      if (can) {
        tracer = target;
        unwrapped[static_cast<size_t>(axis)] += sgn;
        ++out.n_tracer_moves;
        if (std::llabs(unwrapped[static_cast<size_t>(axis)]) >
            config0.dims()[static_cast<size_t>(axis)] / 4)
          traj.wrap_risk = true;
      }
      if (record_events)
        out.events.push_back({tn, -1,
                              can ? EventKind::TracerMoved : EventKind::TracerBlocked,
                              static_cast<int8_t>(axis), static_cast<int8_t>(sgn)});
    }
  }
  // remaining samples at/after the last event up to the horizon
  while (next_sample < sample_times.size() &&
         sample_times[next_sample] <= horizon) {
    traj.displacements.push_back(unwrapped);
    ++next_sample;
  }
  out.final_config = detail::from_bits(core.bits, config0.dims(), config0.boundary());
  out.final_displacement = unwrapped;
  return out;
}

SeenFromTracerResult simulate_seen_from_tracer(
    const ConstraintModel& model, const Params& params, const SpinConfig& config0,
    double horizon, const std::vector<double>& sample_times, uint64_t seed) {
  // The seen-from-tracer process is the joint process recentred at the
  // tracer; running the same engine with the same seed realizes the coupling
  // identity exactly.
  JointRunResult joint =
      simulate_joint(model, params, config0, horizon, sample_times, seed, true);

  SeenFromTracerResult out{sample_times, {}, config0};
  // replay to materialize configs at the sample times
  Bits bits = detail::to_bits(config0);
  std::vector<int64_t> disp(static_cast<size_t>(config0.dim()), 0);
  size_t ev = 0;
  auto recentred = [&]() {
    SpinConfig cur = detail::from_bits(bits, config0.dims(), Boundary::Periodic);
    Site y;
    y.coords = disp;
    return shift(cur, y);
  };
  for (double ts : sample_times) {
    while (ev < joint.events.size() && joint.events[ev].t < ts) {
      const Event& e = joint.events[ev];
      if (e.kind == EventKind::EnvSetEmpty)
        bits.set(e.site, false);
      else if (e.kind == EventKind::EnvSetOccupied)
        bits.set(e.site, true);
      else if (e.kind == EventKind::TracerMoved)
        disp[static_cast<size_t>(e.axis)] += e.sign;
      ++ev;
    }
    out.samples.push_back(recentred());
  }
  for (; ev < joint.events.size(); ++ev) {
    const Event& e = joint.events[ev];
    if (e.kind == EventKind::EnvSetEmpty)
      bits.set(e.site, false);
    else if (e.kind == EventKind::EnvSetOccupied)
      bits.set(e.site, true);
    else if (e.kind == EventKind::TracerMoved)
      disp[static_cast<size_t>(e.axis)] += e.sign;
  }
  out.final_recentred = recentred();
  return out;
}

DistinguishedZeroTrack track_distinguished_zero(const std::vector<Event>& events,
                                                const SpinConfig& config0,
                                                const Site& start) {
  if (config0.dim() != 1)
    throw Error(ErrorCode::UnsupportedDimension, "distinguished zero is 1d (East)");
  if (config0.occ(start) != 0)
    throw Error(ErrorCode::Precondition, "start site must be empty at time 0");
  const int64_t n = config0.n_sites();
  auto mod = [n](int64_t v) {
    int64_t m = v % n;
    return m < 0 ? m + n : m;
  };

  Bits bits = detail::to_bits(config0);
  DistinguishedZeroTrack track;
  int64_t xi = start.coords[0];
  for (const Event& e : events) {
    if (e.kind == EventKind::TracerMoved || e.kind == EventKind::TracerBlocked)
      continue;
    bool legal = e.kind != EventKind::EnvRejected;
    if (e.site == mod(xi) && legal) {
      // legal ring at the tracked site: the zero advances to the right
      // neighbour, which the East constraint guarantees is empty
      xi += 1;
      track.jump_times.push_back(e.t);
      track.positions.push_back(xi);
    }
    if (e.kind == EventKind::EnvSetEmpty)
      bits.set(e.site, false);
    else if (e.kind == EventKind::EnvSetOccupied)
      bits.set(e.site, true);
    if (bits.get(mod(xi))) ++track.violations;
  }
  return track;
}

HittingSample hitting_time_T0(int l, const Params& params, uint64_t seed,
                              double t_cap) {
  if (l < 1) throw Error(ErrorCode::InvalidArgument, "l must be >= 1");
  // East segment: sites 1..l occupied, frozen empty site at l+1. Site i of
  // the paper is index i-1 here; index l-1 always satisfies the constraint.
  SpinConfig c({l}, Boundary::FrozenEmpty);
  for (int i = 0; i < l; ++i) c.set_index(i, true);
  ConstraintTable ct =
      build_constraint_table(ConstraintModel::East(), {l}, Boundary::FrozenEmpty);
  Bits bits = detail::to_bits(c);
  Rng rng(seed);
  double t = 0;
  const double Lambda = static_cast<double>(l);
  for (;;) {
    t += rng.exponential(Lambda);
    if (t > t_cap) return {t_cap, true, t_cap};
    int64_t x = static_cast<int64_t>(rng.below(static_cast<uint64_t>(l)));
    if (!constraint_ok(bits, ct, x)) continue;
    bool occ = !rng.bernoulli(params.q);
    bits.set(x, occ);
    if (x == 0 && !occ) return {t, false, t_cap};
  }
}

ClusterRun simulate_cluster(const ConstraintModel& model, const Params& params,
                            int64_t ring, double horizon,
                            const std::vector<double>& sample_times,
                            uint64_t seed, int count_cap, int64_t span_cap) {
  if (model.kind != ModelKind::KZeros)
    throw Error(ErrorCode::InvalidArgument, "cluster mobility is for k-zeros models");
  const int k = model.k;
  if (ring < 8 * (span_cap + 2))
    throw Error(ErrorCode::InvalidArgument, "ring too small for the span cap");

  SpinConfig c({ring}, Boundary::Periodic);
  for (int64_t i = 0; i < ring; ++i) c.set_index(i, true);
  for (int i = 0; i < k; ++i) c.set_index(i, false);

  ConstraintTable ct = build_constraint_table(model, {ring}, Boundary::Periodic);
  Bits bits = detail::to_bits(c);
  Rng rng(seed);

  // unwrapped position per empty ring site; zeros stay clustered, so the
  // nearest representative to the running centroid is unambiguous
  std::unordered_map<int64_t, int64_t> zero_pos;
  double pos_sum = 0;
  for (int i = 0; i < k; ++i) {
    zero_pos[i] = i;
    pos_sum += i;
  }
  auto centroid = [&]() { return pos_sum / static_cast<double>(zero_pos.size()); };

  ClusterRun out;
  out.sample_times = sample_times;
  const double Lambda = static_cast<double>(ring);
  double t = 0;
  size_t next_sample = 0;
  auto record_until = [&](double limit, bool alive) {
    while (next_sample < sample_times.size() && sample_times[next_sample] < limit) {
      out.centroids.push_back(alive ? centroid() : 0.0);
      out.alive.push_back(alive ? 1 : 0);
      ++next_sample;
    }
  };

  for (;;) {
    double tn = t + rng.exponential(Lambda);
    record_until(std::min(tn, horizon + 1e-300), true);
    if (tn > horizon) break;
    t = tn;
    int64_t x = static_cast<int64_t>(rng.below(static_cast<uint64_t>(ring)));
    if (!constraint_ok(bits, ct, x)) continue;
    bool occ = !rng.bernoulli(params.q);
    bool was = bits.get(x);
    if (occ == was) continue;
    bits.set(x, occ);
    if (occ) {
      auto it = zero_pos.find(x);
      pos_sum -= static_cast<double>(it->second);
      zero_pos.erase(it);
      if (zero_pos.empty()) {  // cluster vanished entirely
        out.censored = true;
        out.censor_time = t;
        break;
      }
    } else {
      // unwrapped coordinate congruent to x closest to the centroid
      double cbar = centroid();
      int64_t base = static_cast<int64_t>(std::llround(cbar));
      int64_t rep = x + ((base - x) / ring) * ring;
      while (rep - base > ring / 2) rep -= ring;
      while (base - rep > ring / 2) rep += ring;
      zero_pos[x] = rep;
      pos_sum += static_cast<double>(rep);
    }
    if (static_cast<int>(zero_pos.size()) > count_cap) {
      out.censored = true;
      out.censor_time = t;
      break;
    }
    int64_t lo = INT64_MAX, hi = INT64_MIN;
    for (auto& [ridx, up] : zero_pos) {
      lo = std::min(lo, up);
      hi = std::max(hi, up);
    }
    if (hi - lo >= span_cap) {
      out.censored = true;
      out.censor_time = t;
      break;
    }
  }
  // remaining grid points: live state if the run survived, dead padding after
  // a censor so every run keeps the full grid length
  while (next_sample < sample_times.size() &&
         sample_times[next_sample] <= horizon && !out.censored) {
    out.centroids.push_back(centroid());
    out.alive.push_back(1);
    ++next_sample;
  }
  while (out.centroids.size() < sample_times.size()) {
    out.centroids.push_back(0.0);
    out.alive.push_back(0);
  }
  return out;
}

void write_event_log(std::ostream& os, const std::vector<Event>& events) {
  os.precision(17);
  for (const Event& e : events) {
    switch (e.kind) {
      case EventKind::EnvRejected:
        os << e.t << " E " << e.site << " reject\n";
        break;
      case EventKind::EnvSetEmpty:
        os << e.t << " E " << e.site << " set0\n";
        break;
      case EventKind::EnvSetOccupied:
        os << e.t << " E " << e.site << " set1\n";
        break;
      case EventKind::TracerMoved:
        os << e.t << " T " << static_cast<int>(e.axis) << " "
           << static_cast<int>(e.sign) << " move\n";
        break;
      case EventKind::TracerBlocked:
        os << e.t << " T " << static_cast<int>(e.axis) << " "
           << static_cast<int>(e.sign) << " block\n";
        break;
    }
  }
}

std::vector<Event> read_event_log(std::istream& is) {
  std::vector<Event> events;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Event e{};
    char tag;
    ss >> e.t >> tag;
    std::string outcome;
    if (tag == 'E') {
      ss >> e.site >> outcome;
      e.kind = outcome == "reject" ? EventKind::EnvRejected
               : outcome == "set0" ? EventKind::EnvSetEmpty
                                   : EventKind::EnvSetOccupied;
    } else if (tag == 'T') {
      int axis, sign;
      ss >> axis >> sign >> outcome;
      e.site = -1;
      e.axis = static_cast<int8_t>(axis);
      e.sign = static_cast<int8_t>(sign);
      e.kind = outcome == "move" ? EventKind::TracerMoved : EventKind::TracerBlocked;
    } else {
      throw Error(ErrorCode::Io, "bad event log line: " + line);
    }
    if (!ss) throw Error(ErrorCode::Io, "bad event log line: " + line);
    events.push_back(e);
  }
  return events;
}

SpinConfig replay_events(const SpinConfig& config0, const std::vector<Event>& events) {
  SpinConfig c = config0;
  for (const Event& e : events) {
    if (e.kind == EventKind::EnvSetEmpty)
      c.set_index(e.site, false);
    else if (e.kind == EventKind::EnvSetOccupied)
      c.set_index(e.site, true);
  }
  return c;
}

}  // namespace kcsm
