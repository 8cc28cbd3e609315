#include "auxiliary.hpp"

#include <cmath>

namespace kcsm {

namespace {

// window bits: bit i = occupancy of site i-2
inline bool window_in_A(unsigned w) {
  auto occ = [w](int site) { return (w >> (site + 2)) & 1u; };
  if (occ(0)) return false;
  return (!occ(1) && !occ(2)) || (!occ(-1) && !occ(1)) || (!occ(-2) && !occ(-1));
}

unsigned window_bits(const SpinConfig& c) {
  unsigned w = 0;
  for (int s = -2; s <= 2; ++s)
    if (c.occ(site1(s))) w |= 1u << (s + 2);
  return w;
}

}  // namespace

bool in_A(const SpinConfig& c) {
  if (c.dim() != 1)
    throw Error(ErrorCode::UnsupportedDimension, "A is a 1d event");
  return window_in_A(window_bits(c));
}

double mu_A(const Params& params) {
  double mass = 0;
  for (unsigned w = 0; w < 32; ++w) {
    if (!window_in_A(w)) continue;
    int ones = __builtin_popcount(w);
    mass += std::pow(params.p(), ones) * std::pow(params.q, 5 - ones);
  }
  return mass;
}

std::vector<double> mu3_window_law(const Params& params) {
  std::vector<double> law(32, 0.0);
  double norm = 0;
  for (unsigned w = 0; w < 32; ++w) {
    if (!window_in_A(w)) continue;
    int ones = __builtin_popcount(w);
    law[w] = std::pow(params.p(), ones) * std::pow(params.q, 5 - ones);
    norm += law[w];
  }
  for (double& v : law) v /= norm;
  return law;
}

ConditionedConfig sample_mu3(const Params& params, int64_t ring, Rng& rng) {
  if (ring < 5)
    throw Error(ErrorCode::InvalidArgument, "mu^(3) sampling needs length >= 5");
  std::vector<double> law = mu3_window_law(params);
  double u = rng.u01();
  unsigned w = 31;
  double acc = 0;
  for (unsigned cand = 0; cand < 32; ++cand) {
    acc += law[cand];
    if (u < acc) {
      w = cand;
      break;
    }
  }
  SpinConfig c({ring}, Boundary::Periodic);
  for (int64_t i = 0; i < ring; ++i) c.set_index(i, !rng.bernoulli(params.q));
  for (int s = -2; s <= 2; ++s) c.set(site1(s), (w >> (s + 2)) & 1u);

  AWitness wit = AWitness::RightPair;
  auto occ = [w](int site) { return (w >> (site + 2)) & 1u; };
  if (!occ(1) && !occ(2))
    wit = AWitness::RightPair;
  else if (!occ(-1) && !occ(1))
    wit = AWitness::StraddlePair;
  else
    wit = AWitness::LeftPair;
  return ConditionedConfig{std::move(c), wit};
}

std::vector<AuxMove> enabled_moves(const ConditionedConfig& c) {
  if (!in_A(c.config))
    throw Error(ErrorCode::Precondition, "configuration is not in A");
  std::vector<AuxMove> moves;
  const int e1 = c.config.occ(site1(1));
  const int em1 = c.config.occ(site1(-1));
  if (e1 == 0) moves.push_back(AuxMove::JumpRight);
  if (em1 == 0) moves.push_back(AuxMove::JumpLeft);
  if (e1 == 1 || em1 == 1) moves.push_back(AuxMove::Swap);
  return moves;
}

AuxPath simulate_aux(const ConditionedConfig& c0, double horizon,
                     const std::vector<double>& sample_times, uint64_t seed,
                     const AuxOptions& opts) {
  const SpinConfig& init = c0.config;
  if (init.dim() != 1 || init.boundary() != Boundary::Periodic)
    throw Error(ErrorCode::InvalidArgument, "auxiliary dynamics runs on a ring");
  const int64_t n = init.n_sites();
  if (static_cast<double>(n) < 10.0 * std::sqrt(2.0 * horizon))
    throw Error(ErrorCode::InvalidArgument,
                "ring too short for the moving window (needs >= 10 E|N|)");
  if (!in_A(init))
    throw Error(ErrorCode::Precondition, "initial configuration must be in A");

  std::vector<uint8_t> occ(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) occ[static_cast<size_t>(i)] = init.occupied_index(i);
  int64_t origin = 0;
  auto at = [&](int64_t rel) {
    int64_t i = (origin + rel) % n;
    if (i < 0) i += n;
    return static_cast<int>(occ[static_cast<size_t>(i)]);
  };
  auto set_rel = [&](int64_t rel, int v) {
    int64_t i = (origin + rel) % n;
    if (i < 0) i += n;
    occ[static_cast<size_t>(i)] = static_cast<uint8_t>(v);
  };
  auto centered_in_A = [&]() {
    if (at(0)) return false;
    return (!at(1) && !at(2)) || (!at(-1) && !at(1)) || (!at(-2) && !at(-1));
  };
  auto do_swap = [&]() {
    for (int64_t k : {1, 2}) {
      int a = at(-k), b = at(k);
      set_rel(-k, b);
      set_rel(k, a);
    }
  };

  Rng rng(seed);
  AuxPath path;
  path.seed = seed;
  path.sample_times = sample_times;
  int64_t X = 0, N = 0;
  double t = 0;
  size_t next_sample = 0;
  auto record_until = [&](double limit) {
    while (next_sample < sample_times.size() && sample_times[next_sample] < limit) {
      path.x_samples.push_back(X);
      path.n_samples_path.push_back(N);
      ++next_sample;
    }
  };

  for (;;) {
    double tn = t + rng.exponential(2.0);
    record_until(std::min(tn, horizon));
    if (tn > horizon) break;
    t = tn;
    bool forward = rng.bernoulli(0.5);
    AuxMove mv;
    if (forward) {
      if (at(1) == 0) {
        mv = AuxMove::JumpRight;
        origin += 1;
        X += 1;
      } else {
        mv = AuxMove::Swap;
        do_swap();
      }
      N += 1;
    } else {
      if (at(-1) == 0) {
        mv = AuxMove::JumpLeft;
        origin -= 1;
        X -= 1;
      } else {
        mv = AuxMove::Swap;
        do_swap();
      }
      N -= 1;
    }
    if (!centered_in_A()) {
      ++path.violations;
      throw Error(ErrorCode::Numerical,
                  "auxiliary dynamics left A: invariant violation");
    }
    if (opts.record_moves) {
      path.move_times.push_back(t);
      path.moves.push_back(mv);
      path.n_after.push_back(N);
      path.x_after.push_back(X);
    }
  }
  while (next_sample < sample_times.size() && sample_times[next_sample] <= horizon) {
    path.x_samples.push_back(X);
    path.n_samples_path.push_back(N);
    ++next_sample;
  }
  return path;
}

EstimateReport estimate_Dbar(const std::vector<AuxPath>& paths,
                             const FitOptions& opts) {
  if (paths.size() < 20)
    throw Error(ErrorCode::Precondition, "estimate_Dbar needs >= 20 paths");
  std::vector<Trajectory> trajs;
  trajs.reserve(paths.size());
  for (const AuxPath& p : paths) {
    Trajectory t;
    t.sample_times = p.sample_times;
    t.horizon = p.sample_times.empty() ? 0 : p.sample_times.back();
    t.dims = {1};
    t.seed = p.seed;
    t.model = "auxiliary";
    for (int64_t x : p.x_samples) t.displacements.push_back({x});
    trajs.push_back(std::move(t));
  }
  Direction u{{1.0}};
  return estimate_D(trajs, u, opts);
}

double kzeros_lower_bound(const EstimateReport& dbar, const Params& params) {
  const double q = params.q;
  return (1.0 + 2.0 * params.p()) / 4.0 * q * q * q * q * dbar.value;
}

}  // namespace kcsm
