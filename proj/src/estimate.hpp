#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "exact.hpp"

namespace kcsm {

struct EstimateReport {
  double value = 0;
  double stderr_val = 0;
  int64_t n_samples = 0;
  double burn_in = 0;
  double fit_lo = 0, fit_hi = 0;
  double r_squared = 1.0;
  bool nonlinearity_warning = false;
  std::string notes;
};

struct FitOptions {
  double burn_in_fraction = 0.1;   // discarded before anything is fit
  double fit_lo_fraction = 0.2;    // fit window [20%, 100%] of the horizon
  double r2_threshold = 0.9;
  int n_batches = 10;
};

/// MSD route to the diffusion coefficient: fits the slope of the empirical
/// E[(u.X_t)^2] over the fit window; D = slope/2 with batch-means errors over
/// independent trajectories. Requires >= 20 trajectories on a common grid.
EstimateReport estimate_D(const std::vector<Trajectory>& trajectories,
                          const Direction& u, const FitOptions& opts = {});

struct PowerLawPoint {
  double q;
  double value;
  double sigma;
};

struct PowerLawFit {
  double exponent = 0;
  double exponent_stderr = 0;
  double log_prefactor = 0;
};

/// Weighted least squares on (log q, log D); sigma <= 0 anywhere means
/// unweighted with residual-based errors.
PowerLawFit fit_power_law(const std::vector<PowerLawPoint>& points);

struct SandwichReport {
  double lower = 0, upper = 0;
  double d_value = 0, d_stderr = 0;
  double lower_slack = 0, upper_slack = 0;  // signed margins, >= 0 when passing
  bool pass = false;
};

/// gap/(4d+gap) q^2 - 3 sigma <= D <= q^2 + 3 sigma, with margins.
SandwichReport sandwich_check(const EstimateReport& D, const SpectralResult& gap,
                              const Params& params, int d);

struct EastRatioPoint {
  double q;
  EstimateReport D;
  SpectralResult gap;
};

struct EastRatioReport {
  std::vector<double> q;
  std::vector<double> d_over_gap;
  std::vector<double> log_ratio;  // log D / log gap
  bool log_ratio_increasing = false;
  double final_log_ratio = 0;
  double fitted_c = 0;  // min D / (q^2 gap) over the sweep
  bool c_positive = false;
};

/// D vs gap diagnostics for the East sweep; points ordered by decreasing q.
EastRatioReport east_ratio_report(const std::vector<EastRatioPoint>& points);

struct ClusterMobilityOptions {
  int64_t ring = 128;
  double horizon = 0;      // 0: defaults to 24/q
  int64_t n_samples = 3000;
  int n_grid = 40;
  int count_cap_extra = 2;   // censor when zeros exceed k + extra
  int64_t span_cap_extra = 3;  // censor when the zero span reaches k + extra
  FitOptions fit;
};

/// Diffusivity of an isolated k-zero cluster: tracks the zero-set centroid
/// over many seeded runs and fits its MSD slope. Dissolved clusters are
/// censored and counted. `initial`, when given, must carry a contiguous block
/// of k zeros (all-ones is rejected: no cluster to track).
EstimateReport zero_cluster_mobility(const ConstraintModel& model,
                                     const Params& params, uint64_t seed,
                                     const ClusterMobilityOptions& opts = {},
                                     const std::optional<SpinConfig>& initial =
                                         std::nullopt);

}  // namespace kcsm
