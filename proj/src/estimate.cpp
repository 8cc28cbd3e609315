#include "estimate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rng.hpp"

namespace kcsm {

namespace {

struct LineFit {
  double slope = 0, intercept = 0, r2 = 1.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  double xb = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double yb = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - xb) * (x[i] - xb);
    sxy += (x[i] - xb) * (y[i] - yb);
    syy += (y[i] - yb) * (y[i] - yb);
  }
  LineFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = yb - f.slope * xb;
  f.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

double msd_slope(const std::vector<const Trajectory*>& trajs, const Direction& u,
                 const std::vector<size_t>& window, double* r2) {
  const auto& times = trajs.front()->sample_times;
  std::vector<double> x, y;
  x.reserve(window.size());
  y.reserve(window.size());
  for (size_t j : window) {
    double acc = 0;
    for (const Trajectory* t : trajs) {
      double dot = 0;
      for (size_t a = 0; a < u.u.size(); ++a)
        dot += u.u[a] * static_cast<double>(t->displacements[j][a]);
      acc += dot * dot;
    }
    x.push_back(times[j]);
    y.push_back(acc / static_cast<double>(trajs.size()));
  }
  LineFit f = fit_line(x, y);
  if (r2) *r2 = f.r2;
  return f.slope;
}

}  // namespace

EstimateReport estimate_D(const std::vector<Trajectory>& trajectories,
                          const Direction& u, const FitOptions& opts) {
  if (trajectories.size() < 20)
    throw Error(ErrorCode::Precondition, "estimate_D needs >= 20 trajectories");
  const auto& t0 = trajectories.front();
  for (const auto& t : trajectories)
    if (t.sample_times != t0.sample_times)
      throw Error(ErrorCode::Precondition, "trajectories must share a sample grid");
  if (static_cast<int>(u.u.size()) != static_cast<int>(t0.dims.size()))
    throw Error(ErrorCode::InvalidArgument, "direction dimension mismatch");

  const double horizon = t0.horizon;
  std::vector<size_t> window;
  for (size_t j = 0; j < t0.sample_times.size(); ++j)
    if (t0.sample_times[j] >= opts.fit_lo_fraction * horizon &&
        t0.displacements.size() > j)
      window.push_back(j);
  if (window.size() < 3)
    throw Error(ErrorCode::Precondition, "fit window has fewer than 3 samples");

  std::vector<const Trajectory*> all;
  for (const auto& t : trajectories) all.push_back(&t);

  EstimateReport rep;
  rep.burn_in = opts.burn_in_fraction * horizon;
  rep.fit_lo = t0.sample_times[window.front()];
  rep.fit_hi = t0.sample_times[window.back()];
  rep.n_samples = static_cast<int64_t>(trajectories.size());

  double r2 = 1.0;
  rep.value = 0.5 * msd_slope(all, u, window, &r2);
  rep.r_squared = r2;
  if (r2 < opts.r2_threshold) {
    rep.nonlinearity_warning = true;
    rep.notes = "MSD fit R^2 below threshold; slope may not be asymptotic";
  }

  const int nb = std::min<int>(opts.n_batches,
                               static_cast<int>(trajectories.size() / 2));
  std::vector<double> batch_d;
  for (int b = 0; b < nb; ++b) {
    size_t lo = trajectories.size() * b / nb;
    size_t hi = trajectories.size() * (b + 1) / nb;
    std::vector<const Trajectory*> part(all.begin() + lo, all.begin() + hi);
    batch_d.push_back(0.5 * msd_slope(part, u, window, nullptr));
  }
  double mean = std::accumulate(batch_d.begin(), batch_d.end(), 0.0) / nb;
  double var = 0;
  for (double d : batch_d) var += (d - mean) * (d - mean);
  var /= std::max(1, nb - 1);
  rep.stderr_val = std::sqrt(var / nb);

  bool wrap = std::any_of(trajectories.begin(), trajectories.end(),
                          [](const Trajectory& t) { return t.wrap_risk; });
  if (wrap) rep.notes += (rep.notes.empty() ? "" : "; ") + std::string(
                             "wrap risk: displacement exceeded N/4");
  return rep;
}

PowerLawFit fit_power_law(const std::vector<PowerLawPoint>& points) {
  if (points.size() < 4)
    throw Error(ErrorCode::Precondition, "power-law fit needs >= 4 points");
  double qmin = points[0].q, qmax = points[0].q;
  for (const auto& p : points) {
    if (p.value <= 0)
      throw Error(ErrorCode::InvalidArgument, "power-law fit needs positive values");
    qmin = std::min(qmin, p.q);
    qmax = std::max(qmax, p.q);
  }
  if (qmax < 3.0 * qmin - 1e-12)
    throw Error(ErrorCode::Precondition, "q range must span at least a factor 3");

  const size_t n = points.size();
  std::vector<double> x(n), y(n), w(n);
  bool weighted = true;
  for (const auto& p : points)
    if (!(p.sigma > 0)) weighted = false;
  for (size_t i = 0; i < n; ++i) {
    x[i] = std::log(points[i].q);
    y[i] = std::log(points[i].value);
    double sl = weighted ? points[i].sigma / points[i].value : 1.0;
    w[i] = 1.0 / (sl * sl);
  }
  double sw = 0, xb = 0, yb = 0;
  for (size_t i = 0; i < n; ++i) {
    sw += w[i];
    xb += w[i] * x[i];
    yb += w[i] * y[i];
  }
  xb /= sw;
  yb /= sw;
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += w[i] * (x[i] - xb) * (x[i] - xb);
    sxy += w[i] * (x[i] - xb) * (y[i] - yb);
  }
  PowerLawFit fit;
  fit.exponent = sxy / sxx;
  fit.log_prefactor = yb - fit.exponent * xb;
  if (weighted) {
    fit.exponent_stderr = std::sqrt(1.0 / sxx);
  } else {
    double rss = 0;
    for (size_t i = 0; i < n; ++i) {
      double r = y[i] - (fit.log_prefactor + fit.exponent * x[i]);
      rss += r * r;
    }
    double s2 = n > 2 ? rss / static_cast<double>(n - 2) : 0.0;
    fit.exponent_stderr = std::sqrt(s2 / sxx);
  }
  return fit;
}

SandwichReport sandwich_check(const EstimateReport& D, const SpectralResult& gap,
                              const Params& params, int d) {
  auto [lower, upper] = gap_sandwich(gap, params, d);
  SandwichReport rep;
  rep.lower = lower;
  rep.upper = upper;
  rep.d_value = D.value;
  rep.d_stderr = D.stderr_val;
  rep.lower_slack = D.value - (lower - 3 * D.stderr_val);
  rep.upper_slack = (upper + 3 * D.stderr_val) - D.value;
  rep.pass = rep.lower_slack >= 0 && rep.upper_slack >= 0;
  return rep;
}

EastRatioReport east_ratio_report(const std::vector<EastRatioPoint>& points) {
  EastRatioReport rep;
  for (const auto& p : points) {
    rep.q.push_back(p.q);
    rep.d_over_gap.push_back(p.D.value / p.gap.gap);
    rep.log_ratio.push_back(std::log(p.D.value) / std::log(p.gap.gap));
  }
  rep.log_ratio_increasing = true;
  for (size_t i = 1; i < rep.log_ratio.size(); ++i)
    if (rep.log_ratio[i] < rep.log_ratio[i - 1]) rep.log_ratio_increasing = false;
  rep.final_log_ratio = rep.log_ratio.empty() ? 0 : rep.log_ratio.back();
  rep.fitted_c = 0;
  for (size_t i = 0; i < points.size(); ++i) {
    double c = points[i].D.value / (points[i].q * points[i].q * points[i].gap.gap);
    rep.fitted_c = i == 0 ? c : std::min(rep.fitted_c, c);
  }
  rep.c_positive = rep.fitted_c > 0;
  return rep;
}

EstimateReport zero_cluster_mobility(const ConstraintModel& model,
                                     const Params& params, uint64_t seed,
                                     const ClusterMobilityOptions& opts,
                                     const std::optional<SpinConfig>& initial) {
  if (model.kind != ModelKind::KZeros)
    throw Error(ErrorCode::InvalidArgument, "cluster mobility is for k-zeros models");
  if (initial) {
    if (initial->dim() != 1)
      throw Error(ErrorCode::UnsupportedDimension, "cluster mobility is 1d");
    std::vector<int64_t> zeros;
    for (int64_t i = 0; i < initial->n_sites(); ++i)
      if (!initial->occupied_index(i)) zeros.push_back(i);
    if (zeros.empty())
      throw Error(ErrorCode::Precondition,
                  "no empty site: cluster centroid undefined");
    if (static_cast<int>(zeros.size()) != model.k ||
        zeros.back() - zeros.front() != model.k - 1)
      throw Error(ErrorCode::InvalidArgument,
                  "initial configuration must hold one block of k zeros");
  }

  const double horizon = opts.horizon > 0 ? opts.horizon : 24.0 / params.q;
  std::vector<double> grid;
  for (int j = 1; j <= opts.n_grid; ++j)
    grid.push_back(horizon * j / opts.n_grid);

  const int count_cap = model.k + opts.count_cap_extra;
  const int64_t span_cap = model.k + opts.span_cap_extra;
  const double c0 = (model.k - 1) / 2.0;  // initial centroid

  std::vector<std::vector<double>> sq_disp(grid.size());
  int64_t censored = 0;
  for (int64_t s = 0; s < opts.n_samples; ++s) {
    ClusterRun run =
        simulate_cluster(model, params, opts.ring, horizon, grid,
                         derive_seed(seed, 0xc105, static_cast<uint64_t>(s)),
                         count_cap, span_cap);
    if (run.censored) ++censored;
    for (size_t j = 0; j < grid.size(); ++j) {
      if (!run.alive[j]) break;
      double d = run.centroids[j] - c0;
      sq_disp[j].push_back(d * d);
    }
  }

  // fit over grid points where at least half the runs are still alive
  std::vector<double> x, y;
  for (size_t j = 0; j < grid.size(); ++j) {
    if (static_cast<int64_t>(sq_disp[j].size()) * 2 < opts.n_samples) break;
    if (grid[j] < opts.fit.fit_lo_fraction * horizon) continue;
    double m = std::accumulate(sq_disp[j].begin(), sq_disp[j].end(), 0.0) /
               sq_disp[j].size();
    x.push_back(grid[j]);
    y.push_back(m);
  }
  if (x.size() < 3)
    throw Error(ErrorCode::Precondition,
                "too few surviving samples for a mobility fit");
  LineFit f = fit_line(x, y);

  // batch means over run index for the error bar
  const int nb = 10;
  std::vector<double> batch;
  for (int b = 0; b < nb; ++b) {
    std::vector<double> xb, yb;
    for (size_t j = 0; j < grid.size(); ++j) {
      size_t n = sq_disp[j].size();
      if (static_cast<int64_t>(n) * 2 < opts.n_samples) break;
      if (grid[j] < opts.fit.fit_lo_fraction * horizon) continue;
      size_t lo = n * b / nb, hi = n * (b + 1) / nb;
      if (hi <= lo) continue;
      double m = std::accumulate(sq_disp[j].begin() + lo, sq_disp[j].begin() + hi,
                                 0.0) /
                 (hi - lo);
      xb.push_back(grid[j]);
      yb.push_back(m);
    }
    if (xb.size() >= 3) batch.push_back(0.5 * fit_line(xb, yb).slope);
  }
  double mean = std::accumulate(batch.begin(), batch.end(), 0.0) / batch.size();
  double var = 0;
  for (double d : batch) var += (d - mean) * (d - mean);
  var /= std::max<size_t>(1, batch.size() - 1);

  EstimateReport rep;
  rep.value = 0.5 * f.slope;
  rep.stderr_val = std::sqrt(var / batch.size());
  rep.n_samples = opts.n_samples;
  rep.fit_lo = x.front();
  rep.fit_hi = x.back();
  rep.r_squared = f.r2;
  rep.notes = "censored " + std::to_string(censored) + "/" +
              std::to_string(opts.n_samples);
  return rep;
}

}  // namespace kcsm
