#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "constraints.hpp"
#include "lattice.hpp"

namespace kcsm {

enum class GeneratorKind { Environment, SeenFromTracer };

/// Sparse generator over one enumerated communicating class (the closure of
/// the all-empty configuration), with the stationary weights of mu conditioned
/// on the class. Row sums are zero: diag[i] is the total exit rate of state i.
struct GeneratorRecord {
  std::vector<uint32_t> states;  // bitmask per state, bit = site occupancy
  std::vector<int64_t> row_ptr;  // CSR over off-diagonal transitions
  std::vector<int32_t> col;
  std::vector<double> rate;
  std::vector<double> diag;
  std::vector<double> weights;  // normalized on the class
  GeneratorKind kind = GeneratorKind::Environment;
  ConstraintModel model = ConstraintModel::FA1f();
  double q = 0;
  std::vector<int64_t> dims;
  Boundary boundary = Boundary::Periodic;

  int64_t n() const { return static_cast<int64_t>(states.size()); }
  int64_t nnz() const { return static_cast<int64_t>(col.size()); }
  /// max |w_i L_ij - w_j L_ji| over off-diagonal pairs
  double detailed_balance_residual() const;
};

/// Enumerate the communicating class containing the all-empty configuration
/// and assemble flip rates; SeenFromTracer additionally carries the 2d
/// recentring-shift transitions at rate (1-eta_0)(1-eta_{alpha e_i})
/// (periodic boxes only).
GeneratorRecord build_generator(const ConstraintModel& model, const Params& params,
                                const std::vector<int64_t>& dims, Boundary boundary,
                                GeneratorKind kind, int64_t state_cap = 1 << 20);

enum class GapMethod { Dense, Lobpcg };

struct SpectralResult {
  double gap = 0;
  double relaxation_time = 0;
  int64_t class_size = 0;
  GapMethod method = GapMethod::Dense;
  double residual = 0;  // iterative eigensolver residual
  int iterations = 0;
};

/// Smallest nonzero eigenvalue of -L in the weighted inner product
/// (similarity transform by sqrt(weights), then a symmetric eigensolve).
/// Dense below 2^12 states, iterative (deflated, Jacobi-preconditioned
/// LOBPCG) above; `force` overrides for cross-validation.
SpectralResult spectral_gap(const GeneratorRecord& gen,
                            std::optional<GapMethod> force = std::nullopt,
                            double tol = 1e-10, int max_iter = 20000);

/// 1/gap of the East model on {1..L} with frozen empty right boundary.
SpectralResult relaxation_time(int L, const Params& params,
                               int64_t state_cap = 1 << 20);

/// Direction vector for the quadratic form u.Du.
struct Direction {
  std::vector<double> u;
  double norm2() const;
};

/// j_u(eta) = (1-eta_0) sum_i sum_alpha (1-eta_{alpha e_i}) alpha u_i:
/// the local drift produced by the tracer jump terms.
double current_ju(const SpinConfig& c, const Direction& u);

/// Local test function: either an explicit table over a 1d window of sites,
/// or a builtin. FirstOneRight is f(eta)=min{x>=0 : eta_x=1} truncated at
/// radius (sentinel radius+1); ClusterFrontier is the right frontier of the
/// origin cluster of zeros, which coincides with FirstOneRight in 1d.
struct TestFunction {
  enum class Kind { Table, FirstOneRight, ClusterFrontier };
  Kind kind = Kind::Table;
  // Table: window of 1d coordinates (sorted) and 2^|window| values, bit i of
  // the table index = occupancy of window[i].
  std::vector<int64_t> window;
  std::vector<double> table;
  int radius = 12;  // builtin truncation

  static TestFunction zero();
  static TestFunction from_table(std::vector<int64_t> window,
                                 std::vector<double> table);
  static TestFunction first_one_right(int radius);
  static TestFunction cluster_frontier(int radius);

  int64_t window_lo() const;
  int64_t window_hi() const;
  /// Value on a window assignment provided by a site->occupancy view.
  double eval(const std::function<int(int64_t)>& occ) const;
};

struct ObjectiveResult {
  double value = 0;      // flip_term + jump_term; value/2 upper-bounds u.Du
  double flip_term = 0;  // sum_y mu(c_y r_y [f(eta^y)-f(eta)]^2)
  double jump_term = 0;  // sum_alpha mu((1-eta_0)(1-eta_alpha)[alpha u + df]^2)
  double sigma = 0;      // Monte Carlo mode only
  int64_t n_samples = 0;
  double truncation_hit_fraction = 0;
};

/// Exact evaluation of the variational bracket for a 1d cylinder test
/// function: sums over all configurations of the window extended by the
/// constraint radius, with product Bernoulli weights (infinite-volume exact).
ObjectiveResult variational_objective_exact(const TestFunction& f, double u,
                                            const ConstraintModel& model,
                                            const Params& params,
                                            int max_window_sites = 24);

/// Monte Carlo mode on a large ring, for windows too big to enumerate.
ObjectiveResult variational_objective_mc(const TestFunction& f, double u,
                                         const ConstraintModel& model,
                                         const Params& params, int64_t n_samples,
                                         uint64_t seed, int64_t ring = 4096);

struct S0S1Result {
  double s0 = 0, s0_sigma = 0;
  double s1 = 0, s1_sigma = 0;
  double db_diff = 0, db_sigma = 0;  // (1-q) a - q b per-sample statistics
  double flip_term = 0, flip_sigma = 0;
  int64_t n_samples = 0;
  double truncation_hit_fraction = 0;
  bool unreliable = false;
};

/// Monte Carlo estimates of S0 = sum_y mu(c_y (1-eta_y) [df]^2) and
/// S1 = sum_y mu(c_y eta_y [df]^2) for the cluster frontier function,
/// truncated at `radius` with explicit truncation accounting.
S0S1Result sums_S0_S1(const ConstraintModel& model, const Params& params,
                      int64_t n_samples, uint64_t seed, int radius = 40,
                      int64_t ring = 2048, double unreliable_threshold = 0.01);

struct DirichletSplit {
  double d_jump = 0;
  double d_fa = 0;
  double mu_jf = 0;
  double jump_functional = 0;  // 2 mu(jf) - D_jump(f)
  double fa_functional = 0;    // 2 mu(jf) - D_FA(f)
};

/// FA-1f, d = 1: Dirichlet-form split and the two functionals, exact.
DirichletSplit dirichlet_split(const TestFunction& f, const Params& params);

/// sup_f [ 2 mu(jf) - D_FA(f) ] over cylinder functions on the window
/// [-half..half]: concave quadratic, solved exactly by pseudo-inverse.
/// Returns the maximum and, via out-param, the maximizer table.
double maximize_fa_functional(const Params& params, int half,
                              TestFunction* argmax = nullptr);

/// Easy bounds for u.Du per unit direction: [gap/(4d+gap) q^2, q^2].
std::pair<double, double> gap_sandwich(const SpectralResult& env_gap,
                                       const Params& params, int d);

/// Exact P(T0 <= t) for the East hitting-time experiment on l sites with the
/// frozen empty right boundary, via the absorbing sub-generator (states with
/// site 1 occupied) and a symmetrized eigendecomposition. l <= 12.
double east_T0_cdf(int l, const Params& params, double t);

/// Sparse triplet export (i j rate per line; state file alongside) for
/// cross-validation by external tools.
void export_generator(const GeneratorRecord& gen, const std::string& path_prefix);

}  // namespace kcsm
