#include "exact.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>

#include "rng.hpp"
#include "tables.hpp"

namespace kcsm {

using detail::build_constraint_table;
using detail::constraint_ok_mask;
using detail::ConstraintTable;

double GeneratorRecord::detailed_balance_residual() const {
  double worst = 0;
  for (int64_t i = 0; i < n(); ++i) {
    for (int64_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e) {
      int32_t j = col[e];
      // locate the reverse entry by binary search in row j
      const int32_t* lo = col.data() + row_ptr[j];
      const int32_t* hi = col.data() + row_ptr[j + 1];
      const int32_t* it = std::lower_bound(lo, hi, static_cast<int32_t>(i));
      double rji = (it != hi && *it == static_cast<int32_t>(i))
                       ? rate[it - col.data()]
                       : 0.0;
      worst = std::max(worst, std::abs(weights[i] * rate[e] - weights[j] * rji));
    }
  }
  return worst;
}

namespace {

// bit permutation realizing eta -> eta_{alpha e_axis + .} on a periodic box
std::vector<int32_t> shift_permutation(const SpinConfig& probe, int axis, int sign) {
  std::vector<int32_t> perm(static_cast<size_t>(probe.n_sites()));
  for (int64_t i = 0; i < probe.n_sites(); ++i) {
    Site s = probe.site_of_index(i);
    s.coords[static_cast<size_t>(axis)] += sign;
    perm[static_cast<size_t>(i)] = static_cast<int32_t>(probe.index_of(s));
  }
  return perm;
}

uint32_t apply_perm(uint32_t s, const std::vector<int32_t>& perm) {
  uint32_t out = 0;
  for (size_t x = 0; x < perm.size(); ++x)
    if ((s >> perm[x]) & 1u) out |= 1u << x;
  return out;
}

}  // namespace

GeneratorRecord build_generator(const ConstraintModel& model, const Params& params,
                                const std::vector<int64_t>& dims, Boundary boundary,
                                GeneratorKind kind, int64_t state_cap) {
  SpinConfig probe(dims, boundary);
  const int64_t nsites = probe.n_sites();
  if (nsites > 22)
    throw Error(ErrorCode::ResourceLimit,
                "generator enumeration is capped at 22 sites");
  if (kind == GeneratorKind::SeenFromTracer && boundary != Boundary::Periodic)
    throw Error(ErrorCode::BoundaryViolation,
                "seen-from-tracer generators need a periodic box");

  ConstraintTable ct = build_constraint_table(model, dims, boundary);
  const int d = probe.dim();
  std::vector<std::vector<int32_t>> shifts;
  std::vector<int32_t> shift_site;  // index of the alpha e_i site
  if (kind == GeneratorKind::SeenFromTracer) {
    for (int axis = 0; axis < d; ++axis) {
      for (int sign : {1, -1}) {
        shifts.push_back(shift_permutation(probe, axis, sign));
        Site s;
        s.coords.assign(static_cast<size_t>(d), 0);
        s.coords[static_cast<size_t>(axis)] = sign;
        shift_site.push_back(static_cast<int32_t>(probe.index_of(s)));
      }
    }
  }

  auto neighbours = [&](uint32_t s, auto&& emit) {
    for (int64_t x = 0; x < nsites; ++x) {
      if (!constraint_ok_mask(s, ct, x)) continue;
      bool occ = (s >> x) & 1u;
      emit(s ^ (1u << x), occ ? params.q : params.p());
    }
    for (size_t m = 0; m < shifts.size(); ++m) {
      if ((s & 1u) || ((s >> shift_site[m]) & 1u)) continue;  // both must be empty
      uint32_t t = apply_perm(s, shifts[m]);
      if (t != s) emit(t, 1.0);
    }
  };

  // breadth-first closure from the all-empty configuration
  std::vector<int32_t> index(static_cast<size_t>(1) << nsites, -1);
  std::vector<uint32_t> states;
  std::deque<uint32_t> queue;
  index[0] = 0;
  states.push_back(0);
  queue.push_back(0);
  while (!queue.empty()) {
    uint32_t s = queue.front();
    queue.pop_front();
    neighbours(s, [&](uint32_t t, double) {
      if (index[t] >= 0) return;
      if (static_cast<int64_t>(states.size()) >= state_cap)
        throw Error(ErrorCode::ResourceLimit, "state cap exceeded");
      index[t] = static_cast<int32_t>(states.size());
      states.push_back(t);
      queue.push_back(t);
    });
  }

  GeneratorRecord gen;
  gen.states = std::move(states);
  gen.kind = kind;
  gen.model = model;
  gen.q = params.q;
  gen.dims = dims;
  gen.boundary = boundary;
  const int64_t n = gen.n();

  gen.row_ptr.assign(static_cast<size_t>(n) + 1, 0);
  gen.weights.resize(static_cast<size_t>(n));
  gen.diag.assign(static_cast<size_t>(n), 0.0);

  std::vector<std::pair<int32_t, double>> row;
  std::vector<int32_t> cols;
  std::vector<double> rates;
  double total_weight = 0;
  for (int64_t i = 0; i < n; ++i) {
    uint32_t s = gen.states[static_cast<size_t>(i)];
    int ones = __builtin_popcount(s);
    double w = std::pow(params.p(), ones) *
               std::pow(params.q, static_cast<int>(nsites) - ones);
    gen.weights[static_cast<size_t>(i)] = w;
    total_weight += w;

    row.clear();
    neighbours(s, [&](uint32_t t, double r) {
      row.emplace_back(index[t], r);
    });
    std::sort(row.begin(), row.end());
    // merge parallel transitions (a flip and a shift can share endpoints)
    for (size_t a = 0; a < row.size();) {
      int32_t j = row[a].first;
      double r = 0;
      while (a < row.size() && row[a].first == j) r += row[a++].second;
      cols.push_back(j);
      rates.push_back(r);
      gen.diag[static_cast<size_t>(i)] += r;
    }
    gen.row_ptr[static_cast<size_t>(i) + 1] = static_cast<int64_t>(cols.size());
  }
  for (double& w : gen.weights) w /= total_weight;
  gen.col = std::move(cols);
  gen.rate = std::move(rates);
  return gen;
}

namespace {

// y = S x on the symmetrized operator S = D^{1/2} (-L) D^{-1/2}:
// S_ii = exit rate, S_ij = -rate_ij * s_i / s_j with s = sqrt(weights).
struct SymOperator {
  const GeneratorRecord& gen;
  std::vector<double> symval;  // per CSR entry

  explicit SymOperator(const GeneratorRecord& g) : gen(g) {
    std::vector<double> s(static_cast<size_t>(g.n()));
    for (int64_t i = 0; i < g.n(); ++i) s[i] = std::sqrt(g.weights[i]);
    symval.resize(g.rate.size());
    for (int64_t i = 0; i < g.n(); ++i)
      for (int64_t e = g.row_ptr[i]; e < g.row_ptr[i + 1]; ++e)
        symval[static_cast<size_t>(e)] = g.rate[e] * s[i] / s[g.col[e]];
  }

  void apply(const Eigen::MatrixXd& x, Eigen::MatrixXd& y) const {
    const int64_t n = gen.n();
    const int m = static_cast<int>(x.cols());
    for (int64_t i = 0; i < n; ++i) {
      for (int c = 0; c < m; ++c) y(i, c) = gen.diag[i] * x(i, c);
      for (int64_t e = gen.row_ptr[i]; e < gen.row_ptr[i + 1]; ++e) {
        const double v = symval[static_cast<size_t>(e)];
        const int32_t j = gen.col[e];
        for (int c = 0; c < m; ++c) y(i, c) -= v * x(j, c);
      }
    }
  }
};

SpectralResult dense_gap(const GeneratorRecord& gen) {
  const int64_t n = gen.n();
  if (n > 8192)
    throw Error(ErrorCode::ResourceLimit, "dense eigensolve capped at 8192 states");
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
  std::vector<double> s(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) s[i] = std::sqrt(gen.weights[i]);
  for (int64_t i = 0; i < n; ++i) {
    S(i, i) = gen.diag[i];
    for (int64_t e = gen.row_ptr[i]; e < gen.row_ptr[i + 1]; ++e)
      S(i, gen.col[e]) -= gen.rate[e] * s[i] / s[gen.col[e]];
  }
  S = 0.5 * (S + S.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw Error(ErrorCode::Numerical, "dense eigensolve failed");
  const auto& ev = es.eigenvalues();
  double scale = std::max(1.0, std::abs(ev(n - 1)));
  if (std::abs(ev(0)) > 1e-8 * scale)
    throw Error(ErrorCode::Numerical, "null eigenvalue missing from generator");
  SpectralResult r;
  r.gap = n > 1 ? ev(1) : 0.0;
  r.relaxation_time = r.gap > 0 ? 1.0 / r.gap : 0.0;
  r.class_size = n;
  r.method = GapMethod::Dense;
  return r;
}

// orthonormalize the columns of M in place (thin QR)
void thin_qr(Eigen::MatrixXd& M) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
  M = qr.householderQ() * Eigen::MatrixXd::Identity(M.rows(), M.cols());
}

// Jacobi-preconditioned LOBPCG for the smallest nonzero eigenvalue, with the
// known null vector sqrt(weights) deflated explicitly. One block matvec per
// iteration; the X and P blocks are recombined from the previous basis.
SpectralResult lobpcg_gap(const GeneratorRecord& gen, double tol, int max_iter) {
  const int64_t n = gen.n();
  const int m = 4;
  SymOperator op(gen);

  Eigen::VectorXd v0(n);
  for (int64_t i = 0; i < n; ++i) v0(i) = std::sqrt(gen.weights[i]);
  v0.normalize();
  Eigen::VectorXd dinv(n);
  for (int64_t i = 0; i < n; ++i)
    dinv(i) = gen.diag[i] > 0 ? 1.0 / gen.diag[i] : 1.0;

  auto deflate = [&](Eigen::MatrixXd& x) { x -= v0 * (v0.transpose() * x); };

  Rng rng(0x5eedULL);
  Eigen::MatrixXd X(n, m);
  for (int64_t i = 0; i < n; ++i)
    for (int c = 0; c < m; ++c) X(i, c) = rng.normal();
  deflate(X);
  thin_qr(X);
  deflate(X);

  Eigen::MatrixXd AX(n, m), P(n, m), AP(n, m);
  op.apply(X, AX);
  bool have_p = false;

  SpectralResult result;
  result.class_size = n;
  result.method = GapMethod::Lobpcg;

  for (int it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd theta(m);
    for (int c = 0; c < m; ++c) theta(c) = X.col(c).dot(AX.col(c));
    Eigen::MatrixXd R = AX - X * theta.asDiagonal();
    result.residual = R.col(0).norm();
    result.iterations = it;
    if (result.residual <= tol * std::max(std::abs(theta(0)), 1e-300)) {
      result.gap = theta(0);
      result.relaxation_time = 1.0 / result.gap;
      return result;
    }

    Eigen::MatrixXd W = dinv.asDiagonal() * R;
    deflate(W);
    W -= X * (X.transpose() * W);
    if (have_p) W -= P * (P.transpose() * W);
    thin_qr(W);
    Eigen::MatrixXd AW(n, m);
    op.apply(W, AW);

    // all three blocks are kept orthonormal, so a standard Rayleigh-Ritz on
    // the stacked basis suffices
    const int nb = have_p ? 3 * m : 2 * m;
    Eigen::MatrixXd T(nb, nb);
    auto block = [&](int bi) -> const Eigen::MatrixXd& {
      return bi == 0 ? X : (bi == 1 ? W : P);
    };
    auto ablock = [&](int bi) -> const Eigen::MatrixXd& {
      return bi == 0 ? AX : (bi == 1 ? AW : AP);
    };
    for (int bi = 0; bi * m < nb; ++bi)
      for (int bj = 0; bj * m < nb; ++bj)
        T.block(bi * m, bj * m, m, m) = block(bi).transpose() * ablock(bj);
    T = 0.5 * (T + T.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    Eigen::MatrixXd C = es.eigenvectors().leftCols(m);

    Eigen::MatrixXd Cx = C.topRows(m);
    Eigen::MatrixXd Cw = C.middleRows(m, m);
    Eigen::MatrixXd Xn = X * Cx + W * Cw;
    Eigen::MatrixXd AXn = AX * Cx + AW * Cw;
    Eigen::MatrixXd Pn = W * Cw;
    Eigen::MatrixXd APn = AW * Cw;
    if (have_p) {
      Eigen::MatrixXd Cp = C.bottomRows(m);
      Xn += P * Cp;
      AXn += AP * Cp;
      Pn += P * Cp;
      APn += AP * Cp;
    }

    // restore orthonormality with the R factors so the A-products stay
    // consistent without extra matvecs (A annihilates the deflated vector)
    auto renorm = [&](Eigen::MatrixXd& B, Eigen::MatrixXd& AB) {
      deflate(B);
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(B);
      Eigen::MatrixXd Rf = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
      double dmin = Rf.diagonal().cwiseAbs().minCoeff();
      double dmax = Rf.diagonal().cwiseAbs().maxCoeff();
      if (!(dmax > 0) || dmin < 1e-10 * dmax) return false;
      B = qr.householderQ() * Eigen::MatrixXd::Identity(n, m);
      // AB <- AB * Rf^{-1}
      AB = Rf.triangularView<Eigen::Upper>()
               .transpose()
               .solve(AB.transpose())
               .transpose();
      return true;
    };
    X = Xn;
    AX = AXn;
    if (!renorm(X, AX)) {  // degenerate basis: rebuild A-products directly
      thin_qr(X);
      op.apply(X, AX);
      have_p = false;
      continue;
    }
    P = Pn;
    AP = APn;
    have_p = renorm(P, AP);
  }
  throw Error(ErrorCode::Numerical,
              "iterative eigensolver did not converge: residual " +
                  std::to_string(result.residual) + " after " +
                  std::to_string(max_iter) + " iterations");
}

}  // namespace

SpectralResult spectral_gap(const GeneratorRecord& gen,
                            std::optional<GapMethod> force, double tol,
                            int max_iter) {
  const int64_t n = gen.n();
  if (n < 2) {
    SpectralResult r;
    r.gap = 0;
    r.relaxation_time = 0;
    r.class_size = n;
    return r;
  }
  // dense threshold 2^11: full eigensolves above ~2k states are slower than
  // the iterative path on one core
  GapMethod method =
      force.value_or(n < (1 << 11) ? GapMethod::Dense : GapMethod::Lobpcg);
  if (n < 32) method = GapMethod::Dense;  // block solver needs room
  return method == GapMethod::Dense ? dense_gap(gen)
                                    : lobpcg_gap(gen, tol, max_iter);
}

SpectralResult relaxation_time(int L, const Params& params, int64_t state_cap) {
  GeneratorRecord gen =
      build_generator(ConstraintModel::East(), params, {L},
                      Boundary::FrozenEmpty, GeneratorKind::Environment, state_cap);
  return spectral_gap(gen);
}

double Direction::norm2() const {
  double s = 0;
  for (double v : u) s += v * v;
  return std::sqrt(s);
}

double current_ju(const SpinConfig& c, const Direction& u) {
  if (static_cast<int>(u.u.size()) != c.dim())
    throw Error(ErrorCode::InvalidArgument, "direction dimension mismatch");
  Site origin;
  origin.coords.assign(c.dim(), 0);
  if (c.occ(origin) == 1) return 0.0;
  double j = 0;
  for (int axis = 0; axis < c.dim(); ++axis) {
    for (int sign : {1, -1}) {
      Site s = origin;
      s.coords[static_cast<size_t>(axis)] = sign;
      if (c.occ(s) == 0) j += sign * u.u[static_cast<size_t>(axis)];
    }
  }
  return j;
}

TestFunction TestFunction::zero() {
  TestFunction f;
  f.kind = Kind::Table;
  f.window = {0};
  f.table = {0.0, 0.0};
  return f;
}

TestFunction TestFunction::from_table(std::vector<int64_t> window,
                                      std::vector<double> table) {
  if (table.size() != (static_cast<size_t>(1) << window.size()))
    throw Error(ErrorCode::InvalidArgument, "table size must be 2^|window|");
  for (size_t i = 1; i < window.size(); ++i)
    if (window[i] <= window[i - 1])
      throw Error(ErrorCode::InvalidArgument, "window must be sorted");
  TestFunction f;
  f.kind = Kind::Table;
  f.window = std::move(window);
  f.table = std::move(table);
  return f;
}

TestFunction TestFunction::first_one_right(int radius) {
  TestFunction f;
  f.kind = Kind::FirstOneRight;
  f.radius = radius;
  f.window.resize(static_cast<size_t>(radius) + 1);
  std::iota(f.window.begin(), f.window.end(), 0);
  return f;
}

TestFunction TestFunction::cluster_frontier(int radius) {
  TestFunction f = first_one_right(radius);
  f.kind = Kind::ClusterFrontier;
  return f;
}

int64_t TestFunction::window_lo() const { return window.front(); }
int64_t TestFunction::window_hi() const { return window.back(); }

double TestFunction::eval(const std::function<int(int64_t)>& occ) const {
  if (kind == Kind::Table) {
    size_t idx = 0;
    for (size_t i = 0; i < window.size(); ++i)
      if (occ(window[i])) idx |= static_cast<size_t>(1) << i;
    return table[idx];
  }
  // FirstOneRight / ClusterFrontier (1d): position of the first occupied site
  // at or right of the origin, truncated at radius (sentinel radius+1)
  for (int64_t x = 0; x <= radius; ++x)
    if (occ(x)) return static_cast<double>(x);
  return static_cast<double>(radius + 1);
}

namespace {

// Enumeration window [lo, hi] of contiguous 1d sites with Bernoulli weights.
struct ExactWindow {
  int64_t lo, hi;
  int nsites;
  std::vector<double> weight_by_ones;

  ExactWindow(int64_t lo_, int64_t hi_, const Params& params, int cap)
      : lo(lo_), hi(hi_), nsites(static_cast<int>(hi_ - lo_ + 1)) {
    if (nsites > cap)
      throw Error(ErrorCode::ResourceLimit,
                  "exact summation window of " + std::to_string(nsites) +
                      " sites exceeds the cap of " + std::to_string(cap));
    weight_by_ones.resize(static_cast<size_t>(nsites) + 1);
    for (int ones = 0; ones <= nsites; ++ones)
      weight_by_ones[static_cast<size_t>(ones)] =
          std::pow(params.p(), ones) * std::pow(params.q, nsites - ones);
  }

  double weight(uint32_t mask) const {
    return weight_by_ones[static_cast<size_t>(__builtin_popcount(mask))];
  }
  int occ(uint32_t mask, int64_t x) const {
    return (mask >> (x - lo)) & 1u;
  }
  uint32_t flipped(uint32_t mask, int64_t x) const {
    return mask ^ (1u << (x - lo));
  }
};

// c_y on the enumeration window; sites outside [lo,hi] never occur because
// the window is pre-extended by the constraint radius.
int constraint_on_window(const ExactWindow& w, uint32_t mask,
                         const ConstraintModel& model, int64_t y) {
  if (model.kind == ModelKind::East) return w.occ(mask, y + 1) == 0 ? 1 : 0;
  int zeros = 0;
  for (int64_t t = 1; t <= model.k; ++t) {
    if (w.occ(mask, y - t) == 0) ++zeros;
    if (w.occ(mask, y + t) == 0) ++zeros;
  }
  return zeros >= model.k ? 1 : 0;
}

}  // namespace

ObjectiveResult variational_objective_exact(const TestFunction& f, double u,
                                            const ConstraintModel& model,
                                            const Params& params,
                                            int max_window_sites) {
  const int k = model.radius();
  const int64_t wlo = f.window_lo(), whi = f.window_hi();
  ExactWindow W(std::min<int64_t>(wlo - k, -1), std::max<int64_t>(whi + k, 1),
                params, max_window_sites);

  ObjectiveResult out;
  out.n_samples = int64_t{1} << W.nsites;
  const double sentinel = static_cast<double>(f.radius + 1);
  double trunc_mass = 0;

  for (uint32_t mask = 0; mask < (uint32_t{1} << W.nsites); ++mask) {
    const double wt = W.weight(mask);
    auto view = [&](int64_t x) { return W.occ(mask, x); };
    const double fb = f.eval(view);
    if (f.kind != TestFunction::Kind::Table && fb == sentinel) trunc_mass += wt;

    // flip term: only flips inside the function window can change f
    for (int64_t y : f.window) {
      if (!constraint_on_window(W, mask, model, y)) continue;
      const double rate = W.occ(mask, y) ? params.q : params.p();
      uint32_t fm = W.flipped(mask, y);
      auto fview = [&](int64_t x) { return W.occ(fm, x); };
      const double df = f.eval(fview) - fb;
      if (df != 0.0) out.flip_term += wt * rate * df * df;
    }

    // jump term
    if (W.occ(mask, 0) == 0) {
      for (int alpha : {1, -1}) {
        if (W.occ(mask, alpha) != 0) continue;
        auto sview = [&](int64_t x) { return W.occ(mask, x + alpha); };
        const double inc = alpha * u + f.eval(sview) - fb;
        out.jump_term += wt * inc * inc;
      }
    }
  }
  out.value = out.flip_term + out.jump_term;
  out.truncation_hit_fraction = trunc_mass;
  return out;
}

ObjectiveResult variational_objective_mc(const TestFunction& f, double u,
                                         const ConstraintModel& model,
                                         const Params& params, int64_t n_samples,
                                         uint64_t seed, int64_t ring) {
  const int k = model.radius();
  const int64_t wlo = f.window_lo(), whi = f.window_hi();
  const int64_t lo = std::min<int64_t>(wlo - k, -1) - 1;
  const int64_t hi = std::max<int64_t>(whi + k, 1) + 1;
  if (hi - lo + 1 > ring)
    throw Error(ErrorCode::InvalidArgument, "ring smaller than the read window");

  Rng rng(seed);
  std::vector<uint8_t> occ(static_cast<size_t>(ring));
  auto at = [&](int64_t x) {
    int64_t m = x % ring;
    if (m < 0) m += ring;
    return static_cast<int>(occ[static_cast<size_t>(m)]);
  };
  const double sentinel = static_cast<double>(f.radius + 1);

  double sum = 0, sum2 = 0, flip_sum = 0, jump_sum = 0;
  int64_t trunc_hits = 0;
  for (int64_t s = 0; s < n_samples; ++s) {
    for (auto& o : occ) o = rng.bernoulli(params.p()) ? 1 : 0;
    const double fb = f.eval(at);
    if (f.kind != TestFunction::Kind::Table && fb == sentinel) ++trunc_hits;
    double flip = 0, jump = 0;
    for (int64_t y : f.window) {
      int zeros = 0;
      bool ok;
      if (model.kind == ModelKind::East) {
        ok = at(y + 1) == 0;
      } else {
        for (int64_t t = 1; t <= k; ++t) {
          if (at(y - t) == 0) ++zeros;
          if (at(y + t) == 0) ++zeros;
        }
        ok = zeros >= model.k;
      }
      if (!ok) continue;
      const double rate = at(y) ? params.q : params.p();
      int64_t ym = y % ring;
      if (ym < 0) ym += ring;
      occ[static_cast<size_t>(ym)] ^= 1;
      const double df = f.eval(at) - fb;
      occ[static_cast<size_t>(ym)] ^= 1;
      flip += rate * df * df;
    }
    if (at(0) == 0) {
      for (int alpha : {1, -1}) {
        if (at(alpha) != 0) continue;
        auto sview = [&](int64_t x) { return at(x + alpha); };
        const double inc = alpha * u + f.eval(sview) - fb;
        jump += inc * inc;
      }
    }
    flip_sum += flip;
    jump_sum += jump;
    const double v = flip + jump;
    sum += v;
    sum2 += v * v;
  }
  ObjectiveResult out;
  out.n_samples = n_samples;
  out.flip_term = flip_sum / n_samples;
  out.jump_term = jump_sum / n_samples;
  out.value = out.flip_term + out.jump_term;
  const double mean = sum / n_samples;
  out.sigma = std::sqrt(std::max(0.0, sum2 / n_samples - mean * mean) /
                        static_cast<double>(n_samples));
  out.truncation_hit_fraction =
      static_cast<double>(trunc_hits) / static_cast<double>(n_samples);
  return out;
}

S0S1Result sums_S0_S1(const ConstraintModel& model, const Params& params,
                      int64_t n_samples, uint64_t seed, int radius, int64_t ring,
                      double unreliable_threshold) {
  if (model.kind != ModelKind::KZeros)
    throw Error(ErrorCode::InvalidArgument, "S0/S1 sums are for k-zeros models");
  (void)ring;  // the statistic is local: only the window below is ever read
  const int k = model.k;
  const int64_t lo = -k, hi = radius + k;
  const int nsites = static_cast<int>(hi - lo + 1);
  Rng rng(seed);
  std::vector<uint8_t> occ(static_cast<size_t>(nsites));
  auto at = [&](int64_t x) { return static_cast<int>(occ[static_cast<size_t>(x - lo)]); };
  auto cy = [&](int64_t y) {
    int zeros = 0;
    for (int64_t t = 1; t <= k; ++t) {
      if (at(y - t) == 0) ++zeros;
      if (at(y + t) == 0) ++zeros;
    }
    return zeros >= k;
  };
  auto first_one = [&](int64_t from) {
    for (int64_t x = from; x <= radius; ++x)
      if (at(x)) return x;
    return static_cast<int64_t>(radius) + 1;
  };

  double sa = 0, sa2 = 0, sb = 0, sb2 = 0, sd = 0, sd2 = 0, sf = 0, sf2 = 0;
  int64_t trunc_hits = 0;
  for (int64_t s = 0; s < n_samples; ++s) {
    for (auto& o : occ) o = rng.bernoulli(params.p()) ? 1 : 0;
    double a = 0, b = 0;
    if (at(0) == 1) {
      // f = 0; only emptying the origin changes the frontier
      if (cy(0)) {
        occ[static_cast<size_t>(-lo)] = 0;
        const double df = static_cast<double>(first_one(0));
        occ[static_cast<size_t>(-lo)] = 1;
        b += df * df;
      }
    } else {
      const int64_t m = first_one(0);
      if (m > radius) ++trunc_hits;
      // fillings of empty sites left of the frontier
      for (int64_t y = 0; y < std::min<int64_t>(m, radius + 1); ++y) {
        if (at(y) != 0 || !cy(y)) continue;
        const double df = static_cast<double>(y - std::min<int64_t>(m, radius + 1));
        a += df * df;
      }
      // emptying the frontier one extends the cluster
      if (m <= radius && cy(m)) {
        occ[static_cast<size_t>(m - lo)] = 0;
        const double df = static_cast<double>(first_one(m) - m);
        occ[static_cast<size_t>(m - lo)] = 1;
        b += df * df;
      }
    }
    const double d = params.p() * a - params.q * b;
    const double fl = params.p() * a + params.q * b;
    sa += a; sa2 += a * a;
    sb += b; sb2 += b * b;
    sd += d; sd2 += d * d;
    sf += fl; sf2 += fl * fl;
  }
  auto finish = [&](double sum, double sum2, double& mean, double& sig) {
    mean = sum / n_samples;
    sig = std::sqrt(std::max(0.0, sum2 / n_samples - mean * mean) /
                    static_cast<double>(n_samples));
  };
  S0S1Result out;
  out.n_samples = n_samples;
  finish(sa, sa2, out.s0, out.s0_sigma);
  finish(sb, sb2, out.s1, out.s1_sigma);
  finish(sd, sd2, out.db_diff, out.db_sigma);
  finish(sf, sf2, out.flip_term, out.flip_sigma);
  out.truncation_hit_fraction =
      static_cast<double>(trunc_hits) / static_cast<double>(n_samples);
  out.unreliable = out.truncation_hit_fraction > unreliable_threshold;
  return out;
}

namespace {

// shared enumeration for the FA-1f appendix quantities (d = 1, k = 1)
struct AppendixSums {
  double d_jump = 0, d_fa = 0, mu_jf = 0;
};

AppendixSums appendix_sums(const TestFunction& f, const Params& params) {
  ConstraintModel fa = ConstraintModel::FA1f();
  const int64_t wlo = f.window_lo(), whi = f.window_hi();
  ExactWindow W(std::min<int64_t>(wlo, -1) - 1, std::max<int64_t>(whi, 1) + 1,
                params, 24);
  AppendixSums out;
  for (uint32_t mask = 0; mask < (uint32_t{1} << W.nsites); ++mask) {
    const double wt = W.weight(mask);
    auto view = [&](int64_t x) { return W.occ(mask, x); };
    const double fb = f.eval(view);

    for (int64_t y : f.window) {
      if (!constraint_on_window(W, mask, fa, y)) continue;
      const double rate = W.occ(mask, y) ? params.q : params.p();
      uint32_t fm = W.flipped(mask, y);
      auto fview = [&](int64_t x) { return W.occ(fm, x); };
      const double df = f.eval(fview) - fb;
      out.d_fa += 0.5 * wt * rate * df * df;
    }
    if (W.occ(mask, 0) == 0) {
      double j = 0;
      for (int alpha : {1, -1}) {
        if (W.occ(mask, alpha) != 0) continue;
        auto sview = [&](int64_t x) { return W.occ(mask, x + alpha); };
        const double df = f.eval(sview) - fb;
        out.d_jump += 0.5 * wt * df * df;
        j += alpha;
      }
      out.mu_jf += wt * j * fb;
    }
  }
  return out;
}

}  // namespace

DirichletSplit dirichlet_split(const TestFunction& f, const Params& params) {
  AppendixSums s = appendix_sums(f, params);
  DirichletSplit out;
  out.d_jump = s.d_jump;
  out.d_fa = s.d_fa;
  out.mu_jf = s.mu_jf;
  out.jump_functional = 2 * s.mu_jf - s.d_jump;
  out.fa_functional = 2 * s.mu_jf - s.d_fa;
  return out;
}

double maximize_fa_functional(const Params& params, int half, TestFunction* argmax) {
  ConstraintModel fa = ConstraintModel::FA1f();
  std::vector<int64_t> window;
  for (int64_t x = -half; x <= half; ++x) window.push_back(x);
  const int nw = static_cast<int>(window.size());
  const int dof = 1 << nw;
  ExactWindow W(-half - 1, half + 1, params, 24);

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dof, dof);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(dof);
  auto table_index = [&](uint32_t mask) {
    uint32_t idx = 0;
    for (int i = 0; i < nw; ++i)
      if (W.occ(mask, window[static_cast<size_t>(i)])) idx |= 1u << i;
    return idx;
  };

  for (uint32_t mask = 0; mask < (uint32_t{1} << W.nsites); ++mask) {
    const double wt = W.weight(mask);
    const uint32_t i = table_index(mask);
    if (W.occ(mask, 0) == 0) {
      double j = 0;
      if (W.occ(mask, 1) == 0) j += 1;
      if (W.occ(mask, -1) == 0) j -= 1;
      b(i) += wt * j;
    }
    for (int64_t y : window) {
      if (!constraint_on_window(W, mask, fa, y)) continue;
      const double c = 0.5 * wt * (W.occ(mask, y) ? params.q : params.p());
      const uint32_t jidx = table_index(W.flipped(mask, y));
      A(i, i) += c;
      A(jidx, jidx) += c;
      A(i, jidx) -= c;
      A(jidx, i) -= c;
    }
  }
  // concave quadratic: sup_f 2 b.f - f.A f attained at A f = b (b is
  // orthogonal to the null space of A, which is the constants)
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  const auto& lam = es.eigenvalues();
  const auto& V = es.eigenvectors();
  double lmax = lam(dof - 1);
  Eigen::VectorXd fstar = Eigen::VectorXd::Zero(dof);
  for (int i = 0; i < dof; ++i) {
    if (lam(i) > 1e-12 * lmax)
      fstar += V.col(i) * (V.col(i).dot(b) / lam(i));
  }
  if (argmax) {
    std::vector<double> table(fstar.data(), fstar.data() + dof);
    *argmax = TestFunction::from_table(window, table);
  }
  return b.dot(fstar);
}

std::pair<double, double> gap_sandwich(const SpectralResult& env_gap,
                                       const Params& params, int d) {
  const double g = env_gap.gap;
  const double q2 = params.q * params.q;
  return {g / (4.0 * d + g) * q2, q2};
}

double east_T0_cdf(int l, const Params& params, double t) {
  if (l < 1 || l > 12)
    throw Error(ErrorCode::ResourceLimit, "exact T0 law supported for l <= 12");
  // states with site 1 (bit 0) occupied form the transient class
  const int n = 1 << (l - 1);  // bits 1..l-1 free, bit 0 = 1
  auto mask_of = [l](int i) { return (static_cast<uint32_t>(i) << 1) | 1u; };
  ConstraintTable ct = build_constraint_table(ConstraintModel::East(), {l},
                                              Boundary::FrozenEmpty);
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd sqw(n);
  for (int i = 0; i < n; ++i) {
    uint32_t s = mask_of(i);
    int ones = __builtin_popcount(s);
    sqw(i) = std::sqrt(std::pow(params.p(), ones) * std::pow(params.q, l - ones));
    double exit = 0;
    for (int x = 0; x < l; ++x) {
      if (!constraint_ok_mask(s, ct, x)) continue;
      if (x == 0) {
        exit += params.q;  // absorption: site 1 resamples to empty
        continue;
      }
      const double r = ((s >> x) & 1u) ? params.q : params.p();
      uint32_t tmask = s ^ (1u << x);
      Q(i, static_cast<int>(tmask >> 1)) += r;
      exit += r;
    }
    Q(i, i) = -exit;
  }
  // symmetrize by sqrt(mu) similarity; absorption only shifts the diagonal
  Eigen::MatrixXd B = Q;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) B(i, j) = Q(i, j) * sqw(i) / sqw(j);
  B = 0.5 * (B + B.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
  const auto& lam = es.eigenvalues();
  const auto& V = es.eigenvectors();
  const int start = n - 1;  // all ones
  Eigen::VectorXd vs = V.transpose() * sqw;  // sum_j V_jm s_j
  double survival = 0;
  for (int m = 0; m < n; ++m)
    survival += V(start, m) * std::exp(lam(m) * t) * vs(m) / sqw(start);
  survival = std::min(1.0, std::max(0.0, survival));
  return 1.0 - survival;
}

void export_generator(const GeneratorRecord& gen, const std::string& path_prefix) {
  std::ofstream tri(path_prefix + ".triplets");
  std::ofstream st(path_prefix + ".states");
  if (!tri || !st) throw Error(ErrorCode::Io, "cannot open export files");
  tri.precision(17);
  st.precision(17);
  const int64_t nsites =
      std::accumulate(gen.dims.begin(), gen.dims.end(), int64_t{1},
                      [](int64_t a, int64_t b) { return a * b; });
  for (int64_t i = 0; i < gen.n(); ++i) {
    tri << i << " " << i << " " << -gen.diag[i] << "\n";
    for (int64_t e = gen.row_ptr[i]; e < gen.row_ptr[i + 1]; ++e)
      tri << i << " " << gen.col[e] << " " << gen.rate[e] << "\n";
    std::string bits;
    for (int64_t x = 0; x < nsites; ++x)
      bits.push_back(((gen.states[static_cast<size_t>(i)] >> x) & 1u) ? '1' : '0');
    st << i << " " << bits << " " << gen.weights[static_cast<size_t>(i)] << "\n";
  }
}

}  // namespace kcsm
