#include "constraints.hpp"

#include <deque>
#include <unordered_set>

namespace kcsm {

std::string ConstraintModel::name() const {
  if (kind == ModelKind::East) return "East";
  if (k == 1) return "FA-1f";
  return "KZeros(" + std::to_string(k) + ")";
}

namespace {

// Enumerate offsets y with 0 < |y|_1 <= k in dimension d.
void l1_ball_offsets(int d, int k, std::vector<std::vector<int64_t>>& out) {
  std::vector<int64_t> cur(static_cast<size_t>(d), 0);
  std::function<void(int, int)> rec = [&](int axis, int budget) {
    if (axis == d) {
      for (int64_t v : cur)
        if (v != 0) {
          out.push_back(cur);
          return;
        }
      return;  // skip the center
    }
    for (int64_t v = -budget; v <= budget; ++v) {
      cur[static_cast<size_t>(axis)] = v;
      rec(axis + 1, budget - static_cast<int>(std::abs(v)));
    }
  };
  rec(0, k);
}

}  // namespace

int constraint(const ConstraintModel& model, const SpinConfig& c, const Site& x) {
  if (model.kind == ModelKind::East) {
    if (c.dim() != 1)
      throw Error(ErrorCode::UnsupportedDimension, "East model is 1d only");
    Site right = x;
    right.coords[0] += 1;
    return c.occ(right) == 0 ? 1 : 0;
  }
  // KZeros(k): at least k empty sites within l1-distance k of x.
  std::vector<std::vector<int64_t>> offsets;
  l1_ball_offsets(c.dim(), model.k, offsets);
  int zeros = 0;
  for (const auto& off : offsets) {
    Site y = x;
    for (size_t i = 0; i < off.size(); ++i) y.coords[i] += off[i];
    if (c.occ(y) == 0 && ++zeros >= model.k) return 1;
  }
  return 0;
}

double flip_rate(const ConstraintModel& model, const SpinConfig& c, const Site& x,
                 const Params& params) {
  if (c.is_virtual(x))
    throw Error(ErrorCode::BoundaryViolation, "flip_rate at a virtual site");
  if (!constraint(model, c, x)) return 0.0;
  return c.occ(x) == 0 ? params.p() : params.q;
}

namespace {

AxiomReport check_axioms_impl(const BitKernel& kernel, int nsites) {
  AxiomReport rep;
  if (nsites < 1 || nsites > 20)
    throw Error(ErrorCode::ResourceLimit,
                "axiom check windows are capped at 20 sites");
  const uint64_t nconf = 1ULL << nsites;
  auto rot = [nsites](uint64_t s, int by) {
    // new bit x = old bit (x+by mod n): configuration shifted by +by
    uint64_t r = 0;
    for (int x = 0; x < nsites; ++x) {
      int src = (x + by) % nsites;
      r |= ((s >> src) & 1ULL) << x;
    }
    return r;
  };
  for (uint64_t s = 0; s < nconf && rep.pass(); ++s) {
    for (int x = 0; x < nsites; ++x) {
      int cx = kernel(s, nsites, x);
      // (a) own-site independence
      if (kernel(s ^ (1ULL << x), nsites, x) != cx) {
        rep.own_site_independent = false;
        rep.counterexample = "c_" + std::to_string(x) + " reads its own site on " +
                             std::to_string(s);
        break;
      }
      // (b) monotone: raising any occupancy cannot raise the constraint
      for (int z = 0; z < nsites; ++z) {
        if (z == x || ((s >> z) & 1ULL)) continue;
        if (kernel(s | (1ULL << z), nsites, x) > cx) {
          rep.monotone = false;
          rep.counterexample = "raising site " + std::to_string(z) +
                               " raised c_" + std::to_string(x) + " on " +
                               std::to_string(s);
          break;
        }
      }
      // (c) translation invariance on the ring
      if (kernel(rot(s, x), nsites, 0) != cx) {
        rep.translation_invariant = false;
        rep.counterexample =
            "c_" + std::to_string(x) + "(s) != c_0(shifted s) on " + std::to_string(s);
      }
      if (!rep.pass()) break;
    }
  }
  return rep;
}

}  // namespace

AxiomReport check_axioms_kernel(const BitKernel& kernel, int nsites) {
  return check_axioms_impl(kernel, nsites);
}

AxiomReport check_axioms(const ConstraintModel& model, int window_size) {
  BitKernel kernel = [&model](uint64_t bits, int nsites, int x) {
    SpinConfig c = SpinConfig::from_bits64(bits, {nsites}, Boundary::Periodic);
    return constraint(model, c, site1(x));
  };
  return check_axioms_impl(kernel, window_size);
}

Reach can_empty(const ConstraintModel& model, const SpinConfig& c,
                const Site& target, int64_t budget) {
  if (c.n_sites() > 30)
    throw Error(ErrorCode::ResourceLimit, "can_empty window is capped at 30 sites");
  int64_t tgt = c.index_of(target);
  if (tgt < 0) return Reach::Yes;  // virtual sites are empty by definition

  const auto dims = c.dims();
  const auto boundary = c.boundary();
  auto target_empty = [&](uint64_t bits) { return ((bits >> tgt) & 1ULL) == 0; };

  uint64_t start = c.bits64();
  if (target_empty(start)) return Reach::Yes;

  std::unordered_set<uint64_t> seen{start};
  std::deque<uint64_t> queue{start};
  int64_t visited = 1;
  while (!queue.empty()) {
    uint64_t s = queue.front();
    queue.pop_front();
    SpinConfig cur = SpinConfig::from_bits64(s, dims, boundary);
    for (int64_t i = 0; i < c.n_sites(); ++i) {
      if (!constraint(model, cur, cur.site_of_index(i))) continue;
      uint64_t t = s ^ (1ULL << i);
      if (seen.count(t)) continue;
      if (target_empty(t)) return Reach::Yes;
      if (++visited > budget) return Reach::Indeterminate;
      seen.insert(t);
      queue.push_back(t);
    }
  }
  return Reach::No;
}

}  // namespace kcsm
