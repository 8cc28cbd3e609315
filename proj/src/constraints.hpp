#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lattice.hpp"

namespace kcsm {

enum class ModelKind { KZeros, East };

/// Constraint kernel family: KZeros(k) requires at least k empty sites within
/// l1-distance k of the update site; East requires the right (+1) neighbour
/// to be empty (1d only). KZeros(1) is the FA-1f model.
struct ConstraintModel {
  ModelKind kind;
  int k;  // used by KZeros

  static ConstraintModel KZeros(int k) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "KZeros needs k >= 1");
    return ConstraintModel{ModelKind::KZeros, k};
  }
  static ConstraintModel East() { return ConstraintModel{ModelKind::East, 1}; }
  static ConstraintModel FA1f() { return KZeros(1); }

  int radius() const { return kind == ModelKind::East ? 1 : k; }
  std::string name() const;
};

/// c_x(config) in {0,1}. Never reads the occupancy at x itself.
int constraint(const ConstraintModel& model, const SpinConfig& c, const Site& x);

/// Full flip rate c_x(config) * r_x with r_x = (1-q) if x empty, q if occupied.
double flip_rate(const ConstraintModel& model, const SpinConfig& c, const Site& x,
                 const Params& params);

struct AxiomReport {
  bool own_site_independent = true;
  bool monotone = true;
  bool translation_invariant = true;
  std::string counterexample;  // description of the first failure, if any
  bool pass() const {
    return own_site_independent && monotone && translation_invariant;
  }
};

/// Exhaustive verification of the constraint axioms on a 1d periodic window
/// of window_size sites (<= 20): (a) c_x independent of eta_x, (b) monotone
/// decreasing in the occupancies, (c) translation invariant.
AxiomReport check_axioms(const ConstraintModel& model, int window_size);

/// Same checks for an arbitrary kernel on bitmask configs (bit x = occupancy
/// of ring site x). Lets tests exercise deliberately broken kernels.
using BitKernel = std::function<int(uint64_t bits, int nsites, int x)>;
AxiomReport check_axioms_kernel(const BitKernel& kernel, int nsites);

enum class Reach { Yes, No, Indeterminate };

/// Exact reachability within the finite window: can a sequence of legal flips
/// starting from `c` produce a configuration with `target` empty? Breadth-first
/// search over configurations, memoized, with a visited-node budget.
/// Indeterminate when the budget runs out before an answer.
Reach can_empty(const ConstraintModel& model, const SpinConfig& c,
                const Site& target, int64_t budget = 1000000);

}  // namespace kcsm
