#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace kcsm {

enum class Boundary { Periodic, FrozenEmpty };

/// Lattice site given by integer coordinates. Under Periodic boundaries
/// coordinates are reduced modulo the box; under FrozenEmpty, out-of-box
/// sites are virtual: they read as empty and cannot be written.
struct Site {
  std::vector<int64_t> coords;
};

inline Site site1(int64_t x) { return Site{{x}}; }
inline Site site2(int64_t x, int64_t y) { return Site{{x, y}}; }

/// Equilibrium parameters: q = probability a site is empty, p = 1-q derived.
struct Params {
  double q;
  int d;

  Params(double q_, int d_) : q(q_), d(d_) {
    if (!(q > 0.0 && q < 1.0))
      throw Error(ErrorCode::InvalidArgument, "q must lie in (0,1)");
    if (d < 1) throw Error(ErrorCode::InvalidArgument, "dimension must be >= 1");
  }
  double p() const { return 1.0 - q; }
};

/// Occupation configuration on a finite d-dimensional box, bit-packed with
/// row-major indexing. Index 0 is the designated origin (coordinate 0).
/// Value semantics: all transformations copy.
class SpinConfig {
 public:
  SpinConfig(std::vector<int64_t> dims, Boundary boundary);

  int dim() const { return static_cast<int>(dims_.size()); }
  const std::vector<int64_t>& dims() const { return dims_; }
  Boundary boundary() const { return boundary_; }
  int64_t n_sites() const { return n_sites_; }

  /// Row-major index of an in-box site, or -1 for a virtual (FrozenEmpty,
  /// out-of-box) site. Periodic coordinates always reduce to an index.
  int64_t index_of(const Site& x) const;

  bool occupied_index(int64_t idx) const {
    return (words_[static_cast<size_t>(idx) >> 6] >> (idx & 63)) & 1u;
  }
  /// Occupancy at a site; virtual sites read as empty.
  int occ(const Site& x) const {
    int64_t i = index_of(x);
    return i < 0 ? 0 : (occupied_index(i) ? 1 : 0);
  }
  bool is_virtual(const Site& x) const { return index_of(x) < 0; }

  void set_index(int64_t idx, bool occupied);
  void set(const Site& x, bool occupied);

  Site site_of_index(int64_t idx) const;

  int64_t count_occupied() const;

  bool operator==(const SpinConfig& other) const {
    return dims_ == other.dims_ && boundary_ == other.boundary_ &&
           words_ == other.words_;
  }

  std::string to_string() const;  // 1d: e.g. "10010"

  /// Raw bits for n_sites <= 64 (used by exact enumeration).
  uint64_t bits64() const;
  static SpinConfig from_bits64(uint64_t bits, std::vector<int64_t> dims,
                                Boundary boundary);

 private:
  std::vector<int64_t> dims_;
  std::vector<int64_t> strides_;
  Boundary boundary_;
  int64_t n_sites_;
  std::vector<uint64_t> words_;
};

/// eta^x: flip the occupation at a writable site.
SpinConfig flip(const SpinConfig& c, const Site& x);

/// eta^<->: exchange occupations at sites -1<->+1 and -2<->+2 around the
/// origin. 1d periodic rings of length >= 5 only.
SpinConfig exchange(const SpinConfig& c);

/// eta_{y+.}: (shift(c,y))(x) = c(x+y). Periodic only.
SpinConfig shift(const SpinConfig& c, const Site& y);

/// Product Bernoulli weight: prod over sites of (1-q) if occupied else q.
double bernoulli_weight(const SpinConfig& c, const Params& params);

/// i.i.d. equilibrium sample: each site empty with probability q.
SpinConfig sample_config(const Params& params, std::vector<int64_t> dims,
                         Boundary boundary, Rng& rng);

/// Connected cluster of empty sites containing the origin (breadth-first
/// search, l1 nearest-neighbour adjacency); empty set when the origin is
/// occupied. Members are in-box sites only.
std::vector<Site> cluster_at_origin(const SpinConfig& c);

}  // namespace kcsm
