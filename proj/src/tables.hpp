#pragma once

// Internal helpers shared by the simulation engine and the exact module:
// flattened constraint-neighbourhood tables and packed occupancy bits.

#include <cstdint>
#include <functional>
#include <vector>

#include "constraints.hpp"
#include "lattice.hpp"

namespace kcsm::detail {

// For each site, the indices read by c_x; -1 marks a virtual frozen-empty
// site (reads as a zero). threshold = zeros required.
struct ConstraintTable {
  int slots = 0;
  std::vector<int32_t> nbr;
  int threshold = 1;
};

inline ConstraintTable build_constraint_table(const ConstraintModel& model,
                                              const std::vector<int64_t>& dims,
                                              Boundary boundary) {
  SpinConfig probe(dims, boundary);
  const int d = probe.dim();
  const int64_t n = probe.n_sites();
  if (model.kind == ModelKind::East && d != 1)
    throw Error(ErrorCode::UnsupportedDimension, "East model is 1d only");

  std::vector<std::vector<int64_t>> offsets;
  if (model.kind == ModelKind::East) {
    offsets.push_back({1});
  } else {
    std::vector<int64_t> cur(static_cast<size_t>(d), 0);
    std::function<void(int, int)> rec = [&](int axis, int budget) {
      if (axis == d) {
        for (int64_t v : cur)
          if (v != 0) {
            offsets.push_back(cur);
            return;
          }
        return;
      }
      for (int64_t v = -budget; v <= budget; ++v) {
        cur[static_cast<size_t>(axis)] = v;
        rec(axis + 1, budget - static_cast<int>(v < 0 ? -v : v));
      }
    };
    rec(0, model.k);
  }

  ConstraintTable t;
  t.slots = static_cast<int>(offsets.size());
  t.threshold = model.kind == ModelKind::East ? 1 : model.k;
  t.nbr.resize(static_cast<size_t>(n) * t.slots);
  for (int64_t i = 0; i < n; ++i) {
    Site s = probe.site_of_index(i);
    for (int j = 0; j < t.slots; ++j) {
      Site y = s;
      for (int a = 0; a < d; ++a) y.coords[a] += offsets[static_cast<size_t>(j)][a];
      t.nbr[static_cast<size_t>(i) * t.slots + j] =
          static_cast<int32_t>(probe.index_of(y));
    }
  }
  return t;
}

struct Bits {
  std::vector<uint64_t> w;
  explicit Bits(int64_t n) : w(static_cast<size_t>((n + 63) / 64), 0) {}
  bool get(int64_t i) const { return (w[static_cast<size_t>(i) >> 6] >> (i & 63)) & 1u; }
  void set(int64_t i, bool v) {
    uint64_t m = 1ULL << (i & 63);
    if (v)
      w[static_cast<size_t>(i) >> 6] |= m;
    else
      w[static_cast<size_t>(i) >> 6] &= ~m;
  }
};

inline bool constraint_ok(const Bits& bits, const ConstraintTable& t, int64_t x) {
  const int32_t* nb = &t.nbr[static_cast<size_t>(x) * t.slots];
  int zeros = 0;
  for (int j = 0; j < t.slots; ++j) {
    int32_t y = nb[j];
    if (y < 0 || !bits.get(y))
      if (++zeros >= t.threshold) return true;
  }
  return false;
}

// Same check on a bitmask state (exact enumeration path, <= 32 sites).
inline bool constraint_ok_mask(uint32_t mask, const ConstraintTable& t, int64_t x) {
  const int32_t* nb = &t.nbr[static_cast<size_t>(x) * t.slots];
  int zeros = 0;
  for (int j = 0; j < t.slots; ++j) {
    int32_t y = nb[j];
    if (y < 0 || !((mask >> y) & 1u))
      if (++zeros >= t.threshold) return true;
  }
  return false;
}

inline Bits to_bits(const SpinConfig& c) {
  Bits b(c.n_sites());
  for (int64_t i = 0; i < c.n_sites(); ++i) b.set(i, c.occupied_index(i));
  return b;
}

inline SpinConfig from_bits(const Bits& b, const std::vector<int64_t>& dims,
                            Boundary bd) {
  SpinConfig c(dims, bd);
  for (int64_t i = 0; i < c.n_sites(); ++i) c.set_index(i, b.get(i));
  return c;
}

}  // namespace kcsm::detail
