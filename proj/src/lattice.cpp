#include "lattice.hpp"

#include <algorithm>
#include <deque>

namespace kcsm {

SpinConfig::SpinConfig(std::vector<int64_t> dims, Boundary boundary)
    : dims_(std::move(dims)), boundary_(boundary) {
  if (dims_.empty())
    throw Error(ErrorCode::InvalidArgument, "dims must be non-empty");
  n_sites_ = 1;
  for (int64_t d : dims_) {
    if (d <= 0) throw Error(ErrorCode::InvalidArgument, "side lengths must be positive");
    n_sites_ *= d;
  }
  strides_.resize(dims_.size());
  int64_t s = 1;
  for (int i = static_cast<int>(dims_.size()) - 1; i >= 0; --i) {
    strides_[i] = s;
    s *= dims_[i];
  }
  words_.assign(static_cast<size_t>((n_sites_ + 63) / 64), 0);
}

int64_t SpinConfig::index_of(const Site& x) const {
  if (x.coords.size() != dims_.size())
    throw Error(ErrorCode::InvalidArgument, "site dimension mismatch");
  int64_t idx = 0;
  for (size_t i = 0; i < dims_.size(); ++i) {
    int64_t c = x.coords[i];
    if (boundary_ == Boundary::Periodic) {
      c %= dims_[i];
      if (c < 0) c += dims_[i];
    } else if (c < 0 || c >= dims_[i]) {
      return -1;
    }
    idx += c * strides_[i];
  }
  return idx;
}

void SpinConfig::set_index(int64_t idx, bool occupied) {
  uint64_t mask = 1ULL << (idx & 63);
  if (occupied)
    words_[static_cast<size_t>(idx) >> 6] |= mask;
  else
    words_[static_cast<size_t>(idx) >> 6] &= ~mask;
}

void SpinConfig::set(const Site& x, bool occupied) {
  int64_t i = index_of(x);
  if (i < 0)
    throw Error(ErrorCode::BoundaryViolation,
                "cannot write a virtual (frozen-empty) site");
  set_index(i, occupied);
}

Site SpinConfig::site_of_index(int64_t idx) const {
  Site s;
  s.coords.resize(dims_.size());
  for (size_t i = 0; i < dims_.size(); ++i) {
    s.coords[i] = idx / strides_[i];
    idx %= strides_[i];
  }
  return s;
}

int64_t SpinConfig::count_occupied() const {
  int64_t n = 0;
  for (uint64_t w : words_) n += __builtin_popcountll(w);
  return n;
}

std::string SpinConfig::to_string() const {
  std::string s;
  s.reserve(static_cast<size_t>(n_sites_));
  for (int64_t i = 0; i < n_sites_; ++i) s.push_back(occupied_index(i) ? '1' : '0');
  return s;
}

uint64_t SpinConfig::bits64() const {
  if (n_sites_ > 64)
    throw Error(ErrorCode::ResourceLimit, "bits64 requires n_sites <= 64");
  return words_[0];
}

SpinConfig SpinConfig::from_bits64(uint64_t bits, std::vector<int64_t> dims,
                                   Boundary boundary) {
  SpinConfig c(std::move(dims), boundary);
  if (c.n_sites_ > 64)
    throw Error(ErrorCode::ResourceLimit, "from_bits64 requires n_sites <= 64");
  if (c.n_sites_ < 64) bits &= (1ULL << c.n_sites_) - 1;
  c.words_[0] = bits;
  return c;
}

SpinConfig flip(const SpinConfig& c, const Site& x) {
  int64_t i = c.index_of(x);
  if (i < 0)
    throw Error(ErrorCode::BoundaryViolation, "flip at a virtual site");
  SpinConfig out = c;
  out.set_index(i, !c.occupied_index(i));
  return out;
}

SpinConfig exchange(const SpinConfig& c) {
  if (c.dim() != 1)
    throw Error(ErrorCode::UnsupportedDimension, "exchange is 1d only");
  if (c.boundary() != Boundary::Periodic || c.dims()[0] < 5)
    throw Error(ErrorCode::BoundaryViolation,
                "exchange needs a periodic ring of length >= 5");
  SpinConfig out = c;
  for (int64_t k : {1, 2}) {
    int64_t a = c.index_of(site1(-k));
    int64_t b = c.index_of(site1(k));
    out.set_index(a, c.occupied_index(b));
    out.set_index(b, c.occupied_index(a));
  }
  return out;
}

SpinConfig shift(const SpinConfig& c, const Site& y) {
  if (c.boundary() != Boundary::Periodic)
    throw Error(ErrorCode::BoundaryViolation, "shift requires periodic boundary");
  if (static_cast<int>(y.coords.size()) != c.dim())
    throw Error(ErrorCode::InvalidArgument, "shift vector dimension mismatch");
  SpinConfig out(c.dims(), Boundary::Periodic);
  for (int64_t i = 0; i < c.n_sites(); ++i) {
    Site s = c.site_of_index(i);
    for (size_t k = 0; k < s.coords.size(); ++k) s.coords[k] += y.coords[k];
    out.set_index(i, c.occ(s) == 1);
  }
  return out;
}

double bernoulli_weight(const SpinConfig& c, const Params& params) {
  int64_t ones = c.count_occupied();
  int64_t zeros = c.n_sites() - ones;
  double w = 1.0;
  for (int64_t i = 0; i < ones; ++i) w *= params.p();
  for (int64_t i = 0; i < zeros; ++i) w *= params.q;
  return w;
}

SpinConfig sample_config(const Params& params, std::vector<int64_t> dims,
                         Boundary boundary, Rng& rng) {
  SpinConfig c(std::move(dims), boundary);
  for (int64_t i = 0; i < c.n_sites(); ++i)
    c.set_index(i, !rng.bernoulli(params.q));
  return c;
}

std::vector<Site> cluster_at_origin(const SpinConfig& c) {
  std::vector<Site> out;
  Site origin;
  origin.coords.assign(c.dim(), 0);
  if (c.occ(origin) == 1) return out;

  std::vector<char> seen(static_cast<size_t>(c.n_sites()), 0);
  std::deque<int64_t> queue;
  int64_t o = c.index_of(origin);
  seen[static_cast<size_t>(o)] = 1;
  queue.push_back(o);
  while (!queue.empty()) {
    int64_t i = queue.front();
    queue.pop_front();
    out.push_back(c.site_of_index(i));
    Site s = c.site_of_index(i);
    for (int axis = 0; axis < c.dim(); ++axis) {
      for (int dir : {-1, 1}) {
        Site nb = s;
        nb.coords[axis] += dir;
        int64_t j = c.index_of(nb);
        if (j < 0 || seen[static_cast<size_t>(j)]) continue;
        if (!c.occupied_index(j)) {
          seen[static_cast<size_t>(j)] = 1;
          queue.push_back(j);
        }
      }
    }
  }
  return out;
}

}  // namespace kcsm
