#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "gkdiff/errors.hpp"

namespace gkdiff {

// Sites live on Z^dim with dim in [1, kMaxDim].  Coordinates beyond the
// active dimension are kept at zero so Coord can be compared and hashed
// without carrying the dimension along.
inline constexpr int kMaxDim = 3;

using Coord = std::array<int, kMaxDim>;

inline constexpr Coord kOrigin{0, 0, 0};

inline void check_dim(int dim) {
  if (dim < 1 || dim > kMaxDim)
    throw DimensionError("lattice dimension must be in [1, " +
                         std::to_string(kMaxDim) + "], got " +
                         std::to_string(dim));
}

inline Coord unit_vec(int axis) {
  Coord e{0, 0, 0};
  e[axis] = 1;
  return e;
}

inline Coord add(Coord a, Coord b) {
  for (int i = 0; i < kMaxDim; ++i) a[i] += b[i];
  return a;
}

inline Coord sub(Coord a, Coord b) {
  for (int i = 0; i < kMaxDim; ++i) a[i] -= b[i];
  return a;
}

inline Coord neg(Coord a) {
  for (int i = 0; i < kMaxDim; ++i) a[i] = -a[i];
  return a;
}

inline int chebyshev(Coord a) {
  int m = 0;
  for (int i = 0; i < kMaxDim; ++i) m = std::max(m, std::abs(a[i]));
  return m;
}

inline bool is_zero(Coord a) { return a == kOrigin; }

inline std::string to_string(Coord a, int dim) {
  std::string s = "(";
  for (int i = 0; i < dim; ++i) {
    if (i) s += ",";
    s += std::to_string(a[i]);
  }
  return s + ")";
}

struct CoordHash {
  std::size_t operator()(const Coord& c) const {
    std::size_t h = 0x9e3779b97f4a7c15ull;
    for (int v : c) {
      h ^= static_cast<std::size_t>(static_cast<std::uint32_t>(v)) +
           0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return h;
  }
};

// Axis-aligned box [lo, hi] (inclusive).  Sites are enumerated in
// lexicographic order of the active coordinates.
struct Box {
  int dim = 1;
  Coord lo = kOrigin;
  Coord hi = kOrigin;

  Box() = default;
  Box(int dim, Coord lo, Coord hi) : dim(dim), lo(lo), hi(hi) {
    check_dim(dim);
    for (int i = 0; i < dim; ++i)
      if (lo[i] > hi[i]) throw InputError("box has empty side");
    for (int i = dim; i < kMaxDim; ++i)
      if (lo[i] != 0 || hi[i] != 0)
        throw InputError("box extends beyond its dimension");
  }

  static Box cube(int dim, int lo, int hi) {
    Coord l = kOrigin, h = kOrigin;
    for (int i = 0; i < dim; ++i) {
      l[i] = lo;
      h[i] = hi;
    }
    return Box(dim, l, h);
  }

  long long side(int axis) const { return hi[axis] - lo[axis] + 1LL; }

  long long volume() const {
    long long v = 1;
    for (int i = 0; i < dim; ++i) v *= side(i);
    return v;
  }

  bool contains(Coord p) const {
    for (int i = 0; i < kMaxDim; ++i)
      if (p[i] < lo[i] || p[i] > hi[i]) return false;
    return true;
  }

  std::vector<Coord> sites() const {
    std::vector<Coord> out;
    out.reserve(static_cast<std::size_t>(volume()));
    Coord p = lo;
    while (true) {
      out.push_back(p);
      int axis = dim - 1;
      while (axis >= 0) {
        if (++p[axis] <= hi[axis]) break;
        p[axis] = lo[axis];
        --axis;
      }
      if (axis < 0) break;
    }
    return out;
  }
};

// Smallest box containing a nonempty set of sites.
inline Box bounding_box(int dim, const std::vector<Coord>& sites) {
  if (sites.empty()) throw InputError("bounding_box of empty site set");
  Coord lo = sites.front(), hi = sites.front();
  for (const Coord& p : sites)
    for (int i = 0; i < kMaxDim; ++i) {
      lo[i] = std::min(lo[i], p[i]);
      hi[i] = std::max(hi[i], p[i]);
    }
  return Box(dim, lo, hi);
}

// A finite set of distinct sites, kept sorted (lexicographic).  This is the
// support on which a local function is allowed to depend.
class Window {
 public:
  Window(int dim, std::vector<Coord> sites) : dim_(dim), sites_(std::move(sites)) {
    check_dim(dim_);
    if (sites_.empty()) throw InputError("window must contain at least one site");
    for (const Coord& p : sites_)
      for (int i = dim_; i < kMaxDim; ++i)
        if (p[i] != 0)
          throw DimensionError("site " + gkdiff::to_string(p, kMaxDim) +
                               " extends beyond dimension " + std::to_string(dim_));
    std::sort(sites_.begin(), sites_.end());
    if (std::adjacent_find(sites_.begin(), sites_.end()) != sites_.end())
      throw InputError("window contains a duplicate site");
  }

  static Window single(int dim, Coord site) { return Window(dim, {site}); }

  static Window box(const Box& b) { return Window(b.dim, b.sites()); }

  int dim() const { return dim_; }
  std::size_t size() const { return sites_.size(); }
  const std::vector<Coord>& sites() const { return sites_; }
  Coord site(std::size_t i) const { return sites_[i]; }

  // Chebyshev radius around the origin.
  int radius() const {
    int r = 0;
    for (const Coord& p : sites_) r = std::max(r, chebyshev(p));
    return r;
  }

  int index_of(Coord p) const {
    auto it = std::lower_bound(sites_.begin(), sites_.end(), p);
    if (it == sites_.end() || *it != p) return -1;
    return static_cast<int>(it - sites_.begin());
  }

  bool contains(Coord p) const { return index_of(p) >= 0; }

  Window shifted(Coord z) const {
    std::vector<Coord> s;
    s.reserve(sites_.size());
    for (const Coord& p : sites_) s.push_back(add(p, z));
    return Window(dim_, std::move(s));
  }

  static Window join(const Window& a, const Window& b) {
    if (a.dim_ != b.dim_) throw DimensionError("joining windows of different dimension");
    std::vector<Coord> s;
    s.reserve(a.size() + b.size());
    std::set_union(a.sites_.begin(), a.sites_.end(), b.sites_.begin(),
                   b.sites_.end(), std::back_inserter(s));
    return Window(a.dim_, std::move(s));
  }

  bool operator==(const Window& o) const {
    return dim_ == o.dim_ && sites_ == o.sites_;
  }

 private:
  int dim_;
  std::vector<Coord> sites_;
};

}  // namespace gkdiff
