#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gkdiff/basis.hpp"
#include "gkdiff/errors.hpp"
#include "gkdiff/lattice.hpp"
#include "gkdiff/local_function.hpp"

namespace gkdiff {

// Thrown when a function is not a lattice gradient; carries the violating
// orbit and its coefficient sum as the witness.
struct NotAGradientError : Error {
  NotAGradientError(const std::string& msg, MultiIndex witness, double witness_sum,
                    double max_abs_sum, double seminorm_sq)
      : Error(msg),
        witness_orbit(std::move(witness)),
        witness_sum(witness_sum),
        max_abs_orbit_sum(max_abs_sum),
        seminorm_sq(seminorm_sq) {}
  MultiIndex witness_orbit;
  double witness_sum = 0.0;
  double max_abs_orbit_sum = 0.0;
  double seminorm_sq = 0.0;
};

// Finitely supported coefficient field a: Z^d -> R.  The enclosing cube runs
// from m to M in every axis, where m and M are the extreme coordinate values
// over the whole support.
class CoefficientProfile {
 public:
  CoefficientProfile(int dim, std::map<Coord, double> a)
      : dim_(dim), a_(std::move(a)) {
    check_dim(dim_);
    for (auto it = a_.begin(); it != a_.end();) {
      for (int i = dim_; i < kMaxDim; ++i)
        if (it->first[i] != 0)
          throw DimensionError("profile site extends beyond dimension " +
                               std::to_string(dim_));
      if (it->second == 0.0)
        it = a_.erase(it);
      else
        ++it;
    }
    if (a_.empty()) {
      m_ = M_ = 0;  // convention for the zero profile
    } else {
      m_ = a_.begin()->first[0];
      M_ = m_;
      for (const auto& [x, v] : a_)
        for (int i = 0; i < dim_; ++i) {
          m_ = std::min(m_, x[i]);
          M_ = std::max(M_, x[i]);
        }
    }
  }

  int dim() const { return dim_; }
  const std::map<Coord, double>& entries() const { return a_; }
  bool zero() const { return a_.empty(); }
  int m() const { return m_; }
  int M() const { return M_; }

  Box enclosing_cube() const { return Box::cube(dim_, m_, M_); }

  long long cube_size() const {
    long long s = 1;
    for (int i = 0; i < dim_; ++i) s *= (M_ - m_ + 1LL);
    return s;
  }

  double sum() const {
    double s = 0.0;
    for (const auto& [x, v] : a_) s += v;
    return s;
  }

  double sum_sq() const {
    double s = 0.0;
    for (const auto& [x, v] : a_) s += v * v;
    return s;
  }

  double at(Coord x) const {
    auto it = a_.find(x);
    return it == a_.end() ? 0.0 : it->second;
  }

 private:
  int dim_;
  std::map<Coord, double> a_;
  int m_ = 0, M_ = 0;
};

// Unit-step Hamiltonian enumeration of a box: axis 1 is swept fastest and the
// sweep direction reverses on alternate layers of every higher axis, so each
// consecutive pair of sites differs by exactly one unit step.
inline std::vector<Coord> snake_path(const Box& box) {
  std::vector<Coord> path;
  path.reserve(static_cast<std::size_t>(box.volume()));
  Coord p = box.lo;
  for (int v = box.lo[0]; v <= box.hi[0]; ++v) {
    p[0] = v;
    path.push_back(p);
  }
  for (int axis = 1; axis < box.dim; ++axis) {
    std::vector<Coord> next;
    next.reserve(path.size() * static_cast<std::size_t>(box.side(axis)));
    for (int v = box.lo[axis]; v <= box.hi[axis]; ++v) {
      const bool reverse = ((v - box.lo[axis]) % 2) != 0;
      for (std::size_t k = 0; k < path.size(); ++k) {
        Coord q = reverse ? path[path.size() - 1 - k] : path[k];
        q[axis] = v;
        next.push_back(q);
      }
    }
    path = std::move(next);
  }
  return path;
}

namespace detail {

// Shift coefficients of the telescoped components: component alpha of the
// result is sum_x coeff[alpha][x] tau_x h, and
// sum_alpha (tau^alpha g_alpha - g_alpha) = sum_x a_x tau_x h up to the
// boundary defect proportional to sum_x a_x.
inline std::array<std::map<Coord, double>, kMaxDim> telescope_shift_coefficients(
    const CoefficientProfile& a) {
  std::array<std::map<Coord, double>, kMaxDim> comp;
  if (a.zero()) return comp;
  if (a.dim() == 1) {
    // Cumulative tails: g = sum_{x=m}^{M} (sum_{y>=x} a_y) tau_{x-1} h.
    double tail = 0.0;
    std::vector<std::pair<int, double>> tails;  // (x, A_x) for x = M..m
    for (int x = a.M(); x >= a.m(); --x) {
      tail += a.at(Coord{x, 0, 0});
      tails.push_back({x, tail});
    }
    for (const auto& [x, A] : tails)
      if (A != 0.0) comp[0][Coord{x - 1, 0, 0}] += A;
    return comp;
  }
  const std::vector<Coord> path = snake_path(a.enclosing_cube());
  const std::size_t s = path.size();
  // A[i] = sum_{l >= i} a_{path(l)} (0-based); step i -> i+1 carries A[i+1].
  std::vector<double> tail(s + 1, 0.0);
  for (std::size_t i = s; i-- > 0;) tail[i] = tail[i + 1] + a.at(path[i]);
  for (std::size_t i = 0; i + 1 < s; ++i) {
    const double A = tail[i + 1];
    if (A == 0.0) continue;
    const Coord step = sub(path[i + 1], path[i]);
    for (int axis = 0; axis < a.dim(); ++axis) {
      if (step[axis] == 1) {
        comp[axis][path[i]] += A;
      } else if (step[axis] == -1) {
        comp[axis][path[i + 1]] -= A;
      }
    }
  }
  return comp;
}

inline void require_mean_zero(const LocalFunction& f, const char* what) {
  if (std::abs(f.mean()) > 1e-12 * std::max(1.0, f.max_abs()))
    throw InputError(std::string(what) + " must have zero mean (got " +
                     std::to_string(f.mean()) + ")");
}

// sum_x c_x tau_x h as a dense table.
inline LocalFunction shift_combination(const std::map<Coord, double>& coeffs,
                                       const LocalFunction& h) {
  if (coeffs.empty()) return LocalFunction::constant(h.marginal(), h.dim(), 0.0);
  std::optional<Window> joint;
  for (const auto& [x, c] : coeffs) {
    Window wx = h.window().shifted(x);
    joint = joint ? Window::join(*joint, wx) : wx;
  }
  std::optional<LocalFunction> acc;
  for (const auto& [x, c] : coeffs) {
    LocalFunction term = c * h.shifted(x).extended(*joint);
    acc = acc ? (*acc + term) : term;
  }
  return *acc;
}

}  // namespace detail

// One-dimensional telescoping: returns g with tau g - g = sum_x a_x tau_x h.
inline LocalFunction telescope_1d(const CoefficientProfile& a, const LocalFunction& h) {
  if (a.dim() != 1 || h.dim() != 1)
    throw DimensionError("telescope_1d requires one-dimensional inputs");
  detail::require_mean_zero(h, "telescoped function h");
  const double scale = std::sqrt(std::max(a.sum_sq(), 1.0));
  if (std::abs(a.sum()) > 1e-14 * scale)
    throw NotAGradientError("profile sum " + std::to_string(a.sum()) +
                                " is nonzero, so the combination is not a gradient",
                            MultiIndex{}, a.sum(), std::abs(a.sum()), 0.0);
  auto comp = detail::telescope_shift_coefficients(a);
  return detail::shift_combination(comp[0], h);
}

// Multi-dimensional telescoping along a snake path: returns components
// g_1..g_d with sum_alpha (tau^alpha g_alpha - g_alpha) = sum_x a_x tau_x h.
inline std::vector<LocalFunction> telescope_nd(const CoefficientProfile& a,
                                               const LocalFunction& h) {
  if (a.dim() != h.dim())
    throw DimensionError("profile and function dimensions differ");
  detail::require_mean_zero(h, "telescoped function h");
  const double scale = std::sqrt(std::max(a.sum_sq(), 1.0));
  if (std::abs(a.sum()) > 1e-14 * scale)
    throw NotAGradientError("profile sum " + std::to_string(a.sum()) +
                                " is nonzero, so the combination is not a gradient",
                            MultiIndex{}, a.sum(), std::abs(a.sum()), 0.0);
  auto comp = detail::telescope_shift_coefficients(a);
  std::vector<LocalFunction> out;
  for (int axis = 0; axis < a.dim(); ++axis)
    out.push_back(detail::shift_combination(comp[axis], h));
  return out;
}

// ||f||^2 by direct summation of <f tau_x f> over the finitely many
// overlapping shifts.  Independent of any basis machinery.
inline double seminorm_brute(const LocalFunction& f) {
  detail::require_mean_zero(f, "seminorm argument");
  const Box wbox = bounding_box(f.dim(), f.window().sites());
  double total = 0.0;
  Box range(f.dim(), sub(wbox.lo, wbox.hi), sub(wbox.hi, wbox.lo));
  for (const Coord& x : range.sites()) {
    // Windows of tau_x f and f intersect only for x in this range; outside,
    // independence makes <f tau_x f> = <f>^2 = 0.
    bool overlap = false;
    for (const Coord& s : f.window().sites())
      if (f.window().contains(add(s, x))) {
        overlap = true;
        break;
      }
    if (!overlap) continue;
    total += f.shifted_inner(x, f) - f.mean() * f.mean();
  }
  return total;
}

// ||f||^2 as the sum over translation orbits of squared coefficient sums.
inline double seminorm_sq(const LocalFunction& f, const OrthonormalBasis& basis) {
  detail::require_mean_zero(f, "seminorm argument");
  auto orbits = orbit_collect(f.fourier(basis));
  double total = 0.0;
  for (const auto& [rep, s] : orbits.sums) total += s * s;
  return total;
}

inline double seminorm_sq(const LocalFunction& f) {
  return seminorm_sq(f, OrthonormalBasis::build(f.marginal()));
}

struct GradientDecomposition {
  std::vector<LocalFunction> components;  // g_1..g_d
  double residual = 0.0;                  // max pointwise defect
  double energy = 0.0;                    // sum_alpha <g_alpha^2>
  std::vector<double> component_energy;
  std::size_t orbit_count = 0;
  int s_f = 0;  // Chebyshev radius of the input window
  double seminorm_sq = 0.0;
  double max_abs_orbit_sum = 0.0;
};

struct MembershipReport {
  bool in_gradient_space = false;
  double seminorm_sq = 0.0;
  double max_abs_orbit_sum = 0.0;
  std::optional<MultiIndex> witness_orbit;
  double witness_sum = 0.0;
  std::size_t orbit_count = 0;
};

// Orbit-sum scan shared by membership checks and decompose.
inline MembershipReport gradient_membership(const LocalFunction& f,
                                            const OrthonormalBasis& basis,
                                            double tol = 1e-10) {
  detail::require_mean_zero(f, "membership argument");
  auto orbits = orbit_collect(f.fourier(basis));
  MembershipReport rep;
  rep.orbit_count = orbits.sums.size();
  rep.in_gradient_space = true;
  for (const auto& [n, s] : orbits.sums) {
    rep.seminorm_sq += s * s;
    if (std::abs(s) > rep.max_abs_orbit_sum) {
      rep.max_abs_orbit_sum = std::abs(s);
      if (std::abs(s) > tol) {
        rep.in_gradient_space = false;
        rep.witness_orbit = n;
        rep.witness_sum = s;
      }
    }
  }
  return rep;
}

inline MembershipReport gradient_membership(const LocalFunction& f, double tol = 1e-10) {
  return gradient_membership(f, OrthonormalBasis::build(f.marginal()), tol);
}

// Constructive decomposition f = sum_alpha (tau^alpha g_alpha - g_alpha):
// expand f over the product basis, group coefficients by translation orbit,
// telescope each orbit, and accumulate the components in coefficient space.
// Throws NotAGradientError with the violating orbit when some orbit sum
// exceeds tol.
inline GradientDecomposition decompose(const LocalFunction& f,
                                       const OrthonormalBasis& basis,
                                       double tol = 1e-10) {
  detail::require_mean_zero(f, "decompose argument");
  auto coeffs = f.fourier(basis);
  auto orbits = orbit_collect(coeffs);

  MembershipReport scan;
  scan.in_gradient_space = true;
  for (const auto& [n, s] : orbits.sums) {
    scan.seminorm_sq += s * s;
    if (std::abs(s) > scan.max_abs_orbit_sum) {
      scan.max_abs_orbit_sum = std::abs(s);
      scan.witness_orbit = n;
      scan.witness_sum = s;
    }
  }
  if (scan.max_abs_orbit_sum > tol)
    throw NotAGradientError(
        "orbit " + scan.witness_orbit->describe() + " has coefficient sum " +
            std::to_string(scan.witness_sum) + " exceeding tolerance " +
            std::to_string(tol),
        *scan.witness_orbit, scan.witness_sum, scan.max_abs_orbit_sum,
        scan.seminorm_sq);

  const int dim = f.dim();
  std::array<std::map<MultiIndex, double>, kMaxDim> comp_coeffs;
  for (const auto& [rep, members] : orbits.members) {
    std::map<Coord, double> a;
    for (const auto& [shift, c] : members) a[shift] = c;
    CoefficientProfile profile(dim, std::move(a));
    auto shifts = detail::telescope_shift_coefficients(profile);
    for (int axis = 0; axis < dim; ++axis)
      for (const auto& [x, c] : shifts[axis]) {
        if (c == 0.0) continue;
        comp_coeffs[axis][rep.shifted(x)] += c;
      }
  }

  GradientDecomposition out;
  out.orbit_count = orbits.sums.size();
  out.s_f = f.window().radius();
  out.seminorm_sq = scan.seminorm_sq;
  out.max_abs_orbit_sum = scan.max_abs_orbit_sum;
  for (int axis = 0; axis < dim; ++axis) {
    LocalFunction g = comp_coeffs[axis].empty()
                          ? LocalFunction::constant(f.marginal(), dim, 0.0)
                          : LocalFunction::from_fourier(basis, comp_coeffs[axis], dim);
    g = g.trimmed();
    const double e = g.inner(g);
    out.component_energy.push_back(e);
    out.energy += e;
    out.components.push_back(std::move(g));
  }

  // Pointwise defect of the reconstruction.
  std::optional<LocalFunction> rec;
  for (int axis = 0; axis < dim; ++axis) {
    LocalFunction diff =
        out.components[axis].shifted(unit_vec(axis)) - out.components[axis];
    rec = rec ? (*rec + diff) : diff;
  }
  out.residual = (f - *rec).max_abs();
  if (out.residual > 1e-10 * std::max(1.0, f.max_abs()))
    throw AccuracyError("gradient reconstruction defect " +
                        std::to_string(out.residual) + " exceeds contract");
  return out;
}

inline GradientDecomposition decompose(const LocalFunction& f, double tol = 1e-10) {
  return decompose(f, OrthonormalBasis::build(f.marginal()), tol);
}

}  // namespace gkdiff
