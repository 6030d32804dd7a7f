#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gkdiff/basis.hpp"
#include "gkdiff/errors.hpp"
#include "gkdiff/lattice.hpp"
#include "gkdiff/marginal.hpp"

namespace gkdiff {

// Hard cap on dense value tables (number of configurations).
inline constexpr std::size_t kTableCap = 10'000'000;

inline bool same_marginal(const MarginalPtr& a, const MarginalPtr& b) {
  return a == b || (a && b && *a == *b);
}

// Multi-index over lattice sites: site -> basis index >= 1, finitely many
// entries.  The empty index denotes the constant mode.
class MultiIndex {
 public:
  MultiIndex() = default;

  static MultiIndex single(Coord site, int n) {
    MultiIndex m;
    m.set(site, n);
    return m;
  }

  void set(Coord site, int n) {
    if (n < 0) throw InputError("basis index must be nonnegative");
    auto it = std::lower_bound(entries_.begin(), entries_.end(), site,
                               [](const auto& e, const Coord& s) { return e.first < s; });
    if (it != entries_.end() && it->first == site) {
      if (n == 0)
        entries_.erase(it);
      else
        it->second = n;
    } else if (n > 0) {
      entries_.insert(it, {site, n});
    }
  }

  int at(Coord site) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), site,
                               [](const auto& e, const Coord& s) { return e.first < s; });
    return (it != entries_.end() && it->first == site) ? it->second : 0;
  }

  bool zero() const { return entries_.empty(); }
  std::size_t support_size() const { return entries_.size(); }
  const std::vector<std::pair<Coord, int>>& entries() const { return entries_; }

  int total_degree() const {
    int d = 0;
    for (const auto& e : entries_) d += e.second;
    return d;
  }

  std::vector<Coord> support() const {
    std::vector<Coord> s;
    s.reserve(entries_.size());
    for (const auto& e : entries_) s.push_back(e.first);
    return s;
  }

  MultiIndex shifted(Coord z) const {
    MultiIndex m;
    m.entries_.reserve(entries_.size());
    for (const auto& e : entries_) m.entries_.push_back({add(e.first, z), e.second});
    return m;
  }

  // Chebyshev diameter of the support (0 for single-site and empty indices).
  int rad() const {
    if (entries_.size() < 2) return 0;
    Coord lo = entries_.front().first, hi = lo;
    for (const auto& e : entries_)
      for (int i = 0; i < kMaxDim; ++i) {
        lo[i] = std::min(lo[i], e.first[i]);
        hi[i] = std::max(hi[i], e.first[i]);
      }
    return chebyshev(sub(hi, lo));
  }

  // Translation-orbit decomposition: returns (shift, representative) with
  // this == representative.shifted(shift).  The representative places the
  // lexicographically smallest support site at the origin.
  std::pair<Coord, MultiIndex> orbit_split() const {
    if (zero()) throw InputError("the zero multi-index has no orbit representative");
    const Coord base = entries_.front().first;  // entries sorted, front is lex-min
    return {base, shifted(neg(base))};
  }

  MultiIndex orbit_rep() const { return orbit_split().second; }

  bool is_orbit_rep() const {
    return !zero() && entries_.front().first == kOrigin;
  }

  auto operator<=>(const MultiIndex&) const = default;

  std::string describe() const {
    if (zero()) return "{}";
    std::string s = "{";
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (i) s += ",";
      s += to_string(entries_[i].first, kMaxDim) + ":" + std::to_string(entries_[i].second);
    }
    return s + "}";
  }

 private:
  std::vector<std::pair<Coord, int>> entries_;  // sorted by site
};

// A translation orbit of multi-indices, named by its canonical representative.
struct OrbitRep {
  MultiIndex rep;
  int rad = 0;

  explicit OrbitRep(MultiIndex n) : rep(std::move(n)) {
    if (!rep.is_orbit_rep()) rep = rep.orbit_rep();
    rad = rep.rad();
  }

  auto operator<=>(const OrbitRep&) const = default;
};

// Function of finitely many sites, stored as a dense table over the window's
// configurations.  The digit of the first (lex-smallest) window site is the
// most significant position of the table index.
class LocalFunction {
 public:
  LocalFunction(MarginalPtr marginal, Window window, std::vector<double> values)
      : marginal_(std::move(marginal)),
        window_(std::move(window)),
        values_(std::move(values)) {
    if (!marginal_) throw InputError("null marginal");
    if (!marginal_->is_finite())
      throw InputError("local function tables require a finite marginal");
    if (values_.size() != table_size(window_.size()))
      throw InputError("value table size does not match window");
    compute_mean();
  }

  static std::size_t table_size_checked(int atom_count, std::size_t sites) {
    std::size_t n = 1;
    for (std::size_t i = 0; i < sites; ++i) {
      if (n > kTableCap / static_cast<std::size_t>(atom_count))
        throw CapacityError("configuration table would exceed cap of " +
                            std::to_string(kTableCap) + " entries");
      n *= static_cast<std::size_t>(atom_count);
    }
    return n;
  }

  template <class F>
  static LocalFunction tabulate(MarginalPtr m, Window w, F&& f) {
    if (!m || !m->is_finite())
      throw InputError("local function tables require a finite marginal");
    const int K = m->size();
    const std::size_t n = table_size_checked(K, w.size());
    std::vector<double> vals(n);
    std::vector<int> digits(w.size(), 0);
    for (std::size_t idx = 0; idx < n; ++idx) {
      vals[idx] = f(digits);
      advance(digits, K);
    }
    return LocalFunction(std::move(m), std::move(w), std::move(vals));
  }

  static LocalFunction constant(MarginalPtr m, int dim, double c) {
    return tabulate(std::move(m), Window::single(dim, kOrigin),
                    [c](const std::vector<int>&) { return c; });
  }

  // eta_site: the state value at one site.
  static LocalFunction occupation(MarginalPtr m, int dim, Coord site) {
    const std::vector<double> atoms = m->atoms();
    return tabulate(std::move(m), Window::single(dim, site),
                    [&atoms](const std::vector<int>& d) { return atoms[d[0]]; });
  }

  static LocalFunction site_fn(MarginalPtr m, int dim, Coord site,
                               const std::function<double(double)>& f) {
    const std::vector<double> atoms = m->atoms();
    return tabulate(std::move(m), Window::single(dim, site),
                    [&](const std::vector<int>& d) { return f(atoms[d[0]]); });
  }

  // Product of basis modes prescribed by a multi-index.  The zero index gives
  // the constant 1 on the origin window.
  static LocalFunction basis_mode(const OrthonormalBasis& basis, const MultiIndex& n,
                                  int dim) {
    if (!basis.marginal()->is_finite())
      throw InputError("basis modes as tables require a finite marginal");
    if (n.zero()) return constant(basis.marginal(), dim, 1.0);
    Window w(dim, n.support());
    std::vector<int> degs(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) degs[i] = n.at(w.site(i));
    for (int d : degs)
      if (d >= basis.size()) throw InputError("multi-index exceeds basis size");
    return tabulate(basis.marginal(), w, [&](const std::vector<int>& dig) {
      double v = 1.0;
      for (std::size_t i = 0; i < dig.size(); ++i)
        v *= basis.at_atom(degs[i], dig[i]);
      return v;
    });
  }

  const MarginalPtr& marginal() const { return marginal_; }
  const Window& window() const { return window_; }
  int dim() const { return window_.dim(); }
  const std::vector<double>& values() const { return values_; }
  double mean() const { return mean_; }

  double value(std::size_t table_index) const { return values_[table_index]; }

  double operator()(const std::vector<int>& digits) const {
    const int K = marginal_->size();
    std::size_t idx = 0;
    for (int d : digits) idx = idx * K + static_cast<std::size_t>(d);
    return values_[idx];
  }

  LocalFunction shifted(Coord z) const {
    return LocalFunction(marginal_, window_.shifted(z), values_);
  }

  LocalFunction centered() const {
    std::vector<double> v = values_;
    for (double& x : v) x -= mean_;
    return LocalFunction(marginal_, window_, std::move(v));
  }

  // Re-expresses the function on a superset window (values replicated over
  // the added sites).
  LocalFunction extended(const Window& target) const {
    const int K = marginal_->size();
    const std::size_t n = table_size_checked(K, target.size());
    std::vector<int> slot(window_.size());
    for (std::size_t i = 0; i < window_.size(); ++i) {
      slot[i] = target.index_of(window_.site(i));
      if (slot[i] < 0) throw InputError("target window does not cover function support");
    }
    std::vector<double> vals(n);
    std::vector<int> digits(target.size(), 0);
    std::vector<int> sub(window_.size());
    for (std::size_t idx = 0; idx < n; ++idx) {
      for (std::size_t i = 0; i < slot.size(); ++i) sub[i] = digits[slot[i]];
      vals[idx] = (*this)(sub);
      advance(digits, K);
    }
    return LocalFunction(marginal_, target, std::move(vals));
  }

  // Drops window sites the values do not actually depend on (keeps at least
  // one site so the window stays nonempty).
  LocalFunction trimmed(double tol = 0.0) const {
    const int K = marginal_->size();
    std::vector<Coord> keep;
    for (std::size_t i = 0; i < window_.size(); ++i) {
      const std::size_t stride = stride_of(i);
      bool depends = false;
      for (std::size_t idx = 0; idx < values_.size() && !depends; ++idx) {
        const std::size_t digit = (idx / stride) % K;
        if (digit + 1 < static_cast<std::size_t>(K)) {
          if (std::abs(values_[idx] - values_[idx + stride]) > tol) depends = true;
        }
      }
      if (depends) keep.push_back(window_.site(i));
    }
    if (keep.empty()) keep.push_back(window_.site(0));
    Window w(window_.dim(), keep);
    std::vector<int> slot(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) slot[i] = window_.index_of(w.site(i));
    std::vector<double> vals(table_size(w.size()));
    std::vector<int> digits(w.size(), 0);
    std::vector<int> full(window_.size(), 0);
    for (std::size_t idx = 0; idx < vals.size(); ++idx) {
      std::fill(full.begin(), full.end(), 0);
      for (std::size_t i = 0; i < slot.size(); ++i) full[slot[i]] = digits[i];
      vals[idx] = (*this)(full);
      advance(digits, K);
    }
    return LocalFunction(marginal_, std::move(w), std::move(vals));
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  friend LocalFunction operator*(double c, const LocalFunction& f) {
    std::vector<double> v = f.values_;
    for (double& x : v) x *= c;
    return LocalFunction(f.marginal_, f.window_, std::move(v));
  }

  friend LocalFunction operator+(const LocalFunction& f, const LocalFunction& g) {
    return combine(f, g, [](double a, double b) { return a + b; });
  }

  friend LocalFunction operator-(const LocalFunction& f, const LocalFunction& g) {
    return combine(f, g, [](double a, double b) { return a - b; });
  }

  friend LocalFunction operator*(const LocalFunction& f, const LocalFunction& g) {
    return combine(f, g, [](double a, double b) { return a * b; });
  }

  // <f g>: expectation of the pointwise product over the joint window.
  double inner(const LocalFunction& g) const { return shifted_inner(kOrigin, g); }

  // <tau_x f . g> without materializing the product table.
  double shifted_inner(Coord x, const LocalFunction& g) const {
    if (!same_marginal(marginal_, g.marginal_))
      throw InputError("functions live over different marginals");
    if (dim() != g.dim()) throw DimensionError("functions have different dimension");
    const Window wf = window_.shifted(x);
    const Window joint = Window::join(wf, g.window_);
    const int K = marginal_->size();
    const std::size_t n = table_size_checked(K, joint.size());
    std::vector<int> fslot(window_.size()), gslot(g.window_.size());
    for (std::size_t i = 0; i < window_.size(); ++i)
      fslot[i] = joint.index_of(wf.site(i));
    for (std::size_t i = 0; i < g.window_.size(); ++i)
      gslot[i] = joint.index_of(g.window_.site(i));
    const auto& w = marginal_->weights();
    std::vector<int> digits(joint.size(), 0);
    std::vector<int> fd(window_.size()), gd(g.window_.size());
    double total = 0.0;
    for (std::size_t idx = 0; idx < n; ++idx) {
      double weight = 1.0;
      for (int d : digits) weight *= w[d];
      for (std::size_t i = 0; i < fslot.size(); ++i) fd[i] = digits[fslot[i]];
      for (std::size_t i = 0; i < gslot.size(); ++i) gd[i] = digits[gslot[i]];
      total += weight * (*this)(fd)*g(gd);
      advance(digits, K);
    }
    return total;
  }

  double norm_sq() const { return inner(*this); }

  // Coefficients <f phi_n> over all multi-indices supported in the window.
  // Indices with any site outside the window vanish identically, so the map
  // is complete.  Requires a complete basis over the same marginal.
  std::map<MultiIndex, double> fourier(const OrthonormalBasis& basis) const {
    require_compatible_basis(basis);
    const int K = marginal_->size();
    std::vector<double> t = values_;
    // One weighted transform per site: t[..,n,..] = sum_a w_a phi_n(a) t[..,a,..].
    for (std::size_t s = 0; s < window_.size(); ++s) {
      const std::size_t stride = stride_of(s);
      std::vector<double> tmp(K);
      for (std::size_t base = 0; base < t.size(); ++base) {
        const std::size_t digit = (base / stride) % K;
        if (digit != 0) continue;
        for (int n = 0; n < K; ++n) {
          double acc = 0.0;
          for (int a = 0; a < K; ++a)
            acc += marginal_->weights()[a] * basis.at_atom(n, a) *
                   t[base + stride * static_cast<std::size_t>(a)];
          tmp[n] = acc;
        }
        for (int n = 0; n < K; ++n) t[base + stride * static_cast<std::size_t>(n)] = tmp[n];
      }
    }
    std::map<MultiIndex, double> out;
    std::vector<int> digits(window_.size(), 0);
    for (std::size_t idx = 0; idx < t.size(); ++idx) {
      if (t[idx] != 0.0) {
        MultiIndex n;
        for (std::size_t s = 0; s < window_.size(); ++s)
          if (digits[s] > 0) n.set(window_.site(s), digits[s]);
        out[n] = t[idx];
      }
      advance(digits, K);
    }
    return out;
  }

  static LocalFunction from_fourier(const OrthonormalBasis& basis,
                                    const std::map<MultiIndex, double>& coeffs,
                                    int dim) {
    if (!basis.complete())
      throw CompletenessError("reconstruction requires a complete basis");
    std::vector<Coord> sites;
    for (const auto& [n, c] : coeffs)
      for (const auto& e : n.entries()) sites.push_back(e.first);
    std::sort(sites.begin(), sites.end());
    sites.erase(std::unique(sites.begin(), sites.end()), sites.end());
    if (sites.empty()) sites.push_back(kOrigin);
    Window w(dim, sites);
    const int K = basis.marginal()->size();
    const std::size_t nconf = table_size_checked(K, w.size());
    std::vector<double> t(nconf, 0.0);
    for (const auto& [n, c] : coeffs) {
      std::size_t idx = 0;
      bool ok = true;
      for (std::size_t s = 0; s < w.size(); ++s) {
        const int deg = n.at(w.site(s));
        if (deg >= K) ok = false;
        idx = idx * K + static_cast<std::size_t>(deg);
      }
      if (!ok) throw InputError("coefficient index exceeds basis size");
      t[idx] += c;
    }
    LocalFunction out(basis.marginal(), w, std::move(t));
    // Inverse transform per site: values[a] = sum_n phi_n(a) coeff[n].
    std::vector<double>& v = out.values_;
    for (std::size_t s = 0; s < w.size(); ++s) {
      const std::size_t stride = out.stride_of(s);
      std::vector<double> tmp(K);
      for (std::size_t base = 0; base < v.size(); ++base) {
        const std::size_t digit = (base / stride) % K;
        if (digit != 0) continue;
        for (int a = 0; a < K; ++a) {
          double acc = 0.0;
          for (int n = 0; n < K; ++n)
            acc += basis.at_atom(n, a) * v[base + stride * static_cast<std::size_t>(n)];
          tmp[a] = acc;
        }
        for (int a = 0; a < K; ++a) v[base + stride * static_cast<std::size_t>(a)] = tmp[a];
      }
    }
    out.compute_mean();
    return out;
  }

 private:
  static void advance(std::vector<int>& digits, int K) {
    for (int i = static_cast<int>(digits.size()) - 1; i >= 0; --i) {
      if (++digits[i] < K) return;
      digits[i] = 0;
    }
  }

  std::size_t table_size(std::size_t sites) const {
    return table_size_checked(marginal_->size(), sites);
  }

  std::size_t stride_of(std::size_t site_pos) const {
    const int K = marginal_->size();
    std::size_t s = 1;
    for (std::size_t i = site_pos + 1; i < window_.size(); ++i)
      s *= static_cast<std::size_t>(K);
    return s;
  }

  template <class Op>
  static LocalFunction combine(const LocalFunction& f, const LocalFunction& g, Op op) {
    if (!same_marginal(f.marginal_, g.marginal_))
      throw InputError("functions live over different marginals");
    if (f.dim() != g.dim()) throw DimensionError("functions have different dimension");
    const Window joint = Window::join(f.window_, g.window_);
    const LocalFunction fe = f.extended(joint);
    const LocalFunction ge = g.extended(joint);
    std::vector<double> vals(fe.values_.size());
    for (std::size_t i = 0; i < vals.size(); ++i)
      vals[i] = op(fe.values_[i], ge.values_[i]);
    return LocalFunction(f.marginal_, joint, std::move(vals));
  }

  void require_compatible_basis(const OrthonormalBasis& basis) const {
    if (!same_marginal(basis.marginal(), marginal_))
      throw InputError("basis marginal differs from function marginal");
    if (!basis.complete())
      throw CompletenessError("coefficient expansion requires a complete basis (" +
                              std::to_string(basis.size()) + " of " +
                              std::to_string(marginal_->size()) + " modes)");
  }

  void compute_mean() {
    const int K = marginal_->size();
    const auto& w = marginal_->weights();
    std::vector<int> digits(window_.size(), 0);
    double m = 0.0;
    for (std::size_t idx = 0; idx < values_.size(); ++idx) {
      double weight = 1.0;
      for (int d : digits) weight *= w[d];
      m += weight * values_[idx];
      advance(digits, K);
    }
    mean_ = m;
  }

  MarginalPtr marginal_;
  Window window_;
  std::vector<double> values_;
  double mean_ = 0.0;
};

// Orbit-resolved view of a coefficient map: for each translation orbit the
// list of (shift, coefficient) pairs and their plain sum.
struct OrbitCoefficients {
  std::map<MultiIndex, std::vector<std::pair<Coord, double>>> members;
  std::map<MultiIndex, double> sums;
};

inline OrbitCoefficients orbit_collect(const std::map<MultiIndex, double>& coeffs) {
  OrbitCoefficients out;
  for (const auto& [n, c] : coeffs) {
    if (n.zero()) continue;  // constant mode carries no orbit
    auto [shift, rep] = n.orbit_split();
    out.members[rep].push_back({shift, c});
    out.sums[rep] += c;
  }
  return out;
}

}  // namespace gkdiff
