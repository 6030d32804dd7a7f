#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gkdiff/basis.hpp"
#include "gkdiff/dynamics.hpp"
#include "gkdiff/errors.hpp"
#include "gkdiff/gradient.hpp"
#include "gkdiff/lattice.hpp"
#include "gkdiff/local_function.hpp"

namespace gkdiff {

// <f|g> = sum_x (<tau_x f g> - <f><g>).  Only overlapping shifts contribute;
// outside the overlap the sites are independent and the term vanishes.
inline double semi_inner(const LocalFunction& f, const LocalFunction& g) {
  if (!same_marginal(f.marginal(), g.marginal()))
    throw InputError("semi_inner arguments use different marginals");
  if (f.dim() != g.dim())
    throw DimensionError("semi_inner arguments have different dimensions");
  const Box bf = bounding_box(f.dim(), f.window().sites());
  const Box bg = bounding_box(g.dim(), g.window().sites());
  Box range(f.dim(), sub(bg.lo, bf.hi), sub(bg.hi, bf.lo));
  const double mf = f.mean(), mg = g.mean();
  double total = 0.0;
  for (const Coord& x : range.sites())
    total += f.shifted_inner(x, g) - mf * mg;
  return total;
}

struct StaticResult {
  Eigen::MatrixXd Ds;  // d x d
  double chi = 0.0;    // Var xi_0
  double rho = 0.0;    // <xi_0>
  std::vector<double> bond_dirichlet;  // D_{0,e_alpha}(xi_0) per axis
};

// D^s_{ab} = (1/chi) sum_x x_a x_b D_{0,x}(xi_0), a finite sum at range one.
inline StaticResult static_D(const BondGenerator& model) {
  StaticResult out;
  const int d = model.dim();
  out.chi = model.marginal()->variance();
  out.rho = model.marginal()->mean();
  if (out.chi <= 1e-12)
    throw DegenerateMarginalError("compressibility " + std::to_string(out.chi) +
                                  " leaves the diffusion coefficient undefined");
  out.Ds = Eigen::MatrixXd::Zero(d, d);
  auto xi0 = model.xi_fn(kOrigin);
  for (int axis = 0; axis < d; ++axis) {
    const double fwd = model.dirichlet(unit_vec(axis), xi0);
    const double bwd = model.dirichlet(neg(unit_vec(axis)), xi0);
    out.bond_dirichlet.push_back(fwd);
    out.Ds(axis, axis) = (fwd + bwd) / out.chi;
  }
  return out;
}

struct VariationalResult {
  int radius = 0;
  double correction = 0.0;  // inf over the span, <= 0
  double D_dir = 0.0;       // l^T D^s l + correction
  double Ds_dir = 0.0;      // l^T D^s l
  Eigen::MatrixXd Ds;
  double chi = 0.0;
  int span_dim = 0;
  int kernel_dim = 0;
  double max_eigenvalue_of_form = 0.0;  // of A; must stay <= 1e-9
  double assembly_asymmetry = 0.0;
  std::vector<double> direction;
  Eigen::VectorXd minimizer;
  std::vector<MultiIndex> span;
};

namespace detail {

// Full-bond operator on two sites, transformed to basis coefficients:
// Bhat = (E (x) E) G (P (x) P) with analysis E[n][a] = w_a phi_n(a) and
// synthesis P[a][n] = phi_n(a).  Applying a bond to a product mode touches
// only the two slots at the bond's endpoints.
inline Eigen::MatrixXd transformed_bond_matrix(const BondGenerator& model,
                                               const OrthonormalBasis& basis) {
  const int K = model.marginal()->size();
  Eigen::MatrixXd E(K, K), P(K, K);
  for (int n = 0; n < K; ++n)
    for (int a = 0; a < K; ++a) {
      E(n, a) = model.marginal()->weights()[a] * basis.at_atom(n, a);
      P(a, n) = basis.at_atom(n, a);
    }
  // Acting on value tables indexed by (a, b): (Gv)_{ab} = sum of
  // rate * (v_{a'b'} - v_{ab}) over the moves leaving (a, b).
  Eigen::MatrixXd Gop = Eigen::MatrixXd::Zero(K * K, K * K);
  for (const BondMove& mv : model.moves()) {
    const int src = mv.a * K + mv.b, dst = mv.a2 * K + mv.b2;
    Gop(src, dst) += mv.rate;
    Gop(src, src) -= mv.rate;
  }
  Eigen::MatrixXd E2(K * K, K * K), P2(K * K, K * K);
  for (int m = 0; m < K; ++m)
    for (int n = 0; n < K; ++n)
      for (int a = 0; a < K; ++a)
        for (int b = 0; b < K; ++b) {
          E2(m * K + n, a * K + b) = E(m, a) * E(n, b);
          P2(a * K + b, m * K + n) = P(a, m) * P(b, n);
        }
  return E2 * Gop * P2;
}

// Coefficients of L Phi_n over the product basis, as a sparse map.  Bonds not
// touching the support annihilate the mode, so the sum is finite.
inline std::map<MultiIndex, double> apply_generator_coeffs(
    const BondGenerator& model, const Eigen::MatrixXd& bhat, const MultiIndex& n) {
  const int K = model.marginal()->size();
  std::set<std::pair<Coord, Coord>> bonds;
  for (const Coord& s : n.support())
    for (int axis = 0; axis < model.dim(); ++axis) {
      bonds.insert({sub(s, unit_vec(axis)), s});
      bonds.insert({s, add(s, unit_vec(axis))});
    }
  std::map<MultiIndex, double> out;
  for (const auto& [x, y] : bonds) {
    const int mx = n.at(x), my = n.at(y);
    const int col = mx * K + my;
    for (int row = 0; row < K * K; ++row) {
      const double c = bhat(row, col);
      if (c == 0.0) continue;
      MultiIndex target = n;
      target.set(x, row / K);
      target.set(y, row % K);
      if (target.zero()) continue;  // mean component, exactly zero in theory
      out[target] += c;
    }
  }
  return out;
}

inline std::vector<MultiIndex> span_indices(int dim, int radius, int K) {
  const Box box = Box::cube(dim, -radius, radius);
  const auto sites = box.sites();
  double count = 1;
  for (std::size_t i = 0; i < sites.size(); ++i) count *= K;
  if (count - 1 > 20000)
    throw CapacityError("variational span of " + std::to_string(count - 1) +
                        " modes exceeds the 20000-mode cap");
  std::vector<MultiIndex> span;
  std::vector<int> digits(sites.size(), 0);
  while (true) {
    MultiIndex n;
    for (std::size_t s = 0; s < sites.size(); ++s)
      if (digits[s] > 0) n.set(sites[s], digits[s]);
    if (!n.zero()) span.push_back(std::move(n));
    int i = static_cast<int>(digits.size()) - 1;
    while (i >= 0 && digits[i] == K - 1) digits[i--] = 0;
    if (i < 0) break;
    ++digits[i];
  }
  return span;
}

}  // namespace detail

// Upper bound on l^T D l at test-function radius r: assembles the quadratic
// form A_{kl} = <phi_k | L phi_l> and linear term b_k = <j_l | phi_k> over
// all product modes in the radius-r window and evaluates
// correction = -b^T (-A)^+ b with the kernel projected out.
inline VariationalResult minimize(const BondGenerator& model,
                                  const std::vector<double>& ell, int radius) {
  const int d = model.dim();
  if (radius < 1) throw InputError("test-function radius must be at least 1");
  if (static_cast<int>(ell.size()) != d)
    throw DimensionError("direction vector length must match the model dimension");
  double ell_norm = 0.0;
  for (double v : ell) ell_norm += v * v;
  if (ell_norm == 0.0) throw InputError("direction vector must be nonzero");

  VariationalResult out;
  out.radius = radius;
  out.direction = ell;
  auto stat = static_D(model);
  out.Ds = stat.Ds;
  out.chi = stat.chi;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) out.Ds_dir += ell[a] * ell[b] * stat.Ds(a, b);

  auto basis = OrthonormalBasis::build(model.marginal());
  const int K = model.marginal()->size();
  out.span = detail::span_indices(d, radius, K);
  const int n = static_cast<int>(out.span.size());
  out.span_dim = n;

  std::vector<MultiIndex> reps(n);
  for (int k = 0; k < n; ++k) reps[k] = out.span[k].orbit_rep();

  // Linear term from the direction current.
  std::optional<LocalFunction> j;
  for (int axis = 0; axis < d; ++axis) {
    if (ell[axis] == 0.0) continue;
    LocalFunction term = ell[axis] * model.current_axis(axis);
    j = j ? (*j + term) : term;
  }
  auto josums = orbit_collect(j->fourier(basis)).sums;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < n; ++k) {
    auto it = josums.find(reps[k]);
    if (it != josums.end()) b(k) = it->second;
  }

  // Quadratic form, assembled in coefficient space bond by bond.
  const Eigen::MatrixXd bhat = detail::transformed_bond_matrix(model, basis);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int l = 0; l < n; ++l) {
    auto coeffs = detail::apply_generator_coeffs(model, bhat, out.span[l]);
    std::map<MultiIndex, double> osums;
    for (const auto& [idx, c] : coeffs) osums[idx.orbit_rep()] += c;
    for (int k = 0; k < n; ++k) {
      auto it = osums.find(reps[k]);
      if (it != osums.end()) A(k, l) = it->second;
    }
  }
  out.assembly_asymmetry = (A - A.transpose()).cwiseAbs().maxCoeff();
  if (out.assembly_asymmetry > 1e-8 * std::max(1.0, A.cwiseAbs().maxCoeff()))
    throw AccuracyError("quadratic form assembly asymmetry " +
                        std::to_string(out.assembly_asymmetry));

  Eigen::MatrixXd M = -0.5 * (A + A.transpose());  // -A, symmetrized
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  const auto& lam = es.eigenvalues();
  const double lam_max = lam.maxCoeff();
  out.max_eigenvalue_of_form = -lam.minCoeff();  // largest eigenvalue of A
  if (out.max_eigenvalue_of_form > 1e-9)
    throw ModelError("non-positivity",
                     "the semigroup form has eigenvalue " +
                         std::to_string(out.max_eigenvalue_of_form));
  const double kernel_tol = 1e-10 * std::max(lam_max, 0.0);
  Eigen::VectorXd vb = es.eigenvectors().transpose() * b;
  out.minimizer = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (lam(i) <= kernel_tol) {
      ++out.kernel_dim;
      continue;
    }
    out.correction -= vb(i) * vb(i) / lam(i);
    out.minimizer += (vb(i) / lam(i)) * es.eigenvectors().col(i);
  }
  out.D_dir = out.Ds_dir + out.correction;
  return out;
}

// One-dimensional probe span {c j_l}: inf_c { -2c<j|j> - c^2 <j|L j> }.
// An upper bound for the full-span correction at the same radius.
inline double probe_correction(const BondGenerator& model,
                               const std::vector<double>& ell) {
  const int d = model.dim();
  if (static_cast<int>(ell.size()) != d)
    throw DimensionError("direction vector length must match the model dimension");
  std::optional<LocalFunction> j;
  for (int axis = 0; axis < d; ++axis) {
    if (ell[axis] == 0.0) continue;
    LocalFunction term = ell[axis] * model.current_axis(axis);
    j = j ? (*j + term) : term;
  }
  const double jj = semi_inner(*j, *j);
  const double q = semi_inner(*j, model.apply(*j));  // <j|L j> <= 0
  if (q >= 0.0) return 0.0;  // degenerate probe: j itself is a null direction
  return jj * jj / q;
}

struct DichotomyVerdict {
  double current_seminorm_sq = 0.0;     // <j_l | j_l>
  std::vector<double> corrections;      // by radius 1..max_radius
  bool gradient = false;                // seminorm at zero
  bool consistent = false;
  std::string note;
};

// Consistency of the dichotomy at finite radius: a vanishing current
// seminorm must come with vanishing corrections, a positive seminorm with a
// strictly negative correction at some tested radius (finite radii only
// bound D from above, so failure to find one is inconclusive, not fatal).
inline DichotomyVerdict dichotomy_check(const BondGenerator& model, int max_radius,
                                  double tol = 1e-10) {
  DichotomyVerdict v;
  std::vector<double> ell(model.dim(), 0.0);
  ell[0] = 1.0;
  std::optional<LocalFunction> j;
  for (int axis = 0; axis < model.dim(); ++axis) {
    if (ell[axis] == 0.0) continue;
    LocalFunction term = ell[axis] * model.current_axis(axis);
    j = j ? (*j + term) : term;
  }
  v.current_seminorm_sq = seminorm_sq(*j);
  v.gradient = v.current_seminorm_sq <= tol;
  for (int r = 1; r <= max_radius; ++r)
    v.corrections.push_back(minimize(model, ell, r).correction);
  for (std::size_t i = 0; i + 1 < v.corrections.size(); ++i)
    if (v.corrections[i + 1] > v.corrections[i] + 1e-12) {
      v.consistent = false;
      v.note = "correction increased from radius " + std::to_string(i + 1);
      return v;
    }
  if (v.gradient) {
    v.consistent = true;
    for (double c : v.corrections)
      if (std::abs(c) > tol) {
        v.consistent = false;
        v.note = "gradient current but nonzero correction";
      }
    if (v.consistent) v.note = "gradient current, all corrections vanish";
  } else {
    v.consistent = v.corrections.empty() ? false : v.corrections.back() < -tol;
    v.note = v.consistent
                 ? "positive current seminorm and strictly negative correction"
                 : "positive current seminorm but no negative correction found "
                   "at the tested radii (inconclusive: finite radii only bound "
                   "D from above)";
  }
  return v;
}

}  // namespace gkdiff
