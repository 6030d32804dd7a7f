#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "gkdiff/errors.hpp"

namespace gkdiff {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

// Nodes and weights from the symmetric tridiagonal Jacobi matrix of the
// orthogonal-polynomial recurrence (Golub-Welsch).  mu0 is the total mass of
// the weight function; the returned weights sum to mu0.
inline QuadratureRule golub_welsch(const std::vector<double>& diag,
                                   const std::vector<double>& offdiag,
                                   double mu0) {
  const int n = static_cast<int>(diag.size());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) J(i, i) = diag[i];
  for (int i = 0; i + 1 < n; ++i) {
    J(i, i + 1) = offdiag[i];
    J(i + 1, i) = offdiag[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  if (es.info() != Eigen::Success)
    throw ConditioningError("Jacobi matrix eigensolve failed");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[i] = mu0 * v0 * v0;
  }
  return rule;
}

}  // namespace detail

// Generalized Gauss-Laguerre rule for the normalized weight
// x^alpha e^{-x} / Gamma(alpha+1) on (0, inf); weights sum to 1.
inline QuadratureRule gauss_laguerre(int n, double alpha) {
  if (n < 1) throw InputError("quadrature order must be positive");
  if (alpha <= -1.0) throw InputError("Laguerre exponent must exceed -1");
  std::vector<double> diag(n), off(n > 1 ? n - 1 : 0);
  for (int k = 0; k < n; ++k) diag[k] = 2.0 * k + alpha + 1.0;
  for (int k = 1; k < n; ++k) off[k - 1] = std::sqrt(k * (k + alpha));
  return detail::golub_welsch(diag, off, 1.0);
}

// Gauss-Legendre rule on [-1, 1]; weights sum to 2.
inline QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw InputError("quadrature order must be positive");
  std::vector<double> diag(n, 0.0), off(n > 1 ? n - 1 : 0);
  for (int k = 1; k < n; ++k)
    off[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
  return detail::golub_welsch(diag, off, 2.0);
}

// Gauss-Legendre rule mapped onto [a, b].
inline QuadratureRule gauss_legendre(int n, double a, double b) {
  QuadratureRule rule = gauss_legendre(n);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = mid + half * rule.nodes[i];
    rule.weights[i] *= half;
  }
  return rule;
}

}  // namespace gkdiff
