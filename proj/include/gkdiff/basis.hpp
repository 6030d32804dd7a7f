#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <vector>

#include "gkdiff/errors.hpp"
#include "gkdiff/marginal.hpp"

namespace gkdiff {

// Orthonormal single-site basis {phi_0, phi_1, ...} with phi_0 identically 1
// and <phi_m phi_n> = delta_mn under the marginal.  Finite marginals carry an
// explicit value table; gamma marginals use normalized generalized Laguerre
// polynomials in eta/T evaluated by recurrence.
class OrthonormalBasis {
 public:
  int size() const { return size_; }
  const MarginalPtr& marginal() const { return marginal_; }

  // True when the basis spans every function of a single site.  Only finite
  // marginals admit a complete basis.
  bool complete() const {
    return marginal_->is_finite() && size_ == marginal_->size();
  }

  // phi_n at the atom with the given index (finite marginals only).
  double at_atom(int n, int atom_index) const { return table_(n, atom_index); }

  // phi_n at an arbitrary state value.
  double operator()(int n, double eta) const {
    if (n < 0 || n >= size_) throw InputError("basis index out of range");
    if (marginal_->is_finite()) {
      const auto& atoms = marginal_->atoms();
      for (std::size_t i = 0; i < atoms.size(); ++i)
        if (atoms[i] == eta) return table_(n, static_cast<int>(i));
      throw InputError("value is not an atom of the marginal");
    }
    return laguerre_value(n, eta);
  }

  // Max deviation of the Gram matrix <phi_i phi_j> from the identity.
  double gram_defect(int quad_nodes = 0) const {
    double worst = 0.0;
    for (int i = 0; i < size_; ++i)
      for (int j = i; j < size_; ++j) {
        double g;
        if (marginal_->is_finite()) {
          g = 0.0;
          for (int a = 0; a < marginal_->size(); ++a)
            g += marginal_->weights()[a] * table_(i, a) * table_(j, a);
        } else {
          const int n = quad_nodes > 0 ? quad_nodes : std::max(64, 2 * size_);
          g = marginal_->expect(
              [&](double eta) { return laguerre_value(i, eta) * laguerre_value(j, eta); },
              n);
        }
        worst = std::max(worst, std::abs(g - (i == j ? 1.0 : 0.0)));
      }
    return worst;
  }

  static OrthonormalBasis build(MarginalPtr marginal, int size = 0);

 private:
  OrthonormalBasis(MarginalPtr m, int size) : marginal_(std::move(m)), size_(size) {}

  double laguerre_value(int n, double eta) const {
    const double x = eta / marginal_->temperature();
    const double alpha = marginal_->shape() - 1.0;
    double prev = 0.0, cur = 1.0;  // L_0
    double norm = 1.0;             // c_0
    for (int k = 0; k < n; ++k) {
      const double next =
          ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
      prev = cur;
      cur = next;
      norm *= std::sqrt((k + 1.0) / (k + 1.0 + alpha));
    }
    return norm * cur;
  }

  MarginalPtr marginal_;
  int size_;
  Eigen::MatrixXd table_;  // finite: row n = values of phi_n at each atom
};

inline OrthonormalBasis OrthonormalBasis::build(MarginalPtr marginal, int size) {
  if (!marginal) throw InputError("null marginal");
  if (marginal->is_finite()) {
    const int K = marginal->size();
    if (size == 0) size = K;
    if (size < 1 || size > K)
      throw InputError("basis size must lie in [1, atom count]");
    const auto& atoms = marginal->atoms();
    const auto& w = marginal->weights();
    auto dot = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
      double s = 0.0;
      for (int a = 0; a < K; ++a) s += w[a] * u(a) * v(a);
      return s;
    };
    OrthonormalBasis b(marginal, size);
    b.table_.resize(size, K);
    b.table_.row(0).setOnes();
    std::vector<Eigen::VectorXd> done;
    done.push_back(Eigen::VectorXd::Ones(K));
    for (int n = 1; n < size; ++n) {
      Eigen::VectorXd v(K);
      for (int a = 0; a < K; ++a) v(a) = std::pow(atoms[a], n);
      const double scale = std::sqrt(std::max(dot(v, v), 1.0));
      // Modified Gram-Schmidt, two passes, to keep the Gram defect small.
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& u : done) v -= dot(v, u) * u;
      const double nrm = std::sqrt(dot(v, v));
      if (!(nrm > 1e-10 * scale))
        throw ConditioningError(
            "degenerate atom set: monomial degree " + std::to_string(n) +
            " is numerically dependent on lower degrees");
      v /= nrm;
      done.push_back(v);
      b.table_.row(n) = v.transpose();
    }
    const double defect = b.gram_defect();
    if (defect > 1e-10)
      throw ConditioningError("basis Gram defect " + std::to_string(defect) +
                              " exceeds 1e-10");
    return b;
  }
  if (size == 0) size = 8;
  if (size < 1) throw InputError("basis size must be positive");
  if (size > 32)
    throw InputError("polynomial basis beyond degree 31 is not supported");
  OrthonormalBasis b(marginal, size);
  const double defect = b.gram_defect();
  if (defect > 1e-10)
    throw ConditioningError("basis Gram defect " + std::to_string(defect) +
                            " exceeds 1e-10");
  return b;
}

}  // namespace gkdiff
