#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "gkdiff/errors.hpp"
#include "gkdiff/quadrature.hpp"

namespace gkdiff {

class Marginal;
using MarginalPtr = std::shared_ptr<const Marginal>;

struct ExpectResult {
  double value = 0.0;
  double error = 0.0;  // |value(2n nodes) - value(n nodes)|, 0 for exact sums
  int nodes = 0;
};

// Single-site equilibrium distribution.  Either a finite atomic measure
// (lattice-gas state spaces) or a Gamma(shape, scale=temperature) density on
// (0, inf) for continuous energies.
class Marginal {
 public:
  enum class Kind { Finite, Gamma };

  static MarginalPtr finite(std::vector<double> atoms, std::vector<double> weights) {
    return std::shared_ptr<const Marginal>(
        new Marginal(std::move(atoms), std::move(weights)));
  }

  static MarginalPtr bernoulli(double p) {
    if (!(p > 0.0) || !(p < 1.0))
      throw InputError("bernoulli density must lie strictly in (0,1)");
    return finite({0.0, 1.0}, {1.0 - p, p});
  }

  // Uniform weights on {0,...,kappa}.
  static MarginalPtr uniform_levels(int kappa) {
    if (kappa < 0) throw InputError("level count must be nonnegative");
    std::vector<double> atoms, w;
    for (int k = 0; k <= kappa; ++k) {
      atoms.push_back(k);
      w.push_back(1.0 / (kappa + 1));
    }
    return finite(std::move(atoms), std::move(w));
  }

  static MarginalPtr gamma(double shape, double temperature) {
    return std::shared_ptr<const Marginal>(new Marginal(shape, temperature));
  }

  Kind kind() const { return kind_; }
  bool is_finite() const { return kind_ == Kind::Finite; }

  const std::vector<double>& atoms() const {
    require_finite();
    return atoms_;
  }
  const std::vector<double>& weights() const {
    require_finite();
    return weights_;
  }
  int size() const {
    require_finite();
    return static_cast<int>(atoms_.size());
  }

  double shape() const {
    require_gamma();
    return shape_;
  }
  double temperature() const {
    require_gamma();
    return temperature_;
  }

  double mean() const { return mean_; }
  double variance() const { return variance_; }

  // E[f(eta)].  For Gamma marginals, Gauss-Laguerre with `nodes` points.
  double expect(const std::function<double(double)>& f, int nodes = 64) const {
    if (kind_ == Kind::Finite) {
      double s = 0.0;
      for (std::size_t i = 0; i < atoms_.size(); ++i) s += weights_[i] * f(atoms_[i]);
      return s;
    }
    const QuadratureRule& q = quadrature(nodes);
    double s = 0.0;
    for (std::size_t i = 0; i < q.nodes.size(); ++i)
      s += q.weights[i] * f(temperature_ * q.nodes[i]);
    return s;
  }

  // Like expect() but doubles the node count until two successive values
  // agree within tol.  Throws AccuracyError when max_nodes is hit first.
  ExpectResult expect_checked(const std::function<double(double)>& f,
                              double tol = 1e-10, int start_nodes = 32,
                              int max_nodes = 2048) const {
    if (kind_ == Kind::Finite) return {expect(f), 0.0, size()};
    double prev = expect(f, start_nodes);
    for (int n = 2 * start_nodes; n <= max_nodes; n *= 2) {
      const double cur = expect(f, n);
      const double err = std::abs(cur - prev);
      if (err <= tol * std::max(1.0, std::abs(cur))) return {cur, err, n};
      prev = cur;
    }
    throw AccuracyError("quadrature did not converge to tolerance " +
                        std::to_string(tol) + " within " +
                        std::to_string(max_nodes) + " nodes");
  }

  // Cached Gauss-Laguerre rule in the dimensionless variable eta/temperature.
  const QuadratureRule& quadrature(int nodes) const {
    require_gamma();
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto it = rule_cache_.find(nodes);
    if (it == rule_cache_.end())
      it = rule_cache_.emplace(nodes, gauss_laguerre(nodes, shape_ - 1.0)).first;
    return it->second;
  }

  std::string describe() const {
    if (kind_ == Kind::Finite) {
      std::string s = "finite{";
      for (std::size_t i = 0; i < atoms_.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(atoms_[i]) + ":" + std::to_string(weights_[i]);
      }
      return s + "}";
    }
    return "gamma{shape=" + std::to_string(shape_) +
           ",T=" + std::to_string(temperature_) + "}";
  }

  bool operator==(const Marginal& o) const {
    if (kind_ != o.kind_) return false;
    if (kind_ == Kind::Finite) return atoms_ == o.atoms_ && weights_ == o.weights_;
    return shape_ == o.shape_ && temperature_ == o.temperature_;
  }

 private:
  Marginal(std::vector<double> atoms, std::vector<double> weights)
      : kind_(Kind::Finite), atoms_(std::move(atoms)), weights_(std::move(weights)) {
    if (atoms_.empty()) throw InputError("finite marginal needs at least one atom");
    if (atoms_.size() != weights_.size())
      throw InputError("atom and weight counts differ");
    for (std::size_t i = 1; i < atoms_.size(); ++i)
      if (!(atoms_[i - 1] < atoms_[i]))
        throw InputError("atoms must be strictly increasing");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w > 0.0)) throw InputError("weights must be strictly positive");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw InputError("weights must sum to 1 (got " + std::to_string(total) + ")");
    for (double& w : weights_) w /= total;
    mean_ = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) mean_ += weights_[i] * atoms_[i];
    variance_ = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      const double d = atoms_[i] - mean_;
      variance_ += weights_[i] * d * d;
    }
  }

  Marginal(double shape, double temperature)
      : kind_(Kind::Gamma), shape_(shape), temperature_(temperature) {
    if (!(shape > 0.0)) throw InputError("gamma shape must be positive");
    if (!(temperature > 0.0)) throw InputError("temperature must be positive");
    mean_ = shape * temperature;
    variance_ = shape * temperature * temperature;
    // Normalization self-check: a correctly built rule integrates 1 to 1.
    const QuadratureRule& q = quadrature(64);
    double total = 0.0;
    for (double w : q.weights) total += w;
    if (std::abs(total - 1.0) > 1e-10)
      throw ConditioningError("gamma quadrature mass " + std::to_string(total) +
                              " deviates from 1");
  }

  void require_finite() const {
    if (kind_ != Kind::Finite)
      throw InputError("operation requires a finite marginal");
  }
  void require_gamma() const {
    if (kind_ != Kind::Gamma)
      throw InputError("operation requires a gamma marginal");
  }

  Kind kind_;
  std::vector<double> atoms_, weights_;  // finite
  double shape_ = 0.0, temperature_ = 0.0;  // gamma
  double mean_ = 0.0, variance_ = 0.0;
  mutable std::mutex cache_mutex_;
  mutable std::map<int, QuadratureRule> rule_cache_;
};

}  // namespace gkdiff
