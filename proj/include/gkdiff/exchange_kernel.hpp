#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "gkdiff/errors.hpp"
#include "gkdiff/marginal.hpp"
#include "gkdiff/quadrature.hpp"
#include "gkdiff/rng.hpp"

namespace gkdiff {

// Continuous energy-exchange dynamics on a pair of sites.  A bond holding
// energies (a, b) fires at rate rate(a+b); the event moves an amount u from
// the left site to the right one, u drawn from a law on [-b, a], so the pair
// becomes (a - u, b + u).  Detailed balance with respect to the product of
// two copies of `marginal` is verified on a quadrature grid at construction;
// kernels that fail are rejected outright.
//
// pair_current(a, b) is the expected instantaneous drift of the LEFT site,
// -rate(a+b) * E[u | a, b], matching the bond-current convention of the
// lattice models (BondGenerator::current tracks the origin site).
class ExchangeKernel {
 public:
  using RateFn = std::function<double(double)>;                    // rate(s)
  using DensityFn = std::function<double(double, double, double)>; // phi(u | a, b)
  using SampleFn = std::function<double(double, double, Philox&)>; // u given (a, b)
  using MomentFn = std::function<double(double, double)>;          // E[u^p | a, b]

  // Fully general kernel.  mean_u / mean_u2 are conditional moments of the
  // redistribution law; pass nullptr to have them integrated from `density`.
  ExchangeKernel(std::string name, MarginalPtr marginal, RateFn rate,
                 DensityFn density, SampleFn sample, MomentFn mean_u = nullptr,
                 MomentFn mean_u2 = nullptr, double balance_tol = 1e-6)
      : name_(std::move(name)),
        marginal_(std::move(marginal)),
        rate_(std::move(rate)),
        density_(std::move(density)),
        sample_(std::move(sample)),
        mean_u_(std::move(mean_u)),
        mean_u2_(std::move(mean_u2)) {
    if (!marginal_ || marginal_->is_finite())
      throw InputError("exchange kernels require a gamma marginal");
    if (!rate_ || !density_ || !sample_)
      throw InputError("exchange kernel needs rate, density and sampler");
    balance_defect_ = balance_defect();
    if (balance_defect_ > balance_tol)
      throw ModelError("detailed-balance",
                       "kernel '" + name_ + "' defect " +
                           std::to_string(balance_defect_) + " exceeds " +
                           std::to_string(balance_tol));
  }

  // rate(s) = scale * s^power, redistribution (a', b') = (s B, s (1 - B)) with
  // B ~ Beta(beta_param, beta_param).  Balance with Gamma(shape, T) holds
  // exactly iff beta_param == shape; both knobs are exposed so tests can
  // construct mismatched (rejected) kernels.
  static ExchangeKernel beta_split(std::string name, double shape,
                                   double temperature, double rate_scale,
                                   double rate_power, double beta_param) {
    if (!(beta_param > 0.0)) throw InputError("beta split parameter must be positive");
    if (!(rate_scale >= 0.0)) throw InputError("rate scale must be nonnegative");
    const double g = beta_param;
    auto rate = [rate_scale, rate_power](double s) {
      return s > 0.0 ? rate_scale * std::pow(s, rate_power) : 0.0;
    };
    const double lognorm = 2.0 * std::lgamma(g) - std::lgamma(2.0 * g);
    auto density = [g, lognorm](double u, double a, double b) {
      const double s = a + b;
      const double x = (a - u) / s;  // post-event left fraction
      if (!(x > 0.0) || !(x < 1.0)) return 0.0;
      return std::exp((g - 1.0) * (std::log(x) + std::log1p(-x)) - lognorm) / s;
    };
    auto sample = [g](double a, double b, Philox& rng) {
      const double frac = g == 1.0 ? rng.uniform01() : rng.beta(g, g);
      return a - (a + b) * frac;
    };
    auto mean_u = [](double a, double b) { return 0.5 * (a - b); };
    auto mean_u2 = [g](double a, double b) {
      // E[(a - sB)^2], E[B] = 1/2, E[B^2] = (g+1)/(2(2g+1)).
      const double s = a + b;
      return a * a - a * s + s * s * (g + 1.0) / (2.0 * (2.0 * g + 1.0));
    };
    return ExchangeKernel(std::move(name), Marginal::gamma(shape, temperature),
                          std::move(rate), std::move(density), std::move(sample),
                          std::move(mean_u), std::move(mean_u2));
  }

  // Constant-rate kernel with uniform redistribution of the pair total.  The
  // gradient case: pair_current is (b - a)/2 times the rate.
  static ExchangeKernel uniform(double rate = 1.0, double temperature = 1.0) {
    return beta_split("uniform", 1.0, temperature, rate, 0.0, 1.0);
  }

  // rate(s) = sqrt(s) with a Beta(shape, shape) split; nongradient current.
  static ExchangeKernel sqrt_rate(double shape = 1.0, double temperature = 1.0) {
    return beta_split("sqrt-rate", shape, temperature, 1.0, 0.5, shape);
  }

  // No dynamics at all; useful as a degenerate fixture.
  static ExchangeKernel zero(double shape = 1.0, double temperature = 1.0) {
    return beta_split("zero", shape, temperature, 0.0, 0.0, shape);
  }

  const std::string& name() const { return name_; }
  const MarginalPtr& marginal() const { return marginal_; }
  double balance_defect_value() const { return balance_defect_; }

  double rate(double s) const { return rate_(s); }
  double density(double u, double a, double b) const { return density_(u, a, b); }
  double draw_u(double a, double b, Philox& rng) const { return sample_(a, b, rng); }

  double mean_u(double a, double b) const {
    if (mean_u_) return mean_u_(a, b);
    return moment(a, b, 1);
  }
  double mean_u2(double a, double b) const {
    if (mean_u2_) return mean_u2_(a, b);
    return moment(a, b, 2);
  }

  // Expected drift of the left site: -rate(a+b) E[u | a, b].
  double pair_current(double a, double b) const {
    return -rate_(a + b) * mean_u(a, b);
  }

 private:
  double moment(double a, double b, int p) const {
    const QuadratureRule q = gauss_legendre(64, -b, a);
    double m = 0.0;
    for (std::size_t i = 0; i < q.nodes.size(); ++i) {
      const double u = q.nodes[i];
      m += q.weights[i] * density_(u, a, b) * (p == 1 ? u : u * u);
    }
    return m;
  }

  // Max grid deviation of nu(a)nu(b)rate(s)phi(u|a,b) from its image under
  // the exchange map (a,b,u) -> (a-u, b+u, -u), relative to the grid peak.
  double balance_defect() const {
    const double k = marginal_->shape(), T = marginal_->temperature();
    auto log_nu = [k, T](double x) {
      return (k - 1.0) * std::log(x) - x / T - std::lgamma(k) - k * std::log(T);
    };
    const QuadratureRule& outer = marginal_->quadrature(14);
    double peak = 0.0, defect = 0.0;
    for (double na : outer.nodes) {
      for (double nb : outer.nodes) {
        const double a = T * na, b = T * nb;
        const QuadratureRule inner = gauss_legendre(18, -b, a);
        for (double u : inner.nodes) {
          const double fwd =
              std::exp(log_nu(a) + log_nu(b)) * rate_(a + b) * density_(u, a, b);
          const double bwd = std::exp(log_nu(a - u) + log_nu(b + u)) *
                             rate_(a + b) * density_(-u, a - u, b + u);
          peak = std::max(peak, std::max(std::abs(fwd), std::abs(bwd)));
          defect = std::max(defect, std::abs(fwd - bwd));
        }
      }
    }
    return peak > 0.0 ? defect / peak : 0.0;
  }

  std::string name_;
  MarginalPtr marginal_;
  RateFn rate_;
  DensityFn density_;
  SampleFn sample_;
  MomentFn mean_u_, mean_u2_;
  double balance_defect_ = 0.0;
};

// Bond Dirichlet energy of the conserved field for an exchange kernel,
// evaluated by nested quadrature with node doubling:
//   dirichlet = (1/4) E[ rate(a+b) E[u^2 | a, b] ]
// over independent (a, b) ~ marginal.  Ds = 2 dirichlet / chi with
// chi = Var(eta).  Throws AccuracyError when doubling stalls above tol.
struct StaticQuadResult {
  double dirichlet = 0.0;
  double chi = 0.0;
  double Ds = 0.0;
  double error = 0.0;  // |last - previous| of the doubling sequence
  int nodes = 0;       // outer nodes per axis at acceptance
};

inline StaticQuadResult static_quadrature(const ExchangeKernel& kernel,
                                          double tol = 1e-9) {
  const Marginal& m = *kernel.marginal();
  const double T = m.temperature();
  auto evaluate = [&](int n) {
    const QuadratureRule& q = m.quadrature(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < q.nodes.size(); ++i) {
      const double a = T * q.nodes[i];
      for (std::size_t j = 0; j < q.nodes.size(); ++j) {
        const double b = T * q.nodes[j];
        acc += q.weights[i] * q.weights[j] * kernel.rate(a + b) *
               kernel.mean_u2(a, b);
      }
    }
    return 0.25 * acc;
  };
  StaticQuadResult out;
  out.chi = m.variance();
  if (out.chi <= 1e-12) throw DegenerateMarginalError("marginal carries no fluctuation");
  double prev = evaluate(32);
  for (int n = 64; n <= 512; n *= 2) {
    const double cur = evaluate(n);
    const double err = std::abs(cur - prev);
    if (err <= tol * std::max(1.0, std::abs(cur))) {
      out.dirichlet = cur;
      out.error = err;
      out.nodes = n;
      out.Ds = 2.0 * cur / out.chi;
      return out;
    }
    prev = cur;
  }
  throw AccuracyError("static quadrature stalled above tolerance " +
                      std::to_string(tol));
}

}  // namespace gkdiff
