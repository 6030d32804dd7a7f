#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gkdiff/errors.hpp"
#include "gkdiff/local_function.hpp"

namespace gkdiff {

// Exact-arithmetic gradient membership for finite marginals.  Doubles convert
// to rationals without loss, an unnormalized orthogonal basis is built by
// rational Gram-Schmidt, and orbit coefficient sums are tested against zero
// exactly, so floating-point noise can neither hide nor manufacture a
// gradient.  Orbit sums of the normalized coefficients equal (sum of
// unnormalized projections) / sqrt(Q) with a per-orbit rational Q > 0, so the
// zero test and the squared seminorm stay rational.
struct ExactMembership {
  bool in_gradient_space = false;
  std::string seminorm_sq;  // exact rational p/q
  double seminorm_sq_value = 0.0;
  std::optional<MultiIndex> witness_orbit;
  std::string witness_sum_sq;  // exact squared orbit sum of the witness
  std::size_t orbit_count = 0;
};

inline ExactMembership exact_membership(const LocalFunction& f) {
  using Rat = boost::multiprecision::cpp_rational;
  const auto& m = *f.marginal();
  const int K = m.size();
  const Window& w = f.window();
  const std::size_t nsites = w.size();
  if (f.values().size() > 60000)
    throw CapacityError("exact mode supports tables up to 60000 entries");

  std::vector<Rat> atoms(K), weights(K);
  Rat mass = 0;
  for (int a = 0; a < K; ++a) {
    atoms[a] = Rat(m.atoms()[a]);
    weights[a] = Rat(m.weights()[a]);
    mass += weights[a];
  }
  for (int a = 0; a < K; ++a) weights[a] /= mass;  // exact probability weights

  // Unnormalized orthogonal polynomials p_0..p_{K-1} on the atoms.
  std::vector<std::vector<Rat>> p(K, std::vector<Rat>(K));
  std::vector<Rat> qnorm(K);  // <p_n^2>
  auto dot = [&](const std::vector<Rat>& u, const std::vector<Rat>& v) {
    Rat s = 0;
    for (int a = 0; a < K; ++a) s += weights[a] * u[a] * v[a];
    return s;
  };
  for (int n = 0; n < K; ++n) {
    std::vector<Rat> v(K);
    for (int a = 0; a < K; ++a) {
      Rat x = 1;
      for (int k = 0; k < n; ++k) x *= atoms[a];
      v[a] = x;
    }
    for (int k = 0; k < n; ++k) {
      const Rat c = dot(v, p[k]) / qnorm[k];
      for (int a = 0; a < K; ++a) v[a] -= c * p[k][a];
    }
    qnorm[n] = dot(v, v);
    if (qnorm[n] == 0)
      throw ConditioningError("atoms are not distinct in exact arithmetic");
    p[n] = std::move(v);
  }

  // Per-site transform to unnormalized projections U_n = <f prod p_{n_i}>.
  std::vector<Rat> t(f.values().size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = Rat(f.values()[i]);
  std::size_t stride = t.size() / static_cast<std::size_t>(K);
  for (std::size_t s = 0; s < nsites; ++s) {
    std::vector<Rat> tmp(K);
    for (std::size_t base = 0; base < t.size(); ++base) {
      if ((base / stride) % static_cast<std::size_t>(K) != 0) continue;
      for (int n = 0; n < K; ++n) {
        Rat acc = 0;
        for (int a = 0; a < K; ++a)
          acc += weights[a] * p[n][a] * t[base + stride * static_cast<std::size_t>(a)];
        tmp[n] = acc;
      }
      for (int n = 0; n < K; ++n)
        t[base + stride * static_cast<std::size_t>(n)] = tmp[n];
    }
    stride /= static_cast<std::size_t>(K);
  }

  // Group by translation orbit; Q is shared within an orbit because all
  // members carry the same multiset of degrees.
  std::map<MultiIndex, Rat> orbit_sum;
  std::map<MultiIndex, Rat> orbit_q;
  std::vector<int> digits(nsites, 0);
  for (std::size_t idx = 0; idx < t.size(); ++idx) {
    MultiIndex n;
    for (std::size_t s = 0; s < nsites; ++s)
      if (digits[s] > 0) n.set(w.site(s), digits[s]);
    if (!n.zero() && t[idx] != 0) {
      auto [shift, rep] = n.orbit_split();
      orbit_sum[rep] += t[idx];
      if (orbit_q.find(rep) == orbit_q.end()) {
        Rat q = 1;
        for (const auto& e : rep.entries()) q *= qnorm[e.second];
        orbit_q[rep] = q;
      }
    }
    for (int i = static_cast<int>(nsites) - 1; i >= 0; --i) {
      if (++digits[i] < K) break;
      digits[i] = 0;
    }
  }

  ExactMembership out;
  out.in_gradient_space = true;
  out.orbit_count = orbit_sum.size();
  Rat seminorm = 0;
  Rat worst = 0;
  for (const auto& [rep, s] : orbit_sum) {
    const Rat contrib = s * s / orbit_q.at(rep);
    seminorm += contrib;
    if (s != 0) {
      out.in_gradient_space = false;
      if (contrib > worst) {
        worst = contrib;
        out.witness_orbit = rep;
        out.witness_sum_sq = contrib.str();
      }
    }
  }
  out.seminorm_sq = seminorm.str();
  out.seminorm_sq_value = static_cast<double>(seminorm);
  return out;
}

}  // namespace gkdiff
