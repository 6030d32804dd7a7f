#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gkdiff/errors.hpp"
#include "gkdiff/lattice.hpp"
#include "gkdiff/local_function.hpp"
#include "gkdiff/marginal.hpp"

namespace gkdiff {

// One transition of the two-site bond dynamics, with the rate of the full
// (unordered) bond operator L_{x,y} + L_{y,x}.  Atom indices, not values.
struct BondMove {
  int a, b;    // source pair
  int a2, b2;  // target pair
  double rate;
};

struct SelfCheckReport {
  double constants_defect = 0.0;       // max |(L_{0,z} 1)|, must be exactly 0
  double conjugation_defect = 0.0;     // max |L_{x,y}f - tau_x L_{0,y-x} tau_{-x} f|
  double reversibility_defect = 0.0;   // max |(WG)_{cc'} - (WG)_{c'c}|
  double nonpositivity_eig = 0.0;      // max eigenvalue of sym(WG), <= tol
  double conservation_defect = 0.0;    // max |(xi_a + xi_b) change| over moves
  double offsite_defect = 0.0;         // max |L_{0,z} xi_y| for y outside the bond
  bool ok = false;
};

// Nearest-neighbour bond generator: the same two-site operator acts on every
// lattice bond via shift conjugation L_{x,y} = tau_x L_{0,y-x} tau_{-x}.
// The full lattice generator counts both ordered terms of each bond,
// L = sum_{x,y} L_{x,y}, so one unordered bond contributes 2 L_{x,y}.
class BondGenerator {
 public:
  using RateFn = std::function<double(double, double)>;

  static BondGenerator make_ssep(double density, double rate = 1.0, int dim = 1) {
    return make_ssep(Marginal::bernoulli(density),
                     [rate](double, double) { return rate; },
                     "const:" + std::to_string(rate), dim);
  }

  static BondGenerator make_ssep(MarginalPtr m, const RateFn& c,
                                 const std::string& rate_label = "custom", int dim = 1) {
    if (!m->is_finite() || m->size() != 2 || m->atoms()[0] != 0.0 ||
        m->atoms()[1] != 1.0)
      throw InputError("exclusion dynamics needs atoms {0,1}");
    return make_exchange(std::move(m), c, "ssep", rate_label, dim);
  }

  // Exchange dynamics over an arbitrary finite marginal: configurations at
  // the two endpoints swap at a symmetric positive rate.
  static BondGenerator make_exchange(MarginalPtr m, const RateFn& c,
                                     const std::string& name = "exchange",
                                     const std::string& rate_label = "custom",
                                     int dim = 1) {
    BondGenerator g(std::move(m), name, dim);
    const auto& atoms = g.marginal_->atoms();
    const int K = g.K_;
    for (int a = 0; a < K; ++a)
      for (int b = 0; b < K; ++b) {
        if (a == b) continue;  // exchange is the identity there
        const double r = c(atoms[a], atoms[b]);
        const double rT = c(atoms[b], atoms[a]);
        if (r != rT)
          throw InputError("exchange rate must be symmetric in its arguments");
        if (!(r > 0.0)) throw InputError("exchange rate must be positive");
        g.moves_.push_back({a, b, b, a, r});
      }
    g.metadata_["rate"] = rate_label;
    g.finalize();
    return g;
  }

  // Hops gated by the capacity kappa; single-site weights proportional to
  // fugacity^k (uniform at fugacity 1).
  static BondGenerator make_gep(int kappa, double fugacity = 1.0, int dim = 1) {
    if (kappa < 2) throw InputError("capacity must be at least 2");
    if (!(fugacity > 0.0)) throw InputError("fugacity must be positive");
    std::vector<double> atoms, w;
    double z = 0.0, lk = 1.0;
    for (int k = 0; k <= kappa; ++k, lk *= fugacity) {
      atoms.push_back(k);
      z += lk;
    }
    lk = 1.0;
    for (int k = 0; k <= kappa; ++k, lk *= fugacity) w.push_back(lk / z);
    BondGenerator g(Marginal::finite(std::move(atoms), std::move(w)),
                    "gep", dim);
    for (int a = 0; a <= kappa; ++a)
      for (int b = 0; b <= kappa; ++b) {
        if (a >= 1 && b <= kappa - 1) g.moves_.push_back({a, b, a - 1, b + 1, 1.0});
        if (b >= 1 && a <= kappa - 1) g.moves_.push_back({a, b, a + 1, b - 1, 1.0});
      }
    g.metadata_["kappa"] = std::to_string(kappa);
    g.metadata_["fugacity"] = std::to_string(fugacity);
    g.finalize();
    return g;
  }

  // Zero-range jumps g(k), truncated to at most kappa particles per site:
  // jumps onto full sites are suppressed and the single-site Gibbs weights
  // nu(k) ~ fugacity^k / (g(1)...g(k)) are renormalized to {0..kappa}.  The
  // truncation keeps the state space finite and preserves detailed balance.
  static BondGenerator make_zero_range(const std::function<double(int)>& rate,
                                       int kappa, double fugacity = 1.0, int dim = 1) {
    if (kappa < 1) throw InputError("truncation level must be at least 1");
    if (rate(0) != 0.0) throw InputError("zero-range rate must vanish at 0");
    for (int k = 1; k <= kappa; ++k)
      if (!(rate(k) > 0.0))
        throw InputError("zero-range rate must be positive on {1..kappa}");
    std::vector<double> atoms, w;
    double z = 0.0, cur = 1.0;
    for (int k = 0; k <= kappa; ++k) {
      if (k > 0) cur *= fugacity / rate(k);
      atoms.push_back(k);
      w.push_back(cur);
      z += cur;
    }
    for (double& x : w) x /= z;
    BondGenerator g(Marginal::finite(std::move(atoms), std::move(w)),
                    "zero-range", dim);
    for (int a = 0; a <= kappa; ++a)
      for (int b = 0; b <= kappa; ++b) {
        if (a >= 1 && b <= kappa - 1) g.moves_.push_back({a, b, a - 1, b + 1, rate(a)});
        if (b >= 1 && a <= kappa - 1) g.moves_.push_back({a, b, a + 1, b - 1, rate(b)});
      }
    g.truncated_ = true;
    g.metadata_["kappa"] = std::to_string(kappa);
    g.metadata_["fugacity"] = std::to_string(fugacity);
    g.metadata_["truncated"] = "true";
    g.finalize();
    return g;
  }

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  int range() const { return 1; }
  bool truncated() const { return truncated_; }
  const MarginalPtr& marginal() const { return marginal_; }
  const std::vector<BondMove>& moves() const { return moves_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  double xi(int atom_index) const { return marginal_->atoms()[atom_index]; }

  LocalFunction xi_fn(Coord site) const {
    return LocalFunction::occupation(marginal_, dim_, site);
  }

  // L_{x,y} f (one ordered term, coefficient 1/2 per move).
  LocalFunction half_bond(Coord x, Coord y, const LocalFunction& f) const {
    return bond_impl(x, y, f, 0.5);
  }

  // (L_{x,y} + L_{y,x}) f = 2 L_{x,y} f.
  LocalFunction bond(Coord x, Coord y, const LocalFunction& f) const {
    return bond_impl(x, y, f, 1.0);
  }

  // L f summed over every bond that touches the window of f.
  LocalFunction apply(const LocalFunction& f) const {
    if (!same_marginal(f.marginal(), marginal_))
      throw InputError("function marginal differs from model marginal");
    if (f.dim() != dim_) throw DimensionError("function dimension differs from model");
    std::set<std::pair<Coord, Coord>> bonds;
    for (const Coord& s : f.window().sites())
      for (int axis = 0; axis < dim_; ++axis) {
        bonds.insert({sub(s, unit_vec(axis)), s});
        bonds.insert({s, add(s, unit_vec(axis))});
      }
    std::vector<Coord> grown = f.window().sites();
    for (const auto& [x, y] : bonds) {
      grown.push_back(x);
      grown.push_back(y);
    }
    std::sort(grown.begin(), grown.end());
    grown.erase(std::unique(grown.begin(), grown.end()), grown.end());
    Window joint(dim_, std::move(grown));
    LocalFunction fe = f.extended(joint);
    std::vector<double> acc(fe.values().size(), 0.0);
    for (const auto& [x, y] : bonds) accumulate_bond(fe, x, y, 1.0, acc);
    return LocalFunction(marginal_, joint, std::move(acc));
  }

  // Dirichlet form D_{0,z}(f) = <-L_{0,z} f, f> evaluated as the standard
  // half-sum of squared jumps, an independent route from table inner
  // products.
  double dirichlet(Coord z, const LocalFunction& f) const {
    if (chebyshev(z) != 1 || std::abs(z[0]) + std::abs(z[1]) + std::abs(z[2]) != 1)
      throw InputError("bond vector must be a unit lattice step");
    if (f.dim() != dim_) throw DimensionError("function dimension differs from model");
    Window joint = Window::join(f.window(), Window(dim_, {kOrigin, z}));
    LocalFunction fe = f.extended(joint);
    const int K = K_;
    const int s0 = joint.index_of(kOrigin);
    const int s1 = joint.index_of(z);
    std::size_t st0 = 1, st1 = 1;
    for (std::size_t i = static_cast<std::size_t>(s0) + 1; i < joint.size(); ++i)
      st0 *= static_cast<std::size_t>(K);
    for (std::size_t i = static_cast<std::size_t>(s1) + 1; i < joint.size(); ++i)
      st1 *= static_cast<std::size_t>(K);
    const auto& w = marginal_->weights();
    const std::size_t n = fe.values().size();
    std::vector<int> digits(joint.size(), 0);
    double total = 0.0;
    for (std::size_t idx = 0; idx < n; ++idx) {
      double weight = 1.0;
      for (int d : digits) weight *= w[d];
      const int a = digits[s0], b = digits[s1];
      for (const BondMove& mv : moves_by_src_[static_cast<std::size_t>(a) * K + b]) {
        // L_{0,z} carries half of the full bond rate.
        const auto off = static_cast<std::ptrdiff_t>(st0) * (mv.a2 - a) +
                         static_cast<std::ptrdiff_t>(st1) * (mv.b2 - b);
        const std::size_t tgt = static_cast<std::size_t>(
            static_cast<std::ptrdiff_t>(idx) + off);
        const double jump = fe.values()[tgt] - fe.values()[idx];
        total += 0.5 * weight * (0.5 * mv.rate) * jump * jump;
      }
      for (int i = static_cast<int>(digits.size()) - 1; i >= 0; --i) {
        if (++digits[i] < K) break;
        digits[i] = 0;
      }
    }
    return total;
  }

  // j_{0,z} = 2 L_{0,z} xi_0.
  LocalFunction current(Coord z) const { return bond(kOrigin, z, xi_fn(kOrigin)); }

  // j_alpha = sum_z z_alpha j_{0,z} = j_{0,e_alpha} - j_{0,-e_alpha}.
  LocalFunction current_axis(int axis) const {
    if (axis < 0 || axis >= dim_) throw InputError("axis out of range");
    return current(unit_vec(axis)) - current(neg(unit_vec(axis)));
  }

  SelfCheckReport self_check(double tol = 1e-12) const {
    SelfCheckReport rep;
    // Constants and conservation are exact statements about the move list.
    for (const BondMove& mv : moves_) {
      const double change =
          (xi(mv.a2) + xi(mv.b2)) - (xi(mv.a) + xi(mv.b));
      rep.conservation_defect = std::max(rep.conservation_defect, std::abs(change));
    }
    LocalFunction one = LocalFunction::constant(marginal_, dim_, 1.0);
    rep.constants_defect = bond(kOrigin, unit_vec(0), one).max_abs();
    LocalFunction xi_out = xi_fn(Coord{dim_ > 1 ? 0 : 3, dim_ > 1 ? 3 : 0, 0});
    rep.offsite_defect = bond(kOrigin, unit_vec(0), xi_out).max_abs();

    // Shift conjugation probe on a deterministic non-symmetric function.
    {
      Window w(dim_, {kOrigin, unit_vec(0)});
      const auto& atoms = marginal_->atoms();
      LocalFunction probe =
          LocalFunction::tabulate(marginal_, w, [&](const std::vector<int>& d) {
            return atoms[d[0]] * atoms[d[0]] + 0.25 * atoms[d[1]];
          });
      Coord x{2, 0, 0};
      LocalFunction via_shift =
          bond(kOrigin, unit_vec(0), probe.shifted(neg(x))).shifted(x);
      LocalFunction direct = bond(x, add(x, unit_vec(0)), probe);
      rep.conjugation_defect = (via_shift - direct).max_abs();
    }

    // Reversibility and nonpositivity of the weighted two-site matrix.
    const int K = K_;
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(K * K, K * K);
    for (const BondMove& mv : moves_) {
      const int src = mv.a * K + mv.b, dst = mv.a2 * K + mv.b2;
      G(src, dst) += mv.rate;
      G(src, src) -= mv.rate;
    }
    const auto& w = marginal_->weights();
    Eigen::MatrixXd WG = G;
    for (int a = 0; a < K; ++a)
      for (int b = 0; b < K; ++b) WG.row(a * K + b) *= w[a] * w[b];
    rep.reversibility_defect = (WG - WG.transpose()).cwiseAbs().maxCoeff();
    Eigen::MatrixXd S = 0.5 * (WG + WG.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    rep.nonpositivity_eig = es.eigenvalues().maxCoeff();

    rep.ok = rep.constants_defect == 0.0 && rep.conservation_defect == 0.0 &&
             rep.offsite_defect == 0.0 && rep.conjugation_defect <= tol &&
             rep.reversibility_defect <= tol && rep.nonpositivity_eig <= tol;
    return rep;
  }

 private:
  BondGenerator(MarginalPtr m, std::string name, int dim)
      : marginal_(std::move(m)), name_(std::move(name)), dim_(dim) {
    check_dim(dim_);
    if (!marginal_->is_finite())
      throw InputError("bond generators require a finite marginal");
    K_ = marginal_->size();
  }

  void finalize() {
    moves_by_src_.assign(static_cast<std::size_t>(K_) * K_, {});
    for (const BondMove& mv : moves_)
      moves_by_src_[static_cast<std::size_t>(mv.a) * K_ + mv.b].push_back(mv);
    SelfCheckReport rep = self_check();
    if (rep.conservation_defect != 0.0)
      throw ModelError("conservation", "a move changes xi_0 + xi_z by " +
                                           std::to_string(rep.conservation_defect));
    if (rep.constants_defect != 0.0)
      throw ModelError("annihilates-constants",
                       "L_{0,z}1 has magnitude " + std::to_string(rep.constants_defect));
    if (rep.reversibility_defect > 1e-12)
      throw ModelError("reversibility", "weighted bond matrix asymmetry " +
                                            std::to_string(rep.reversibility_defect));
    if (rep.nonpositivity_eig > 1e-12)
      throw ModelError("non-positivity", "Dirichlet form admits positive eigenvalue " +
                                             std::to_string(rep.nonpositivity_eig));
    if (rep.conjugation_defect > 1e-12)
      throw ModelError("translation-invariance",
                       "shift conjugation defect " +
                           std::to_string(rep.conjugation_defect));
  }

  // Adds factor * (L_{x,y} + L_{y,x}) fe into acc (both defined on fe's
  // window).
  void accumulate_bond(const LocalFunction& fe, Coord x, Coord y, double factor,
                       std::vector<double>& acc) const {
    const Window& joint = fe.window();
    const int sx = joint.index_of(x);
    const int sy = joint.index_of(y);
    if (sx < 0 || sy < 0) throw InputError("bond endpoints must lie in the window");
    const int K = K_;
    std::size_t stx = 1, sty = 1;
    for (std::size_t i = static_cast<std::size_t>(sx) + 1; i < joint.size(); ++i)
      stx *= static_cast<std::size_t>(K);
    for (std::size_t i = static_cast<std::size_t>(sy) + 1; i < joint.size(); ++i)
      sty *= static_cast<std::size_t>(K);
    const std::size_t n = fe.values().size();
    std::vector<int> digits(joint.size(), 0);
    for (std::size_t idx = 0; idx < n; ++idx) {
      const int a = digits[sx], b = digits[sy];
      const auto& mvs = moves_by_src_[static_cast<std::size_t>(a) * K + b];
      double out = 0.0;
      for (const BondMove& mv : mvs) {
        const auto off = static_cast<std::ptrdiff_t>(stx) * (mv.a2 - a) +
                         static_cast<std::ptrdiff_t>(sty) * (mv.b2 - b);
        const std::size_t tgt = static_cast<std::size_t>(
            static_cast<std::ptrdiff_t>(idx) + off);
        out += mv.rate * (fe.values()[tgt] - fe.values()[idx]);
      }
      acc[idx] += factor * out;
      for (int i = static_cast<int>(digits.size()) - 1; i >= 0; --i) {
        if (++digits[i] < K) break;
        digits[i] = 0;
      }
    }
  }

  LocalFunction bond_impl(Coord x, Coord y, const LocalFunction& f,
                          double factor) const {
    if (!same_marginal(f.marginal(), marginal_))
      throw InputError("function marginal differs from model marginal");
    if (f.dim() != dim_) throw DimensionError("function dimension differs from model");
    const Coord z = sub(y, x);
    int steps = 0;
    for (int i = 0; i < kMaxDim; ++i) steps += std::abs(z[i]);
    if (steps != 1) throw InputError("bond endpoints must be nearest neighbours");
    Window joint = Window::join(f.window(), Window(dim_, {x, y}));
    LocalFunction fe = f.extended(joint);
    std::vector<double> acc(fe.values().size(), 0.0);
    accumulate_bond(fe, x, y, factor, acc);
    return LocalFunction(marginal_, joint, std::move(acc));
  }

  MarginalPtr marginal_;
  std::string name_;
  int dim_;
  int K_ = 0;
  bool truncated_ = false;
  std::vector<BondMove> moves_;
  std::vector<std::vector<BondMove>> moves_by_src_;
  std::map<std::string, std::string> metadata_;
};

}  // namespace gkdiff
