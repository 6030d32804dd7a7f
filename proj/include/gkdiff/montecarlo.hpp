#pragma once

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gkdiff/dynamics.hpp"
#include "gkdiff/errors.hpp"
#include "gkdiff/exchange_kernel.hpp"
#include "gkdiff/marginal.hpp"
#include "gkdiff/parallel.hpp"
#include "gkdiff/rng.hpp"

namespace gkdiff {

namespace detail {

// Fenwick tree over nonnegative bond rates: point assignment, prefix sums,
// and inverse-prefix sampling in O(log n).
class Fenwick {
 public:
  void init(std::vector<double> values) {
    values_ = std::move(values);
    n_ = values_.size();
    tree_.assign(n_ + 1, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      tree_[i + 1] += values_[i];
      const std::size_t parent = (i + 1) + ((i + 1) & -(i + 1));
      if (parent <= n_) tree_[parent] += tree_[i + 1];
    }
    total_ = 0.0;
    for (double v : values_) total_ += v;
  }

  void set(std::size_t i, double value) {
    const double delta = value - values_[i];
    values_[i] = value;
    total_ += delta;
    for (std::size_t k = i + 1; k <= n_; k += k & -k) tree_[k] += delta;
  }

  double value(std::size_t i) const { return values_[i]; }
  double total() const { return total_; }
  const std::vector<double>& values() const { return values_; }

  // Smallest index whose inclusive prefix sum exceeds r (r in [0, total)).
  std::size_t sample(double r) const {
    std::size_t pos = 0;
    std::size_t step = 1;
    while (step * 2 <= n_) step *= 2;
    for (; step > 0; step /= 2) {
      if (pos + step <= n_ && tree_[pos + step] <= r) {
        r -= tree_[pos + step];
        pos += step;
      }
    }
    return pos < n_ ? pos : n_ - 1;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
  std::vector<double> tree_;  // 1-based
  double total_ = 0.0;
};

// Asymptotic Kolmogorov tail Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} e^{-2 j^2 lambda^2}.
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-8) return 1.0;
  double q = 0.0, sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    q += sign * term;
    if (term < 1e-12) break;
    sign = -sign;
  }
  return std::clamp(2.0 * q, 0.0, 1.0);
}

inline std::vector<std::size_t> batch_edges(std::size_t trajectories) {
  const std::size_t batches =
      std::min<std::size_t>(10, trajectories / 2);
  if (batches < 2)
    throw StatisticsError("batch means need at least 4 trajectories (got " +
                          std::to_string(trajectories) + ")");
  std::vector<std::size_t> edges(batches + 1);
  for (std::size_t b = 0; b <= batches; ++b)
    edges[b] = b * trajectories / batches;
  return edges;
}

struct MeanSe {
  double mean = 0.0, se = 0.0;
};

inline MeanSe batch_stats(const std::vector<double>& batch_values) {
  const std::size_t B = batch_values.size();
  MeanSe out;
  for (double v : batch_values) out.mean += v;
  out.mean /= static_cast<double>(B);
  double ss = 0.0;
  for (double v : batch_values) {
    const double d = v - out.mean;
    ss += d * d;
  }
  out.se = std::sqrt(ss / (static_cast<double>(B) * (B - 1)));
  return out;
}

struct LineFit {
  double slope = 0.0, intercept = 0.0, r2 = 1.0;
};

inline LineFit least_squares(const std::vector<double>& x,
                             const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 1e-30 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

}  // namespace detail

// Snapshot of a periodic chain.
struct RingState {
  int N = 0;
  std::vector<double> values;  // conserved field per site
  double time = 0.0;
};

// Equilibrium trajectories of one source (lattice model or exchange kernel),
// sampled on a common lag grid.  states[k][l][x] is the conserved field at
// site x, lag l, trajectory k.
struct TrajectorySet {
  int N = 0;
  std::uint64_t seed = 0;
  std::string source;
  double rho = 0.0;  // exact E[xi] of the marginal
  double chi = 0.0;  // exact Var[xi]
  std::vector<double> lags;
  std::vector<std::vector<std::vector<double>>> states;
  double max_conservation_drift = 0.0;
};

namespace detail {

inline void check_run_shape(int N, const std::vector<double>& lags,
                            int trajectories) {
  if (N < 4) throw InputError("ring needs at least 4 sites");
  if (trajectories < 1) throw InputError("need at least one trajectory");
  if (lags.empty()) throw InputError("lag grid is empty");
  if (lags.front() < 0.0) throw InputError("lags must be nonnegative");
  for (std::size_t i = 1; i < lags.size(); ++i)
    if (!(lags[i] > lags[i - 1]))
      throw InputError("lags must be strictly increasing");
}

inline void check_conservation(double initial, double final_sum,
                               double& drift_out) {
  const double drift =
      std::abs(final_sum - initial) / std::max(1.0, std::abs(initial));
  drift_out = drift;
  if (drift > 1e-9)
    throw AccuracyError("conserved total drifted by relative " +
                        std::to_string(drift));
}

}  // namespace detail

// Event-driven continuous-time dynamics of a lattice model on a ring.
// Exponential waiting times from the total bond rate, bond selection by
// inverse prefix sum, move selection within the bond by rate.
class LatticeRing {
 public:
  LatticeRing(const BondGenerator& model, int N, Philox rng)
      : N_(N), rng_(rng) {
    if (model.dim() != 1)
      throw InputError("ring simulation needs a one-dimensional model");
    if (N < 4) throw InputError("ring needs at least 4 sites");
    const Marginal& m = *model.marginal();
    K_ = m.size();
    weights_ = m.weights();
    xi_.resize(K_);
    for (int a = 0; a < K_; ++a) xi_[a] = model.xi(a);
    moves_.assign(K_ * K_, {});
    pair_rate_.assign(K_ * K_, 0.0);
    for (const BondMove& mv : model.moves()) {
      moves_[mv.a * K_ + mv.b].push_back(mv);
      pair_rate_[mv.a * K_ + mv.b] += mv.rate;
    }
    state_.resize(N_);
    for (int x = 0; x < N_; ++x) state_[x] = rng_.discrete(weights_);
    rebuild_rates();
  }

  void advance_to(double t) {
    while (true) {
      const double total = rates_.total();
      if (!(total > 0.0)) {
        time_ = t;
        return;
      }
      const double dt = rng_.exponential(total);
      if (time_ + dt > t) {
        time_ = t;  // memoryless: the residual clock restarts next call
        return;
      }
      time_ += dt;
      fire(rates_.sample(rng_.uniform01() * total));
      if (++events_since_rebuild_ >= kRebuildPeriod) rebuild_rates();
    }
  }

  double time() const { return time_; }

  RingState state() const {
    RingState s;
    s.N = N_;
    s.time = time_;
    s.values.resize(N_);
    for (int x = 0; x < N_; ++x) s.values[x] = xi_[state_[x]];
    return s;
  }

  double conserved_total() const {
    double sum = 0.0;
    for (int a : state_) sum += xi_[a];
    return sum;
  }

 private:
  static constexpr long kRebuildPeriod = 1 << 20;

  double bond_rate(int x) const {
    return pair_rate_[state_[x] * K_ + state_[(x + 1) % N_]];
  }

  void rebuild_rates() {
    std::vector<double> r(N_);
    for (int x = 0; x < N_; ++x) r[x] = bond_rate(x);
    rates_.init(std::move(r));
    events_since_rebuild_ = 0;
  }

  void fire(std::size_t bond) {
    const int x = static_cast<int>(bond), y = (x + 1) % N_;
    const auto& options = moves_[state_[x] * K_ + state_[y]];
    if (options.empty()) {  // stale rate hit by a boundary draw; resync
      rates_.set(bond, bond_rate(x));
      return;
    }
    double r = rng_.uniform01() * pair_rate_[state_[x] * K_ + state_[y]];
    const BondMove* chosen = &options.back();
    for (const BondMove& mv : options) {
      if (r < mv.rate) {
        chosen = &mv;
        break;
      }
      r -= mv.rate;
    }
    state_[x] = chosen->a2;
    state_[y] = chosen->b2;
    for (int b : {(x + N_ - 1) % N_, x, y}) rates_.set(b, bond_rate(b));
  }

  int N_, K_ = 0;
  Philox rng_;
  std::vector<double> weights_, xi_;
  std::vector<std::vector<BondMove>> moves_;
  std::vector<double> pair_rate_;
  std::vector<int> state_;
  detail::Fenwick rates_;
  double time_ = 0.0;
  long events_since_rebuild_ = 0;
};

// Event-driven exchange dynamics: bond (x, x+1) fires at rate(v_x + v_{x+1})
// and moves a kernel-sampled amount from left to right.
class KernelRing {
 public:
  KernelRing(const ExchangeKernel& kernel, int N, Philox rng)
      : N_(N), kernel_(&kernel), rng_(rng) {
    if (N < 4) throw InputError("ring needs at least 4 sites");
    const Marginal& m = *kernel.marginal();
    values_.resize(N_);
    for (int x = 0; x < N_; ++x)
      values_[x] = rng_.gamma(m.shape(), m.temperature());
    rebuild_rates();
  }

  void advance_to(double t) {
    while (true) {
      const double total = rates_.total();
      if (!(total > 0.0)) {
        time_ = t;
        return;
      }
      const double dt = rng_.exponential(total);
      if (time_ + dt > t) {
        time_ = t;
        return;
      }
      time_ += dt;
      fire(rates_.sample(rng_.uniform01() * total));
      if (++events_since_rebuild_ >= kRebuildPeriod) rebuild_rates();
    }
  }

  double time() const { return time_; }

  RingState state() const {
    RingState s;
    s.N = N_;
    s.time = time_;
    s.values = values_;
    return s;
  }

  double conserved_total() const {
    double sum = 0.0;
    for (double v : values_) sum += v;
    return sum;
  }

 private:
  static constexpr long kRebuildPeriod = 1 << 20;

  double bond_rate(int x) const {
    return kernel_->rate(values_[x] + values_[(x + 1) % N_]);
  }

  void rebuild_rates() {
    std::vector<double> r(N_);
    for (int x = 0; x < N_; ++x) r[x] = bond_rate(x);
    rates_.init(std::move(r));
    events_since_rebuild_ = 0;
  }

  void fire(std::size_t bond) {
    const int x = static_cast<int>(bond), y = (x + 1) % N_;
    const double u = kernel_->draw_u(values_[x], values_[y], rng_);
    values_[x] -= u;
    values_[y] += u;
    for (int b : {(x + N_ - 1) % N_, x, y}) rates_.set(b, bond_rate(b));
  }

  int N_;
  const ExchangeKernel* kernel_;
  Philox rng_;
  std::vector<double> values_;
  detail::Fenwick rates_;
  double time_ = 0.0;
  long events_since_rebuild_ = 0;
};

namespace detail {

template <class Sim, class Init>
TrajectorySet run_trajectories(Init make_sim, const std::string& source,
                               double rho, double chi, int N,
                               const std::vector<double>& lags,
                               int trajectories, std::uint64_t seed,
                               int threads) {
  check_run_shape(N, lags, trajectories);
  TrajectorySet out;
  out.N = N;
  out.seed = seed;
  out.source = source;
  out.rho = rho;
  out.chi = chi;
  out.lags = lags;
  out.states.resize(trajectories);
  std::vector<double> drifts(trajectories, 0.0);
  parallel_for(
      static_cast<std::size_t>(trajectories),
      [&](std::size_t k) {
        Sim sim = make_sim(Philox(seed, k));
        const double initial = sim.conserved_total();
        auto& snaps = out.states[k];
        snaps.reserve(lags.size());
        for (double t : lags) {
          sim.advance_to(t);
          snaps.push_back(sim.state().values);
        }
        check_conservation(initial, sim.conserved_total(), drifts[k]);
      },
      threads);
  for (double d : drifts)
    out.max_conservation_drift = std::max(out.max_conservation_drift, d);
  return out;
}

}  // namespace detail

inline TrajectorySet simulate(const BondGenerator& model, int N,
                              const std::vector<double>& lags,
                              int trajectories, std::uint64_t seed,
                              int threads = 0) {
  const Marginal& m = *model.marginal();
  double rho = 0.0, chi = 0.0;
  for (int a = 0; a < m.size(); ++a) rho += m.weights()[a] * model.xi(a);
  for (int a = 0; a < m.size(); ++a) {
    const double d = model.xi(a) - rho;
    chi += m.weights()[a] * d * d;
  }
  return detail::run_trajectories<LatticeRing>(
      [&](Philox rng) { return LatticeRing(model, N, rng); }, model.name(),
      rho, chi, N, lags, trajectories, seed, threads);
}

inline TrajectorySet simulate(const ExchangeKernel& kernel, int N,
                              const std::vector<double>& lags,
                              int trajectories, std::uint64_t seed,
                              int threads = 0) {
  const Marginal& m = *kernel.marginal();
  return detail::run_trajectories<KernelRing>(
      [&](Philox rng) { return KernelRing(kernel, N, rng); }, kernel.name(),
      m.mean(), m.variance(), N, lags, trajectories, seed, threads);
}

// Correlation data on the lag grid.  Displacement mode carries the full
// space-time profile S(x,t) plus its second moment m2(t) = sum_x x^2 S(x,t)
// (signed ring offsets) as `values`; current mode carries the ring-averaged
// current autocorrelation C(t).
struct CorrelationSeries {
  enum class Mode { Displacement, CurrentAutocorrelation };

  Mode mode = Mode::Displacement;
  int N = 0;
  double rho = 0.0, chi = 0.0;
  std::size_t trajectories = 0;
  int batches = 0;
  std::uint64_t seed = 0;
  std::vector<double> lags;
  std::vector<double> values, se;                 // per-lag scalar with error
  std::vector<std::vector<double>> batch_values;  // [batch][lag], for fits
  // Displacement extras:
  std::vector<std::vector<double>> profile;  // pooled S[lag][x]
  std::vector<double> sum_values, sum_se;    // sum_x S(x,t) with error
};

// Ring- and trajectory-averaged S(x,t) = E[(xi_x(t)-rho)(xi_0(0)-rho)] with
// exact-mean centering and batch-mean errors over contiguous trajectory
// blocks.
inline CorrelationSeries estimate_S(const TrajectorySet& traj) {
  const std::size_t T = traj.states.size();
  const auto edges = detail::batch_edges(T);
  const std::size_t B = edges.size() - 1;
  const std::size_t K = traj.lags.size();
  const int N = traj.N;

  CorrelationSeries out;
  out.mode = CorrelationSeries::Mode::Displacement;
  out.N = N;
  out.rho = traj.rho;
  out.chi = traj.chi;
  out.trajectories = T;
  out.batches = static_cast<int>(B);
  out.seed = traj.seed;
  out.lags = traj.lags;

  // S accumulated per batch: [batch][lag][offset].
  std::vector<std::vector<std::vector<double>>> S(
      B, std::vector<std::vector<double>>(K, std::vector<double>(N, 0.0)));
  std::vector<double> centered0(N), centered(N);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = edges[b]; k < edges[b + 1]; ++k) {
      const auto& snaps = traj.states[k];
      for (int y = 0; y < N; ++y) centered0[y] = snaps[0][y] - traj.rho;
      for (std::size_t l = 0; l < K; ++l) {
        for (int y = 0; y < N; ++y) centered[y] = snaps[l][y] - traj.rho;
        auto& row = S[b][l];
        for (int x = 0; x < N; ++x) {
          double acc = 0.0;
          for (int y = 0; y < N; ++y) acc += centered[(y + x) % N] * centered0[y];
          row[x] += acc / N;
        }
      }
    }
    const double count = static_cast<double>(edges[b + 1] - edges[b]);
    for (auto& row : S[b])
      for (double& v : row) v /= count;
  }

  std::vector<double> offset2(N);
  for (int x = 0; x < N; ++x) {
    const double sx = x <= N / 2 ? x : x - N;
    offset2[x] = sx * sx;
  }

  out.batch_values.assign(B, std::vector<double>(K, 0.0));
  std::vector<std::vector<double>> batch_sums(B, std::vector<double>(K, 0.0));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t l = 0; l < K; ++l) {
      double m2 = 0.0, total = 0.0;
      for (int x = 0; x < N; ++x) {
        m2 += offset2[x] * S[b][l][x];
        total += S[b][l][x];
      }
      out.batch_values[b][l] = m2;
      batch_sums[b][l] = total;
    }

  out.values.resize(K);
  out.se.resize(K);
  out.sum_values.resize(K);
  out.sum_se.resize(K);
  out.profile.assign(K, std::vector<double>(N, 0.0));
  std::vector<double> column(B);
  for (std::size_t l = 0; l < K; ++l) {
    for (std::size_t b = 0; b < B; ++b) column[b] = out.batch_values[b][l];
    const auto m2 = detail::batch_stats(column);
    out.values[l] = m2.mean;
    out.se[l] = m2.se;
    for (std::size_t b = 0; b < B; ++b) column[b] = batch_sums[b][l];
    const auto sum = detail::batch_stats(column);
    out.sum_values[l] = sum.mean;
    out.sum_se[l] = sum.se;
    const double w = 1.0 / static_cast<double>(B);
    for (int x = 0; x < N; ++x)
      for (std::size_t b = 0; b < B; ++b) out.profile[l][x] += w * S[b][l][x];
  }
  return out;
}

// Slope of m2(t)/(2 chi) over the late half of the lag grid, slope and error
// from per-batch regressions.  A poor pooled fit attaches a warning instead
// of failing: the number is still a measurement, just not a clean one.
struct SpreadingEstimate {
  double D = 0.0;
  double se = 0.0;
  double r2 = 1.0;
  std::size_t window_begin = 0;  // first lag index used in the fit
  std::string warning;
};

inline SpreadingEstimate moment_spreading_D(const CorrelationSeries& series) {
  if (series.mode != CorrelationSeries::Mode::Displacement)
    throw InputError("moment spreading needs a displacement-mode series");
  const std::size_t K = series.lags.size();
  const std::size_t begin = K / 2;
  if (K - begin < 3)
    throw StatisticsError("need at least 3 late-time lags for a slope");
  const double chi2 = 2.0 * series.chi;

  std::vector<double> t(series.lags.begin() + begin, series.lags.end());
  std::vector<double> y(K - begin);
  SpreadingEstimate out;
  out.window_begin = begin;

  std::vector<double> slopes(series.batch_values.size());
  for (std::size_t b = 0; b < series.batch_values.size(); ++b) {
    for (std::size_t i = 0; i < y.size(); ++i)
      y[i] = series.batch_values[b][begin + i] / chi2;
    slopes[b] = detail::least_squares(t, y).slope;
  }
  const auto stats = detail::batch_stats(slopes);
  out.D = stats.mean;
  out.se = stats.se;

  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = series.values[begin + i] / chi2;
  out.r2 = detail::least_squares(t, y).r2;
  if (out.r2 < 0.9)
    out.warning = "no clean linear regime in m2(t) (R^2 = " +
                  std::to_string(out.r2) + ")";
  return out;
}

// Bond current of a lattice model as a function of the two adjacent site
// values, tabulated from the model's current function.
inline std::function<double(double, double)> lattice_pair_current(
    const BondGenerator& model) {
  if (model.dim() != 1)
    throw InputError("pair current table needs a one-dimensional model");
  const LocalFunction j = model.current(unit_vec(0));
  const Window& w = j.window();
  const int K = model.marginal()->size();
  const int pos_a = w.index_of(kOrigin), pos_b = w.index_of(unit_vec(0));
  std::vector<double> table(K * K, 0.0);
  std::vector<int> digits(w.size(), 0);
  for (int a = 0; a < K; ++a)
    for (int b = 0; b < K; ++b) {
      if (pos_a >= 0) digits[pos_a] = a;
      if (pos_b >= 0) digits[pos_b] = b;
      table[a * K + b] = j(digits);
    }
  std::map<double, int> index;
  for (int a = 0; a < K; ++a) index[model.xi(a)] = a;
  if (static_cast<int>(index.size()) != K)
    throw InputError("site values do not identify atoms uniquely");
  return [table, index, K](double va, double vb) {
    const int a = index.at(va), b = index.at(vb);
    return table[a * K + b];
  };
}

// Ring-averaged current autocorrelation
//   C(t) = sum_x E[j(0) tau_x j(t)] = (4/N) E[J(0) J(t)],
// where J is the sum of pair currents over the N ring bonds and the factor 4
// comes from the two-term axis current j = j_{0,1} + tau_{-1} j_{0,1}.
inline CorrelationSeries current_autocorrelation(
    const TrajectorySet& traj,
    const std::function<double(double, double)>& pair_current) {
  const std::size_t T = traj.states.size();
  const auto edges = detail::batch_edges(T);
  const std::size_t B = edges.size() - 1;
  const std::size_t K = traj.lags.size();
  const int N = traj.N;

  CorrelationSeries out;
  out.mode = CorrelationSeries::Mode::CurrentAutocorrelation;
  out.N = N;
  out.rho = traj.rho;
  out.chi = traj.chi;
  out.trajectories = T;
  out.batches = static_cast<int>(B);
  out.seed = traj.seed;
  out.lags = traj.lags;
  out.batch_values.assign(B, std::vector<double>(K, 0.0));

  std::vector<double> J(K);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = edges[b]; k < edges[b + 1]; ++k) {
      const auto& snaps = traj.states[k];
      for (std::size_t l = 0; l < K; ++l) {
        double sum = 0.0;
        for (int x = 0; x < N; ++x)
          sum += pair_current(snaps[l][x], snaps[l][(x + 1) % N]);
        J[l] = sum;
      }
      for (std::size_t l = 0; l < K; ++l)
        out.batch_values[b][l] += (4.0 / N) * J[0] * J[l];
    }
    const double count = static_cast<double>(edges[b + 1] - edges[b]);
    for (double& v : out.batch_values[b]) v /= count;
  }

  out.values.resize(K);
  out.se.resize(K);
  std::vector<double> column(B);
  for (std::size_t l = 0; l < K; ++l) {
    for (std::size_t b = 0; b < B; ++b) column[b] = out.batch_values[b][l];
    const auto stats = detail::batch_stats(column);
    out.values[l] = stats.mean;
    out.se[l] = stats.se;
  }
  return out;
}

// Time integral of C(t): trapezoid over the sampled window plus an
// exponential tail fitted to the late-time decay, reported separately.
// The dynamical correction to the diffusivity is -(integral + tail)/chi.
struct GKEstimate {
  CorrelationSeries series;
  double integral = 0.0, integral_se = 0.0;  // trapezoid over [0, t_max]
  double tail = 0.0, tail_se = 0.0;          // extrapolation beyond t_max
  double correction = 0.0, correction_se = 0.0;
  double chi = 0.0;
  double t_max = 0.0;
  std::string warning;
};

inline GKEstimate integrate_gk(const CorrelationSeries& series) {
  if (series.mode != CorrelationSeries::Mode::CurrentAutocorrelation)
    throw InputError("correction integral needs a current-mode series");
  const std::size_t K = series.lags.size();
  if (K < 2) throw StatisticsError("need at least two lags to integrate");

  GKEstimate out;
  out.series = series;
  out.chi = series.chi;
  out.t_max = series.lags.back();

  const std::size_t B = series.batch_values.size();
  std::vector<double> integrals(B, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t l = 0; l + 1 < K; ++l)
      integrals[b] += 0.5 *
                      (series.batch_values[b][l] + series.batch_values[b][l + 1]) *
                      (series.lags[l + 1] - series.lags[l]);
  const auto stats = detail::batch_stats(integrals);
  out.integral = stats.mean;
  out.integral_se = stats.se;

  // Exponential tail from the last third of the grid.  Only values resolved
  // away from zero enter the fit: keeping bare positives would select noise
  // and manufacture a spurious slow tail once C(t) has already decayed.
  std::vector<double> t, logc;
  for (std::size_t l = 2 * K / 3; l < K; ++l)
    if (series.values[l] > 2.0 * series.se[l]) {
      t.push_back(series.lags[l]);
      logc.push_back(std::log(series.values[l]));
    }
  if (t.size() >= 3) {
    const auto fit = detail::least_squares(t, logc);
    if (fit.slope < 0.0) {
      const double tau = -1.0 / fit.slope;
      const double c_end = std::exp(fit.intercept + fit.slope * out.t_max);
      out.tail = c_end * tau;
      out.tail_se = 0.5 * std::abs(out.tail);
    } else {
      out.warning = "late-time correlation is not decaying; tail dropped";
    }
  }
  if (std::abs(out.tail) > 0.5 * std::abs(out.integral) && out.tail != 0.0) {
    if (!out.warning.empty()) out.warning += "; ";
    out.warning += "tail dominates the sampled window; increase t_max";
  }

  out.correction = -(out.integral + out.tail) / out.chi;
  out.correction_se =
      std::sqrt(out.integral_se * out.integral_se + out.tail_se * out.tail_se) /
      out.chi;
  return out;
}

inline std::vector<double> uniform_lags(double t_max, int count) {
  if (count < 2 || !(t_max > 0.0)) throw InputError("bad lag grid request");
  std::vector<double> lags(count);
  for (int i = 0; i < count; ++i) lags[i] = t_max * i / (count - 1);
  return lags;
}

inline GKEstimate gk_dynamical_correction(const BondGenerator& model, int N,
                                          double t_max, int trajectories,
                                          std::uint64_t seed,
                                          int lag_count = 33, int threads = 0) {
  const auto traj =
      simulate(model, N, uniform_lags(t_max, lag_count), trajectories, seed, threads);
  return integrate_gk(current_autocorrelation(traj, lattice_pair_current(model)));
}

inline GKEstimate gk_dynamical_correction(const ExchangeKernel& kernel, int N,
                                          double t_max, int trajectories,
                                          std::uint64_t seed,
                                          int lag_count = 33, int threads = 0) {
  const auto traj =
      simulate(kernel, N, uniform_lags(t_max, lag_count), trajectories, seed, threads);
  return integrate_gk(current_autocorrelation(
      traj, [&kernel](double a, double b) { return kernel.pair_current(a, b); }));
}

// Kolmogorov-Smirnov check that final-lag site values are still distributed
// by the marginal: the product measure is invariant, and distinct sites of a
// trajectory plus distinct trajectories are pooled.  Continuous marginals
// only; the exact CDF transform maps the pool to uniforms.
struct KSResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t samples = 0;
};

inline KSResult ks_stationarity(const TrajectorySet& traj, const Marginal& m) {
  if (m.is_finite())
    throw InputError("stationarity KS test needs a continuous marginal");
  std::vector<double> pool;
  for (const auto& snaps : traj.states)
    for (double v : snaps.back()) pool.push_back(v);
  const std::size_t n = pool.size();
  if (n < 8) throw StatisticsError("too few samples for a KS test");
  for (double& v : pool)
    v = boost::math::gamma_p(m.shape(), v / m.temperature());
  std::sort(pool.begin(), pool.end());
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d = std::max(d, (i + 1.0) / n - pool[i]);
    d = std::max(d, pool[i] - static_cast<double>(i) / n);
  }
  const double root = std::sqrt(static_cast<double>(n));
  KSResult out;
  out.statistic = d;
  out.samples = n;
  out.p_value = detail::kolmogorov_q((root + 0.12 + 0.11 / root) * d);
  return out;
}

// Everything the CLI reports for one diffusivity run.  D_total is the static
// part plus the measured dynamical correction by construction.
struct DiffusionEstimate {
  double Ds_static = 0.0;
  double dynamical_correction = 0.0, correction_se = 0.0;
  double D_total = 0.0;
  double spreading_D = 0.0, spreading_se = 0.0;
  int N = 0;
  std::size_t trajectories = 0;
  double t_max = 0.0;
  std::uint64_t seed = 0;
  std::string warnings;
};

inline DiffusionEstimate make_diffusion_estimate(double Ds_static,
                                                 const GKEstimate& gk,
                                                 const SpreadingEstimate& spread) {
  DiffusionEstimate out;
  out.Ds_static = Ds_static;
  out.dynamical_correction = gk.correction;
  out.correction_se = gk.correction_se;
  out.D_total = Ds_static + gk.correction;
  out.spreading_D = spread.D;
  out.spreading_se = spread.se;
  out.N = gk.series.N;
  out.trajectories = gk.series.trajectories;
  out.t_max = gk.t_max;
  out.seed = gk.series.seed;
  out.warnings = gk.warning;
  if (!spread.warning.empty()) {
    if (!out.warnings.empty()) out.warnings += "; ";
    out.warnings += spread.warning;
  }
  return out;
}

}  // namespace gkdiff
