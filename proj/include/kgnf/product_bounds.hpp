#pragma once

// Multilinear integrals of spectral projections and empirical checks of their
// decay in the gap between the two largest levels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "kgnf/errors.hpp"
#include "kgnf/field.hpp"
#include "kgnf/hermite.hpp"
#include "kgnf/parallel.hpp"
#include "kgnf/random.hpp"

namespace kgnf {

/// Levels (n_0, ..., n_{p+1}).
struct LevelTuple {
  std::vector<int> levels;
  int d = 1;

  int p() const { return static_cast<int>(levels.size()) - 2; }
  int operator[](std::size_t i) const { return levels[i]; }
  int sum() const { return std::accumulate(levels.begin(), levels.end(), 0); }
  int max_level() const { return levels.empty() ? 0 : *std::max_element(levels.begin(), levels.end()); }
  bool operator==(const LevelTuple&) const = default;

  std::string str() const
  {
    std::string s;
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (i) s += ' ';
      s += std::to_string(levels[i]);
    }
    return s;
  }
};

struct MuS {
  double mu = 1.0;
  double S = 1.0;
  int n_prime = 0;
  int i0 = 0, i1 = 1, i2 = 2;
};

/// Largest, second and third largest entries picked by index (ties resolved to
/// the lowest index). The third is taken among slots 1..p+1 not already used;
/// when none is left (p = 1) it falls back to slot 0. n' is the largest inner
/// level n_1..n_p.
inline MuS mu_S(const LevelTuple& t)
{
  const auto& v = t.levels;
  const int k = static_cast<int>(v.size());
  if (k < 3) fail(ErrorKind::usage, "mu_S: tuple needs at least three levels");
  auto argmax = [&](int from, int skip_a, int skip_b) {
    int best = -1;
    for (int i = from; i < k; ++i) {
      if (i == skip_a || i == skip_b) continue;
      if (best < 0 || v[i] > v[best]) best = i;
    }
    return best;
  };
  MuS r;
  r.i0 = argmax(0, -1, -1);
  r.i1 = argmax(0, r.i0, -1);
  r.i2 = argmax(1, r.i0, r.i1);
  if (r.i2 < 0) r.i2 = 0;
  r.mu = (1.0 + std::sqrt(double(v[r.i1]))) * (1.0 + std::sqrt(double(v[r.i2])));
  r.S = std::abs(v[r.i0] - v[r.i1]) + r.mu;
  r.n_prime = 0;
  for (int i = 1; i + 1 < k; ++i) r.n_prime = std::max(r.n_prime, v[i]);
  return r;
}

/// Coefficients of one slot within the eigenspace of its level (grlex order).
using SlotComponent = std::vector<double>;

namespace detail {

// Value of sum_alpha c_alpha phi_alpha at a tensor node (axis tables given).
inline double slot_value(int level, int d, const SlotComponent& c, const std::vector<const double*>& axis_tab)
{
  if (d == 1) return c[0] * axis_tab[0][level];
  const auto idx = enumerate_level({level, d});
  double acc = 0.0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    if (c[a] == 0.0) continue;
    double v = c[a];
    for (int ax = 0; ax < d; ++ax) v *= axis_tab[ax][idx[a].alpha[ax]];
    acc += v;
  }
  return acc;
}

}  // namespace detail

/// Integral of prod_j (Pi_{n_j} u_j). Exact up to rounding on a grid of
/// weight exponent (p+2)/2 whose order covers the total degree; a smaller
/// `order_override` signals insufficient-order.
inline double product_integral(const LevelTuple& t, const std::vector<SlotComponent>& comps, int order_override = 0)
{
  const int k = static_cast<int>(t.levels.size());
  const int d = t.d;
  if (static_cast<int>(comps.size()) != k) fail(ErrorKind::usage, "product_integral: one component per slot");
  for (int j = 0; j < k; ++j)
    if (comps[j].size() != level_multiplicity({t.levels[j], d}))
      fail(ErrorKind::usage, "product_integral: component size does not match level multiplicity");

  // Per axis the polynomial degree is at most the sum of levels.
  const int degree = t.sum();
  const int need = quadrature_order_for_degree(degree);
  if (order_override > 0 && order_override < need)
    fail(ErrorKind::insufficient_order, "product_integral: grid order below exactness threshold");
  if (d == 1 && degree % 2 == 1) return 0.0;

  // Canonical slot order makes the result bitwise invariant under permutation.
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (t.levels[a] != t.levels[b]) return t.levels[a] < t.levels[b];
    return comps[a] < comps[b];
  });

  const QuadratureGrid g = gauss_hermite(order_override > 0 ? order_override : need, 0.5 * k);
  const int nmax = t.max_level();
  const std::size_t Q = g.size();
  std::vector<std::vector<double>> tab(Q);
  for (std::size_t q = 0; q < Q; ++q) tab[q] = hermite_table(nmax, g.nodes[q]);

  double acc = 0.0;
  std::vector<std::size_t> qi(d, 0);
  std::vector<const double*> axis_tab(d);
  const std::size_t pts = detail::ipow(Q, d);
  for (std::size_t pnt = 0; pnt < pts; ++pnt) {
    std::size_t rem = pnt;
    double w = 1.0;
    for (int ax = d - 1; ax >= 0; --ax) {
      qi[ax] = rem % Q;
      rem /= Q;
      axis_tab[ax] = tab[qi[ax]].data();
      w *= g.scaled_weights[qi[ax]];
    }
    double prod = 1.0;
    for (int j : order) prod *= detail::slot_value(t.levels[j], d, comps[j], axis_tab);
    acc += w * prod;
  }
  return acc;
}

/// Unit component on a single eigenfunction (the d = 1 default).
inline SlotComponent unit_component(int level, int d)
{
  SlotComponent c(level_multiplicity({level, d}), 0.0);
  c[0] = 1.0;
  return c;
}

inline SlotComponent random_unit_component(int level, int d, std::mt19937_64& rng)
{
  SlotComponent c(level_multiplicity({level, d}));
  double nn = 0.0;
  for (auto& x : c) {
    x = standard_normal(rng);
    nn += x * x;
  }
  for (auto& x : c) x /= std::sqrt(nn);
  return c;
}

struct RatioRow {
  LevelTuple tuple;
  MuS ms;
  double integral = 0.0;
  double ratio = 0.0;
};

struct RatioScanConfig {
  int p = 1;
  int N_exponent = 2;
  double nu = 1.0;
  int box = 8;
  int d = 1;
  int trials = 1;  ///< random components per tuple when d >= 2
  std::uint64_t seed = 1;
  int burn_in = 6;
  int jobs = 1;
};

struct RatioScanReport {
  RatioScanConfig cfg;
  std::vector<RatioRow> rows;  ///< tuples in lexicographic order, parity-zero tuples omitted in d = 1
  double max_ratio = 0.0;
  LevelTuple argmax;
  /// shell_max[b]: max ratio over tuples whose largest level is exactly b.
  std::vector<double> shell_max;
  /// Running max over the box [0, b]^{p+2}.
  std::vector<double> box_max;
  /// The box max no longer grows once b passes the burn-in.
  bool bounded_past_burn_in = true;
};

/// R = |integral| S^N / (mu^N (1 + sqrt(n_{i2}))^nu).
inline double bound_ratio(double integral, const MuS& ms, int N_exponent, double nu, int n_i2)
{
  return std::fabs(integral) * std::pow(ms.S / ms.mu, N_exponent) / std::pow(1.0 + std::sqrt(double(n_i2)), nu);
}

inline void for_each_tuple(int slots, int box, const std::function<void(const std::vector<int>&)>& fn)
{
  std::vector<int> cur(slots, 0);
  for (;;) {
    fn(cur);
    int i = slots - 1;
    while (i >= 0 && cur[i] == box) cur[i--] = 0;
    if (i < 0) return;
    ++cur[i];
  }
}

inline RatioScanReport bound_ratio_scan(const RatioScanConfig& cfg)
{
  if (cfg.p < 1) fail(ErrorKind::usage, "bound_ratio_scan: p must be >= 1");
  if (cfg.box < 0) fail(ErrorKind::usage, "bound_ratio_scan: box must be >= 0");
  RatioScanReport rep;
  rep.cfg = cfg;
  std::vector<std::vector<int>> tuples;
  for_each_tuple(cfg.p + 2, cfg.box, [&](const std::vector<int>& v) {
    if (cfg.d == 1 && std::accumulate(v.begin(), v.end(), 0) % 2 == 1) return;
    tuples.push_back(v);
  });
  rep.rows.resize(tuples.size());
  parallel_for(tuples.size(), cfg.jobs, [&](std::size_t i) {
    RatioRow row;
    row.tuple = LevelTuple{tuples[i], cfg.d};
    row.ms = mu_S(row.tuple);
    const int trials = cfg.d == 1 ? 1 : std::max(1, cfg.trials);
    std::vector<std::uint64_t> key(tuples[i].begin(), tuples[i].end());
    std::uint64_t h = 0;
    for (auto k : key) h = splitmix64(h ^ k);
    auto rng = make_rng(cfg.seed, {h, std::uint64_t(cfg.p)});
    double best = 0.0;
    for (int tr = 0; tr < trials; ++tr) {
      std::vector<SlotComponent> comps;
      for (int lv : tuples[i])
        comps.push_back(cfg.d == 1 ? unit_component(lv, 1) : random_unit_component(lv, cfg.d, rng));
      const double v = product_integral(row.tuple, comps);
      if (tr == 0 || std::fabs(v) > std::fabs(best)) best = v;
    }
    row.integral = best;
    row.ratio = bound_ratio(best, row.ms, cfg.N_exponent, cfg.nu, tuples[i][row.ms.i2]);
    rep.rows[i] = std::move(row);
  });

  rep.shell_max.assign(cfg.box + 1, 0.0);
  for (const auto& r : rep.rows) {
    const int b = r.tuple.max_level();
    rep.shell_max[b] = std::max(rep.shell_max[b], r.ratio);
    if (rep.argmax.levels.empty() || r.ratio > rep.max_ratio) {
      rep.max_ratio = r.ratio;
      rep.argmax = r.tuple;
    }
  }
  rep.box_max.assign(cfg.box + 1, 0.0);
  double run = 0.0;
  for (int b = 0; b <= cfg.box; ++b) {
    run = std::max(run, rep.shell_max[b]);
    rep.box_max[b] = run;
  }
  const int burn = std::min(cfg.burn_in, cfg.box);
  for (int b = burn + 1; b <= cfg.box; ++b)
    if (rep.box_max[b] > rep.box_max[burn]) rep.bounded_past_burn_in = false;
  return rep;
}

struct LinftyDecay {
  std::vector<double> sup;  ///< max_x |phi_n(x)| for n = 0..n_max
  double slope = 0.0;       ///< least-squares slope of log sup vs log lambda_n over [n_lo, n_hi]
  double intercept = 0.0;
  int n_lo = 0, n_hi = 0;
};

/// Ordinary least squares y = a + b x; returns (a, b).
inline std::pair<double, double> least_squares(const std::vector<double>& x, const std::vector<double>& y)
{
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double b = sxy / sxx;
  return {my - b * mx, b};
}

/// Sup norms of phi_0..phi_nmax on a dense grid over [0, sqrt(2 nmax + 1) + 6]
/// (|phi_n| is even), refined by golden-section search around each grid
/// maximum, then the log-log slope against lambda_n over [n_lo, n_hi].
inline LinftyDecay linfty_decay_check(int n_max, int n_lo = 64, int n_hi = -1, double h = 2e-3)
{
  if (n_hi < 0) n_hi = n_max;
  LinftyDecay r;
  r.n_lo = n_lo;
  r.n_hi = n_hi;
  r.sup.assign(n_max + 1, 0.0);
  std::vector<double> arg(n_max + 1, 0.0);
  const double xmax = std::sqrt(2.0 * n_max + 1) + 6.0;
  std::vector<double> tab(n_max + 1);
  for (double x = 0.0; x <= xmax; x += h) {
    hermite_table(n_max, x, tab);
    for (int n = 0; n <= n_max; ++n)
      if (std::fabs(tab[n]) > r.sup[n]) {
        r.sup[n] = std::fabs(tab[n]);
        arg[n] = x;
      }
  }
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int n = 0; n <= n_max; ++n) {
    double a = std::max(0.0, arg[n] - h), b = arg[n] + h;
    auto f = [n](double x) { return std::fabs(hermite_eval(n, x)); };
    double c = b - gr * (b - a), e = a + gr * (b - a);
    double fc = f(c), fe = f(e);
    for (int it = 0; it < 40; ++it) {
      if (fc > fe) {
        b = e;
        e = c;
        fe = fc;
        c = b - gr * (b - a);
        fc = f(c);
      } else {
        a = c;
        c = e;
        fc = fe;
        e = a + gr * (b - a);
        fe = f(e);
      }
    }
    r.sup[n] = std::max({r.sup[n], fc, fe});
  }
  std::vector<double> lx, ly;
  for (int n = n_lo; n <= std::min(n_hi, n_max); ++n) {
    lx.push_back(std::log(eig_lambda(n, 1)));
    ly.push_back(std::log(r.sup[n]));
  }
  if (lx.size() >= 2) std::tie(r.intercept, r.slope) = least_squares(lx, ly);
  return r;
}

}  // namespace kgnf
