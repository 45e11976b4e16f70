#pragma once

// Frequency combinations sum_j e_j sqrt(m^2 + lambda_{n_j}^2), their resonant
// sets, lattice scans of their minimum modulus, and Monte Carlo estimates of
// the set of masses for which they get small.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "kgnf/errors.hpp"
#include "kgnf/field.hpp"
#include "kgnf/parallel.hpp"
#include "kgnf/product_bounds.hpp"
#include "kgnf/random.hpp"

namespace kgnf {

/// Signs -1 on slots 0..ell and +1 on ell+1..p+1.
inline std::vector<int> omega_signs(int p, int ell)
{
  std::vector<int> e(p + 2, 1);
  for (int j = 0; j <= ell && j < p + 2; ++j) e[j] = -1;
  return e;
}

/// Signs -1 on 0..ell and on p+1, +1 on ell+1..p.
inline std::vector<int> omega_tilde_signs(int p, int ell)
{
  std::vector<int> e(p + 2, 1);
  for (int j = 0; j <= ell && j <= p; ++j) e[j] = -1;
  e[p + 1] = -1;
  return e;
}

/// Signed frequency sum; each sign group is summed in ascending order so that
/// equal level multisets cancel exactly.
inline double signed_frequency_sum(double m, const std::vector<int>& signs, const std::vector<int>& levels, int d)
{
  if (signs.size() != levels.size()) fail(ErrorKind::usage, "signed_frequency_sum: sign/level length mismatch");
  std::vector<double> plus, minus;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    const double w = lambda_m(m, levels[j], d);
    (signs[j] > 0 ? plus : minus).push_back(w);
  }
  std::sort(plus.begin(), plus.end());
  std::sort(minus.begin(), minus.end());
  double a = 0.0, b = 0.0;
  for (double w : plus) a += w;
  for (double w : minus) b += w;
  return a - b;
}

/// F_m^ell = sum_{j<=ell} omega_j - sum_{j>ell} omega_j.
inline double F_ml(double m, int ell, const LevelTuple& t)
{
  const int p = t.p();
  if (ell < 0 || ell > p + 1) fail(ErrorKind::usage, "F_ml: ell out of range");
  return -signed_frequency_sum(m, omega_signs(p, ell), t.levels, t.d);
}

/// sum_j e_j omega_j.
inline double F_tilde(double m, const std::vector<int>& signs, const LevelTuple& t)
{
  return signed_frequency_sum(m, signs, t.levels, t.d);
}

/// Equal-size sign groups carrying equal level multisets.
inline bool is_resonant_signs(const std::vector<int>& signs, const std::vector<int>& levels)
{
  std::vector<int> plus, minus;
  for (std::size_t j = 0; j < levels.size(); ++j) (signs[j] > 0 ? plus : minus).push_back(levels[j]);
  if (plus.size() != minus.size()) return false;
  std::sort(plus.begin(), plus.end());
  std::sort(minus.begin(), minus.end());
  return plus == minus;
}

inline bool is_resonant(int ell, const LevelTuple& t) { return is_resonant_signs(omega_signs(t.p(), ell), t.levels); }

/// d/dm of F_m^ell over all slots.
inline double dF_dm(double m, int ell, const LevelTuple& t)
{
  double acc = 0.0;
  for (int j = 0; j < int(t.levels.size()); ++j) {
    const double v = m / lambda_m(m, t.levels[j], t.d);
    acc += j <= ell ? v : -v;
  }
  return acc;
}

/// d/dm of G_m^ell = sum_{1<=j<=ell} omega_j - sum_{ell<j<=p} omega_j (inner slots only).
inline double dG_dm(double m, int ell, const LevelTuple& t)
{
  double acc = 0.0;
  for (int j = 1; j <= t.p(); ++j) {
    const double v = m / lambda_m(m, t.levels[j], t.d);
    acc += j <= ell ? v : -v;
  }
  return acc;
}

struct DivisorConfig {
  double rho = 0.1;
  int N0 = 4;
};

/// |F| (1 + sqrt n0 + sqrt n_{p+1})^{3+rho} (1 + |sqrt n0 - sqrt n_{p+1}| + sqrt n')^{2 N0}
inline double normalized_divisor(double absF, const LevelTuple& t, const DivisorConfig& c)
{
  const int p = t.p();
  const double a = std::sqrt(double(t[0])), b = std::sqrt(double(t[p + 1]));
  int np = 0;
  for (int j = 1; j <= p; ++j) np = std::max(np, t[j]);
  return absF * std::pow(1.0 + a + b, 3.0 + c.rho) * std::pow(1.0 + std::fabs(a - b) + std::sqrt(double(np)), 2.0 * c.N0);
}

/// |F| (1 + sqrt n0 + sqrt n_{p+1})^{3+rho} (1 + |sqrt n0 - sqrt n_{p+1}|)^{N0} (1 + sum_inner sqrt n_j)^{N0}
inline double normalized_divisor_split(double absF, const LevelTuple& t, const DivisorConfig& c)
{
  const int p = t.p();
  const double a = std::sqrt(double(t[0])), b = std::sqrt(double(t[p + 1]));
  double inner = 1.0;
  for (int j = 1; j <= p; ++j) inner += std::sqrt(double(t[j]));
  return absF * std::pow(1.0 + a + b, 3.0 + c.rho) * std::pow(1.0 + std::fabs(a - b), c.N0) * std::pow(inner, c.N0);
}

struct DivisorReport {
  double m = 0.0;
  int p = 0, ell = 0, box = 0, d = 1;
  DivisorConfig cfg;
  std::optional<double> min_abs;  ///< empty when every tuple in the box is resonant
  LevelTuple argmin;
  double normalized_c = std::numeric_limits<double>::infinity();        ///< joint-exponent form
  LevelTuple normalized_argmin;
  double normalized_c_split = std::numeric_limits<double>::infinity();  ///< split-exponent form
  std::size_t scanned = 0;
  std::size_t resonant_skipped = 0;
};

/// Brute force over every tuple with all levels <= box, resonant tuples skipped.
inline DivisorReport min_divisor_scan(double m, int p, int ell, int box, int d = 1, DivisorConfig cfg = {})
{
  if (p < 1) fail(ErrorKind::usage, "min_divisor_scan: p must be >= 1");
  if (box < 0) fail(ErrorKind::usage, "min_divisor_scan: box must be >= 0");
  DivisorReport r;
  r.m = m;
  r.p = p;
  r.ell = ell;
  r.box = box;
  r.d = d;
  r.cfg = cfg;
  const auto signs = omega_signs(p, ell);
  for_each_tuple(p + 2, box, [&](const std::vector<int>& v) {
    if (is_resonant_signs(signs, v)) {
      ++r.resonant_skipped;
      return;
    }
    ++r.scanned;
    LevelTuple t{v, d};
    const double f = std::fabs(signed_frequency_sum(m, signs, v, d));
    if (!r.min_abs || f < *r.min_abs) {
      r.min_abs = f;
      r.argmin = t;
    }
    const double c1 = normalized_divisor(f, t, cfg);
    if (c1 < r.normalized_c) {
      r.normalized_c = c1;
      r.normalized_argmin = t;
    }
    r.normalized_c_split = std::min(r.normalized_c_split, normalized_divisor_split(f, t, cfg));
  });
  return r;
}

struct BadMassConfig {
  std::vector<double> alphas{1e-2, 1e-3, 1e-4};
  int N0 = 4;
  double rho = 0.1;
  int box = 12;
  int p = 2;
  int ell = 1;
  int d = 1;
  double J_lo = 1.0, J_hi = 2.0;
  std::size_t samples = 10000;
  std::uint64_t seed = 1;
  int jobs = 1;
  double z = 1.96;  ///< normal quantile for the confidence half-width
};

struct BadMassRow {
  double alpha = 0.0;
  double estimate = 0.0;  ///< measure of the bad subset of J
  double ci_halfwidth = 0.0;
  std::size_t hits = 0;
  std::size_t samples = 0;
  int box = 0;
};

struct BadMassReport {
  BadMassConfig cfg;
  std::vector<BadMassRow> rows;
  double log_slope = std::numeric_limits<double>::quiet_NaN();  ///< d log(measure) / d log(alpha), finite rows only
};

/// Threshold weight (1 + l0 + l_{p+1})^{-3-rho} (1 + |l0 - l_{p+1}|)^{-N0} (1 + sum_inner l_j)^{-N0}.
inline double bad_set_weight(const LevelTuple& t, int N0, double rho)
{
  const int p = t.p();
  const double l0 = eig_lambda(t[0], t.d), l1 = eig_lambda(t[p + 1], t.d);
  double inner = 1.0;
  for (int j = 1; j <= p; ++j) inner += eig_lambda(t[j], t.d);
  return std::pow(1.0 + l0 + l1, -3.0 - rho) * std::pow(1.0 + std::fabs(l0 - l1), -double(N0)) *
         std::pow(inner, -double(N0));
}

/// Monte Carlo measure of {m in J : some non-resonant tuple in the box has
/// |F_m^ell| < alpha * weight}. Each sample computes min |F| / weight once, so
/// the estimate is monotone in alpha by construction.
inline BadMassReport bad_mass_measure(const BadMassConfig& cfg)
{
  if (cfg.samples < 1000) fail(ErrorKind::usage, "bad_mass_measure: samples must be >= 1000");
  if (!(cfg.J_hi > cfg.J_lo) || !(cfg.J_lo > 0.0)) fail(ErrorKind::usage, "bad_mass_measure: need 0 < J_lo < J_hi");
  const auto signs = omega_signs(cfg.p, cfg.ell);
  struct Entry {
    std::vector<int> levels;
    double inv_weight;
  };
  std::vector<Entry> tuples;
  for_each_tuple(cfg.p + 2, cfg.box, [&](const std::vector<int>& v) {
    if (is_resonant_signs(signs, v)) return;
    tuples.push_back({v, 1.0 / bad_set_weight(LevelTuple{v, cfg.d}, cfg.N0, cfg.rho)});
  });

  std::vector<double> worst(cfg.samples, std::numeric_limits<double>::infinity());
  const std::size_t chunk = 256;
  const std::size_t nchunks = (cfg.samples + chunk - 1) / chunk;
  parallel_for(nchunks, cfg.jobs, [&](std::size_t c) {
    std::vector<double> omega(cfg.box + 1);
    for (std::size_t i = c * chunk; i < std::min(cfg.samples, (c + 1) * chunk); ++i) {
      auto rng = make_rng(cfg.seed, {i});
      const double m = cfg.J_lo + (cfg.J_hi - cfg.J_lo) * uniform01(rng);
      for (int n = 0; n <= cfg.box; ++n) omega[n] = lambda_m(m, n, cfg.d);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& e : tuples) {
        double f = 0.0;
        for (std::size_t j = 0; j < e.levels.size(); ++j) f += signs[j] * omega[e.levels[j]];
        best = std::min(best, std::fabs(f) * e.inv_weight);
      }
      worst[i] = best;
    }
  });

  BadMassReport rep;
  rep.cfg = cfg;
  const double len = cfg.J_hi - cfg.J_lo;
  std::vector<double> lx, ly;
  for (double a : cfg.alphas) {
    BadMassRow row;
    row.alpha = a;
    row.samples = cfg.samples;
    row.box = cfg.box;
    for (double w : worst) row.hits += w < a;
    const double phat = double(row.hits) / double(cfg.samples);
    row.estimate = len * phat;
    row.ci_halfwidth = len * cfg.z * std::sqrt(phat * (1.0 - phat) / double(cfg.samples));
    rep.rows.push_back(row);
    if (row.hits > 0 && a > 0.0) {
      lx.push_back(std::log(a));
      ly.push_back(std::log(row.estimate));
    }
  }
  if (lx.size() >= 2) rep.log_slope = least_squares(lx, ly).second;
  return rep;
}

struct DivisorRequirement {
  int p = 2;
  int ell = 1;
};

struct MassCertificate {
  double m = 0.0;
  double threshold = 0.0;
  double normalized_c = 0.0;  ///< min over all required (p, ell) scans
  int box = 0;
  int d = 1;
  std::uint64_t seed = 0;
  int attempts = 0;
  double J_lo = 0.0, J_hi = 0.0;
  DivisorConfig cfg;
  std::vector<DivisorReport> scans;
};

struct PickMassConfig {
  double J_lo = 1.0, J_hi = 2.0;
  int box = 12;
  double threshold = 1e-6;
  std::uint64_t seed = 1;
  int max_attempts = 100;
  int d = 1;
  DivisorConfig divisor;
  std::vector<DivisorRequirement> requirements{{2, 0}, {2, 1}, {2, 2}};
};

/// Requirements covering every split ell = 0..p for p in [kappa, 2 kappa - 1].
inline std::vector<DivisorRequirement> requirements_for_kappa(int kappa)
{
  std::vector<DivisorRequirement> r;
  for (int p = kappa; p <= 2 * kappa - 1; ++p)
    for (int ell = 0; ell <= p; ++ell) r.push_back({p, ell});
  return r;
}

/// Rejection sampling of m uniform on J until every required scan has
/// normalized_c >= threshold.
inline MassCertificate pick_nonresonant_mass(const PickMassConfig& cfg)
{
  if (!(cfg.J_hi > cfg.J_lo) || !(cfg.J_lo > 0.0)) fail(ErrorKind::usage, "pick_nonresonant_mass: need 0 < J_lo < J_hi");
  for (int a = 0; a < cfg.max_attempts; ++a) {
    auto rng = make_rng(cfg.seed, {0x6d617373ULL, std::uint64_t(a)});
    const double m = cfg.J_lo + (cfg.J_hi - cfg.J_lo) * uniform01(rng);
    MassCertificate cert;
    cert.m = m;
    cert.threshold = cfg.threshold;
    cert.box = cfg.box;
    cert.d = cfg.d;
    cert.seed = cfg.seed;
    cert.attempts = a + 1;
    cert.J_lo = cfg.J_lo;
    cert.J_hi = cfg.J_hi;
    cert.cfg = cfg.divisor;
    cert.normalized_c = std::numeric_limits<double>::infinity();
    for (const auto& req : cfg.requirements) {
      cert.scans.push_back(min_divisor_scan(m, req.p, req.ell, cfg.box, cfg.d, cfg.divisor));
      cert.normalized_c = std::min(cert.normalized_c, cert.scans.back().normalized_c);
    }
    if (cert.normalized_c >= cfg.threshold) return cert;
  }
  fail(ErrorKind::threshold_too_high, "pick_nonresonant_mass: no admissible mass within the attempt cap");
}

}  // namespace kgnf
