#pragma once

// Multilinear tensors for the time derivative of the weighted energy, their
// frequency cutoffs, solutions of the homological equation and the resulting
// energy corrections. One space dimension: every projection is rank one, so a
// tensor is a sparse map from level tuples to the scalar matrix element
//   Pi_{n_0} M(phi_{n_1}, ..., phi_{n_{p+1}}) = K(n) phi_{n_0}.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "kgnf/errors.hpp"
#include "kgnf/field.hpp"
#include "kgnf/hermite.hpp"
#include "kgnf/parallel.hpp"
#include "kgnf/product_bounds.hpp"
#include "kgnf/small_divisors.hpp"

namespace kgnf {

enum class TensorClass { B, M, M_tilde, R, R_tilde, M_under, R_under };

inline const char* to_string(TensorClass c)
{
  switch (c) {
    case TensorClass::B: return "B";
    case TensorClass::M: return "M";
    case TensorClass::M_tilde: return "Mt";
    case TensorClass::R: return "R";
    case TensorClass::R_tilde: return "Rt";
    case TensorClass::M_under: return "uM";
    case TensorClass::R_under: return "uR";
  }
  return "?";
}

struct CutoffConfig {
  /// Support radius of the bump chi.
  double r = 0.45;
  double delta = 0.25;
  double theta = 1.0 / 3.0;
  double epsilon = 0.1;

  void validate() const
  {
    if (!(r > 0.0 && r < 1.0)) fail(ErrorKind::usage, "cutoff: r must lie in (0,1)");
    if (!(delta > 0.0 && delta < 1.0)) fail(ErrorKind::usage, "cutoff: delta must lie in (0,1)");
    if (!(theta > 0.0 && theta < 1.0)) fail(ErrorKind::usage, "cutoff: theta must lie in (0,1)");
    if (!(epsilon > 0.0)) fail(ErrorKind::usage, "cutoff: epsilon must be > 0");
  }
};

struct TensorMeta {
  double m = 1.0;
  int kappa = 1;
  double s = 8.0;
  CutoffConfig cut;
};

/// Sparse tensor with keys of fixed length, sorted lexicographically.
struct NormalFormTensor {
  int p = 1;
  int ell = 0;
  TensorClass tag = TensorClass::M;
  /// Pairing pattern: slots 0..ell conjugated, plus slot p+1 when set.
  bool tilde = false;
  TensorMeta meta;
  int arity = 3;
  std::vector<int> keys;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
  std::span<const int> key(std::size_t i) const { return {keys.data() + i * arity, std::size_t(arity)}; }
  double value(std::size_t i) const { return values[i]; }
  LevelTuple tuple(std::size_t i) const
  {
    auto k = key(i);
    return LevelTuple{std::vector<int>(k.begin(), k.end())};
  }

  void push(std::span<const int> k, double v)
  {
    keys.insert(keys.end(), k.begin(), k.end());
    values.push_back(v);
  }

  /// Entry at a key, zero when absent.
  double at(std::span<const int> k) const
  {
    std::size_t lo = 0, hi = size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      auto km = key(mid);
      if (std::lexicographical_compare(km.begin(), km.end(), k.begin(), k.end()))
        lo = mid + 1;
      else
        hi = mid;
    }
    if (lo < size()) {
      auto kl = key(lo);
      if (std::equal(kl.begin(), kl.end(), k.begin(), k.end())) return values[lo];
    }
    return 0.0;
  }

  NormalFormTensor like(TensorClass t) const
  {
    NormalFormTensor o;
    o.p = p;
    o.ell = ell;
    o.tag = t;
    o.tilde = tilde;
    o.meta = meta;
    o.arity = arity;
    return o;
  }
};

// ---------------------------------------------------------------------------
// Counting indicator

/// Writes v^{p+1} as A_p(v) v: the region of (n_1..n_{p+1}) is split by which
/// slot holds the maximum (slot p+1 on ties with it, otherwise the lowest
/// index) and each piece relabeled so the maximum sits in slot p+1. The value
/// is the index of the first inner slot tying with n_{p+1}, or p+1 with no tie;
/// zero when an inner level exceeds n_{p+1}.
inline double B_count(std::span<const int> n)
{
  const int p = int(n.size()) - 1;
  const int last = n[p];
  int first_tie = 0;
  for (int j = 0; j < p; ++j) {
    if (n[j] > last) return 0.0;
    if (n[j] == last && first_tie == 0) first_tie = j + 1;
  }
  return first_tie == 0 ? double(p + 1) : double(first_tie);
}

/// B averaged over permutations of the inner slots: (p+1)/(k+1) with k the
/// number of inner ties with n_{p+1}.
inline double B_symmetrized(std::span<const int> n)
{
  const int p = int(n.size()) - 1;
  const int last = n[p];
  int ties = 0;
  for (int j = 0; j < p; ++j) {
    if (n[j] > last) return 0.0;
    ties += n[j] == last;
  }
  return double(p + 1) / double(ties + 1);
}

/// All (n_1..n_{p+1}) in [0,N]^{p+1} with nonzero B.
inline NormalFormTensor build_B(int p, int N)
{
  if (p < 1 || N < 0) fail(ErrorKind::usage, "build_B: need p >= 1 and N >= 0");
  NormalFormTensor t;
  t.p = p;
  t.tag = TensorClass::B;
  t.arity = p + 1;
  for_each_tuple(p + 1, N, [&](const std::vector<int>& v) {
    const double b = B_count(v);
    if (b != 0.0) t.push(v, b);
  });
  return t;
}

// ---------------------------------------------------------------------------
// Cutoffs

/// exp(1 - 1/(1 - (t/r)^2)) on |t| < r, zero outside; chi(0) = 1.
inline double chi_profile(double t, double r)
{
  const double u = t / r;
  if (std::fabs(u) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

/// |lambda_a^2 - lambda_b^2| / (lambda_a^2 + lambda_b^2).
inline double chi_argument(int a, int b, int d = 1)
{
  const double la = double(eig_lambda_sq(a, d)), lb = double(eig_lambda_sq(b, d));
  return std::fabs(la - lb) / (la + lb);
}

struct BParts {
  double b1 = 0.0, b2 = 0.0, b3 = 0.0;
};

/// Splits a value B of the indicator at the tuple n = (n_0..n_{p+1}) into the
/// near-diagonal part, the off-diagonal part (both with small inner levels) and
/// the part with a large inner level. b1 + b2 + b3 == B.
inline BParts split_cutoffs(double B, const LevelTuple& n, const CutoffConfig& cfg)
{
  const int p = n.p();
  int np = 0;
  for (int j = 1; j <= p; ++j) np = std::max(np, n[j]);
  BParts out;
  if (double(np) < cfg.delta * double(n[p + 1])) {
    out.b1 = B * chi_profile(chi_argument(n[0], n[p + 1], n.d), cfg.r);
    out.b2 = B - out.b1;
  } else {
    out.b3 = B;
  }
  return out;
}

/// Inner maximum n' = max(n_1..n_p).
inline int inner_max(std::span<const int> n)
{
  int np = 0;
  for (std::size_t j = 1; j + 1 < n.size(); ++j) np = std::max(np, n[j]);
  return np;
}

/// Binomial prefactor C(p, ell) / 2^p.
inline double pi_prefactor(int p, int ell) { return double(binomial(p, ell)) / std::ldexp(1.0, p); }

/// Coefficients pi_2..pi_6 at a tuple. The indicator is symmetrized over the
/// inner slots (it only differs from B_count on ties, where only pi_5 and pi_6
/// can see it).
inline double pi_coefficient(int kind, const LevelTuple& n, double m, double s, int ell, const CutoffConfig& cfg)
{
  const int p = n.p();
  if (ell < 0 || ell > p) fail(ErrorKind::usage, "pi_coefficient: ell out of range");
  std::span<const int> inner(n.levels.data() + 1, std::size_t(p + 1));
  const double B = B_symmetrized(inner);
  const BParts parts = split_cutoffs(B, n, cfg);
  const double c = pi_prefactor(p, ell);
  const double w0 = lambda_m(m, n[0], n.d), w1 = lambda_m(m, n[p + 1], n.d);
  switch (kind) {
    case 2: return c * parts.b1 * (std::pow(w0, 2.0 * s) - std::pow(w1, 2.0 * s));
    case 3: {
      LevelTuple sw = n;
      std::swap(sw.levels[0], sw.levels[p + 1]);
      std::span<const int> inner_sw(sw.levels.data() + 1, std::size_t(p + 1));
      const double b1_sw = split_cutoffs(B_symmetrized(inner_sw), sw, cfg).b1;
      return c * (parts.b1 / w1 - b1_sw / w0);
    }
    case 4: return c * parts.b2;
    case 5: return c * parts.b3;
    case 6: return -0.5 * c * B;
  }
  fail(ErrorKind::usage, "pi_coefficient: kind must be 2..6");
}

// ---------------------------------------------------------------------------
// Assembly

/// F(v) = sum_p c_p v^{p+1}, p in [kappa, 2 kappa - 1].
struct Nonlinearity {
  int kappa = 1;
  /// coeff[p - kappa].
  std::vector<double> coeff{1.0};

  static Nonlinearity power(int kappa, double c = 1.0)
  {
    Nonlinearity f;
    f.kappa = kappa;
    f.coeff.assign(std::size_t(kappa), 0.0);
    f.coeff[0] = c;
    return f;
  }
  bool is_zero() const
  {
    return std::all_of(coeff.begin(), coeff.end(), [](double c) { return c == 0.0; });
  }
};

/// The four tensors entering the derivative of the energy for one (p, ell).
struct TensorFamily {
  int p = 1;
  int ell = 0;
  NormalFormTensor M, Mt, R, Rt;
};

namespace detail {

// Quadrature for integrals of p+2 Hermite functions up to level N.
struct ProductTable {
  std::vector<double> sw;
  std::vector<double> phi;  // phi[q * (N+1) + n]
  int N = 0;
  std::size_t Q = 0;

  ProductTable(int factors, int N_) : N(N_)
  {
    const auto g = gauss_hermite(quadrature_order_for_degree(factors * N), 0.5 * factors);
    Q = g.size();
    sw = g.scaled_weights;
    phi.resize(Q * std::size_t(N + 1));
    for (std::size_t q = 0; q < Q; ++q)
      hermite_table(N, g.nodes[q], std::span<double>(phi.data() + q * (N + 1), std::size_t(N + 1)));
  }
  double at(std::size_t q, int n) const { return phi[q * std::size_t(N + 1) + std::size_t(n)]; }
};

struct FamilyBuffers {
  std::vector<NormalFormTensor> M, Mt, R, Rt;
};

}  // namespace detail

/// Builds M = M^{p,1} + M^{p,2}, Mt, R = R^{p,1} + R^{p,2}, Rt for every p with
/// a nonzero coefficient and every 0 <= ell <= p, over the box [0,N]^{p+2}.
/// Resonant tuples of the relevant sign pattern are left out.
inline std::vector<TensorFamily> assemble_tensors(const Nonlinearity& F, double s, double m, const CutoffConfig& cfg,
                                                  int N, int jobs = 1)
{
  cfg.validate();
  if (F.kappa < 1) fail(ErrorKind::usage, "assemble_tensors: kappa must be >= 1");
  if (int(F.coeff.size()) > F.kappa) fail(ErrorKind::usage, "assemble_tensors: p must lie in [kappa, 2 kappa - 1]");
  if (!(m > 0.0)) fail(ErrorKind::usage, "assemble_tensors: m must be > 0");
  if (N < 0) fail(ErrorKind::usage, "assemble_tensors: N must be >= 0");

  std::vector<TensorFamily> out;
  for (int pi = 0; pi < int(F.coeff.size()); ++pi) {
    const double cp = F.coeff[pi];
    if (cp == 0.0) continue;
    const int p = F.kappa + pi;
    const int A = p + 2;
    const detail::ProductTable tab(A, N);
    std::vector<double> w(std::size_t(N + 1)), w2s(std::size_t(N + 1));
    for (int n = 0; n <= N; ++n) {
      w[n] = lambda_m(m, n, 1);
      w2s[n] = std::pow(w[n], 2.0 * s);
    }

    TensorMeta meta{m, F.kappa, s, cfg};
    auto blank = [&](TensorClass c, int ell, bool tilde) {
      NormalFormTensor t;
      t.p = p;
      t.ell = ell;
      t.tag = c;
      t.tilde = tilde;
      t.meta = meta;
      t.arity = A;
      return t;
    };

    // One chunk per n_0, concatenated in order so keys stay sorted.
    std::vector<detail::FamilyBuffers> chunks(std::size_t(N + 1));
    parallel_for(std::size_t(N + 1), jobs, [&](std::size_t n0s) {
      const int n0 = int(n0s);
      auto& buf = chunks[n0s];
      for (int ell = 0; ell <= p; ++ell) {
        buf.M.push_back(blank(TensorClass::M, ell, false));
        buf.Mt.push_back(blank(TensorClass::M_tilde, ell, true));
        buf.R.push_back(blank(TensorClass::R, ell, false));
        buf.Rt.push_back(blank(TensorClass::R_tilde, ell, true));
      }
      std::vector<int> n(std::size_t(A), 0);
      n[0] = n0;
      std::vector<std::vector<double>> partial(std::size_t(A), std::vector<double>(tab.Q));
      for (std::size_t q = 0; q < tab.Q; ++q) partial[0][q] = tab.sw[q] * tab.at(q, n0);

      std::vector<std::vector<int>> sg(std::size_t(p + 1)), sgt(std::size_t(p + 1));
      for (int ell = 0; ell <= p; ++ell) {
        sg[ell] = omega_signs(p, ell);
        sgt[ell] = omega_tilde_signs(p, ell);
      }

      // Depth-first over n_1..n_{p+1} in lexicographic order; inner levels
      // never exceed n_{p+1} on the support of B.
      auto visit = [&](auto&& self, int slot) -> void {
        if (slot == A) {
          int sum = 0;
          for (int v : n) sum += v;
          if (sum % 2) return;
          const int last = n[A - 1];
          if (inner_max(n) > last) return;
          double I = 0.0;
          for (std::size_t q = 0; q < tab.Q; ++q) I += partial[A - 1][q];
          if (I == 0.0) return;

          LevelTuple t{n};
          std::span<const int> inner(n.data() + 1, std::size_t(p + 1));
          const double B = B_symmetrized(inner);
          const BParts parts = split_cutoffs(B, t, cfg);
          LevelTuple sw = t;
          std::swap(sw.levels[0], sw.levels[A - 1]);
          const double b1_sw =
              split_cutoffs(B_symmetrized(std::span<const int>(sw.levels.data() + 1, std::size_t(p + 1))), sw, cfg).b1;
          const double chi = chi_profile(chi_argument(n0, last), cfg.r);

          double winv_inner = 1.0;
          for (int j = 1; j <= p; ++j) winv_inner /= w[n[j]];
          const double W = winv_inner / w[last];

          // Pieces independent of ell, before the binomial prefactor.
          const double m1 = parts.b1 * (w2s[n0] - w2s[last]) * W;
          const double m2 = (parts.b1 / w[last] - b1_sw / w[n0]) * w2s[last] * winv_inner;
          const double kM = -0.25 * cp * (m1 + m2) * I;
          const double kR = -0.5 * cp * (parts.b2 + parts.b3) * w2s[n0] * W * I;
          const double k6 = -0.5 * cp * B * w2s[n0] * W * I;
          const double kMt = chi * k6;
          const double kRt = (1.0 - chi) * k6;

          for (int ell = 0; ell <= p; ++ell) {
            const double c = pi_prefactor(p, ell);
            if (!is_resonant_signs(sg[ell], n)) {
              if (kM != 0.0) buf.M[ell].push(n, c * kM);
              if (kR != 0.0) buf.R[ell].push(n, c * kR);
            }
            if (!is_resonant_signs(sgt[ell], n)) {
              if (kMt != 0.0) buf.Mt[ell].push(n, c * kMt);
              if (kRt != 0.0) buf.Rt[ell].push(n, c * kRt);
            }
          }
          return;
        }
        int lo = 0, step = 1;
        if (slot == A - 1) {
          // Support of B: n_{p+1} >= n'; parity: even level sum.
          int sum = 0;
          for (int j = 0; j < A - 1; ++j) sum += n[j];
          lo = inner_max(std::span<const int>(n.data(), std::size_t(A)));
          if ((sum + lo) % 2) ++lo;
          step = 2;
        }
        for (int v = lo; v <= N; v += step) {
          n[slot] = v;
          for (std::size_t q = 0; q < tab.Q; ++q) partial[slot][q] = partial[slot - 1][q] * tab.at(q, v);
          self(self, slot + 1);
        }
      };
      visit(visit, 1);
    });

    for (int ell = 0; ell <= p; ++ell) {
      TensorFamily fam;
      fam.p = p;
      fam.ell = ell;
      fam.M = blank(TensorClass::M, ell, false);
      fam.Mt = blank(TensorClass::M_tilde, ell, true);
      fam.R = blank(TensorClass::R, ell, false);
      fam.Rt = blank(TensorClass::R_tilde, ell, true);
      for (auto& ch : chunks) {
        auto app = [](NormalFormTensor& dst, const NormalFormTensor& src) {
          dst.keys.insert(dst.keys.end(), src.keys.begin(), src.keys.end());
          dst.values.insert(dst.values.end(), src.values.begin(), src.values.end());
        };
        app(fam.M, ch.M[ell]);
        app(fam.Mt, ch.Mt[ell]);
        app(fam.R, ch.R[ell]);
        app(fam.Rt, ch.Rt[ell]);
      }
      out.push_back(std::move(fam));
    }
  }
  return out;
}

/// Entrywise split by sqrt(n_0) + sqrt(n_{p+1}) < eps^{-theta kappa}.
inline std::pair<NormalFormTensor, NormalFormTensor> cutoff_split_M(const NormalFormTensor& M, const CutoffConfig& cfg,
                                                                    int kappa)
{
  const double cut = std::pow(cfg.epsilon, -cfg.theta * kappa);
  auto lo = M.like(M.tag), hi = M.like(M.tag);
  lo.meta.cut = cfg;
  hi.meta.cut = cfg;
  for (std::size_t i = 0; i < M.size(); ++i) {
    auto k = M.key(i);
    const double f = std::sqrt(double(k[0])) + std::sqrt(double(k[M.arity - 1]));
    (f < cut ? lo : hi).push(k, M.value(i));
  }
  return {std::move(lo), std::move(hi)};
}

enum class HomologicalVariant { minus, plus };

inline std::vector<int> pattern_signs(const NormalFormTensor& t)
{
  return t.tilde ? omega_tilde_signs(t.p, t.ell) : omega_signs(t.p, t.ell);
}

/// Solves L^-(X) = T (entry -T/F_m^ell) or L^+(X) = T (entry T/F~ with the
/// tilde signs).
inline NormalFormTensor homological_divide(const NormalFormTensor& T, double m, HomologicalVariant variant,
                                           double floor = 1e-12)
{
  if ((variant == HomologicalVariant::plus) != T.tilde)
    fail(ErrorKind::usage, "homological_divide: variant does not match the tensor's sign pattern");
  const auto signs = pattern_signs(T);
  auto out = T.like(T.tag == TensorClass::M || T.tag == TensorClass::M_tilde ? TensorClass::M_under
                                                                              : TensorClass::R_under);
  out.meta.m = m;
  out.keys = T.keys;
  out.values.resize(T.size());
  std::vector<int> lv(std::size_t(T.arity));
  for (std::size_t i = 0; i < T.size(); ++i) {
    auto k = T.key(i);
    lv.assign(k.begin(), k.end());
    if (is_resonant_signs(signs, lv))
      fail(ErrorKind::usage, "homological_divide: entry on a resonant tuple " + LevelTuple{lv}.str());
    // L^- multiplies entries by sum_j e_j omega_j = -F_m^ell; L^+ by F~.
    const double f = signed_frequency_sum(m, signs, lv, 1);
    if (std::fabs(f) < floor)
      fail(ErrorKind::divisor_below_floor,
           "homological_divide: |divisor| below floor at " + LevelTuple{lv}.str() + "; pick another mass");
    out.values[i] = T.value(i) / f;
  }
  return out;
}

/// L^-_ell or L^+_ell applied entrywise: -Lambda on the output, -Lambda on
/// conjugated argument slots, +Lambda on the others.
inline NormalFormTensor apply_L(const NormalFormTensor& X, double m)
{
  const auto signs = pattern_signs(X);
  auto out = X.like(X.tag);
  out.keys = X.keys;
  out.values.resize(X.size());
  std::vector<int> lv(std::size_t(X.arity));
  for (std::size_t i = 0; i < X.size(); ++i) {
    auto k = X.key(i);
    lv.assign(k.begin(), k.end());
    out.values[i] = X.value(i) * signed_frequency_sum(m, signs, lv, 1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

inline void require_1d(const SpectralField& u, const char* what)
{
  if (u.dim() != 1) fail(ErrorKind::usage, std::string(what) + ": the normal-form path is one-dimensional");
}

/// M(u_1, ..., u_{p+1}) as a field truncated at N_out.
inline SpectralField evaluate_form(const NormalFormTensor& T, const std::vector<SpectralField>& args, int N_out)
{
  if (int(args.size()) != T.arity - 1) fail(ErrorKind::usage, "evaluate_form: wrong number of arguments");
  for (const auto& a : args) require_1d(a, "evaluate_form");
  SpectralField out(1, N_out);
  for (std::size_t i = 0; i < T.size(); ++i) {
    auto k = T.key(i);
    if (k[0] > N_out) continue;
    cplx prod = T.value(i);
    bool zero = false;
    for (int j = 1; j < T.arity; ++j) {
      const auto& a = args[j - 1];
      if (k[j] > a.truncation()) {
        zero = true;
        break;
      }
      prod *= a[std::size_t(k[j])];
    }
    if (!zero) out[std::size_t(k[0])] += prod;
  }
  return out;
}

/// <T(ubar..ubar, u..u[, ubar]), u> following the tensor's conjugation pattern.
inline cplx pairing(const NormalFormTensor& T, const SpectralField& u)
{
  require_1d(u, "pairing");
  const int Nu = u.truncation();
  const auto& c = u.coeffs();
  cplx acc = 0.0;
  for (std::size_t i = 0; i < T.size(); ++i) {
    auto k = T.key(i);
    if (k[0] > Nu) continue;
    cplx prod = std::conj(c[k[0]]);
    bool zero = false;
    for (int j = 1; j < T.arity; ++j) {
      if (k[j] > Nu) {
        zero = true;
        break;
      }
      const bool bar = j <= T.ell || (T.tilde && j == T.arity - 1);
      prod *= bar ? std::conj(c[k[j]]) : c[k[j]];
    }
    if (!zero) acc += T.value(i) * prod;
  }
  return acc;
}

/// Theta_s(u) = (1/2) sum_n (m^2 + lambda_n^2)^s ||Pi_n u||^2.
inline double theta_energy(const SpectralField& u, double m, double s)
{
  double acc = 0.0;
  for (int n = 0; n <= u.truncation(); ++n) acc += std::pow(lambda_m(m, n, u.dim()), 2.0 * s) * u.level_norm_sq(n);
  return 0.5 * acc;
}

/// Everything needed for the modified energy at one (kappa, s, m, cutoff, N).
struct NormalForm {
  TensorMeta meta;
  int N = 0;
  Nonlinearity F;
  std::vector<TensorFamily> families;
  /// Per family, in the same order.
  std::vector<NormalFormTensor> M_eps, V_eps, M_under, Mt_under, R_under, Rt_under;

  std::size_t entry_count() const
  {
    std::size_t c = 0;
    for (const auto& f : families) c += f.M.size() + f.Mt.size() + f.R.size() + f.Rt.size();
    return c;
  }
};

/// Splits and divides already assembled families; only the cutoff split
/// depends on epsilon.
inline NormalForm build_normal_form(const Nonlinearity& F, double s, double m, const CutoffConfig& cfg, int N,
                                    std::vector<TensorFamily> families, double floor = 1e-12)
{
  cfg.validate();
  NormalForm nf;
  nf.meta = TensorMeta{m, F.kappa, s, cfg};
  nf.N = N;
  nf.F = F;
  if (F.is_zero()) return nf;
  nf.families = std::move(families);
  for (const auto& fam : nf.families) {
    auto [lo, hi] = cutoff_split_M(fam.M, cfg, F.kappa);
    nf.M_under.push_back(homological_divide(lo, m, HomologicalVariant::minus, floor));
    nf.M_eps.push_back(std::move(lo));
    nf.V_eps.push_back(std::move(hi));
    nf.Mt_under.push_back(homological_divide(fam.Mt, m, HomologicalVariant::plus, floor));
    nf.R_under.push_back(homological_divide(fam.R, m, HomologicalVariant::minus, floor));
    nf.Rt_under.push_back(homological_divide(fam.Rt, m, HomologicalVariant::plus, floor));
  }
  return nf;
}

inline NormalForm build_normal_form(const Nonlinearity& F, double s, double m, const CutoffConfig& cfg, int N,
                                    int jobs = 1, double floor = 1e-12)
{
  if (F.is_zero()) return build_normal_form(F, s, m, cfg, N, std::vector<TensorFamily>{}, floor);
  return build_normal_form(F, s, m, cfg, N, assemble_tensors(F, s, m, cfg, N, jobs), floor);
}

/// Theta^1..Theta^4: real parts of the pairings of the underlined tensors.
inline std::array<double, 4> energy_corrections(const SpectralField& u, const NormalForm& nf)
{
  std::array<double, 4> th{0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < nf.families.size(); ++i) {
    th[0] += pairing(nf.M_under[i], u).real();
    th[1] += pairing(nf.Mt_under[i], u).real();
    th[2] += pairing(nf.R_under[i], u).real();
    th[3] += pairing(nf.Rt_under[i], u).real();
  }
  return th;
}

inline double modified_energy(const SpectralField& u, const NormalForm& nf)
{
  const auto th = energy_corrections(u, nf);
  return theta_energy(u, nf.meta.m, nf.meta.s) - th[0] - th[1] - th[2] - th[3];
}

/// d/dt Theta_s along the truncated flow, as the sum of Re i <T(..), u> over
/// all four tensor classes.
inline double energy_rate_contracted(const SpectralField& u, const NormalForm& nf)
{
  double acc = 0.0;
  const cplx I(0.0, 1.0);
  for (const auto& fam : nf.families) {
    acc += (I * pairing(fam.M, u)).real();
    acc += (I * pairing(fam.Mt, u)).real();
    acc += (I * pairing(fam.R, u)).real();
    acc += (I * pairing(fam.Rt, u)).real();
  }
  return acc;
}

/// Part of the rate left after the corrections: the high-frequency remainder.
inline double remainder_rate_contracted(const SpectralField& u, const NormalForm& nf)
{
  double acc = 0.0;
  const cplx I(0.0, 1.0);
  for (const auto& v : nf.V_eps) acc += (I * pairing(v, u)).real();
  return acc;
}

// ---------------------------------------------------------------------------
// Diagnostics and dumps

/// max over entries of |K| (S/mu)^Nexp / ((1 + sqrt n_0 + sqrt n_{p+1})^tau (1 + sqrt n')^nu).
inline double decay_class_diagnostic(const NormalFormTensor& T, double tau, double nu, int Nexp)
{
  double worst = 0.0;
  for (std::size_t i = 0; i < T.size(); ++i) {
    auto t = T.tuple(i);
    const auto ms = mu_S(t);
    const double np = double(inner_max(t.levels));
    const double den = std::pow(1.0 + std::sqrt(double(t[0])) + std::sqrt(double(t[T.arity - 1])), tau) *
                       std::pow(1.0 + std::sqrt(np), nu);
    worst = std::max(worst, std::fabs(T.value(i)) * std::pow(ms.S / ms.mu, Nexp) / den);
  }
  return worst;
}

/// Rows "tag,p,ell,tuple,coefficient" sorted by (tag, p, ell, tuple).
inline void write_tensor_csv(std::ostream& os, std::vector<const NormalFormTensor*> ts)
{
  std::stable_sort(ts.begin(), ts.end(), [](const NormalFormTensor* a, const NormalFormTensor* b) {
    return std::tuple(std::string(to_string(a->tag)), a->p, a->ell) <
           std::tuple(std::string(to_string(b->tag)), b->p, b->ell);
  });
  os << "tag,p,ell,tuple,coefficient\n";
  char buf[64];
  for (const auto* t : ts)
    for (std::size_t i = 0; i < t->size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", t->value(i));
      os << to_string(t->tag) << ',' << t->p << ',' << t->ell << ',' << t->tuple(i).str() << ',' << buf << '\n';
    }
}

}  // namespace kgnf
