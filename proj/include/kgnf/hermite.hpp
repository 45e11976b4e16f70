#pragma once

// Hermite functions: the eigenbasis of the harmonic oscillator P^2 = -Delta + |x|^2.
//
// phi_n(x) = (2^n n! sqrt(pi))^{-1/2} H_n(x) exp(-x^2/2) is L^2-normalized and
// P^2 phi_n = (2n+1) phi_n in one dimension. Tensor products phi_alpha with
// |alpha| = n span the level-n eigenspace in d dimensions, eigenvalue 2n+d.

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "kgnf/errors.hpp"

namespace kgnf {

struct LevelIndex {
  int n = 0;  ///< eigenvalue level
  int d = 1;  ///< space dimension
};

/// lambda_n = sqrt(2n + d).
inline double eig_lambda(LevelIndex level)
{
  return std::sqrt(2.0 * level.n + level.d);
}

inline double eig_lambda(int n, int d) { return eig_lambda(LevelIndex{n, d}); }

/// Squared eigenvalue, exact in integers.
inline std::int64_t eig_lambda_sq(int n, int d) { return 2 * std::int64_t(n) + d; }

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k)
{
  if (k > n) return 0;
  if (k > n - k) k = n - k;
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// Dimension of the range of Pi_n: C(n+d-1, d-1).
inline std::uint64_t level_multiplicity(LevelIndex level)
{
  return binomial(std::uint64_t(level.n) + level.d - 1, std::uint64_t(level.d) - 1);
}

/// Per-axis Hermite degrees of one tensor basis function.
struct MultiIndex {
  std::vector<int> alpha;

  int level() const
  {
    int s = 0;
    for (int a : alpha) s += a;
    return s;
  }
  int dim() const { return static_cast<int>(alpha.size()); }
  bool operator==(const MultiIndex&) const = default;
};

namespace detail {
inline void enumerate_rec(int remaining, int axis, std::vector<int>& cur, std::vector<MultiIndex>& out)
{
  const int d = static_cast<int>(cur.size());
  if (axis == d - 1) {
    cur[axis] = remaining;
    out.push_back(MultiIndex{cur});
    return;
  }
  for (int a = remaining; a >= 0; --a) {
    cur[axis] = a;
    enumerate_rec(remaining - a, axis + 1, cur, out);
  }
}
}  // namespace detail

/// All multi-indices of level n in graded-lexicographic order (first axis
/// degree descending).
inline std::vector<MultiIndex> enumerate_level(LevelIndex level)
{
  std::vector<MultiIndex> out;
  out.reserve(level_multiplicity(level));
  std::vector<int> cur(level.d, 0);
  detail::enumerate_rec(level.n, 0, cur, out);
  return out;
}

/// Sign and natural log of |phi_n(x)|; representable for any n and x.
struct ScaledValue {
  int sign = 0;
  double log_abs = -std::numeric_limits<double>::infinity();

  double value() const { return sign == 0 ? 0.0 : sign * std::exp(log_abs); }
};

namespace detail {

// Three-term recurrence on the normalized functions. The Gaussian factor is
// carried as a running log-scale so neither the start value exp(-x^2/2) nor the
// polynomial growth in the classically forbidden region under/overflows.
class HermiteRecurrence {
 public:
  explicit HermiteRecurrence(double x)
      : x_(x)
      , log_scale_(-0.5 * x * x - 0.25 * std::log(std::numbers::pi))
  {
  }

  int degree() const { return n_; }

  ScaledValue current() const { return make(cur_); }
  ScaledValue previous() const { return make(prev_); }
  double mantissa() const { return cur_; }
  double previous_mantissa() const { return prev_; }

  void advance()
  {
    double next;
    if (n_ == 0) {
      next = std::numbers::sqrt2 * x_ * cur_;
    } else {
      const double np1 = n_ + 1.0;
      next = std::sqrt(2.0 / np1) * x_ * cur_ - std::sqrt(n_ / np1) * prev_;
    }
    prev_ = cur_;
    cur_ = next;
    ++n_;
    const double mag = std::fabs(cur_);
    if (mag > kRescale) {
      prev_ /= kRescale;
      cur_ /= kRescale;
      log_scale_ += kLogRescale;
    } else if (mag != 0.0 && mag < 1.0 / kRescale && std::fabs(prev_) < 1.0 / kRescale) {
      prev_ *= kRescale;
      cur_ *= kRescale;
      log_scale_ -= kLogRescale;
    }
  }

 private:
  static constexpr double kRescale = 0x1p200;
  static constexpr double kLogRescale = 200.0 * std::numbers::ln2;

  ScaledValue make(double mant) const
  {
    if (mant == 0.0 || std::isnan(mant) || std::isnan(x_)) {
      if (std::isnan(mant) || std::isnan(x_)) return {1, std::numeric_limits<double>::quiet_NaN()};
      return {};
    }
    return {mant > 0 ? 1 : -1, log_scale_ + std::log(std::fabs(mant))};
  }

  double x_;
  double log_scale_;
  double prev_ = 0.0;
  double cur_ = 1.0;
  int n_ = 0;
};

}  // namespace detail

inline ScaledValue hermite_eval_scaled(int n, double x)
{
  detail::HermiteRecurrence rec(x);
  while (rec.degree() < n) rec.advance();
  return rec.current();
}

/// L^2-normalized Hermite function phi_n(x). Values below the smallest
/// subnormal double round to zero; use hermite_eval_scaled for those.
inline double hermite_eval(int n, double x)
{
  if (std::isnan(x)) return x;
  const ScaledValue v = hermite_eval_scaled(n, x);
  if (std::isnan(v.log_abs)) return std::numeric_limits<double>::quiet_NaN();
  return v.value();
}

/// phi_0(x), ..., phi_nmax(x) written to out (size nmax+1).
inline void hermite_table(int nmax, double x, std::span<double> out)
{
  detail::HermiteRecurrence rec(x);
  out[0] = rec.current().value();
  for (int n = 1; n <= nmax; ++n) {
    rec.advance();
    out[n] = rec.current().value();
  }
}

inline std::vector<double> hermite_table(int nmax, double x)
{
  std::vector<double> out(nmax + 1);
  hermite_table(nmax, x, out);
  return out;
}

/// Gauss rule for the weight exp(-sigma x^2).
struct QuadratureGrid {
  std::vector<double> nodes;
  std::vector<double> weights;
  /// weights[q] * exp(sigma nodes[q]^2): integrates f directly when f already
  /// contains the Gaussian factor (products of Hermite functions).
  std::vector<double> scaled_weights;
  int order = 0;
  double sigma = 1.0;

  std::size_t size() const { return nodes.size(); }

  /// Highest polynomial degree integrated exactly.
  int exact_degree() const { return 2 * order - 1; }
};

/// Golub-Welsch for the Hermite weight, followed by Newton polishing of the
/// nodes. Weights come from the Christoffel function 1 / sum_n phi_n(x)^2, which
/// avoids the underflow of first eigenvector components for large Q.
inline QuadratureGrid gauss_hermite(int order, double sigma = 1.0)
{
  if (order < 1) fail(ErrorKind::usage, "gauss_hermite: order must be >= 1");
  if (!(sigma > 0.0)) fail(ErrorKind::usage, "gauss_hermite: sigma must be > 0");

  QuadratureGrid g;
  g.order = order;
  g.sigma = sigma;

  std::vector<double> x(order, 0.0);
  if (order > 1) {
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(order);
    Eigen::VectorXd sub(order - 1);
    for (int k = 1; k < order; ++k) sub[k - 1] = std::sqrt(0.5 * k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
      fail(ErrorKind::numerical_breakdown, "gauss_hermite: Jacobi eigensolver did not converge");
    for (int k = 0; k < order; ++k) x[k] = es.eigenvalues()[k];
  }

  // Newton on phi_Q using phi_Q' = sqrt(2Q) phi_{Q-1} - x phi_Q; the common
  // scale of the recurrence cancels in the ratio.
  for (int k = 0; k < order; ++k) {
    for (int it = 0; it < 3; ++it) {
      detail::HermiteRecurrence rec(x[k]);
      while (rec.degree() < order) rec.advance();
      const double f = rec.mantissa();
      const double df = std::sqrt(2.0 * order) * rec.previous_mantissa() - x[k] * f;
      if (df == 0.0) break;
      const double step = f / df;
      x[k] -= step;
      if (std::fabs(step) < 1e-16 * (1.0 + std::fabs(x[k]))) break;
    }
  }
  for (int k = 0; k < order / 2; ++k) {
    const double a = 0.5 * (x[order - 1 - k] - x[k]);
    x[k] = -a;
    x[order - 1 - k] = a;
  }
  if (order % 2 == 1) x[order / 2] = 0.0;

  std::vector<double> scaled(order);
  for (int k = 0; k < order; ++k) {
    // Sum of phi_n^2, done in log space per term to stay finite.
    double s = 0.0;
    detail::HermiteRecurrence rec(x[k]);
    for (int n = 0; n < order; ++n) {
      if (n > 0) rec.advance();
      const ScaledValue v = rec.current();
      if (v.sign != 0) s += std::exp(2.0 * v.log_abs);
    }
    scaled[k] = 1.0 / s;
  }
  for (int k = 0; k < order / 2; ++k) {
    const double a = 0.5 * (scaled[k] + scaled[order - 1 - k]);
    scaled[k] = a;
    scaled[order - 1 - k] = a;
  }

  const double inv_sqrt_sigma = 1.0 / std::sqrt(sigma);
  g.nodes.resize(order);
  g.weights.resize(order);
  g.scaled_weights.resize(order);
  for (int k = 0; k < order; ++k) {
    g.nodes[k] = x[k] * inv_sqrt_sigma;
    g.scaled_weights[k] = scaled[k] * inv_sqrt_sigma;
    g.weights[k] = scaled[k] * std::exp(-x[k] * x[k]) * inv_sqrt_sigma;
  }
  return g;
}

/// Smallest order integrating a degree-D polynomial payload exactly.
inline int quadrature_order_for_degree(int degree) { return (degree + 2) / 2; }

/// Grid for integrating a product of `factors` Hermite functions whose degrees
/// sum to `total_degree`: the product is a polynomial times exp(-factors x^2/2).
inline QuadratureGrid product_grid(int factors, int total_degree)
{
  return gauss_hermite(quadrature_order_for_degree(total_degree), 0.5 * factors);
}

/// One-dimensional ladder actions on a coefficient vector of length N+1,
/// producing length N+2:
///   x phi_n   = sqrt(n/2) phi_{n-1} + sqrt((n+1)/2) phi_{n+1}
///   phi_n'    = sqrt(n/2) phi_{n-1} - sqrt((n+1)/2) phi_{n+1}
enum class LadderOp { multiply_x, differentiate };

template <typename T>
void ladder_1d(LadderOp op, std::span<const T> in, std::span<T> out)
{
  const double sign = op == LadderOp::multiply_x ? 1.0 : -1.0;
  for (auto& o : out) o = T{};
  const std::size_t n_in = in.size();
  for (std::size_t n = 0; n < n_in; ++n) {
    if (n > 0) out[n - 1] += std::sqrt(0.5 * double(n)) * in[n];
    out[n + 1] += sign * std::sqrt(0.5 * double(n + 1)) * in[n];
  }
}

}  // namespace kgnf
