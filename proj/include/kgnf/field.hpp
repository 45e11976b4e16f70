#pragma once

// Truncated spectral fields over the Hermite basis.
//
// A SpectralField stores one complex coefficient per multi-index alpha with
// |alpha| <= N, levels contiguous (graded lexicographic), so Pi_n is a slice.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "kgnf/errors.hpp"
#include "kgnf/hermite.hpp"

namespace kgnf {

using cplx = std::complex<double>;

inline constexpr const char* kOrderingTag = "grlex";

/// Basis layout shared by all fields of a given (d, N).
struct FieldLayout {
  int d = 1;
  int N = 0;
  std::vector<std::size_t> level_offset;  ///< size N+2
  std::vector<MultiIndex> indices;
  std::map<std::vector<int>, std::size_t> rank;

  std::size_t size() const { return indices.size(); }
  std::size_t begin_of(int n) const { return level_offset[n]; }
  std::size_t end_of(int n) const { return level_offset[n + 1]; }
};

inline std::shared_ptr<const FieldLayout> field_layout(int d, int N)
{
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const FieldLayout>> cache;
  if (d < 1) fail(ErrorKind::usage, "field dimension must be >= 1");
  if (N < 0) fail(ErrorKind::usage, "field truncation must be >= 0");
  std::lock_guard lock(mu);
  auto it = cache.find({d, N});
  if (it != cache.end()) return it->second;
  auto lay = std::make_shared<FieldLayout>();
  lay->d = d;
  lay->N = N;
  lay->level_offset.push_back(0);
  for (int n = 0; n <= N; ++n) {
    for (auto& mi : enumerate_level({n, d})) {
      lay->rank.emplace(mi.alpha, lay->indices.size());
      lay->indices.push_back(std::move(mi));
    }
    lay->level_offset.push_back(lay->indices.size());
  }
  cache.emplace(std::pair{d, N}, lay);
  return lay;
}

class SpectralField {
 public:
  SpectralField()
      : SpectralField(1, 0)
  {
  }

  SpectralField(int d, int N)
      : layout_(field_layout(d, N))
      , coeffs_(layout_->size(), cplx{})
  {
  }

  static SpectralField basis(int d, int N, const MultiIndex& alpha, cplx value = 1.0)
  {
    SpectralField f(d, N);
    f[alpha] = value;
    return f;
  }

  /// One-dimensional field with coefficient `value` on phi_n.
  static SpectralField basis_1d(int N, int n, cplx value = 1.0)
  {
    return basis(1, N, MultiIndex{{n}}, value);
  }

  int dim() const { return layout_->d; }
  int truncation() const { return layout_->N; }
  std::size_t size() const { return coeffs_.size(); }
  const FieldLayout& layout() const { return *layout_; }

  std::span<cplx> coeffs() { return coeffs_; }
  std::span<const cplx> coeffs() const { return coeffs_; }

  cplx& operator[](std::size_t i) { return coeffs_[i]; }
  const cplx& operator[](std::size_t i) const { return coeffs_[i]; }

  std::size_t index_of(const MultiIndex& alpha) const
  {
    if (alpha.dim() != dim()) fail(ErrorKind::usage, "multi-index dimension mismatch");
    if (alpha.level() > truncation()) fail(ErrorKind::truncation_exceeded, "multi-index above truncation");
    return layout_->rank.at(alpha.alpha);
  }
  cplx& operator[](const MultiIndex& alpha) { return coeffs_[index_of(alpha)]; }
  const cplx& operator[](const MultiIndex& alpha) const { return coeffs_[index_of(alpha)]; }

  /// Level of the basis function stored at position i.
  int level_at(std::size_t i) const { return layout_->indices[i].level(); }

  std::span<cplx> level(int n) { return std::span(coeffs_).subspan(layout_->begin_of(n), layout_->end_of(n) - layout_->begin_of(n)); }
  std::span<const cplx> level(int n) const
  {
    return std::span(coeffs_).subspan(layout_->begin_of(n), layout_->end_of(n) - layout_->begin_of(n));
  }

  /// ||Pi_n u||^2.
  double level_norm_sq(int n) const
  {
    double s = 0.0;
    for (const auto& c : level(n)) s += std::norm(c);
    return s;
  }

  /// L^2 norm (Parseval).
  double l2_norm() const
  {
    double s = 0.0;
    for (const auto& c : coeffs_) s += std::norm(c);
    return std::sqrt(s);
  }

  SpectralField conj() const
  {
    SpectralField r = *this;
    for (auto& c : r.coeffs_) c = std::conj(c);
    return r;
  }

  SpectralField real_part() const
  {
    SpectralField r = *this;
    for (auto& c : r.coeffs_) c = c.real();
    return r;
  }

  SpectralField imag_part() const
  {
    SpectralField r = *this;
    for (auto& c : r.coeffs_) c = c.imag();
    return r;
  }

  /// Copy into truncation N2 (zero-padded or cut).
  SpectralField retruncated(int N2) const
  {
    SpectralField r(dim(), N2);
    const std::size_t n = std::min(r.size(), size());
    std::copy_n(coeffs_.begin(), n, r.coeffs_.begin());
    return r;
  }

  SpectralField& operator+=(const SpectralField& o)
  {
    check_compatible(o);
    for (std::size_t i = 0; i < size(); ++i) coeffs_[i] += o.coeffs_[i];
    return *this;
  }
  SpectralField& operator-=(const SpectralField& o)
  {
    check_compatible(o);
    for (std::size_t i = 0; i < size(); ++i) coeffs_[i] -= o.coeffs_[i];
    return *this;
  }
  SpectralField& operator*=(cplx a)
  {
    for (auto& c : coeffs_) c *= a;
    return *this;
  }
  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(cplx a, SpectralField b) { return b *= a; }
  friend SpectralField operator*(SpectralField b, cplx a) { return b *= a; }

  bool same_shape(const SpectralField& o) const { return dim() == o.dim() && truncation() == o.truncation(); }

  /// Largest |coefficient| difference.
  double max_abs_diff(const SpectralField& o) const
  {
    check_compatible(o);
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i) m = std::max(m, std::abs(coeffs_[i] - o.coeffs_[i]));
    return m;
  }

 private:
  void check_compatible(const SpectralField& o) const
  {
    if (!same_shape(o)) fail(ErrorKind::usage, "spectral fields of different shape");
  }

  std::shared_ptr<const FieldLayout> layout_;
  std::vector<cplx> coeffs_;
};

struct MassParameter {
  double m = 1.0;

  MassParameter() = default;
  explicit MassParameter(double value)
      : m(value)
  {
    if (!(value > 0.0)) fail(ErrorKind::usage, "mass parameter must be > 0");
  }
};

/// sqrt(m^2 + lambda_n^2): the eigenvalue of Lambda_m on level n.
inline double lambda_m(double m, int n, int d) { return std::sqrt(m * m + double(eig_lambda_sq(n, d))); }

/// Pi_n u: zero outside level n.
inline SpectralField project(int n, const SpectralField& u)
{
  if (n < 0 || n > u.truncation()) fail(ErrorKind::truncation_exceeded, "project: level above truncation");
  SpectralField r(u.dim(), u.truncation());
  auto src = u.level(n);
  std::copy(src.begin(), src.end(), r.level(n).begin());
  return r;
}

/// (sum_n lambda_n^{2s} ||Pi_n u||^2)^{1/2}.
inline double sobolev_norm(const SpectralField& u, double s)
{
  double acc = 0.0;
  for (int n = 0; n <= u.truncation(); ++n) {
    const double ns = u.level_norm_sq(n);
    if (ns == 0.0) continue;
    acc += std::pow(double(eig_lambda_sq(n, u.dim())), s) * ns;
  }
  return std::sqrt(acc);
}

/// Lambda_m^power u: level n scaled by (m^2 + lambda_n^2)^{power/2}.
inline SpectralField apply_lambda_m(const SpectralField& u, MassParameter m, double power)
{
  SpectralField r = u;
  if (power == 0.0) return r;
  for (int n = 0; n <= u.truncation(); ++n) {
    const double f = std::pow(m.m * m.m + double(eig_lambda_sq(n, u.dim())), 0.5 * power);
    for (auto& c : r.level(n)) c *= f;
  }
  return r;
}

/// x_axis * u or d/dx_axis u, exact in coefficient space; output truncation N+1.
inline SpectralField ladder_apply(LadderOp op, int axis, const SpectralField& u)
{
  const int d = u.dim();
  if (axis < 0 || axis >= d) fail(ErrorKind::usage, "ladder_apply: axis out of range");
  SpectralField r(d, u.truncation() + 1);
  const auto& lay = u.layout();
  const double sign = op == LadderOp::multiply_x ? 1.0 : -1.0;
  std::vector<int> a;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const cplx c = u[i];
    if (c == cplx{}) continue;
    a = lay.indices[i].alpha;
    const int k = a[axis];
    if (k > 0) {
      a[axis] = k - 1;
      r[MultiIndex{a}] += std::sqrt(0.5 * k) * c;
    }
    a[axis] = k + 1;
    r[MultiIndex{a}] += sign * std::sqrt(0.5 * (k + 1)) * c;
  }
  return r;
}

namespace detail {
inline void enumerate_exponents(int d, int total_max, std::vector<std::vector<int>>& out)
{
  for (int t = 0; t <= total_max; ++t)
    for (auto& mi : enumerate_level({t, d})) out.push_back(mi.alpha);
}
}  // namespace detail

/// (sum_{|a|+|b| <= s} ||x^a d^b u||^2)^{1/2}, derivatives applied first.
inline double sobolev_norm_phys(const SpectralField& u, int s)
{
  if (s < 0 || s > 4) fail(ErrorKind::usage, "sobolev_norm_phys: s must be in [0, 4]");
  const int d = u.dim();
  std::vector<std::vector<int>> exps;
  detail::enumerate_exponents(d, s, exps);
  double acc = 0.0;
  for (const auto& beta : exps) {
    int bsum = 0;
    for (int b : beta) bsum += b;
    SpectralField w = u;
    for (int ax = 0; ax < d; ++ax)
      for (int k = 0; k < beta[ax]; ++k) w = ladder_apply(LadderOp::differentiate, ax, w);
    for (const auto& alpha : exps) {
      int asum = 0;
      for (int a : alpha) asum += a;
      if (asum + bsum > s) continue;
      SpectralField z = w;
      for (int ax = 0; ax < d; ++ax)
        for (int k = 0; k < alpha[ax]; ++k) z = ladder_apply(LadderOp::multiply_x, ax, z);
      const double nz = z.l2_norm();
      acc += nz * nz;
    }
  }
  return std::sqrt(acc);
}

/// Dense (L^d) tensor-grid transforms used for synthesis and analysis.
namespace detail {

inline std::size_t ipow(std::size_t b, int e)
{
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

// Applies mat (rows x cols, row-major) along `axis` of a dense array whose
// extents are `ext`; that axis changes extent from cols to rows.
inline std::vector<cplx> apply_axis(const std::vector<cplx>& in, std::vector<std::size_t>& ext, int axis,
                                    const std::vector<double>& mat, std::size_t rows, std::size_t cols)
{
  std::size_t outer = 1, inner = 1;
  for (int k = 0; k < axis; ++k) outer *= ext[k];
  for (std::size_t k = axis + 1; k < ext.size(); ++k) inner *= ext[k];
  std::vector<cplx> out(outer * rows * inner, cplx{});
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < rows; ++r) {
      cplx* dst = &out[(o * rows + r) * inner];
      for (std::size_t c = 0; c < cols; ++c) {
        const double a = mat[r * cols + c];
        if (a == 0.0) continue;
        const cplx* src = &in[(o * cols + c) * inner];
        for (std::size_t i = 0; i < inner; ++i) dst[i] += a * src[i];
      }
    }
  ext[axis] = rows;
  return out;
}

}  // namespace detail

/// Per-axis synthesis/analysis matrices for one (N, grid) pair.
class GridTransform {
 public:
  GridTransform(int d, int N, QuadratureGrid grid)
      : d_(d)
      , N_(N)
      , grid_(std::move(grid))
  {
    const std::size_t Q = grid_.size();
    synth_.assign(Q * (N + 1), 0.0);
    analy_.assign((N + 1) * Q, 0.0);
    std::vector<double> tab(N + 1);
    for (std::size_t q = 0; q < Q; ++q) {
      hermite_table(N, grid_.nodes[q], tab);
      for (int n = 0; n <= N; ++n) {
        synth_[q * (N + 1) + n] = tab[n];
        analy_[n * Q + q] = tab[n] * grid_.scaled_weights[q];
      }
    }
  }

  int dim() const { return d_; }
  int truncation() const { return N_; }
  const QuadratureGrid& grid() const { return grid_; }
  std::size_t points() const { return detail::ipow(grid_.size(), d_); }

  /// Values at tensor-grid nodes, axis 0 slowest.
  std::vector<cplx> synthesize(const SpectralField& u) const
  {
    const std::size_t L = N_ + 1;
    std::vector<cplx> dense(detail::ipow(L, d_), cplx{});
    const auto& lay = u.layout();
    for (std::size_t i = 0; i < u.size(); ++i) {
      const auto& a = lay.indices[i].alpha;
      if (lay.indices[i].level() > N_) continue;
      std::size_t flat = 0;
      for (int ax = 0; ax < d_; ++ax) flat = flat * L + a[ax];
      dense[flat] = u[i];
    }
    std::vector<std::size_t> ext(d_, L);
    for (int ax = 0; ax < d_; ++ax) dense = detail::apply_axis(dense, ext, ax, synth_, grid_.size(), L);
    return dense;
  }

  /// Coefficients sum_q W_q phi_alpha(x_q) f(x_q), truncated at level N_out <= N.
  SpectralField analyze(std::span<const cplx> values, int N_out) const
  {
    const std::size_t L = N_ + 1;
    const std::size_t Q = grid_.size();
    std::vector<cplx> dense(values.begin(), values.end());
    std::vector<std::size_t> ext(d_, Q);
    for (int ax = 0; ax < d_; ++ax) dense = detail::apply_axis(dense, ext, ax, analy_, L, Q);
    SpectralField r(d_, N_out);
    const auto& lay = r.layout();
    for (std::size_t i = 0; i < r.size(); ++i) {
      const auto& a = lay.indices[i].alpha;
      std::size_t flat = 0;
      for (int ax = 0; ax < d_; ++ax) flat = flat * L + a[ax];
      r[i] = dense[flat];
    }
    return r;
  }

 private:
  int d_;
  int N_;
  QuadratureGrid grid_;
  std::vector<double> synth_;
  std::vector<double> analy_;
};

/// Field values at the tensor grid built from `grid` (one copy per axis).
inline std::vector<cplx> synthesize(const SpectralField& u, const QuadratureGrid& grid)
{
  return GridTransform(u.dim(), u.truncation(), grid).synthesize(u);
}

/// Inverse of synthesize for truncation-N fields. Requires a sigma = 1 grid
/// with Q >= N+1 so that every phi_alpha * u product is integrated exactly.
inline SpectralField analyze(std::span<const cplx> values, const QuadratureGrid& grid, int N, int d = 1)
{
  if (grid.sigma != 1.0 || grid.exact_degree() < 2 * N)
    fail(ErrorKind::insufficient_order, "analyze: grid must have sigma = 1 and order >= N+1");
  if (values.size() != detail::ipow(grid.size(), d))
    fail(ErrorKind::usage, "analyze: value count does not match grid");
  return GridTransform(d, N, grid).analyze(values, N);
}

/// Precomputed plan for u -> P_{N_out}(u^q) on a truncation-N input. The
/// integrand phi_alpha u^q is a polynomial of degree N_out + q N times
/// exp(-(q+1)|x|^2/2), so a sigma = (q+1)/2 grid of order
/// ceil((N_out + qN + 1)/2) integrates it without aliasing.
class NonlinearPowerPlan {
 public:
  NonlinearPowerPlan(int d, int N, int q, int N_out, int order_override = 0)
      : q_(q)
      , N_out_(N_out)
      , required_order_(quadrature_order_for_degree(N_out + q * N))
      , transform_(d, std::max(N, N_out),
                   gauss_hermite(order_override > 0 ? order_override : quadrature_order_for_degree(N_out + q * N),
                                 0.5 * (q + 1)))
  {
    if (q < 1) fail(ErrorKind::usage, "nonlinear_power: q must be >= 1");
    if (order_override > 0 && order_override < required_order_)
      fail(ErrorKind::aliasing_risk, "nonlinear_power: grid order below the exactness threshold");
  }

  int power() const { return q_; }
  int output_truncation() const { return N_out_; }
  int required_order() const { return required_order_; }

  SpectralField apply(const SpectralField& u) const
  {
    SpectralField src = u.truncation() == transform_.truncation() ? u : u.retruncated(transform_.truncation());
    auto vals = transform_.synthesize(src);
    for (auto& v : vals) {
      cplx p = v;
      for (int k = 1; k < q_; ++k) p *= v;
      v = p;
    }
    return transform_.analyze(vals, N_out_);
  }

 private:
  int q_;
  int N_out_;
  int required_order_;
  GridTransform transform_;
};

/// Truncation to level N_out of the exact expansion of u^q.
inline SpectralField nonlinear_power(const SpectralField& u, int q, int N_out)
{
  return NonlinearPowerPlan(u.dim(), u.truncation(), q, N_out).apply(u);
}

}  // namespace kgnf
