#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "kgnf/field.hpp"

using namespace kgnf;

namespace {

SpectralField random_field(int d, int N, std::uint64_t seed, bool real = false)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  SpectralField u(d, N);
  for (auto& c : u.coeffs()) c = {nd(rng), real ? 0.0 : nd(rng)};
  return u;
}

}  // namespace

TEST(Field, StorageLength)
{
  for (int d = 1; d <= 3; ++d)
    for (int N = 0; N <= 9; ++N) {
      std::size_t expect = 0;
      for (int n = 0; n <= N; ++n) expect += level_multiplicity({n, d});
      EXPECT_EQ(SpectralField(d, N).size(), expect);
    }
}

TEST(Field, IndexRoundTrip)
{
  SpectralField u(2, 6);
  const auto& lay = u.layout();
  for (std::size_t i = 0; i < u.size(); ++i) EXPECT_EQ(u.index_of(lay.indices[i]), i);
  EXPECT_THROW(u.index_of(MultiIndex{{4, 3}}), Error);
}

TEST(Project, Examples)
{
  auto u = random_field(2, 7, 1);
  SpectralField sum(2, 7);
  for (int n = 0; n <= 7; ++n) {
    auto p = project(n, u);
    EXPECT_EQ(project(n, p).max_abs_diff(p), 0.0);
    for (int k = 0; k <= 7; ++k) {
      if (k == n) continue;
      EXPECT_EQ(project(k, p).l2_norm(), 0.0);
    }
    sum += p;
  }
  EXPECT_EQ(sum.max_abs_diff(u), 0.0);
  try {
    project(8, u);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::truncation_exceeded);
  }
}

TEST(SobolevNorm, Examples)
{
  auto u = SpectralField::basis_1d(6, 4);
  EXPECT_DOUBLE_EQ(sobolev_norm(u, 2), 9.0);
  EXPECT_EQ(sobolev_norm(SpectralField(1, 5), 3.0), 0.0);
  auto r = random_field(2, 9, 2);
  EXPECT_NEAR(sobolev_norm(r, 0), r.l2_norm(), 1e-13);
}

TEST(SobolevNorm, Monotone)
{
  for (int k = 0; k < 30; ++k) {
    auto u = random_field(1 + k % 2, 12, 100 + k);
    double prev = 0.0;
    for (double s : {0.0, 0.5, 1.0, 2.0, 3.5, 6.0}) {
      const double v = sobolev_norm(u, s);
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(SobolevNormPhys, Examples)
{
  auto r = random_field(1, 10, 3);
  EXPECT_NEAR(sobolev_norm_phys(r, 0), r.l2_norm(), 1e-13);
  EXPECT_NEAR(sobolev_norm_phys(SpectralField::basis_1d(0, 0), 1), std::sqrt(2.0), 1e-15);
  EXPECT_THROW(sobolev_norm_phys(r, 5), Error);
}

TEST(SobolevNormPhys, IdentityAtOne)
{
  for (int k = 0; k < 100; ++k) {
    const int d = 1 + k % 2;
    auto u = random_field(d, 6 + k % 11, 1000 + k);
    const double lhs = std::pow(sobolev_norm_phys(u, 1), 2);
    double rhs = 0.0;
    for (int n = 0; n <= u.truncation(); ++n) rhs += (1.0 + double(eig_lambda_sq(n, d))) * u.level_norm_sq(n);
    EXPECT_NEAR(lhs, rhs, 1e-10 * rhs);
  }
}

TEST(SobolevNormPhys, ComparableToSpectral)
{
  // Integer-s equivalence: the ratio stays within fixed bounds as N grows.
  for (int s = 0; s <= 4; ++s)
    for (int N : {4, 16, 40}) {
      for (int n : {0, N / 2, N}) {
        auto u = SpectralField::basis_1d(N, n);
        const double r = sobolev_norm_phys(u, s) / sobolev_norm(u, s);
        EXPECT_GE(r, std::pow(0.5, s));
        EXPECT_LE(r, std::pow(4.0, s));
      }
    }
}

TEST(LambdaM, Examples)
{
  auto u = random_field(1, 8, 4);
  EXPECT_EQ(apply_lambda_m(u, MassParameter(1.3), 0).max_abs_diff(u), 0.0);
  auto phi0 = SpectralField::basis_1d(3, 0);
  EXPECT_NEAR(apply_lambda_m(phi0, MassParameter(1.0), 1)[0].real(), std::sqrt(2.0), 1e-15);
  auto back = apply_lambda_m(apply_lambda_m(u, MassParameter(0.7), 1), MassParameter(0.7), -1);
  EXPECT_LT(back.max_abs_diff(u), 1e-14);
  EXPECT_THROW(MassParameter(0.0), Error);
}

TEST(Synthesis, RoundTrip)
{
  for (int d : {1, 2}) {
    const int N = d == 1 ? 32 : 12;
    auto u = random_field(d, N, 9);
    auto grid = gauss_hermite(d == 1 ? 40 : 16);
    auto vals = synthesize(u, grid);
    auto back = analyze(vals, grid, N, d);
    EXPECT_LT(back.max_abs_diff(u), 1e-11);
  }
}

TEST(Synthesis, ZeroAndGround)
{
  auto grid = gauss_hermite(20);
  for (auto v : synthesize(SpectralField(1, 10), grid)) EXPECT_EQ(v, cplx{});
  std::vector<cplx> samples;
  for (double x : grid.nodes) samples.push_back(hermite_eval(0, x));
  auto c = analyze(samples, grid, 10);
  EXPECT_NEAR(c[0].real(), 1.0, 1e-12);
  for (std::size_t i = 1; i < c.size(); ++i) EXPECT_LT(std::abs(c[i]), 1e-12);
}

TEST(Synthesis, InsufficientOrder)
{
  auto grid = gauss_hermite(10);
  std::vector<cplx> vals(10);
  try {
    analyze(vals, grid, 12);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::insufficient_order);
  }
}

TEST(NonlinearPower, GroundSquared)
{
  auto u = SpectralField::basis_1d(0, 0);
  auto sq = nonlinear_power(u, 2, 6);
  const double expect = std::pow(std::numbers::pi, -0.25) * std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(sq[0].real(), expect, 1e-14);
  EXPECT_NEAR(expect, 0.61329, 1e-5);
  // Independent check: <phi_0^2, phi_k> by a large plain quadrature.
  auto g = gauss_hermite(60);
  for (int k = 0; k <= 6; ++k) {
    double acc = 0.0;
    for (std::size_t q = 0; q < g.size(); ++q) {
      const double p0 = hermite_eval(0, g.nodes[q]);
      acc += g.scaled_weights[q] * p0 * p0 * hermite_eval(k, g.nodes[q]);
    }
    EXPECT_NEAR(sq[k].real(), acc, 1e-13);
  }
}

TEST(NonlinearPower, IdentityAndParity)
{
  auto u = random_field(1, 14, 12, true);
  EXPECT_LT(nonlinear_power(u, 1, 14).max_abs_diff(u), 1e-12);
  SpectralField odd(1, 14);
  for (int n = 1; n <= 14; n += 2) odd[n] = u[n];
  auto sq = nonlinear_power(odd, 2, 28);
  for (int n = 1; n <= 28; n += 2) EXPECT_LT(std::abs(sq[n]), 1e-12);
}

TEST(NonlinearPower, MatchesBruteForceProjection)
{
  // Oracle: <u^3, phi_alpha> from plain function values on an oversized
  // sigma = 1 rule (not exact, but spectrally converged).
  for (int d : {1, 2}) {
    const int N = d == 1 ? 12 : 5;
    const int Nout = 2 * N;
    auto u = random_field(d, N, 20 + d, true);
    auto cube = nonlinear_power(u, 3, Nout);
    auto g = gauss_hermite(d == 1 ? 160 : 60);
    std::vector<std::vector<double>> tab(g.size());
    for (std::size_t q = 0; q < g.size(); ++q) tab[q] = hermite_table(Nout, g.nodes[q]);
    const auto& lay = cube.layout();
    const auto& ulay = u.layout();
    const std::size_t Q = g.size();
    const std::size_t pts = d == 1 ? Q : Q * Q;
    std::vector<double> uval(pts, 0.0), wt(pts);
    for (std::size_t pnt = 0; pnt < pts; ++pnt) {
      const std::size_t q0 = d == 1 ? pnt : pnt / Q, q1 = d == 1 ? 0 : pnt % Q;
      wt[pnt] = g.scaled_weights[q0] * (d == 1 ? 1.0 : g.scaled_weights[q1]);
      for (std::size_t i = 0; i < u.size(); ++i) {
        const auto& a = ulay.indices[i].alpha;
        uval[pnt] += u[i].real() * tab[q0][a[0]] * (d == 1 ? 1.0 : tab[q1][a[1]]);
      }
    }
    for (std::size_t i = 0; i < cube.size(); ++i) {
      const auto& a = lay.indices[i].alpha;
      double acc = 0.0;
      for (std::size_t pnt = 0; pnt < pts; ++pnt) {
        const std::size_t q0 = d == 1 ? pnt : pnt / Q, q1 = d == 1 ? 0 : pnt % Q;
        acc += wt[pnt] * std::pow(uval[pnt], 3) * tab[q0][a[0]] * (d == 1 ? 1.0 : tab[q1][a[1]]);
      }
      EXPECT_NEAR(cube[i].real(), acc, 1e-10 * (1.0 + std::fabs(acc)));
      EXPECT_LT(std::fabs(cube[i].imag()), 1e-14);
    }
  }
}

TEST(NonlinearPower, AliasingGuard)
{
  try {
    NonlinearPowerPlan plan(1, 10, 3, 10, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::aliasing_risk);
  }
}

TEST(NonlinearPower, BoundedProductConstant)
{
  // ||u^{k+1}||_{H^s} <= C ||u||_{H^s}^{k+1}: the fitted constant over random
  // unit-ball fields stays finite and its spread is moderate.
  const int kappa = 2, N = 16;
  for (double s : {1.0, 2.0}) {
    double cmax = 0.0, cmin = 1e300;
    for (int k = 0; k < 40; ++k) {
      auto u = random_field(1, N, 300 + k, true);
      for (int n = 0; n <= N; ++n)
        for (auto& c : u.level(n)) c *= std::pow(eig_lambda(n, 1), -s - 1.0);
      u *= 1.0 / sobolev_norm(u, s);
      const double c = sobolev_norm(nonlinear_power(u, kappa + 1, (kappa + 1) * N), s);
      cmax = std::max(cmax, c);
      cmin = std::min(cmin, c);
    }
    EXPECT_TRUE(std::isfinite(cmax));
    EXPECT_GT(cmin, 0.0);
    EXPECT_LT(cmax / cmin, 1e3);
  }
}
