#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "kgnf/product_bounds.hpp"

using namespace kgnf;

namespace {

// Brute force: plain sigma = 1 rule of high order applied to function values.
double integral_oracle_1d(const std::vector<int>& levels)
{
  static const QuadratureGrid g = gauss_hermite(200);
  double acc = 0.0;
  for (std::size_t q = 0; q < g.size(); ++q) {
    double v = g.scaled_weights[q];
    for (int n : levels) v *= hermite_eval(n, g.nodes[q]);
    acc += v;
  }
  return acc;
}

std::vector<SlotComponent> unit_comps(const LevelTuple& t)
{
  std::vector<SlotComponent> c;
  for (int n : t.levels) c.push_back(unit_component(n, t.d));
  return c;
}

}  // namespace

TEST(MuS, Examples)
{
  auto r = mu_S({{9, 4, 1, 0}});
  EXPECT_DOUBLE_EQ(r.mu, 6.0);
  EXPECT_DOUBLE_EQ(r.S, 11.0);
  EXPECT_EQ(r.n_prime, 4);
  for (int k : {0, 1, 4, 7}) {
    auto e = mu_S({{k, k, k, k, k}});
    EXPECT_DOUBLE_EQ(e.mu, std::pow(1 + std::sqrt(double(k)), 2));
    EXPECT_DOUBLE_EQ(e.S, e.mu);
  }
  auto z = mu_S({{0, 0, 0}});
  EXPECT_EQ(z.mu, 1.0);
  EXPECT_EQ(z.S, 1.0);
}

TEST(MuS, ThirdLargestSkipsSlotZero)
{
  // Slot 0 is excluded from the third pick unless nothing else remains.
  auto r = mu_S({{5, 9, 7, 1}});
  EXPECT_EQ(r.i0, 1);
  EXPECT_EQ(r.i1, 2);
  EXPECT_EQ(r.i2, 3);
  EXPECT_DOUBLE_EQ(r.mu, (1 + std::sqrt(7.0)) * 2.0);
  auto s = mu_S({{1, 4, 9}});
  EXPECT_EQ(s.i2, 0);
}

TEST(MuS, WellOrderedExhaustive)
{
  for (int p : {1, 2}) {
    for_each_tuple(p + 2, 12, [&](const std::vector<int>& v) {
      auto r = mu_S({v});
      ASSERT_GE(r.mu, 1.0);
      ASSERT_GE(r.S, r.mu);
    });
  }
  for_each_tuple(5, 7, [&](const std::vector<int>& v) {
    auto r = mu_S({v});
    ASSERT_GE(r.mu, 1.0);
    ASSERT_GE(r.S, r.mu);
  });
}

TEST(ProductIntegral, Examples)
{
  EXPECT_NEAR(product_integral({{0, 0}}, {{1.0}, {1.0}}), 1.0, 1e-15);
  EXPECT_EQ(product_integral({{3, 1, 1}}, unit_comps({{3, 1, 1}})), 0.0);
  EXPECT_NEAR(product_integral({{0, 0, 0}}, unit_comps({{0, 0, 0}})),
              std::pow(std::numbers::pi, -0.25) * std::sqrt(2.0 / 3.0), 1e-15);
}

TEST(ProductIntegral, MatchesBruteForce)
{
  for_each_tuple(4, 6, [&](const std::vector<int>& v) {
    LevelTuple t{v};
    const double exact = product_integral(t, unit_comps(t));
    EXPECT_NEAR(exact, integral_oracle_1d(v), 1e-13);
  });
}

TEST(ProductIntegral, TwoDimensionalFactorizes)
{
  // In d = 2 a single tensor basis function per slot gives a product of 1-D integrals.
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    LevelTuple t{{}, 2};
    std::vector<SlotComponent> comps;
    std::vector<int> ax0, ax1;
    for (int j = 0; j < 4; ++j) {
      const int n = int(rng() % 5);
      t.levels.push_back(n);
      const int a = n == 0 ? 0 : int(rng() % (n + 1));
      auto idx = enumerate_level({n, 2});
      SlotComponent c(idx.size(), 0.0);
      for (std::size_t k = 0; k < idx.size(); ++k)
        if (idx[k].alpha[0] == a) c[k] = 1.0;
      comps.push_back(c);
      ax0.push_back(a);
      ax1.push_back(n - a);
    }
    EXPECT_NEAR(product_integral(t, comps), integral_oracle_1d(ax0) * integral_oracle_1d(ax1), 1e-13);
  }
}

TEST(ProductIntegral, PermutationSymmetryExact)
{
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    LevelTuple t{{}, 2};
    std::vector<SlotComponent> comps;
    for (int j = 0; j < 4; ++j) {
      t.levels.push_back(int(rng() % 4));
      comps.push_back(random_unit_component(t.levels.back(), 2, rng));
    }
    const double base = product_integral(t, comps);
    std::vector<int> perm{0, 1, 2, 3};
    while (std::next_permutation(perm.begin(), perm.end())) {
      LevelTuple tp{{}, 2};
      std::vector<SlotComponent> cp;
      for (int j : perm) {
        tp.levels.push_back(t.levels[j]);
        cp.push_back(comps[j]);
      }
      EXPECT_EQ(product_integral(tp, cp), base);
    }
  }
}

TEST(ProductIntegral, Multilinear)
{
  LevelTuple t{{2, 1, 3, 2}, 2};
  std::mt19937_64 rng(2);
  std::vector<SlotComponent> comps;
  for (int n : t.levels) comps.push_back(random_unit_component(n, 2, rng));
  const double base = product_integral(t, comps);
  for (std::size_t j = 0; j < comps.size(); ++j) {
    auto c2 = comps;
    for (auto& x : c2[j]) x *= 2.0;
    EXPECT_NEAR(product_integral(t, c2), 2.0 * base, 1e-14);
  }
}

TEST(ProductIntegral, InsufficientOrder)
{
  LevelTuple t{{4, 4, 4}};
  try {
    product_integral(t, unit_comps(t), 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::insufficient_order);
  }
}

TEST(ProductIntegral, DecaysFasterThanAnyPower)
{
  // Fixed inner levels, growing n_0: the envelope of |I| (S/mu)^K eventually
  // decreases for every K tested.
  const std::vector<int> inner{1, 2, 3};
  for (int K : {2, 4, 8}) {
    std::vector<double> env;
    for (int n0 = 0; n0 <= 160; ++n0) {
      std::vector<int> v{n0};
      v.insert(v.end(), inner.begin(), inner.end());
      LevelTuple t{v};
      auto ms = mu_S(t);
      env.push_back(std::fabs(product_integral(t, unit_comps(t))) * std::pow(ms.S / ms.mu, K));
    }
    for (int i = int(env.size()) - 2; i >= 0; --i) env[i] = std::max(env[i], env[i + 1]);
    const double peak = *std::max_element(env.begin(), env.end());
    EXPECT_LT(env.back(), 1e-3 * peak) << K;
    for (std::size_t i = 1; i < env.size(); ++i) EXPECT_LE(env[i], env[i - 1]);
  }
}

TEST(BoundRatioScan, SingleTupleBox)
{
  for (int p : {1, 2, 3}) {
    RatioScanConfig cfg;
    cfg.p = p;
    cfg.box = 0;
    auto rep = bound_ratio_scan(cfg);
    ASSERT_EQ(rep.rows.size(), 1u);
    const double expect = integral_oracle_1d(std::vector<int>(p + 2, 0));
    EXPECT_NEAR(rep.max_ratio, expect, 1e-14);
  }
}

TEST(BoundRatioScan, RowCountAndReproducible)
{
  RatioScanConfig cfg;
  cfg.p = 1;
  cfg.box = 8;
  auto a = bound_ratio_scan(cfg);
  int even = 0;
  for (int i = 0; i <= 8; ++i)
    for (int j = 0; j <= 8; ++j)
      for (int k = 0; k <= 8; ++k) even += (i + j + k) % 2 == 0;
  EXPECT_EQ(int(a.rows.size()), even);
  EXPECT_TRUE(std::isfinite(a.max_ratio));

  RatioScanConfig c2;
  c2.p = 1;
  c2.box = 3;
  c2.d = 2;
  c2.trials = 3;
  c2.seed = 77;
  auto x = bound_ratio_scan(c2);
  c2.jobs = 3;
  auto y = bound_ratio_scan(c2);
  ASSERT_EQ(x.rows.size(), y.rows.size());
  for (std::size_t i = 0; i < x.rows.size(); ++i) EXPECT_EQ(x.rows[i].ratio, y.rows[i].ratio);
}

TEST(BoundRatioScan, ScalingOfComponents)
{
  // Ratio is linear in |integral|, which is linear in each slot's norm.
  LevelTuple t{{2, 0, 2}};
  auto ms = mu_S(t);
  const double i1 = product_integral(t, unit_comps(t));
  auto c = unit_comps(t);
  c[1][0] = 2.0;
  const double i2 = product_integral(t, c);
  EXPECT_NEAR(bound_ratio(i2, ms, 2, 1.0, t[ms.i2]), 2.0 * bound_ratio(i1, ms, 2, 1.0, t[ms.i2]), 1e-14);
}

TEST(BoundRatioScan, BoundedPastBurnIn)
{
  for (int p : {1, 2})
    for (int N : {2, 3})
      for (double nu : {1.0, 2.0, 4.0}) {
        RatioScanConfig cfg;
        cfg.p = p;
        cfg.N_exponent = N;
        cfg.nu = nu;
        cfg.box = 8;
        cfg.burn_in = 6;
        auto rep = bound_ratio_scan(cfg);
        EXPECT_TRUE(rep.bounded_past_burn_in) << p << " " << N << " " << nu;
      }
}

TEST(LinftyDecay, Slope)
{
  auto r = linfty_decay_check(512);
  EXPECT_NEAR(r.sup[0], std::pow(std::numbers::pi, -0.25), 1e-12);
  EXPECT_NEAR(r.slope, -1.0 / 6.0, 0.03);
  const double at64 = r.sup[64] * std::pow(eig_lambda(64, 1), 1.0 / 6.0);
  double worst = 0.0;
  for (int n = 0; n <= 512; ++n) worst = std::max(worst, r.sup[n] * std::pow(eig_lambda(n, 1), 1.0 / 6.0));
  EXPECT_LE(worst, 1.2 * at64);
}

TEST(LinftyDecay, SupMatchesFineSearch)
{
  auto r = linfty_decay_check(40, 10, 40);
  for (int n : {5, 17, 40}) {
    double best = 0.0;
    for (double x = 0.0; x < 12.0; x += 1e-5) best = std::max(best, std::fabs(hermite_eval(n, x)));
    EXPECT_NEAR(r.sup[n], best, 1e-9);
  }
}
