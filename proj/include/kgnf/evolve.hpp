#pragma once

// Time integration of  (D_t - Lambda_m) u = -F(Lambda_m^{-1} Re u),  u = Lambda_m v - i v_t,
// energy traces, exit times and energy-drift comparisons.

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kgnf/errors.hpp"
#include "kgnf/field.hpp"
#include "kgnf/normal_form.hpp"
#include "kgnf/parallel.hpp"
#include "kgnf/random.hpp"

namespace kgnf {

struct EvolveConfig {
  int kappa = 2;
  double s = 8.0;
  /// Mass; 0 means not chosen yet (see pick_evolution_mass).
  double m = 0.0;
  double epsilon = 0.1;
  int d = 1;
  int N = 48;
  double dt = 0.0125;
  double t_max = 1e3;
  /// Exit once the H^s norm exceeds K * epsilon.
  double K = 2.0;
  std::uint64_t seed = 1;
  double theta = 1.0 / 3.0;
  /// F(v) = sign * v^{kappa+1}; 0 switches the nonlinearity off.
  int sign = 1;
  /// Spacing of recorded trace rows (rounded to a whole number of steps).
  double output_interval = 1.0;

  void validate() const
  {
    if (kappa < 1) fail(ErrorKind::usage, "evolve: kappa must be >= 1");
    if (!(epsilon >= 0.0 && epsilon < 0.5)) fail(ErrorKind::usage, "evolve: epsilon must lie in [0, 1/2)");
    if (!(dt > 0.0)) fail(ErrorKind::usage, "evolve: dt must be > 0");
    if (!(t_max > 0.0)) fail(ErrorKind::usage, "evolve: t_max must be > 0");
    if (!(K > 1.0)) fail(ErrorKind::usage, "evolve: K must be > 1");
    if (!(m > 0.0)) fail(ErrorKind::usage, "evolve: m must be > 0 (pick a non-resonant mass first)");
    if (!(s >= 0.0)) fail(ErrorKind::usage, "evolve: s must be >= 0");
    if (d < 1 || d > 3) fail(ErrorKind::usage, "evolve: d must be 1, 2 or 3");
    if (N < 0) fail(ErrorKind::usage, "evolve: N must be >= 0");
    if (sign < -1 || sign > 1) fail(ErrorKind::usage, "evolve: sign must be -1, 0 or 1");
    if (!(theta > 0.0)) fail(ErrorKind::usage, "evolve: theta must be > 0");
    if (!(output_interval > 0.0)) fail(ErrorKind::usage, "evolve: output interval must be > 0");
  }

  Nonlinearity nonlinearity() const { return Nonlinearity::power(kappa, double(sign)); }

  CutoffConfig cutoff() const
  {
    CutoffConfig c;
    c.theta = theta;
    c.epsilon = epsilon;
    return c;
  }
};

/// Non-resonant mass for the splits ell = 0..p, p in [kappa, 2 kappa - 1].
inline MassCertificate pick_evolution_mass(int kappa, std::uint64_t seed = 1, double threshold = 1e-6, int box = 12)
{
  PickMassConfig pc;
  pc.seed = seed;
  pc.threshold = threshold;
  pc.box = box;
  pc.requirements = requirements_for_kappa(kappa);
  return pick_nonresonant_mass(pc);
}

// ---------------------------------------------------------------------------
// Data

/// Real random fields with unit H^{s+1} (v0) and H^s (v1) norms.
inline std::pair<SpectralField, SpectralField> random_unit_data(double s, int d, int N, std::uint64_t seed)
{
  SpectralField v0(d, N), v1(d, N);
  auto r0 = make_rng(seed, {0x7630ULL});
  auto r1 = make_rng(seed, {0x7631ULL});
  for (std::size_t i = 0; i < v0.size(); ++i) {
    const double lam = eig_lambda(v0.level_at(i), d);
    v0[i] = standard_normal(r0) * std::pow(lam, -(s + 1.0) - 1.0);
    v1[i] = standard_normal(r1) * std::pow(lam, -s - 1.0);
  }
  v0 *= 1.0 / sobolev_norm(v0, s + 1.0);
  v1 *= 1.0 / sobolev_norm(v1, s);
  return {v0, v1};
}

/// u = epsilon (-i v1 + Lambda_m v0).
inline SpectralField to_first_order(const SpectralField& v0, const SpectralField& v1, double m, double epsilon)
{
  auto u = apply_lambda_m(v0, MassParameter(m), 1.0) - cplx(0.0, 1.0) * v1;
  return u * epsilon;
}

/// Inverse of to_first_order: (v, v_t).
inline std::pair<SpectralField, SpectralField> to_second_order(const SpectralField& u, double m)
{
  auto v = apply_lambda_m(u.real_part(), MassParameter(m), -1.0);
  auto vt = u.imag_part() * -1.0;
  return {v, vt};
}

// ---------------------------------------------------------------------------
// Stepping

/// coeff * v^q projected to the truncation, for real v.
class RealPower {
 public:
  RealPower(int d, int N, int q, double coeff)
      : d_(d)
      , q_(q)
      , coeff_(coeff)
  {
    if (d == 1) {
      const auto g = gauss_hermite(quadrature_order_for_degree((q + 1) * N), 0.5 * (q + 1));
      synth_.resize(Eigen::Index(g.size()), N + 1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const auto row = hermite_table(N, g.nodes[i]);
        for (int n = 0; n <= N; ++n) synth_(Eigen::Index(i), n) = row[std::size_t(n)];
      }
      analyze_ = synth_.transpose();
      for (std::size_t i = 0; i < g.size(); ++i) analyze_.col(Eigen::Index(i)) *= g.scaled_weights[i];
    } else {
      plan_ = std::make_unique<NonlinearPowerPlan>(d, N, q, N);
    }
  }

  /// out = coeff * Pi_{<=N} (v^q); v and out are coefficient vectors.
  void apply(const Eigen::VectorXd& v, Eigen::VectorXd& out) const
  {
    if (d_ == 1) {
      Eigen::ArrayXd vals = (synth_ * v).array();
      Eigen::ArrayXd pw = vals;
      for (int k = 1; k < q_; ++k) pw *= vals;
      out.noalias() = analyze_ * pw.matrix();
      out *= coeff_;
      return;
    }
    const int N = plan_->output_truncation();
    SpectralField f(d_, N);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = v[Eigen::Index(i)];
    auto r = plan_->apply(f);
    out.resize(Eigen::Index(r.size()));
    for (std::size_t i = 0; i < r.size(); ++i) out[Eigen::Index(i)] = coeff_ * r[i].real();
  }

 private:
  int d_;
  int q_;
  double coeff_;
  Eigen::MatrixXd synth_, analyze_;
  std::unique_ptr<NonlinearPowerPlan> plan_;
};

/// Strang splitting: exact half phase e^{i dt/2 Lambda_m}, a classical RK4 step
/// of the nonlinear part u' = -i F(Lambda_m^{-1} Re u), exact half phase.
class Stepper {
 public:
  Stepper(const EvolveConfig& cfg)
      : cfg_(cfg)
      , dim_(field_layout(cfg.d, cfg.N)->size())
      , omega_(Eigen::Index(dim_))
  {
    cfg.validate();
    const auto& lay = *field_layout(cfg.d, cfg.N);
    for (std::size_t i = 0; i < dim_; ++i) omega_[Eigen::Index(i)] = lambda_m(cfg.m, lay.indices[i].level(), cfg.d);
    if (cfg.sign != 0) power_ = std::make_unique<RealPower>(cfg.d, cfg.N, cfg.kappa + 1, double(cfg.sign));
    set_dt(cfg.dt);
  }

  void set_dt(double dt)
  {
    dt_ = dt;
    half_phase_.resize(Eigen::Index(dim_));
    for (std::size_t i = 0; i < dim_; ++i) half_phase_[Eigen::Index(i)] = std::polar(1.0, 0.5 * dt * omega_[Eigen::Index(i)]);
  }
  double dt() const { return dt_; }
  const Eigen::VectorXd& omega() const { return omega_; }

  /// Right-hand side of the nonlinear part: -i F(Lambda^{-1} Re u).
  void nonlinear_rhs(const Eigen::VectorXcd& u, Eigen::VectorXcd& out) const
  {
    out.resize(u.size());
    if (!power_) {
      out.setZero();
      return;
    }
    Eigen::VectorXd v = u.real().cwiseQuotient(omega_);
    Eigen::VectorXd F;
    power_->apply(v, F);
    out = cplx(0.0, -1.0) * F.cast<cplx>();
  }

  void step(Eigen::VectorXcd& u) const
  {
    u = u.cwiseProduct(half_phase_);
    if (power_) {
      Eigen::VectorXcd k1, k2, k3, k4;
      nonlinear_rhs(u, k1);
      nonlinear_rhs(u + (0.5 * dt_) * k1, k2);
      nonlinear_rhs(u + (0.5 * dt_) * k2, k3);
      nonlinear_rhs(u + dt_ * k3, k4);
      u += (dt_ / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    u = u.cwiseProduct(half_phase_);
    if (!u.allFinite()) fail(ErrorKind::step_failure, "step: non-finite coefficient");
  }

  SpectralField step(const SpectralField& u) const
  {
    auto x = to_vector(u);
    step(x);
    return from_vector(x);
  }

  Eigen::VectorXcd to_vector(const SpectralField& u) const
  {
    if (u.dim() != cfg_.d || u.truncation() != cfg_.N) fail(ErrorKind::usage, "step: field shape does not match the configuration");
    Eigen::VectorXcd x(Eigen::Index(u.size()));
    for (std::size_t i = 0; i < u.size(); ++i) x[Eigen::Index(i)] = u[i];
    return x;
  }
  SpectralField from_vector(const Eigen::VectorXcd& x) const
  {
    SpectralField u(cfg_.d, cfg_.N);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = x[Eigen::Index(i)];
    return u;
  }

 private:
  EvolveConfig cfg_;
  std::size_t dim_;
  Eigen::VectorXd omega_;
  Eigen::VectorXcd half_phase_;
  double dt_ = 0.0;
  std::unique_ptr<RealPower> power_;
};

/// One step of size dt from u.
inline SpectralField step(const SpectralField& u, double dt, const EvolveConfig& cfg)
{
  EvolveConfig c = cfg;
  c.dt = dt;
  return Stepper(c).step(u);
}

// ---------------------------------------------------------------------------
// Traces

enum class RunStatus { completed, exited, step_failure };

inline const char* to_string(RunStatus s)
{
  switch (s) {
    case RunStatus::completed: return "completed";
    case RunStatus::exited: return "exited";
    case RunStatus::step_failure: return "step-failure";
  }
  return "unknown";
}

struct TraceRow {
  double t = 0.0;
  double theta_s = 0.0;
  double theta_mod = std::numeric_limits<double>::quiet_NaN();
  double hs_norm = 0.0;
  double l2_norm = 0.0;
  double dt_used = 0.0;
};

struct EnergyTrace {
  std::vector<TraceRow> rows;
  RunStatus status = RunStatus::completed;
  std::optional<double> exit_time;
  std::string failure_reason;
  /// Largest share of the H^s mass seen in the top quartile of levels.
  double top_band_fraction = 0.0;
  bool truncation_suspect = false;
  std::uint64_t steps = 0;
  SpectralField final_state;
};

inline constexpr double kTruncationSuspectShare = 1e-8;

/// Share of sum_n lambda_n^{2s} ||Pi_n u||^2 carried by levels above 3N/4.
inline double top_band_fraction(const SpectralField& u, double s)
{
  const int N = u.truncation();
  double top = 0.0, all = 0.0;
  for (int n = 0; n <= N; ++n) {
    const double w = std::pow(double(eig_lambda_sq(n, u.dim())), s) * u.level_norm_sq(n);
    all += w;
    if (4 * n > 3 * N) top += w;
  }
  return all > 0.0 ? top / all : 0.0;
}

struct EvolveOptions {
  /// When set, theta_mod is recorded with these tensors (d = 1).
  const NormalForm* normal_form = nullptr;
  /// Replaces random_unit_data when set.
  std::optional<SpectralField> initial;
  /// Disables the K epsilon exit (drift runs).
  bool no_exit = false;
};

inline SpectralField initial_state(const EvolveConfig& cfg)
{
  auto [v0, v1] = random_unit_data(cfg.s, cfg.d, cfg.N, cfg.seed);
  return to_first_order(v0, v1, cfg.m, cfg.epsilon);
}

inline EnergyTrace evolve(const EvolveConfig& cfg, const EvolveOptions& opt = {})
{
  cfg.validate();
  Stepper st(cfg);
  SpectralField u0 = opt.initial ? *opt.initial : initial_state(cfg);
  Eigen::VectorXcd x = st.to_vector(u0);

  EnergyTrace tr;
  const double bound = cfg.K * cfg.epsilon;
  auto record = [&](double t, const SpectralField& u) {
    TraceRow r;
    r.t = t;
    r.theta_s = theta_energy(u, cfg.m, cfg.s);
    if (opt.normal_form) r.theta_mod = modified_energy(u, *opt.normal_form);
    r.hs_norm = sobolev_norm(u, cfg.s);
    r.l2_norm = u.l2_norm();
    r.dt_used = cfg.dt;
    tr.rows.push_back(r);
    tr.top_band_fraction = std::max(tr.top_band_fraction, top_band_fraction(u, cfg.s));
  };

  record(0.0, u0);
  const auto total = std::uint64_t(std::ceil(cfg.t_max / cfg.dt - 1e-9));
  const auto stride = std::max<std::uint64_t>(1, std::uint64_t(std::llround(cfg.output_interval / cfg.dt)));
  const auto& lay = *field_layout(cfg.d, cfg.N);
  std::vector<double> hs_w(lay.size());
  for (std::size_t i = 0; i < lay.size(); ++i) hs_w[i] = std::pow(double(eig_lambda_sq(lay.indices[i].level(), cfg.d)), cfg.s);

  double hs_prev = sobolev_norm(u0, cfg.s);
  for (std::uint64_t k = 1; k <= total; ++k) {
    try {
      st.step(x);
    } catch (const Error& e) {
      tr.status = RunStatus::step_failure;
      tr.failure_reason = e.what();
      tr.steps = k - 1;
      tr.final_state = st.from_vector(x);
      tr.truncation_suspect = tr.top_band_fraction >= kTruncationSuspectShare;
      return tr;
    }
    const double t = double(k) * cfg.dt;
    bool out = false;
    double hs = 0.0;
    if (!opt.no_exit) {
      for (std::size_t i = 0; i < lay.size(); ++i) hs += hs_w[i] * std::norm(x[Eigen::Index(i)]);
      hs = std::sqrt(hs);
      out = hs > bound;
    }
    if (out || k % stride == 0 || k == total) record(t, st.from_vector(x));
    if (out) {
      tr.status = RunStatus::exited;
      // Crossing located by linear interpolation of the norm over the last step.
      tr.exit_time = t - cfg.dt * (hs - bound) / (hs - hs_prev);
      tr.steps = k;
      break;
    }
    tr.steps = k;
    hs_prev = hs;
  }
  tr.final_state = st.from_vector(x);
  tr.truncation_suspect = tr.top_band_fraction >= kTruncationSuspectShare;
  return tr;
}

// ---------------------------------------------------------------------------
// Lifetime

inline constexpr double kLifetimeCap = 1e6;

struct LifetimeResult {
  double epsilon = 0.0;
  double T = 0.0;
  bool censored = false;
  RunStatus status = RunStatus::completed;
  bool truncation_suspect = false;
  double top_band_fraction = 0.0;
  std::uint64_t steps = 0;
  EnergyTrace trace;
};

/// Exit time under the K epsilon criterion, or the horizon min(t_max, 1e6) if
/// the solution never leaves (censored).
inline LifetimeResult lifetime(const EvolveConfig& cfg)
{
  EvolveConfig c = cfg;
  c.t_max = std::min(cfg.t_max, kLifetimeCap);
  c.output_interval = std::max(cfg.output_interval, c.t_max / 1000.0);
  auto tr = evolve(c);
  LifetimeResult r;
  r.epsilon = cfg.epsilon;
  r.status = tr.status;
  r.steps = tr.steps;
  r.truncation_suspect = tr.truncation_suspect;
  r.top_band_fraction = tr.top_band_fraction;
  if (tr.status == RunStatus::exited) {
    r.T = *tr.exit_time;
  } else {
    r.T = tr.rows.back().t;
    r.censored = true;
  }
  r.trace = std::move(tr);
  return r;
}

struct SlopeFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  /// Half-width of the 95% t-interval; NaN with fewer than three points.
  double ci95 = std::numeric_limits<double>::quiet_NaN();
  std::size_t points = 0;
};

inline SlopeFit fit_slope(const std::vector<double>& x, const std::vector<double>& y)
{
  SlopeFit f;
  f.points = x.size();
  if (x.size() < 2) return f;
  std::tie(f.intercept, f.slope) = least_squares(x, y);
  if (x.size() >= 3) {
    const double n = double(x.size());
    double mx = 0.0;
    for (double v : x) mx += v / n;
    double sxx = 0.0, rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxx += (x[i] - mx) * (x[i] - mx);
      const double r = y[i] - f.intercept - f.slope * x[i];
      rss += r * r;
    }
    const double se = std::sqrt(rss / (n - 2.0) / sxx);
    boost::math::students_t dist(n - 2.0);
    f.ci95 = boost::math::quantile(boost::math::complement(dist, 0.025)) * se;
  }
  return f;
}

struct LifetimeScan {
  std::vector<LifetimeResult> rows;
  /// log T vs log(1/epsilon) over uncensored points.
  SlopeFit fit;
  /// T non-decreasing as epsilon decreases (ties from censoring allowed).
  bool monotone = true;
};

inline LifetimeScan lifetime_scan(const EvolveConfig& cfg, std::vector<double> eps_grid, int jobs = 1)
{
  if (eps_grid.empty()) fail(ErrorKind::usage, "lifetime: empty epsilon grid");
  LifetimeScan sc;
  sc.rows.resize(eps_grid.size());
  parallel_for(eps_grid.size(), jobs, [&](std::size_t i) {
    EvolveConfig c = cfg;
    c.epsilon = eps_grid[i];
    sc.rows[i] = lifetime(c);
  });
  std::vector<std::size_t> order(eps_grid.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return eps_grid[a] > eps_grid[b]; });
  for (std::size_t k = 1; k < order.size(); ++k)
    if (sc.rows[order[k]].T < sc.rows[order[k - 1]].T) sc.monotone = false;
  std::vector<double> lx, ly;
  for (const auto& r : sc.rows)
    if (!r.censored) {
      lx.push_back(std::log(1.0 / r.epsilon));
      ly.push_back(std::log(r.T));
    }
  sc.fit = fit_slope(lx, ly);
  return sc;
}

// ---------------------------------------------------------------------------
// Drift

struct DriftRow {
  double epsilon = 0.0;
  /// max_{t <= T} |value(t) - value(0)| / T.
  double raw_rate = 0.0;
  double mod_rate = 0.0;
  double theta0 = 0.0;
  double mod0 = 0.0;
  RunStatus status = RunStatus::completed;
  std::size_t tensor_entries = 0;
  EnergyTrace trace;
};

struct DriftReport {
  std::vector<DriftRow> rows;
  SlopeFit raw_fit, mod_fit;
  double excess() const { return mod_fit.slope - raw_fit.slope; }
};

/// Evolves the same unit data at each epsilon, recording Theta_s and the
/// modified energy, and fits both drift rates against epsilon (log-log).
/// Tensors are assembled once; only the cutoff split depends on epsilon.
inline DriftReport drift_report(const EvolveConfig& cfg, const std::vector<double>& eps_grid, int jobs = 1,
                                double floor = 1e-12)
{
  if (cfg.d != 1) fail(ErrorKind::usage, "drift: the modified energy is implemented for d = 1");
  if (eps_grid.empty()) fail(ErrorKind::usage, "drift: empty epsilon grid");
  cfg.validate();
  const auto F = cfg.nonlinearity();
  std::vector<TensorFamily> fams;
  if (!F.is_zero()) fams = assemble_tensors(F, cfg.s, cfg.m, cfg.cutoff(), cfg.N, jobs);

  DriftReport rep;
  rep.rows.resize(eps_grid.size());
  parallel_for(eps_grid.size(), jobs, [&](std::size_t i) {
    EvolveConfig c = cfg;
    c.epsilon = eps_grid[i];
    c.validate();
    auto nf = build_normal_form(F, c.s, c.m, c.cutoff(), c.N, fams, floor);
    EvolveOptions opt;
    opt.normal_form = &nf;
    opt.no_exit = true;
    auto tr = evolve(c, opt);
    DriftRow& r = rep.rows[i];
    r.epsilon = c.epsilon;
    r.status = tr.status;
    r.tensor_entries = nf.entry_count();
    r.theta0 = tr.rows.front().theta_s;
    r.mod0 = tr.rows.front().theta_mod;
    const double T = tr.rows.back().t;
    double dr = 0.0, dm = 0.0;
    for (const auto& row : tr.rows) {
      dr = std::max(dr, std::fabs(row.theta_s - r.theta0));
      dm = std::max(dm, std::fabs(row.theta_mod - r.mod0));
    }
    r.raw_rate = T > 0.0 ? dr / T : 0.0;
    r.mod_rate = T > 0.0 ? dm / T : 0.0;
    r.trace = std::move(tr);
  });
  std::vector<double> lx, lr, lm;
  for (const auto& r : rep.rows) {
    if (!(r.raw_rate > 0.0) || !(r.mod_rate > 0.0)) continue;
    lx.push_back(std::log(r.epsilon));
    lr.push_back(std::log(r.raw_rate));
    lm.push_back(std::log(r.mod_rate));
  }
  rep.raw_fit = fit_slope(lx, lr);
  rep.mod_fit = fit_slope(lx, lm);
  return rep;
}

}  // namespace kgnf
