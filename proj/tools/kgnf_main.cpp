// kgnf command-line driver. Every subcommand writes its outputs plus
// manifest.json into --out.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kgnf/evolve.hpp"
#include "kgnf/io.hpp"
#include "kgnf/normal_form.hpp"
#include "kgnf/product_bounds.hpp"
#include "kgnf/small_divisors.hpp"

using namespace kgnf;
namespace fs = std::filesystem;

namespace {

struct OptSpec {
  std::string key;
  std::string fallback;
  std::string help;
};

const std::vector<OptSpec> kCommon = {
    {"seed", "1", "random seed"},
    {"out", "./out", "output directory"},
    {"jobs", "1", "worker threads"},
};

const std::vector<OptSpec> kEvolveOpts = {
    {"m", "auto", "mass: auto or a value"},
    {"kappa", "2", "nonlinearity degree, F(v) = v^(kappa+1)"},
    {"s", "8", "Sobolev index"},
    {"epsilon", "0.1", "data size"},
    {"epsilon-grid", "", "comma-separated epsilon values (overrides --epsilon)"},
    {"N", "48", "truncation level"},
    {"d", "1", "dimension"},
    {"dt", "0.0125", "time step"},
    {"t-max", "1000", "final time"},
    {"K", "2", "exit once the H^s norm passes K epsilon"},
    {"theta", "0.333333333333333333", "cutoff exponent"},
    {"sign", "1", "sign of the nonlinearity (0 switches it off)"},
    {"output-interval", "1", "time between trace rows"},
    {"threshold", "1e-6", "certificate threshold for --m auto"},
    {"box", "12", "certificate box for --m auto"},
};

std::map<std::string, std::vector<OptSpec>> command_specs()
{
  std::map<std::string, std::vector<OptSpec>> c;
  c["product-scan"] = {
      {"p", "1", "multilinear degree"},
      {"box", "8", "max level B"},
      {"nu", "1", "exponent on (1 + sqrt n_i2)"},
      {"N-exponent", "2", "decay exponent N"},
      {"d", "1", "dimension"},
      {"trials", "1", "random components per tuple (d >= 2)"},
      {"burn-in", "6", "box size after which the max must stop growing"},
  };
  c["divisor-scan"] = {
      {"m", "auto", "mass: auto or a value"},
      {"p", "2", "multilinear degree"},
      {"ell", "1", "sign split"},
      {"box", "12", "max level B"},
      {"d", "1", "dimension"},
      {"N0", "4", "weight exponent"},
      {"rho", "0.1", "weight exponent offset"},
      {"interval", "1,2", "mass interval for --m auto"},
      {"threshold", "1e-6", "certificate threshold for --m auto"},
  };
  c["bad-mass"] = {
      {"p", "2", "multilinear degree"},
      {"ell", "1", "sign split"},
      {"box", "12", "max level B"},
      {"alpha-list", "1e-2,1e-3,1e-4", "comma-separated thresholds"},
      {"samples", "10000", "Monte-Carlo samples"},
      {"interval", "1,2", "mass interval J"},
      {"N0", "4", "weight exponent"},
      {"rho", "0.1", "weight exponent offset"},
  };
  c["pick-mass"] = {
      {"kappa", "2", "covers p = kappa .. 2 kappa - 1, every ell"},
      {"box", "12", "max level B"},
      {"threshold", "1e-6", "minimum normalized divisor constant"},
      {"interval", "1,2", "mass interval J"},
      {"max-attempts", "100", "rejection-sampling budget"},
      {"N0", "4", "weight exponent"},
      {"rho", "0.1", "weight exponent offset"},
  };
  c["evolve"] = kEvolveOpts;
  c["evolve"].push_back({"modified", "0", "record the modified energy (1 = on, d = 1)"});
  c["lifetime"] = kEvolveOpts;
  c["lifetime"][4].fallback = "0.2,0.14,0.1,0.07,0.05";
  c["drift"] = kEvolveOpts;
  c["drift"][4].fallback = "0.2,0.1,0.05";
  c["drift"][5].fallback = "32";
  c["drift"][8].fallback = "100";
  c["drift"][12].fallback = "0.5";
  for (auto& [name, v] : c) v.insert(v.end(), kCommon.begin(), kCommon.end());
  return c;
}

/// Merged configuration: flag > config file > default.
class Settings {
 public:
  std::map<std::string, std::string> values;

  const std::string& str(const std::string& k) const { return values.at(k); }
  bool has(const std::string& k) const { return !values.at(k).empty(); }

  double real(const std::string& k) const
  {
    const auto v = parse_double_list(str(k));
    if (v.size() != 1) fail(ErrorKind::usage, "--" + k + ": expected one number");
    return v[0];
  }

  long long integer(const std::string& k) const
  {
    const std::string& s = str(k);
    std::size_t used = 0;
    long long x = 0;
    try {
      x = std::stoll(s, &used);
    } catch (const std::exception&) {
      fail(ErrorKind::usage, "--" + k + ": not an integer: '" + s + "'");
    }
    if (used != s.size()) fail(ErrorKind::usage, "--" + k + ": not an integer: '" + s + "'");
    return x;
  }

  int small_int(const std::string& k, long long lo, long long hi) const
  {
    const auto x = integer(k);
    if (x < lo || x > hi)
      fail(ErrorKind::usage, "--" + k + " must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return int(x);
  }

  std::vector<double> list(const std::string& k) const { return parse_double_list(str(k)); }

  std::pair<double, double> interval(const std::string& k) const
  {
    const auto v = list(k);
    if (v.size() != 2 || !(v[0] < v[1])) fail(ErrorKind::usage, "--" + k + ": expected lo,hi with lo < hi");
    return {v[0], v[1]};
  }

  std::uint64_t seed() const
  {
    const auto x = integer("seed");
    if (x < 0) fail(ErrorKind::usage, "--seed must be >= 0");
    return std::uint64_t(x);
  }

  /// Numbers as numbers, everything else as strings.
  json snapshot() const
  {
    json j = json::object();
    for (const auto& [k, v] : values) {
      std::size_t used = 0;
      try {
        const long long n = std::stoll(v, &used);
        if (used == v.size()) {
          j[k] = n;
          continue;
        }
      } catch (const std::exception&) {
      }
      try {
        const double x = std::stod(v, &used);
        if (used == v.size()) {
          j[k] = x;
          continue;
        }
      } catch (const std::exception&) {
      }
      j[k] = v;
    }
    return j;
  }
};

struct Run {
  Settings cfg;
  RunManifest manifest;

  void add_output(const std::string& name) { manifest.outputs.push_back(name); }
  fs::path path(const std::string& name) const { return manifest.out_dir / name; }

  std::ofstream open(const std::string& name)
  {
    std::ofstream os(path(name));
    if (!os) fail(ErrorKind::usage, "cannot write " + path(name).string());
    add_output(name);
    return os;
  }
};

std::string eps_tag(double eps) { return "eps_" + num(eps); }

// ---------------------------------------------------------------------------

void cmd_product_scan(Run& run)
{
  const auto& c = run.cfg;
  RatioScanConfig rc;
  rc.p = c.small_int("p", 1, 8);
  rc.box = c.small_int("box", 0, 64);
  rc.nu = c.real("nu");
  rc.N_exponent = c.small_int("N-exponent", 0, 64);
  rc.d = c.small_int("d", 1, 3);
  rc.trials = c.small_int("trials", 1, 1000);
  rc.burn_in = c.small_int("burn-in", 0, 64);
  rc.seed = c.seed();
  rc.jobs = c.small_int("jobs", 1, 1024);
  if (!(rc.nu >= 0.0)) fail(ErrorKind::usage, "--nu must be >= 0");
  const auto r = bound_ratio_scan(rc);
  {
    auto os = run.open("product_scan.csv");
    write_ratio_csv(os, r);
  }
  const auto summary = ratio_summary(r);
  run.open("product_scan_summary.json") << summary.dump(2) << "\n";
  run.manifest.extra = {{"max_ratio", summary["max_ratio"]}, {"argmax", r.argmax.levels}, {"rows", r.rows.size()}};
}

DivisorConfig divisor_config(const Settings& c)
{
  DivisorConfig d;
  d.N0 = c.small_int("N0", 0, 64);
  d.rho = c.real("rho");
  return d;
}

/// Resolves --m; auto picks a mass and stores its certificate.
double resolve_mass(Run& run, std::vector<DivisorRequirement> reqs, int box, double lo, double hi)
{
  const auto& c = run.cfg;
  if (c.str("m") != "auto") {
    const double m = c.real("m");
    if (!(m > 0.0)) fail(ErrorKind::usage, "--m must be > 0 or auto");
    return m;
  }
  PickMassConfig pc;
  pc.J_lo = lo;
  pc.J_hi = hi;
  pc.box = box;
  pc.threshold = c.real("threshold");
  pc.seed = c.seed();
  pc.requirements = std::move(reqs);
  const auto cert = pick_nonresonant_mass(pc);
  run.manifest.certificate = certificate_json(cert);
  return cert.m;
}

void cmd_divisor_scan(Run& run)
{
  const auto& c = run.cfg;
  const int p = c.small_int("p", 1, 8);
  const int ell = c.small_int("ell", 0, p + 1);
  const int box = c.small_int("box", 0, 64);
  const int d = c.small_int("d", 1, 3);
  const auto dc = divisor_config(c);
  const auto [lo, hi] = c.interval("interval");
  const double m = resolve_mass(run, {{p, std::min(ell, p)}}, std::max(box, 1), lo, hi);
  std::vector<DivisorReport> rows(std::size_t(box) + 1);
  parallel_for(rows.size(), c.small_int("jobs", 1, 1024), [&](std::size_t b) { rows[b] = min_divisor_scan(m, p, ell, int(b), d, dc); });
  {
    auto os = run.open("divisor_scan.csv");
    write_divisor_csv(os, rows);
  }
  run.manifest.extra = {{"m", m}, {"normalized_c", num_json(rows.back().normalized_c)}};
}

void cmd_bad_mass(Run& run)
{
  const auto& c = run.cfg;
  BadMassConfig bc;
  bc.p = c.small_int("p", 1, 8);
  bc.ell = c.small_int("ell", 0, bc.p + 1);
  bc.box = c.small_int("box", 0, 64);
  bc.alphas = c.list("alpha-list");
  for (double a : bc.alphas)
    if (!(a >= 0.0)) fail(ErrorKind::usage, "--alpha-list values must be >= 0");
  const auto samples = c.integer("samples");
  if (samples < 1) fail(ErrorKind::usage, "--samples must be >= 1");
  bc.samples = std::size_t(samples);
  std::tie(bc.J_lo, bc.J_hi) = c.interval("interval");
  bc.N0 = c.small_int("N0", 0, 64);
  bc.rho = c.real("rho");
  bc.seed = c.seed();
  bc.jobs = c.small_int("jobs", 1, 1024);
  const auto r = bad_mass_measure(bc);
  {
    auto os = run.open("bad_mass.csv");
    write_bad_mass_csv(os, r);
  }
  run.manifest.extra = {{"log_slope", num_json(r.log_slope)}};
}

void cmd_pick_mass(Run& run)
{
  const auto& c = run.cfg;
  PickMassConfig pc;
  pc.box = c.small_int("box", 1, 64);
  pc.threshold = c.real("threshold");
  std::tie(pc.J_lo, pc.J_hi) = c.interval("interval");
  pc.max_attempts = c.small_int("max-attempts", 1, 1000000);
  pc.divisor = divisor_config(c);
  pc.seed = c.seed();
  pc.requirements = requirements_for_kappa(c.small_int("kappa", 1, 8));
  const auto cert = pick_nonresonant_mass(pc);
  run.manifest.certificate = certificate_json(cert);
  run.open("certificate.json") << run.manifest.certificate.dump(2) << "\n";
  run.manifest.extra = {{"m", cert.m}, {"attempts", cert.attempts}};
}

EvolveConfig evolve_config(Run& run)
{
  const auto& c = run.cfg;
  EvolveConfig e;
  e.kappa = c.small_int("kappa", 1, 8);
  e.s = c.real("s");
  e.epsilon = c.real("epsilon");
  e.N = c.small_int("N", 0, 4096);
  e.d = c.small_int("d", 1, 3);
  e.dt = c.real("dt");
  e.t_max = c.real("t-max");
  e.K = c.real("K");
  e.theta = c.real("theta");
  e.sign = c.small_int("sign", -1, 1);
  e.output_interval = c.real("output-interval");
  e.seed = c.seed();
  e.m = 1.0;  // placeholder so validation can run before the mass is picked
  e.validate();
  e.m = resolve_mass(run, requirements_for_kappa(e.kappa), c.small_int("box", 1, 64), 1.0, 2.0);
  run.manifest.extra["evolve_config"] = evolve_config_json(e);
  return e;
}

std::vector<double> epsilon_values(const Settings& c)
{
  auto v = c.has("epsilon-grid") ? c.list("epsilon-grid") : std::vector<double>{c.real("epsilon")};
  for (double e : v)
    if (!(e >= 0.0 && e < 0.5)) fail(ErrorKind::usage, "epsilon must lie in [0, 1/2)");
  return v;
}

json trace_summary(const EnergyTrace& tr, double eps)
{
  return json{{"epsilon", eps},
              {"status", to_string(tr.status)},
              {"exit_time", tr.exit_time ? json(*tr.exit_time) : json(nullptr)},
              {"steps", tr.steps},
              {"failure_reason", tr.failure_reason},
              {"top_band_fraction", tr.top_band_fraction},
              {"truncation_suspect", tr.truncation_suspect}};
}

/// Nonzero when any run hit a step failure; outputs are still written.
std::optional<std::string> first_failure(const std::vector<const EnergyTrace*>& traces, const std::vector<double>& eps)
{
  for (std::size_t i = 0; i < traces.size(); ++i)
    if (traces[i]->status == RunStatus::step_failure)
      return "step-failure at epsilon " + num(eps[i]) + ": " + traces[i]->failure_reason;
  return std::nullopt;
}

std::optional<std::string> cmd_evolve(Run& run)
{
  const auto& c = run.cfg;
  const auto base = evolve_config(run);
  const auto grid = epsilon_values(c);
  const bool modified = c.small_int("modified", 0, 1) == 1;
  const int jobs = c.small_int("jobs", 1, 1024);

  std::vector<EnergyTrace> traces(grid.size());
  std::vector<TensorFamily> fams;
  if (modified) {
    if (base.d != 1) fail(ErrorKind::usage, "--modified needs d = 1");
    if (!base.nonlinearity().is_zero()) fams = assemble_tensors(base.nonlinearity(), base.s, base.m, base.cutoff(), base.N, jobs);
  }
  parallel_for(grid.size(), modified ? 1 : jobs, [&](std::size_t i) {
    EvolveConfig e = base;
    e.epsilon = grid[i];
    EvolveOptions opt;
    std::optional<NormalForm> nf;
    if (modified) {
      nf = build_normal_form(e.nonlinearity(), e.s, e.m, e.cutoff(), e.N, fams);
      opt.normal_form = &*nf;
    }
    traces[i] = evolve(e, opt);
  });

  json runs = json::array();
  std::vector<const EnergyTrace*> ptr;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const std::string tag = eps_tag(grid[i]);
    {
      auto os = run.open("trace_" + tag + ".csv");
      write_trace_csv(os, traces[i]);
    }
    save_field(run.path("final_" + tag + ".bin"), traces[i].final_state);
    run.add_output("final_" + tag + ".bin");
    run.add_output("final_" + tag + ".bin.json");
    runs.push_back(trace_summary(traces[i], grid[i]));
    ptr.push_back(&traces[i]);
  }
  run.open("evolve_summary.json") << json{{"runs", runs}}.dump(2) << "\n";
  run.manifest.extra["runs"] = runs;
  return first_failure(ptr, grid);
}

std::optional<std::string> cmd_lifetime(Run& run)
{
  const auto& c = run.cfg;
  const auto base = evolve_config(run);
  const auto grid = epsilon_values(c);
  const auto scan = lifetime_scan(base, grid, c.small_int("jobs", 1, 1024));

  {
    auto os = run.open("lifetime.csv");
    write_lifetime_csv(os, scan);
  }
  std::vector<const EnergyTrace*> ptr;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    {
      auto os = run.open("trace_" + eps_tag(grid[i]) + ".csv");
      write_trace_csv(os, scan.rows[i].trace);
    }
    ptr.push_back(&scan.rows[i].trace);
  }
  const json fit = {{"fit", slope_json(scan.fit)},
                    {"x", "log(1/epsilon)"},
                    {"y", "log(T)"},
                    {"censored_excluded", true},
                    {"monotone", scan.monotone},
                    {"reference_slope", 4.0 * base.kappa / 3.0},
                    {"cap", std::min(base.t_max, kLifetimeCap)}};
  run.open("lifetime_fit.json") << fit.dump(2) << "\n";
  run.manifest.extra["lifetime_fit"] = fit;
  return first_failure(ptr, grid);
}

std::optional<std::string> cmd_drift(Run& run)
{
  const auto& c = run.cfg;
  const auto base = evolve_config(run);
  const auto grid = epsilon_values(c);
  const auto rep = drift_report(base, grid, c.small_int("jobs", 1, 1024));

  {
    auto os = run.open("drift.csv");
    write_drift_csv(os, rep);
  }
  std::vector<const EnergyTrace*> ptr;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    {
      auto os = run.open("trace_" + eps_tag(grid[i]) + ".csv");
      write_trace_csv(os, rep.rows[i].trace);
    }
    ptr.push_back(&rep.rows[i].trace);
  }
  const json fit = {{"raw", slope_json(rep.raw_fit)},
                    {"modified", slope_json(rep.mod_fit)},
                    {"excess", num_json(rep.excess())},
                    {"x", "log(epsilon)"},
                    {"y", "log(drift rate)"}};
  run.open("drift_fit.json") << fit.dump(2) << "\n";
  run.manifest.extra["drift_fit"] = fit;
  return first_failure(ptr, grid);
}

int report(ErrorKind k, const std::string& msg)
{
  std::string one = msg;
  for (auto& ch : one)
    if (ch == '\n') ch = ' ';
  std::cerr << "kgnf: error: " << to_string(k) << ": " << one << "\n";
  return Error(k, "").is_numerical() ? 3 : 2;
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Klein-Gordon normal-form experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  const auto specs = command_specs();
  std::map<std::string, std::map<std::string, std::string>> flags;
  std::map<std::string, std::vector<std::string>> mass_flags;
  std::map<std::string, CLI::Option*> m_opts;
  std::map<std::string, std::string> config_paths;
  std::map<std::string, CLI::App*> subs;
  std::map<std::string, std::map<std::string, CLI::Option*>> opts;

  const std::map<std::string, std::string> about = {
      {"product-scan", "scan the multilinear bound ratio over a box of level tuples"},
      {"divisor-scan", "minimum small divisor for box sizes 0..B"},
      {"bad-mass", "Monte-Carlo measure of masses with a small divisor"},
      {"pick-mass", "draw a non-resonant mass and write its certificate"},
      {"evolve", "integrate the equation and write energy traces"},
      {"lifetime", "exit times over an epsilon grid with a log-log fit"},
      {"drift", "raw vs modified energy drift over an epsilon grid"},
  };
  for (const auto& [name, spec] : specs) {
    auto* sub = app.add_subcommand(name, about.at(name));
    subs[name] = sub;
    sub->add_option("--config", config_paths[name], "key = value file; flags override it");
    for (const auto& o : spec) {
      if (o.key == "m") {
        m_opts[name] = sub->add_option("--m", mass_flags[name], o.help + " (default " + o.fallback + ")")
                           ->expected(1)
                           ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
        continue;
      }
      std::string help = o.help;
      if (!o.fallback.empty()) help += " (default " + o.fallback + ")";
      opts[name][o.key] = sub->add_option("--" + o.key, flags[name][o.key], help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(ErrorKind::usage, e.what());
  }

  std::string name;
  for (const auto& [n, sub] : subs)
    if (sub->parsed()) name = n;

  Run run;
  try {
    const auto& spec = specs.at(name);
    std::set<std::string> known;
    for (const auto& o : spec) {
      known.insert(o.key);
      run.cfg.values[o.key] = o.fallback;
    }
    if (!config_paths[name].empty()) {
      for (const auto& [k, v] : parse_config_file(config_paths[name])) {
        if (!known.count(k)) fail(ErrorKind::usage, "config: unknown key '" + k + "' for " + name);
        run.cfg.values[k] = v;
      }
    }
    for (const auto& [k, opt] : opts[name])
      if (opt->count() > 0) run.cfg.values[k] = flags[name][k];
    if (const auto& ms = mass_flags[name]; !ms.empty()) {
      std::set<std::string> distinct(ms.begin(), ms.end());
      if (distinct.size() > 1) fail(ErrorKind::usage, "conflicting --m values (auto and an explicit mass cannot both be given)");
      run.cfg.values["m"] = ms.front();
    }

    run.manifest.command = name;
    run.manifest.started = utc_timestamp();
    run.manifest.seed = run.cfg.seed();
    run.manifest.config = run.cfg.snapshot();
    run.manifest.out_dir = run.cfg.str("out");
    std::error_code ec;
    fs::create_directories(run.manifest.out_dir, ec);
    if (ec || !fs::is_directory(run.manifest.out_dir)) fail(ErrorKind::usage, "cannot create output directory " + run.cfg.str("out"));

    std::optional<std::string> numerical;
    if (name == "product-scan") cmd_product_scan(run);
    else if (name == "divisor-scan") cmd_divisor_scan(run);
    else if (name == "bad-mass") cmd_bad_mass(run);
    else if (name == "pick-mass") cmd_pick_mass(run);
    else if (name == "evolve") numerical = cmd_evolve(run);
    else if (name == "lifetime") numerical = cmd_lifetime(run);
    else if (name == "drift") numerical = cmd_drift(run);

    run.manifest.finished = utc_timestamp();
    run.manifest.write();
    if (numerical) return report(ErrorKind::step_failure, *numerical);
    return 0;
  } catch (const Error& e) {
    return report(e.kind(), e.what());
  } catch (const std::exception& e) {
    return report(ErrorKind::numerical_breakdown, e.what());
  }
}
