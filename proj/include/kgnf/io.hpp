#pragma once

// File formats: binary field container, CSV tables, JSON summaries, run
// manifests with content digests, key = value config files.

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "kgnf/errors.hpp"
#include "kgnf/evolve.hpp"
#include "kgnf/field.hpp"
#include "kgnf/normal_form.hpp"
#include "kgnf/product_bounds.hpp"
#include "kgnf/small_divisors.hpp"

namespace kgnf {

using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "kgnf 0.1.0";

// ---------------------------------------------------------------------------
// Field container
//
//   bytes 0..7    magic "KGNFFLD1"
//   u32           d
//   u32           N
//   8 bytes       ordering tag, NUL padded ("grlex")
//   u64           coefficient count
//   count x 2 f64 re, im interleaved
//
// All integers and floats little-endian.

inline constexpr char kFieldMagic[8] = {'K', 'G', 'N', 'F', 'F', 'L', 'D', '1'};

namespace detail {

template <class T>
void put_le(std::ostream& os, T v)
{
  std::array<unsigned char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  os.write(reinterpret_cast<const char*>(b.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& is)
{
  std::array<unsigned char, sizeof(T)> b;
  if (!is.read(reinterpret_cast<char*>(b.data()), sizeof(T))) fail(ErrorKind::format, "field file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

inline std::array<char, 8> ordering_bytes(const std::string& tag)
{
  if (tag.size() > 8) fail(ErrorKind::usage, "ordering tag longer than 8 bytes");
  std::array<char, 8> b{};
  std::memcpy(b.data(), tag.data(), tag.size());
  return b;
}

}  // namespace detail

inline void write_field(std::ostream& os, const SpectralField& u, const std::string& ordering = kOrderingTag)
{
  os.write(kFieldMagic, 8);
  detail::put_le<std::uint32_t>(os, std::uint32_t(u.dim()));
  detail::put_le<std::uint32_t>(os, std::uint32_t(u.truncation()));
  const auto tag = detail::ordering_bytes(ordering);
  os.write(tag.data(), 8);
  detail::put_le<std::uint64_t>(os, u.size());
  for (const auto& c : u.coeffs()) {
    detail::put_le<double>(os, c.real());
    detail::put_le<double>(os, c.imag());
  }
}

inline SpectralField read_field(std::istream& is)
{
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kFieldMagic, 8) != 0) fail(ErrorKind::format, "not a field file (bad magic)");
  const auto d = detail::get_le<std::uint32_t>(is);
  const auto N = detail::get_le<std::uint32_t>(is);
  std::array<char, 8> tag;
  if (!is.read(tag.data(), 8)) fail(ErrorKind::format, "field file truncated");
  if (tag != detail::ordering_bytes(kOrderingTag))
    fail(ErrorKind::format, "field ordering tag '" + std::string(tag.data(), strnlen(tag.data(), 8)) + "' is not '" +
                                kOrderingTag + "'");
  const auto count = detail::get_le<std::uint64_t>(is);
  if (d < 1 || d > 3) fail(ErrorKind::format, "field dimension out of range");
  SpectralField u{int(d), int(N)};
  if (count != u.size()) fail(ErrorKind::format, "coefficient count does not match (d, N)");
  for (auto& c : u.coeffs()) {
    const double re = detail::get_le<double>(is);
    const double im = detail::get_le<double>(is);
    c = {re, im};
  }
  return u;
}

inline json field_sidecar(const SpectralField& u)
{
  return json{{"format", "KGNFFLD1"},   {"endianness", "little"},     {"d", u.dim()},
              {"N", u.truncation()},    {"ordering", kOrderingTag},   {"count", u.size()},
              {"l2_norm", u.l2_norm()}, {"version", kVersion}};
}

/// Writes path and path + ".json".
inline void save_field(const std::filesystem::path& path, const SpectralField& u)
{
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::usage, "cannot write " + path.string());
  write_field(os, u);
  std::ofstream js(path.string() + ".json");
  js << field_sidecar(u).dump(2) << "\n";
}

inline SpectralField load_field(const std::filesystem::path& path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::usage, "cannot read " + path.string());
  return read_field(is);
}

// ---------------------------------------------------------------------------
// CSV and JSON writers

/// Shortest round-trip decimal form.
inline std::string num(double x)
{
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline json num_json(double x)
{
  if (std::isfinite(x)) return x;
  return nullptr;
}

inline void write_ratio_csv(std::ostream& os, const RatioScanReport& r)
{
  os << "tuple,mu,S,n_prime,integral,ratio\n";
  for (const auto& row : r.rows)
    os << row.tuple.str() << ',' << num(row.ms.mu) << ',' << num(row.ms.S) << ',' << row.ms.n_prime << ','
       << num(row.integral) << ',' << num(row.ratio) << '\n';
}

inline json ratio_summary(const RatioScanReport& r)
{
  json shell = json::array(), box = json::array();
  for (double x : r.shell_max) shell.push_back(num_json(x));
  for (double x : r.box_max) box.push_back(num_json(x));
  return json{{"p", r.cfg.p},
              {"box", r.cfg.box},
              {"nu", r.cfg.nu},
              {"N_exponent", r.cfg.N_exponent},
              {"d", r.cfg.d},
              {"seed", r.cfg.seed},
              {"burn_in", r.cfg.burn_in},
              {"rows", r.rows.size()},
              {"max_ratio", num_json(r.max_ratio)},
              {"argmax", r.argmax.levels},
              {"shell_max", shell},
              {"box_max", box},
              {"bounded_past_burn_in", r.bounded_past_burn_in}};
}

inline void write_divisor_csv(std::ostream& os, const std::vector<DivisorReport>& reports)
{
  os << "m,p,ell,box,min_abs,argmin,normalized_c,normalized_argmin,normalized_c_split,scanned,resonant_skipped\n";
  for (const auto& r : reports)
    os << num(r.m) << ',' << r.p << ',' << r.ell << ',' << r.box << ','
       << (r.min_abs ? num(*r.min_abs) : std::string("nan")) << ',' << r.argmin.str() << ',' << num(r.normalized_c)
       << ',' << r.normalized_argmin.str() << ',' << num(r.normalized_c_split) << ',' << r.scanned << ','
       << r.resonant_skipped << '\n';
}

inline void write_bad_mass_csv(std::ostream& os, const BadMassReport& r)
{
  os << "alpha,estimate,ci_halfwidth,samples,box\n";
  for (const auto& row : r.rows)
    os << num(row.alpha) << ',' << num(row.estimate) << ',' << num(row.ci_halfwidth) << ',' << row.samples << ','
       << row.box << '\n';
}

inline json certificate_json(const MassCertificate& c)
{
  json scans = json::array();
  for (const auto& s : c.scans)
    scans.push_back({{"p", s.p}, {"ell", s.ell}, {"normalized_c", num_json(s.normalized_c)},
                     {"argmin", s.normalized_argmin.levels}});
  return json{{"m", c.m},
              {"threshold", c.threshold},
              {"normalized_c", num_json(c.normalized_c)},
              {"box", c.box},
              {"seed", c.seed},
              {"attempts", c.attempts},
              {"interval", {c.J_lo, c.J_hi}},
              {"rho", c.cfg.rho},
              {"N0", c.cfg.N0},
              {"scans", scans}};
}

inline void write_trace_csv(std::ostream& os, const EnergyTrace& tr)
{
  os << "t,theta_s,theta_mod,hs_norm,l2_norm,dt_used\n";
  for (const auto& r : tr.rows)
    os << num(r.t) << ',' << num(r.theta_s) << ',' << num(r.theta_mod) << ',' << num(r.hs_norm) << ','
       << num(r.l2_norm) << ',' << num(r.dt_used) << '\n';
}

inline json slope_json(const SlopeFit& f)
{
  return json{{"slope", num_json(f.slope)}, {"intercept", num_json(f.intercept)}, {"ci95", num_json(f.ci95)},
              {"points", f.points}};
}

inline void write_lifetime_csv(std::ostream& os, const LifetimeScan& s)
{
  os << "epsilon,T,censored,status,steps,top_band_fraction,truncation_suspect\n";
  for (const auto& r : s.rows)
    os << num(r.epsilon) << ',' << num(r.T) << ',' << int(r.censored) << ',' << to_string(r.status) << ',' << r.steps
       << ',' << num(r.top_band_fraction) << ',' << int(r.truncation_suspect) << '\n';
}

inline void write_drift_csv(std::ostream& os, const DriftReport& r)
{
  os << "epsilon,raw_rate,mod_rate,theta0,mod0,status,tensor_entries\n";
  for (const auto& row : r.rows)
    os << num(row.epsilon) << ',' << num(row.raw_rate) << ',' << num(row.mod_rate) << ',' << num(row.theta0) << ','
       << num(row.mod0) << ',' << to_string(row.status) << ',' << row.tensor_entries << '\n';
}

inline json cutoff_json(const CutoffConfig& c)
{
  return json{{"r", c.r}, {"delta", c.delta}, {"theta", c.theta}, {"epsilon", c.epsilon}};
}

inline json evolve_config_json(const EvolveConfig& c)
{
  return json{{"kappa", c.kappa}, {"s", c.s},         {"m", c.m},         {"epsilon", c.epsilon},
              {"d", c.d},         {"N", c.N},         {"dt", c.dt},       {"t_max", c.t_max},
              {"K", c.K},         {"seed", c.seed},   {"theta", c.theta}, {"sign", c.sign},
              {"output_interval", c.output_interval}};
}

// ---------------------------------------------------------------------------
// Digests and manifests

inline std::string sha256_hex(const std::string& bytes)
{
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorKind::numerical_breakdown, "sha256 failed");
  std::ostringstream s;
  for (unsigned i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return s.str();
}

inline std::string sha256_file(const std::filesystem::path& p)
{
  std::ifstream is(p, std::ios::binary);
  if (!is) fail(ErrorKind::usage, "cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return sha256_hex(ss.str());
}

inline std::string utc_timestamp()
{
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

struct RunManifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  json certificate;  ///< null when no mass was picked
  std::string version = kVersion;
  std::string started, finished;
  std::filesystem::path out_dir;
  std::vector<std::string> outputs;  ///< relative to out_dir
  json extra = json::object();

  json to_json() const
  {
    json files = json::array();
    for (const auto& f : outputs) files.push_back({{"path", f}, {"sha256", sha256_file(out_dir / f)}});
    return json{{"command", command}, {"version", version},   {"seed", seed},       {"config", config},
                {"certificate", certificate}, {"started", started}, {"finished", finished}, {"outputs", files},
                {"results", extra}};
  }

  /// Writes manifest.json into out_dir.
  void write(const std::string& name = "manifest.json") const
  {
    std::ofstream os(out_dir / name);
    if (!os) fail(ErrorKind::usage, "cannot write manifest in " + out_dir.string());
    os << to_json().dump(2) << "\n";
  }
};

// ---------------------------------------------------------------------------
// key = value config

/// Blank lines and '#' comments ignored; keys may be written with or without
/// leading dashes.
inline std::map<std::string, std::string> parse_config(std::istream& is)
{
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string{};
    return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::usage, "config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    while (!key.empty() && key.front() == '-') key.erase(key.begin());
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) fail(ErrorKind::usage, "config line " + std::to_string(lineno) + ": empty key or value");
    out[key] = val;
  }
  return out;
}

inline std::map<std::string, std::string> parse_config_file(const std::filesystem::path& p)
{
  std::ifstream is(p);
  if (!is) fail(ErrorKind::usage, "cannot read config " + p.string());
  return parse_config(is);
}

/// Comma separated doubles.
inline std::vector<double> parse_double_list(const std::string& s)
{
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      fail(ErrorKind::usage, "not a number: '" + item + "'");
    }
    if (item.find_first_not_of(" \t", used) != std::string::npos) fail(ErrorKind::usage, "not a number: '" + item + "'");
    out.push_back(x);
  }
  if (out.empty()) fail(ErrorKind::usage, "empty list");
  return out;
}

}  // namespace kgnf
