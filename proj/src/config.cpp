#include "gsrecon/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

namespace gsr {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end) throw Error(ErrorKind::Parse, fmt::format("{}: '{}' is not a number", key, v));
  return x;
}

long long to_int(const std::string& key, const std::string& v) {
  long long x = 0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end) throw Error(ErrorKind::Parse, fmt::format("{}: '{}' is not an integer", key, v));
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorKind::Parse, fmt::format("{}: '{}' is not a boolean", key, v));
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  if (out.empty()) throw Error(ErrorKind::Parse, fmt::format("{}: empty list", key));
  return out;
}

std::string list_str(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += fmt::format("{}{:g}", i ? "," : "", v[i]);
  return s;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define GSR_DOUBLE(k, m)                                                             \
  Field {                                                                            \
    k, [](RunConfig& c, const std::string& v) { c.m = to_double(k, v); },           \
        [](const RunConfig& c) { return fmt::format("{}", c.m); }               \
  }
#define GSR_INT(k, m)                                                                       \
  Field {                                                                                   \
    k, [](RunConfig& c, const std::string& v) { c.m = static_cast<int>(to_int(k, v)); },  \
        [](const RunConfig& c) { return fmt::format("{}", c.m); }                           \
  }
#define GSR_STRING(k, m)                                                \
  Field {                                                               \
    k, [](RunConfig& c, const std::string& v) { c.m = v; },            \
        [](const RunConfig& c) { return std::string(c.m); }             \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      GSR_DOUBLE("r0", machine.r0),
      GSR_DOUBLE("B0", machine.B0),
      GSR_DOUBLE("Ip", machine.Ip),
      GSR_DOUBLE("mu0", machine.mu0),
      GSR_STRING("mesh", mesh),
      GSR_INT("mesh.nr", mesh_nr),
      GSR_INT("mesh.nz", mesh_nz),
      GSR_DOUBLE("flux.offset", flux_offset),
      GSR_DOUBLE("flux.vertical", flux_vertical),
      GSR_DOUBLE("flux.shaping", flux_shaping),
      GSR_STRING("profile.a", profile_a),
      GSR_STRING("profile.b", profile_b),
      GSR_DOUBLE("ne.peak", ne_peak),
      GSR_INT("basis.m", basis_m),
      GSR_INT("basis.degree", basis_degree),
      GSR_DOUBLE("eps", eps),
      GSR_DOUBLE("eps_ne", eps_ne),
      GSR_DOUBLE("weights.sigma_mag", sigma_mag),
      GSR_DOUBLE("weights.sigma_polar", sigma_polar),
      GSR_DOUBLE("weights.sigma_inter", sigma_inter),
      GSR_DOUBLE("tol", tol),
      GSR_INT("max_iter", max_iter),
      GSR_INT("realtime_iterations", realtime_iterations),
      Field{"use_internal", [](RunConfig& c, const std::string& v) { c.use_internal = to_bool("use_internal", v); },
            [](const RunConfig& c) { return std::string(c.use_internal ? "true" : "false"); }},
      GSR_STRING("chords", chords),
      Field{"seed",
            [](RunConfig& c, const std::string& v) {
              const long long s = to_int("seed", v);
              if (s < 0) throw Error(ErrorKind::Parse, "seed must be nonnegative");
              c.seed = static_cast<std::uint64_t>(s);
            },
            [](const RunConfig& c) { return fmt::format("{}", c.seed); }},
      GSR_DOUBLE("noise", noise),
      GSR_DOUBLE("twin.noise", twin_noise),
      GSR_INT("replicates", replicates),
      Field{"stats.eps", [](RunConfig& c, const std::string& v) { c.stats_eps = to_list("stats.eps", v); },
            [](const RunConfig& c) { return list_str(c.stats_eps); }},
      GSR_INT("stats.max_iter", stats_max_iter),
      GSR_STRING("lcurve.kind", lcurve_kind),
      GSR_DOUBLE("lcurve.min", lcurve_min),
      GSR_DOUBLE("lcurve.max", lcurve_max),
      GSR_INT("lcurve.points", lcurve_points),
      Field{"output", [](RunConfig& c, const std::string& v) { c.output = v; },
            [](const RunConfig& c) { return c.output.string(); }},
  };
  return f;
}

#undef GSR_DOUBLE
#undef GSR_INT
#undef GSR_STRING

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  for (int no = 1; std::getline(in, line); ++no) {
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Parse, fmt::format("line {}: expected key = value", no));
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error(ErrorKind::Parse, fmt::format("line {}: empty key", no));
    kv[key] = value;
  }
  return kv;
}

void apply_settings(RunConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    bool found = false;
    for (const auto& f : fields()) {
      if (key != f.key) continue;
      f.set(cfg, value);
      found = true;
      break;
    }
    if (!found) throw Error(ErrorKind::Parse, fmt::format("unknown configuration key '{}'", key));
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot open config file {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  apply_settings(cfg, parse_key_values(ss.str()));
  return cfg;
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += fmt::format("{} = {}\n", f.key, f.get(cfg));
  return out;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Validation, m); };
  machine.validate();
  if (mesh != "twin" && !std::filesystem::exists(mesh)) fail(fmt::format("mesh file {} does not exist", mesh));
  if (chords != "twin" && chords != "none" && !std::filesystem::exists(chords))
    fail(fmt::format("chord file {} does not exist", chords));
  if (mesh_nr < 2 || mesh_nz < 2) fail("mesh.nr and mesh.nz must be at least 2");
  if (!(tol > 0.0)) fail("tol must be positive");
  if (max_iter < 1 || stats_max_iter < 1) fail("iteration limits must be positive");
  if (realtime_iterations < 1) fail("realtime_iterations must be positive");
  if (!(eps > 0.0) || !(eps_ne > 0.0)) fail("regularization parameters must be positive");
  if (sigma_mag < 0.0 || !(sigma_polar > 0.0) || !(sigma_inter > 0.0)) fail("noise levels must be positive");
  if (noise < 0.0 || twin_noise < 0.0) fail("noise must be nonnegative");
  if (replicates < 1) fail("replicates must be positive");
  for (double e : stats_eps)
    if (!(e > 0.0)) fail("stats.eps entries must be positive");
  if (lcurve_kind != "ne" && lcurve_kind != "ab") fail("lcurve.kind must be 'ne' or 'ab'");
  if (!(lcurve_min > 0.0) || !(lcurve_max > lcurve_min) || lcurve_points < 3) fail("bad lcurve grid");
  if (basis_m < basis_degree + 1 || basis_degree < 1) fail("basis.m must exceed basis.degree");
}

SplineBasis RunConfig::basis() const { return SplineBasis(basis_m, basis_degree); }

TwinScenario RunConfig::scenario() const {
  TwinScenario s;
  s.nr = mesh_nr;
  s.nz = mesh_nz;
  s.machine = machine;
  s.flux_offset = flux_offset;
  s.vertical_field = flux_vertical;
  s.shaping_field = flux_shaping;
  s.ne_peak = ne_peak;
  return s;
}

WeightConfig RunConfig::weights(double Ip, double boundary_length, std::size_t n_mag, std::size_t n_chords) const {
  WeightConfig w = default_weights(Ip, boundary_length, n_mag, n_chords, machine.mu0);
  if (sigma_mag > 0.0) w.sigma_mag = sigma_mag;
  w.sigma_polar = sigma_polar;
  w.sigma_inter = sigma_inter;
  return w;
}

std::vector<ChordMeasurement> load_chords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot open chord file {}", path.string()));
  std::vector<ChordMeasurement> out;
  std::string line;
  for (int no = 1; std::getline(in, line); ++no) {
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    ChordMeasurement c;
    if (!(ls >> c.start.r >> c.start.z >> c.end.r >> c.end.z))
      throw Error(ErrorKind::Parse, fmt::format("{}:{}: expected 'r1 z1 r2 z2'", path.string(), no));
    out.push_back(c);
  }
  return out;
}

ProfileFunction make_profile(const std::string& text, const ProfileFunction& twin_default) {
  if (text == "twin") return twin_default;
  std::vector<double> y = to_list("profile", text);
  if (y.size() == 1) y.push_back(y.front());
  std::vector<double> x(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i) / static_cast<double>(x.size() - 1);
  return TabulatedProfile(std::move(x), std::move(y));
}

}  // namespace gsr
