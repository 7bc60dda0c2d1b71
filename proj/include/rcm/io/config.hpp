#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rcm/error.hpp"
#include "rcm/explorer.hpp"
#include "rcm/marks.hpp"
#include "rcm/model.hpp"
#include "rcm/rng.hpp"
#include "rcm/space.hpp"

namespace rcm::io {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(const std::string& key, std::string_view text) {
  const std::string s = trim(text);
  if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (s.empty() || ec != std::errc() || ptr != last)
    throw ConfigError(key + ": expected a number, got '" + s + "'");
  return v;
}

inline std::uint64_t parse_uint(const std::string& key, std::string_view text) {
  const std::string s = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    // Accept integral scientific notation such as 1e5.
    double d = 0.0;
    try {
      d = parse_double(key, s);
    } catch (const ConfigError&) {
      throw ConfigError(key + ": expected a nonnegative integer, got '" + s + "'");
    }
    if (!(d >= 0.0) || std::floor(d) != d || d > 1.8e19)
      throw ConfigError(key + ": expected a nonnegative integer, got '" + s + "'");
    return static_cast<std::uint64_t>(d);
  }
  return v;
}

inline bool parse_bool(const std::string& key, std::string_view text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

inline std::vector<double> parse_doubles(const std::string& key, std::string_view text) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) out.push_back(parse_double(key, part));
  return out;
}

// degenerate(v) | uniform(a,b) | discrete(v:w, ...) | exponential(rate) | bare number.
inline MarkDistribution parse_distribution(const std::string& key, std::string_view text) {
  const std::string s = trim(text);
  const auto open = s.find('(');
  if (open == std::string::npos) return MarkDistribution::degenerate(parse_double(key, s));
  if (s.back() != ')') throw ConfigError(key + ": unbalanced parentheses in '" + s + "'");
  const std::string name = trim(std::string_view(s).substr(0, open));
  const std::string body = s.substr(open + 1, s.size() - open - 2);
  const auto args = split(body, ',');
  auto need = [&](std::size_t n) {
    if (args.size() != n)
      throw ConfigError(key + ": " + name + " takes " + std::to_string(n) + " argument(s)");
  };
  try {
    if (name == "degenerate") {
      need(1);
      return MarkDistribution::degenerate(parse_double(key, args[0]));
    }
    if (name == "uniform") {
      need(2);
      return MarkDistribution::uniform(parse_double(key, args[0]), parse_double(key, args[1]));
    }
    if (name == "exponential") {
      need(1);
      return MarkDistribution::exponential(parse_double(key, args[0]));
    }
    if (name == "discrete") {
      std::vector<double> atoms, weights;
      for (const auto& a : args) {
        const auto kv = split(a, ':');
        if (kv.size() != 2) throw ConfigError(key + ": discrete atoms are written value:weight");
        atoms.push_back(parse_double(key, kv[0]));
        weights.push_back(parse_double(key, kv[1]));
      }
      return MarkDistribution::discrete(std::move(atoms), std::move(weights));
    }
  } catch (const DomainError& e) {
    throw ConfigError(key + ": " + e.what());
  }
  throw ConfigError(key + ": unknown distribution '" + name + "'");
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

// Keys accepted in a config file, with defaults ("" = unset).
inline const std::map<std::string, std::string>& known_keys() {
  static const std::map<std::string, std::string> keys{
      {"space.dimension", "2"},
      {"space.box_length", "16"},
      {"space.boundary", "torus"},
      {"model.kind", ""},
      {"model.radius", ""},
      {"model.radius_dist", ""},
      {"model.profile", "indicator"},
      {"model.kernel", "max"},
      {"model.epsilon", "0"},
      {"model.delta", "0"},
      {"model.mark_dist", ""},
      {"model.range", "1"},
      {"model.level", "1"},
      {"sim.intensity", ""},
      {"sim.intensity_grid", ""},
      {"sim.intensity_unit", "absolute"},
      {"sim.replications", "1000"},
      {"sim.seed", "1"},
      {"sim.max_points", "1000000"},
      {"sim.max_generations", "10000"},
      {"sim.max_radius", ""},
      {"sim.gamma", "0.01"},
      {"sim.mark_grid", ""},
      {"sim.root_mark", ""},
      {"sim.n_order", "2"},
      {"sim.k_order", "2"},
      {"sim.n_mc", "20000"},
      {"sim.bootstrap", "200"},
      {"sim.r_grid", ""},
      {"sim.t_c", ""},
      {"sim.threads", "1"},
      {"sim.lambda_order", "0"},
      {"out.directory", "out"},
      {"out.format", "csv"},
  };
  return keys;
}

// Keys that never change the content of outputs.
inline bool affects_output(const std::string& key) {
  return key != "sim.threads" && key != "out.directory";
}

// Raw key=value parse. Duplicate and unknown keys are errors.
inline std::map<std::string, std::string> parse_config_text(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (!known_keys().count(key))
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (kv.count(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

struct ExperimentConfig {
  SpaceConfig space;
  std::vector<double> box_lengths;
  std::optional<ConnectionModel> model;
  std::vector<double> intensities;  // resolved to absolute units
  std::size_t replications = 1000;
  std::uint64_t seed = 1;
  ExploreLimits limits;
  std::vector<double> gammas;
  std::vector<double> mark_grid;
  std::optional<double> root_mark;
  std::size_t n_order = 2;
  std::size_t k_order = 2;
  std::size_t n_mc = 20000;
  std::size_t n_boot = 200;
  std::vector<double> r_grid;
  std::optional<double> t_c;
  unsigned threads = 1;
  std::size_t lambda_order = 0;
  std::string out_directory = "out";
  std::map<std::string, std::string> resolved;  // every known key with its effective value

  const ConnectionModel& connection() const { return *model; }
  double intensity() const {
    if (intensities.size() != 1)
      throw ConfigError("this command needs a single sim.intensity");
    return intensities.front();
  }

  // Canonical text of all output-relevant keys; its hash tags every output.
  std::string canonical() const {
    std::string s;
    for (const auto& [k, v] : resolved)
      if (affects_output(k)) s += k + "=" + v + "\n";
    return s;
  }
  std::string hash() const { return hex64(fnv1a(canonical())); }
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> threads;
};

inline ConnectionModel build_model(const std::map<std::string, std::string>& kv, int dim) {
  const std::string& kind = kv.at("model.kind");
  auto set = [&](const char* k) { return !kv.at(k).empty(); };
  if (kind == "gilbert") {
    if (set("model.radius") == set("model.radius_dist"))
      throw ConfigError("gilbert model needs exactly one of model.radius and model.radius_dist");
    const auto radii = set("model.radius")
                           ? MarkDistribution::degenerate(parse_double("model.radius", kv.at("model.radius")))
                           : parse_distribution("model.radius_dist", kv.at("model.radius_dist"));
    return ConnectionModel::gilbert(dim, radii);
  }
  if (kind == "weighted") {
    if (set("model.mark_dist")) {
      const auto q = parse_distribution("model.mark_dist", kv.at("model.mark_dist"));
      if (q.kind() != MarkDistribution::Kind::uniform || q.lo() != 0.0 || q.hi() != 1.0)
        throw ConfigError("model.mark_dist: weighted models use uniform(0,1) weights");
    }
    const std::string& pr = kv.at("model.profile");
    Profile profile;
    if (pr == "indicator") profile = Profile::indicator;
    else if (pr == "exponential") profile = Profile::exponential;
    else throw ConfigError("model.profile: expected indicator or exponential, got '" + pr + "'");
    const std::string& kn = kv.at("model.kernel");
    WeightKernel kernel;
    if (kn == "max") kernel = WeightKernel::max;
    else if (kn == "sum") kernel = WeightKernel::sum;
    else if (kn == "preferential") kernel = WeightKernel::preferential;
    else if (kn == "product") kernel = WeightKernel::product;
    else throw ConfigError("model.kernel: expected max, sum, preferential or product, got '" + kn + "'");
    return ConnectionModel::weighted(dim, profile, kernel, parse_double("model.epsilon", kv.at("model.epsilon")),
                                     parse_double("model.delta", kv.at("model.delta")));
  }
  if (kind == "unmarked_indicator") {
    return ConnectionModel::unmarked_indicator(dim, parse_double("model.range", kv.at("model.range")),
                                               parse_double("model.level", kv.at("model.level")));
  }
  if (kind.empty()) throw ConfigError("model.kind is required");
  throw ConfigError("model.kind: expected gilbert, weighted or unmarked_indicator, got '" + kind + "'");
}

// Parses, types and validates everything, including a symmetry/range check of
// the connection function, before any sampling takes place.
inline ExperimentConfig load_config_text(std::string_view text, const Overrides& ov = {}) {
  auto kv = parse_config_text(text);
  if (ov.seed) kv["sim.seed"] = std::to_string(*ov.seed);
  if (ov.out) kv["out.directory"] = *ov.out;
  if (ov.threads) kv["sim.threads"] = std::to_string(*ov.threads);
  for (const auto& [k, def] : known_keys())
    if (!kv.count(k)) kv[k] = def;

  ExperimentConfig c;
  c.resolved = kv;
  const auto dim = parse_uint("space.dimension", kv["space.dimension"]);
  if (dim < 1 || dim > static_cast<std::uint64_t>(kMaxDimension))
    throw ConfigError("space.dimension must lie in 1.." + std::to_string(kMaxDimension));
  c.space.dimension = static_cast<int>(dim);
  c.box_lengths = parse_doubles("space.box_length", kv["space.box_length"]);
  c.space.box_length = c.box_lengths.front();
  const auto& bd = kv["space.boundary"];
  if (bd == "torus") c.space.boundary = Boundary::torus;
  else if (bd == "free") c.space.boundary = Boundary::free;
  else throw ConfigError("space.boundary: expected torus or free, got '" + bd + "'");
  for (double L : c.box_lengths)
    if (!(L > 0.0) || !std::isfinite(L)) throw ConfigError("space.box_length must be positive");

  try {
    c.model.emplace(build_model(kv, c.space.dimension));
    c.model->validate(RngStream(0x5eed, 0, Purpose::validation));
  } catch (const DomainError& e) {
    throw ConfigError(std::string("model validation failed: ") + e.what());
  }

  const bool has_t = !kv["sim.intensity"].empty(), has_grid = !kv["sim.intensity_grid"].empty();
  if (has_t && has_grid) throw ConfigError("give sim.intensity or sim.intensity_grid, not both");
  if (!has_t && !has_grid) throw ConfigError("sim.intensity or sim.intensity_grid is required");
  c.intensities = has_t ? std::vector<double>{parse_double("sim.intensity", kv["sim.intensity"])}
                        : parse_doubles("sim.intensity_grid", kv["sim.intensity_grid"]);
  const auto& unit = kv["sim.intensity_unit"];
  if (unit == "inverse_degree") {
    const double ds = c.model->degree_sup();
    if (!std::isfinite(ds))
      throw ConfigError("sim.intensity_unit = inverse_degree needs a finite D* (model is t_T-trivial)");
    for (auto& t : c.intensities) t /= ds;
  } else if (unit != "absolute") {
    throw ConfigError("sim.intensity_unit: expected absolute or inverse_degree, got '" + unit + "'");
  }
  for (double t : c.intensities)
    if (!(t >= 0.0) || !std::isfinite(t)) throw ConfigError("intensities must be finite and >= 0");

  c.replications = parse_uint("sim.replications", kv["sim.replications"]);
  if (c.replications == 0) throw ConfigError("sim.replications must be positive");
  c.seed = parse_uint("sim.seed", kv["sim.seed"]);
  c.limits = ExploreLimits::defaults(*c.model);
  c.limits.max_points = parse_uint("sim.max_points", kv["sim.max_points"]);
  c.limits.max_generations = parse_uint("sim.max_generations", kv["sim.max_generations"]);
  if (!kv["sim.max_radius"].empty()) c.limits.max_radius = parse_double("sim.max_radius", kv["sim.max_radius"]);
  if (c.limits.max_points == 0 || c.limits.max_generations == 0 || !(c.limits.max_radius > 0.0))
    throw ConfigError("sim.max_points, sim.max_generations and sim.max_radius must be positive");

  c.gammas = parse_doubles("sim.gamma", kv["sim.gamma"]);
  for (double g : c.gammas)
    if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("sim.gamma values must lie in [0,1]");

  const auto& Q = c.model->marks();
  if (!kv["sim.mark_grid"].empty()) {
    c.mark_grid = parse_doubles("sim.mark_grid", kv["sim.mark_grid"]);
    for (double p : c.mark_grid)
      if (!Q.in_support(p)) throw ConfigError("sim.mark_grid: mark outside the support of Q");
  } else {
    c.mark_grid = Q.default_grid();
  }
  if (!kv["sim.root_mark"].empty()) {
    c.root_mark = parse_double("sim.root_mark", kv["sim.root_mark"]);
    if (!Q.in_support(*c.root_mark)) throw ConfigError("sim.root_mark: outside the support of Q");
  }
  c.n_order = parse_uint("sim.n_order", kv["sim.n_order"]);
  c.k_order = parse_uint("sim.k_order", kv["sim.k_order"]);
  if (c.n_order == 0 || c.k_order == 0) throw ConfigError("sim.n_order and sim.k_order must be >= 1");
  c.n_mc = parse_uint("sim.n_mc", kv["sim.n_mc"]);
  if (c.n_mc == 0) throw ConfigError("sim.n_mc must be positive");
  c.n_boot = parse_uint("sim.bootstrap", kv["sim.bootstrap"]);
  if (!kv["sim.r_grid"].empty()) {
    c.r_grid = parse_doubles("sim.r_grid", kv["sim.r_grid"]);
    for (double r : c.r_grid)
      if (!(r >= 0.0)) throw ConfigError("sim.r_grid values must be >= 0");
  }
  if (!kv["sim.t_c"].empty()) {
    c.t_c = parse_double("sim.t_c", kv["sim.t_c"]);
    if (!(*c.t_c > 0.0)) throw ConfigError("sim.t_c must be positive");
  }
  const auto th = parse_uint("sim.threads", kv["sim.threads"]);
  if (th == 0 || th > 1024) throw ConfigError("sim.threads must lie in 1..1024");
  c.threads = static_cast<unsigned>(th);
  c.lambda_order = parse_uint("sim.lambda_order", kv["sim.lambda_order"]);
  if (c.lambda_order >= 3)
    throw ConfigError("sim.lambda_order = " + std::to_string(c.lambda_order) +
                      ": monotonicity of |V_m| in the intensity for m >= 3 is an open question "
                      "and is not checked; use 1 or 2");
  c.out_directory = kv["out.directory"];
  if (kv["out.format"] != "csv") throw ConfigError("out.format: only csv is supported");
  return c;
}

inline ExperimentConfig load_config(const std::string& path, const Overrides& ov = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_config_text(ss.str(), ov);
}

}  // namespace rcm::io
