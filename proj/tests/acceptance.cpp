// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "rcm/rcm.hpp"

namespace fs = std::filesystem;
using namespace rcm;

namespace {

constexpr double kPi = std::numbers::pi;

ConnectionModel gilbert() { return ConnectionModel::gilbert(2, MarkDistribution::degenerate(0.5)); }
ConnectionModel weighted() { return ConnectionModel::weighted(2, Profile::indicator, WeightKernel::max, 0.5); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("C%-2d %s  %s  (%s; %.0fs)\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(double x, int prec = 4) {
  std::ostringstream ss;
  ss.precision(prec);
  ss << x;
  return ss.str();
}

std::vector<Cluster> explore_many(const ConnectionModel& m, double t, double root, std::size_t reps,
                                  const ExploreLimits& lim, const RngStream& base) {
  return parallel_map(reps, 1, [&](std::size_t r) {
    RngStream s = base.split(r, Purpose::explore);
    return explore(m, t, root, lim, s);
  });
}

// ---------------------------------------------------------------------------

Outcome mecke() {
  Outcome o{true, ""};
  const RngStream base(1001, 0);
  std::uint64_t key = 0;
  ExploreLimits lim;
  lim.max_generations = 1;
  for (const auto& m : {gilbert(), weighted()}) {
    const double dstar = m.degree_sup();
    const std::vector<double> roots =
        m.kind() == ModelKind::gilbert ? std::vector<double>{0.5} : std::vector<double>{0.05, 0.5, 0.95};
    for (double f : {0.1, 0.5, 0.9})
      for (double v : roots) {
        const double t = f / dstar;
        StreamingMoments g1;
        for (const auto& c : explore_many(m, t, v, 100000, lim, base.split(key++, Purpose::explore)))
          g1.add(static_cast<double>(c.generation_size(1)));
        const double expect = t * m.degree_exact(v).value();
        const double z = (g1.mean() - expect) / g1.std_error();
        if (std::abs(z) > 4.0) o.pass = false;
        o.detail += (o.detail.empty() ? "z=" : ",") + fmt(z, 2);
      }
  }
  return o;
}

Outcome domination() {
  const auto rep = domination_suite(gilbert(), 0.5 / kPi, 0.5, 2, 2, 100000, RngStream(1002, 0));
  std::string d;
  for (const auto& row : rep.rows)
    d += (d.empty() ? "" : ",") + row.pair_name + ":" + std::string(to_string(row.result.verdict));
  return {rep.pass, d + " level " + fmt(rep.level_per_test)};
}

Outcome certificate_soundness() {
  const auto g = gilbert();
  const double t = 0.2 / kPi;
  CertificateOptions co;
  co.reps = 100000;
  const auto c = subcriticality_certificate(g, t, 1, {}, co, RngStream(1003, 0));
  StreamingMoments size;
  for (const auto& cl : explore_many(g, t, 0.5, 100000, {}, RngStream(1003, 1)))
    size.add(static_cast<double>(cl.size()));
  // Delta-method error of c_le / (1 - c_n); the two means share samples,
  // so the errors are added rather than combined in quadrature.
  const double one_minus = 1.0 - c.c_star_n.value;
  const double bound_se =
      c.c_star_le_n.std_error / one_minus + c.c_star_le_n.value * c.c_star_n.std_error / (one_minus * one_minus);
  const double joint = std::hypot(bound_se, size.std_error());
  const bool ok = c.certified && c.bound_on_c_star <= 1.875 + 4.0 * bound_se &&
                  size.mean() <= c.bound_on_c_star + 4.0 * joint;
  return {ok, "bound " + fmt(c.bound_on_c_star) + ", mean size " + fmt(size.mean()) + " +- " +
                  fmt(size.std_error(), 2)};
}

struct TailRuns {
  std::vector<double> sizes, diameters;
  std::vector<bool> censored;
};

const TailRuns& tail_runs() {
  static const TailRuns runs = [] {
    TailRuns r;
    const auto g = gilbert();
    const RngStream base(1004, 0);
    const std::size_t n = 1000000;
    r.sizes.reserve(n);
    r.diameters.reserve(n);
    r.censored.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      RngStream s = base.split(i, Purpose::explore);
      const Cluster c = explore(g, 0.5 / kPi, 0.5, {}, s);
      r.sizes.push_back(static_cast<double>(c.size()));
      r.diameters.push_back(c.diameter());
      r.censored.push_back(c.truncated());
    }
    return r;
  }();
  return runs;
}

Outcome tail_check(bool diameters) {
  const auto& runs = tail_runs();
  const TailFit f = diameters ? tail_fit_diameter(runs.diameters, runs.censored, RngStream(1005, 1))
                              : tail_fit_size(runs.sizes, runs.censored, RngStream(1005, 0));
  const bool ok = f.slope > 0.0 && f.ci_lo > 0.0 && f.censored_fraction < 1e-3;
  return {ok, "slope " + fmt(f.slope) + " [" + fmt(f.ci_lo) + ", " + fmt(f.ci_hi) + "], censored " +
                  fmt(f.censored_fraction)};
}

Outcome edge_bound() {
  const auto g = gilbert();
  const double t = 0.5 / kPi;
  ExploreLimits lim;
  lim.max_generations = 3;
  const auto clusters = explore_many(g, t, 0.5, 100000, lim, RngStream(1006, 0));
  std::vector<double> r_grid(20);
  for (std::size_t i = 0; i < r_grid.size(); ++i) r_grid[i] = 0.05 * static_cast<double>(i);
  RngStream rng(1006, 1);
  Outcome o{true, ""};
  for (std::size_t n = 1; n <= 3; ++n) {
    const auto rep = check_edge_bound(clusters, g, t, n, r_grid, {0.5}, 20000, rng);
    std::size_t bad = 0;
    for (const auto& row : rep.rows) bad += !(row.pass && row.identity_pass);
    if (n == 1)
      for (const auto& row : rep.rows) o.pass = o.pass && row.identity_value.has_value();
    o.pass = o.pass && rep.pass;
    o.detail += (o.detail.empty() ? "" : ", ") + ("n=" + std::to_string(n) + " failing rows " + std::to_string(bad));
  }
  return o;
}

Outcome magnetization_consistency() {
  const auto g = gilbert();
  Outcome o{true, ""};
  // 3x3 grid: one free-boundary sweep per t, three gammas per sweep.
  SweepOptions opt;
  opt.t_grid = {0.5, 1.2, 1.8};
  opt.box_lengths = {16.0};
  opt.reps = 4000;
  opt.boundary = Boundary::free;
  const auto recs = run_sweep(g, opt, RngStream(1007, 0));
  std::size_t agree = 0;
  for (double t : opt.t_grid)
    for (double gamma : {0.01, 0.1, 0.3}) agree += magnetization_from(recs, t, gamma).agree;
  o.pass = agree == 9;
  o.detail = "grid agreement " + std::to_string(agree) + "/9";

  // t = 0: the formula is gamma exactly, the direct estimator within 4 SE.
  const auto m0 = magnetization(g, 0.0, 0.2, 20000, 8.0, RngStream(1007, 1));
  const bool t0 = std::abs(m0.formula.value - 0.2) <= 1e-12 &&
                  std::abs(m0.direct.value - 0.2) <= 4.0 * m0.direct.std_error;
  o.pass = o.pass && t0;
  o.detail += t0 ? ", t=0 ok" : ", t=0 off";

  // gamma -> 0 at t = 1.6: decreasing, and inside theta <= M <= theta + gamma E[|C| 1{no touch}].
  SweepOptions o2 = opt;
  o2.t_grid = {1.6};
  const auto r2 = run_sweep(g, o2, RngStream(1007, 2));
  const double theta = theta_table(r2).front().theta_hat;
  StreamingMoments inner;
  for (const auto& r : r2) inner.add(r.boundary_touch ? 0.0 : static_cast<double>(r.size));
  double prev = 1.0;
  bool band = true;
  for (double gamma : {0.1, 0.03, 0.01, 0.003}) {
    const auto m = magnetization_from(r2, 1.6, gamma);
    const double v = m.formula.value;
    band = band && v <= prev + 1e-15 && v >= theta - 1e-15 && v <= theta + gamma * inner.mean() + 1e-12 &&
           std::abs(m.direct.value - v) <= 4.0 * m.difference.std_error + 1e-12;
    prev = v;
  }
  o.pass = o.pass && band;
  o.detail += ", M(0.003)-theta " + fmt(prev - theta, 3) + (band ? " in band" : " out of band");
  return o;
}

// Shared by the sandwich and the percolation curve.
struct Sharpness {
  TcEstimate tc;
  std::vector<SweepRecord> records;
  std::vector<DeltaNorms> norms;
  double delta(double t) const {
    double best = kInf;
    for (const auto& dn : norms) best = std::min(best, delta_n_from(dn, t).value.value);
    return best;
  }
};

const Sharpness& sharpness() {
  static const Sharpness s = [] {
    Sharpness sh;
    const auto g = gilbert();
    SweepOptions opt;
    for (double t = 1.30; t < 1.805; t += 0.02) opt.t_grid.push_back(std::round(t * 100.0) / 100.0);
    opt.box_lengths = {8.0, 16.0, 32.0};
    opt.reps = 400;
    opt.boundary = Boundary::torus;
    sh.records = run_sweep(g, opt, RngStream(1008, 0));
    sh.tc = estimate_tc(sh.records, 400, RngStream(1008, 1));
    for (std::size_t n = 1; n <= 4; ++n) sh.norms.push_back(delta_norms(g, n, {0.5}, 20000, RngStream(1008, 10 + n)));
    return sh;
  }();
  return s;
}

Outcome sandwich() {
  const auto g = gilbert();
  const auto& sh = sharpness();
  if (!sh.tc.found) return {false, "no spanning crossing"};
  const double tc = sh.tc.t_c;
  const double width = sh.tc.ci_hi - sh.tc.ci_lo;

  CertificateOptions co;
  co.reps = 20000;
  std::vector<double> grid;
  for (double t = 0.30; t <= 1.0 + 1e-9; t += 0.05) grid.push_back(std::round(t * 100.0) / 100.0);
  const auto scan = certificate_scan(g, grid, 4, {}, co, RngStream(1009, 0));
  const double cert = scan.largest_certified_t;

  // Susceptibility curve against the measured mean cluster size.
  std::size_t below = 0, total = 0;
  const RngStream base(1009, 1);
  std::uint64_t key = 0;
  for (double t : {0.2, 0.4, 0.6, 0.8, 1.0, 1.2}) {
    if (t >= tc) continue;
    StreamingMoments size;
    for (const auto& cl : explore_many(g, t, 0.5, 20000, {}, base.split(key++, Purpose::explore)))
      size.add(static_cast<double>(cl.size()));
    const auto curve = mean_field_susceptibility_curve(tc, [&](double x) { return sh.delta(x); }, {t});
    ++total;
    below += curve.front().value <= size.mean() + 4.0 * size.std_error();
  }
  const bool ok = 1.0 / kPi <= cert && cert <= tc && width < 0.1 * tc && below == total && total > 0;
  return {ok, "1/pi " + fmt(1.0 / kPi) + " <= certified " + fmt(cert) + " <= t_c " + fmt(tc) + " [" +
                  fmt(sh.tc.ci_lo) + ", " + fmt(sh.tc.ci_hi) + "], curve below size at " + std::to_string(below) +
                  "/" + std::to_string(total)};
}

Outcome percolation_curve() {
  const auto& sh = sharpness();
  if (!sh.tc.found) return {false, "no spanning crossing"};
  const double tc = sh.tc.t_c;
  std::size_t ok = 0, total = 0;
  for (const auto& row : theta_table(sh.records)) {
    if (row.L != 32.0) continue;
    const auto curve = mean_field_percolation_curve(tc, [&](double x) { return sh.delta(x); }, 0.0, 0.2 * tc, {row.t});
    if (curve.empty()) continue;
    ++total;
    ok += row.theta_hat + 4.0 * row.se >= curve.front().value;
  }
  return {total > 0 && ok == total, std::to_string(ok) + "/" + std::to_string(total) + " grid points above the curve"};
}

Outcome sampler_equivalence() {
  const auto g = gilbert();
  const double t = 0.5 / kPi;
  const std::size_t n = 100000;
  const RngStream base(1010, 0);
  const SpaceConfig space{2, 32.0, Boundary::torus};
  auto box_sizes = parallel_map(n, 1, [&](std::size_t i) {
    RngStream s = base.split(i, Purpose::box);
    const auto b = sample_box(g, t, space, s);
    return static_cast<double>(typical_cluster(g, b, 0.5, s).size);
  });
  std::vector<double> ex;
  ex.reserve(n);
  for (const auto& c : explore_many(g, t, 0.5, n, {}, RngStream(1010, 1))) ex.push_back(static_cast<double>(c.size()));
  const auto ks = ks_two_sample(box_sizes, ex);
  // Power control: a 10% higher intensity in the box must be rejected.
  const RngStream alt(1010, 2);
  auto shifted = parallel_map(n, 1, [&](std::size_t i) {
    RngStream s = alt.split(i, Purpose::box);
    const auto b = sample_box(g, 1.1 * t, space, s);
    return static_cast<double>(typical_cluster(g, b, 0.5, s).size);
  });
  const auto control = ks_two_sample(shifted, ex);
  return {ks.p_value > 0.01 && control.p_value < 0.01,
          "KS D = " + fmt(ks.statistic, 3) + ", p = " + fmt(ks.p_value, 3) + "; control at 1.1t p = " +
              fmt(control.p_value, 3)};
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RCM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome determinism() {
  const fs::path src = RCM_SOURCE_DIR;
  const fs::path dir = fs::temp_directory_path() / ("rcm_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  struct Job {
    std::string cmd, cfg, extra;
  };
  const fs::path fit_src = dir / "fit_src";
  const std::vector<Job> jobs{
      {"explore", "gilbert_explore.cfg", ""},
      {"sweep", "gilbert_sweep.cfg", ""},
      {"bounds", "gilbert_bounds.cfg", ""},
      {"bounds", "weighted_bounds.cfg", ""},
      {"check", "gilbert_check.cfg", ""},
      {"fit", "gilbert_explore.cfg", " --input " + (fit_src / "clusters.csv").string()},
  };
  if (run_cli("explore --config " + (src / "demos" / "gilbert_explore.cfg").string() + " --out " + fit_src.string()) != 0)
    return {false, "explore for fit input failed"};
  std::size_t compared = 0;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto& job = jobs[j];
    std::vector<fs::path> outs;
    for (const std::string threads : {"", "", " --threads 8"}) {
      const fs::path out = dir / (std::to_string(j) + "_" + std::to_string(outs.size()));
      const int rc = run_cli(job.cmd + " --config " + (src / "demos" / job.cfg).string() + " --out " + out.string() +
                             threads + job.extra);
      if (rc != 0 && rc != 1) return {false, job.cmd + " exited " + std::to_string(rc)};
      outs.push_back(out);
    }
    for (const auto& e : fs::directory_iterator(outs[0])) {
      const auto name = e.path().filename();
      const std::string ref = slurp(outs[0] / name);
      for (std::size_t k = 1; k < outs.size(); ++k) {
        if (!fs::exists(outs[k] / name) || slurp(outs[k] / name) != ref)
          return {false, job.cmd + " " + name.string() + " differs in run " + std::to_string(k)};
      }
      ++compared;
    }
  }
  fs::remove_all(dir);
  return {true, std::to_string(compared) + " files identical over 3 runs each"};
}

}  // namespace

int main() {
  report(1, "Mecke first-moment identity", mecke);
  report(2, "Galton-Watson domination chain", domination);
  report(3, "subcriticality certificate soundness", certificate_soundness);
  report(4, "exponential tail of cluster sizes", [] { return tail_check(false); });
  report(5, "exponential tail of diameters", [] { return tail_check(true); });
  report(6, "edge-length bound", edge_bound);
  report(7, "magnetization consistency", magnetization_consistency);
  report(8, "sharpness sandwich", sandwich);
  report(9, "percolation mean-field bound", percolation_curve);
  report(10, "sampler equivalence", sampler_equivalence);
  report(11, "determinism", determinism);
  std::printf("%s: %d failing\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
