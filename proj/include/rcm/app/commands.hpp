#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "rcm/box.hpp"
#include "rcm/branching.hpp"
#include "rcm/error.hpp"
#include "rcm/explorer.hpp"
#include "rcm/io/config.hpp"
#include "rcm/io/csv.hpp"
#include "rcm/kernels.hpp"
#include "rcm/parallel.hpp"
#include "rcm/rng.hpp"
#include "rcm/stats.hpp"

namespace rcm::app {

enum ExitCode : int { kSuccess = 0, kCheckFailed = 1, kConfigError = 2, kRefused = 3, kInternal = 4 };

// Stream ids under the master seed, one per experiment family.
enum StreamId : std::uint64_t {
  kStreamExplore = 1,
  kStreamSweep = 2,
  kStreamBounds = 3,
  kStreamCheck = 4,
  kStreamFit = 5,
};

namespace detail {

inline std::filesystem::path out_path(const io::ExperimentConfig& c, const std::string& name) {
  std::filesystem::create_directories(c.out_directory);
  return std::filesystem::path(c.out_directory) / name;
}

inline io::CsvWriter writer(const io::ExperimentConfig& c, const std::string& command,
                            const std::string& name, std::vector<std::string> header) {
  io::CsvWriter w(out_path(c, name).string(), std::move(header));
  w.meta("command", command);
  w.meta("config_hash", c.hash());
  for (const auto& [k, v] : c.resolved)
    if (io::affects_output(k)) w.meta(k, v);
  std::string ts;
  for (double t : c.intensities) ts += (ts.empty() ? "" : ",") + io::format_double(t);
  w.meta("resolved.intensity", ts);
  return w;
}

// Marks used for kernel tables: the atoms, or three points of the grid.
inline std::vector<double> kernel_marks(const io::ExperimentConfig& c) {
  const auto& Q = c.connection().marks();
  if (Q.atomic()) return Q.atoms();
  const auto& g = c.mark_grid;
  if (g.size() <= 3) return g;
  return {g.front(), g[g.size() / 2], g.back()};
}

inline double root_mark_for_checks(const io::ExperimentConfig& c) {
  if (c.root_mark) return *c.root_mark;
  const auto& Q = c.connection().marks();
  return Q.atomic() ? Q.atoms().front() : Q.median();
}

inline std::vector<double> default_r_grid(const ConnectionModel& m) {
  const double top = std::isfinite(m.max_range()) ? 1.05 * m.max_range() : 4.0 * m.typical_range();
  std::vector<double> g(20);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = top * static_cast<double>(i) / 19.0;
  return g;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_explore(const io::ExperimentConfig& c, std::ostream& log) {
  const double t = c.intensity();
  const auto& model = c.connection();
  struct Row {
    double root_mark = 0.0;
    std::size_t size = 0, depth = 0;
    double diameter = 0.0, max_edge = 0.0;
    bool truncated = false;
    Truncation reason = Truncation::none;
    std::vector<std::size_t> gens;
  };
  const RngStream base(c.seed, kStreamExplore, Purpose::explore);
  const auto rows = parallel_map(c.replications, c.threads, [&](std::size_t i) {
    RngStream s = base.split(i, Purpose::explore);
    const double mark = c.root_mark ? *c.root_mark : model.marks().sample(s);
    const Cluster cl = explore(model, t, mark, c.limits, s);
    Row r{mark, cl.size(), cl.depth, cl.diameter(), cl.max_edge(), cl.truncated(), cl.truncation, {}};
    for (std::size_t n = 0; n <= c.n_order; ++n) r.gens.push_back(cl.generation_size(n));
    return r;
  });

  auto csv = detail::writer(c, "explore", "clusters.csv",
                            {"replication_id", "root_mark", "size", "depth", "diameter", "max_edge",
                             "truncated", "reason"});
  StreamingMoments size, depth, diam;
  std::vector<StreamingMoments> gen(c.n_order + 1);
  std::size_t n_trunc = 0, max_size = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    csv.row(i, r.root_mark, r.size, r.depth, r.diameter, r.max_edge, r.truncated,
            std::string(to_string(r.reason)));
    size.add(static_cast<double>(r.size));
    depth.add(static_cast<double>(r.depth));
    diam.add(r.diameter);
    for (std::size_t n = 0; n <= c.n_order; ++n) gen[n].add(static_cast<double>(r.gens[n]));
    n_trunc += r.truncated;
    max_size = std::max(max_size, r.size);
  }
  csv.close();

  auto sum = detail::writer(c, "explore", "summary.csv", {"key", "value"});
  auto put = [&](const std::string& k, const std::string& v) { sum.row(k, v); };
  put("t", io::format_double(t));
  put("replications", std::to_string(rows.size()));
  put("n_truncated", std::to_string(n_trunc));
  put("mean_size", io::format_double(size.mean()));
  put("mean_size_se", io::format_double(size.std_error()));
  put("max_size", std::to_string(max_size));
  put("mean_depth", io::format_double(depth.mean()));
  put("mean_diameter", io::format_double(diam.mean()));
  for (std::size_t n = 1; n <= c.n_order; ++n) {
    put("c_" + std::to_string(n), io::format_double(gen[n].mean()));
    put("c_" + std::to_string(n) + "_se", io::format_double(gen[n].std_error()));
  }
  sum.close();

  log << "explore: " << rows.size() << " clusters at t=" << io::format_double(t)
      << ", mean size " << size.mean() << " +- " << size.std_error() << ", truncated " << n_trunc
      << "\n";
  return kSuccess;
}

// ---------------------------------------------------------------------------

inline int cmd_sweep(const io::ExperimentConfig& c, std::ostream& log) {
  const auto& model = c.connection();
  SweepOptions opt;
  opt.t_grid = c.intensities;
  opt.box_lengths = c.box_lengths;
  opt.reps = c.replications;
  opt.gamma = c.gammas.front();
  opt.dimension = c.space.dimension;
  opt.boundary = c.space.boundary;
  opt.diameters = true;
  opt.root_mark = c.root_mark;
  opt.threads = c.threads;
  opt.box.mark_grid = c.mark_grid;
  const RngStream base(c.seed, kStreamSweep, Purpose::box);
  const auto records = run_sweep(model, opt, base.split(0, Purpose::box));

  auto sw = detail::writer(c, "sweep", "sweep.csv",
                           {"t", "L", "rep", "size", "diameter", "boundary_touch", "largest_fraction",
                            "mag_weight", "gamma", "spanning", "min_label"});
  for (const auto& r : records)
    sw.row(r.t, r.L, r.rep, r.size, r.diameter, r.boundary_touch, r.largest_fraction, r.mag_weight,
           r.gamma, r.spanning, r.min_label);
  sw.close();

  auto th = detail::writer(c, "sweep", "theta.csv", {"t", "L", "theta_hat", "se", "spanning", "spanning_se"});
  for (const auto& row : theta_table(records))
    th.row(row.t, row.L, row.theta_hat, row.se, row.spanning, row.spanning_se);
  th.close();

  auto mg = detail::writer(c, "sweep", "magnetization.csv",
                           {"t", "L", "gamma", "direct", "direct_se", "formula", "formula_se",
                            "difference", "difference_se", "agree"});
  std::vector<double> ts = c.intensities;
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  for (double L : c.box_lengths) {
    std::vector<SweepRecord> sub;
    for (const auto& r : records)
      if (r.L == L) sub.push_back(r);
    for (double t : ts)
      for (double g : c.gammas) {
        const auto m = magnetization_from(sub, t, g);
        mg.row(t, L, g, m.direct.value, m.direct.std_error, m.formula.value, m.formula.std_error,
               m.difference.value, m.difference.std_error, m.agree);
      }
  }
  mg.close();

  const auto tc = estimate_tc(records, c.n_boot, base.split(1, Purpose::bootstrap));
  auto tw = detail::writer(c, "sweep", "tc.csv", {"t_c", "ci_lo", "ci_hi", "found", "pair_crossings"});
  std::string xs;
  for (double x : tc.pair_crossings) xs += (xs.empty() ? "" : ";") + io::format_double(x);
  tw.row(tc.t_c, tc.ci_lo, tc.ci_hi, tc.found, xs);
  tw.close();

  log << "sweep: " << records.size() << " records over " << c.box_lengths.size() << " box size(s)";
  if (tc.found)
    log << ", t_c estimate " << tc.t_c << " [" << tc.ci_lo << ", " << tc.ci_hi << "]";
  else
    log << ", no spanning crossing found";
  log << "\n";
  return kSuccess;
}

// ---------------------------------------------------------------------------

inline int cmd_bounds(const io::ExperimentConfig& c, std::ostream& log) {
  const auto& model = c.connection();
  const RngStream base(c.seed, kStreamBounds, Purpose::kernel);
  RngStream rng_tt = base.split(0, Purpose::kernel);
  const auto tt = t_T_lower_bounds(model, c.mark_grid, c.n_mc, rng_tt);

  auto bw = detail::writer(c, "bounds", "bounds.csv", {"quantity", "value", "std_error", "approximate"});
  bw.row(std::string("D_star"), model.degree_sup(), 0.0, false);
  bw.row(std::string("inv_norm_inf_1"), tt.from_degree, tt.from_degree_se, tt.approximate);
  bw.row(std::string("inv_norm_2_2"), tt.from_l2, tt.from_l2_se, tt.approximate);
  bw.row(std::string("t_T_trivial"), tt.trivial ? 1.0 : 0.0, 0.0, false);
  bw.close();
  log << "bounds: t_T >= 1/||d||_{inf,1} = " << io::format_double(tt.from_degree)
      << ", 1/||d||_{2,2} = " << io::format_double(tt.from_l2) << "\n";
  if (tt.trivial)
    throw RefusalError("bounds: D* is infinite, so t_T = 0; Delta_n and certificates are refused");

  auto kw = detail::writer(c, "bounds", "kernels.csv",
                           {"kernel_name", "p", "q", "n", "value", "std_error", "n_samples", "method"});
  const auto km = detail::kernel_marks(c);
  RngStream rng_k = base.split(1, Purpose::kernel);
  auto put_kernel = [&](const std::string& name, double p, double q, std::size_t n, const KernelEstimate& e) {
    kw.row(name, p, q, n, e.value, e.std_error, e.n_samples, std::string(to_string(e.method)));
  };
  for (std::size_t n = 1; n <= c.n_order; ++n)
    for (double p : km)
      for (double q : km) {
        if (n == 1) {
          const auto e = d_phi(model, p, q, c.n_mc, rng_k);
          put_kernel("d_phi", p, q, 1, e);
        } else {
          const auto pair = d_phi_path_pair(model, p, q, n, c.n_mc, rng_k);
          put_kernel("path", p, q, n, pair.path);
          put_kernel("self_avoiding", p, q, n, pair.self_avoiding);
        }
      }
  kw.close();

  std::vector<DeltaNorms> norms;
  for (std::size_t n = 1; n <= c.n_order; ++n)
    norms.push_back(delta_norms(model, n, c.mark_grid, c.n_mc, base.split(10 + n, Purpose::kernel)));
  auto dw = detail::writer(c, "bounds", "delta.csv",
                           {"t", "n", "value", "std_error", "early_mass", "v_direct", "v_split", "used_split"});
  for (double t : c.intensities)
    for (const auto& dn : norms) {
      const auto b = delta_n_from(dn, t);
      dw.row(t, b.n, b.value.value, b.value.std_error, b.early_mass, b.v_direct, b.v_split, b.used_split);
    }
  dw.close();

  CertificateOptions co;
  co.reps = c.replications;
  co.max_points = c.limits.max_points;
  co.threads = c.threads;
  const auto scan = certificate_scan(model, c.intensities, c.n_order, c.mark_grid, co,
                                     base.split(2, Purpose::explore));
  auto cw = detail::writer(c, "bounds", "certificate.csv",
                           {"t", "n", "c_star_n", "c_star_n_se", "c_star_le_n", "c_star_le_n_se",
                            "bound_on_c_star", "certified", "argmax_mark", "n_truncated"});
  for (const auto& s : scan.best)
    cw.row(s.t, s.n, s.c_star_n.value, s.c_star_n.std_error, s.c_star_le_n.value, s.c_star_le_n.std_error,
           s.bound_on_c_star, s.certified, s.argmax_mark, s.n_truncated);
  cw.meta("largest_certified_t", io::format_double(scan.largest_certified_t));
  cw.meta("non_monotone", scan.non_monotone ? "1" : "0");
  cw.close();
  log << "bounds: largest certified-subcritical t on the grid = "
      << io::format_double(scan.largest_certified_t) << "\n";

  if (c.t_c) {
    const double tc = *c.t_c;
    auto delta = [&](double t) {
      double best = kInf;
      for (const auto& dn : norms) best = std::min(best, delta_n_from(dn, t).value.value);
      return best;
    };
    std::vector<double> up(11);
    for (std::size_t i = 0; i < up.size(); ++i) up[i] = tc * (1.0 + 0.02 * static_cast<double>(i));
    auto mw = detail::writer(c, "bounds", "curves.csv", {"curve", "t", "value", "delta"});
    for (const auto& p : mean_field_susceptibility_curve(tc, delta, c.intensities))
      mw.row(std::string("susceptibility_lower"), p.t, p.value, delta(p.t));
    for (const auto& p : mean_field_percolation_curve(tc, delta, 0.0, 0.2 * tc, up))
      mw.row(std::string("percolation_lower"), p.t, p.value, delta(p.t));
    mw.close();
  }
  return kSuccess;
}

// ---------------------------------------------------------------------------

inline int cmd_check(const io::ExperimentConfig& c, std::ostream& log) {
  const auto& model = c.connection();
  const RngStream base(c.seed, kStreamCheck, Purpose::validation);
  const double v = detail::root_mark_for_checks(c);
  std::vector<double> ts = c.intensities;
  std::sort(ts.begin(), ts.end());
  const double t0 = ts.front();
  bool all_pass = true;

  auto out = detail::writer(c, "check", "check.csv",
                            {"check", "label", "t", "value", "reference", "tolerance", "pass"});
  auto record = [&](const std::string& name, const std::string& label, double t, double value,
                    double reference, double tol, bool pass) {
    out.row(name, label, t, value, reference, tol, pass);
    all_pass = all_pass && pass;
    if (!pass) log << "check FAILED: " << name << " " << label << " at t=" << t << "\n";
  };

  // First moment of generation 1 against t D(v).
  {
    ExploreLimits lim = c.limits;
    lim.max_generations = 1;
    RngStream rd = base.split(0, Purpose::kernel);
    const auto ref = model.degree(v, c.n_mc, rd);
    for (std::size_t ti = 0; ti < ts.size(); ++ti) {
      const double t = ts[ti];
      const RngStream s0 = base.split(100 + ti, Purpose::explore);
      const auto sizes = parallel_map(c.replications, c.threads, [&](std::size_t i) {
        RngStream s = s0.split(i, Purpose::explore);
        return static_cast<double>(explore(model, t, v, lim, s).generation_size(1));
      });
      StreamingMoments m;
      for (double x : sizes) m.add(x);
      const double se = std::hypot(m.std_error(), t * ref.std_error);
      record("mecke_first_moment", "v=" + io::format_double(v), t, m.mean(), t * ref.value, 4.0 * se,
             agree_within(m.mean(), m.std_error(), t * ref.value, t * ref.std_error));
    }
  }

  // Ordering chain against branching processes.
  {
    const auto rep = domination_suite(model, t0, v, c.n_order, c.k_order, c.replications,
                                      base.split(1, Purpose::branching), c.threads);
    auto dw = detail::writer(c, "check", "domination.csv",
                             {"pair_name", "n", "k", "t", "reps", "max_cdf_gap", "band", "verdict"});
    for (const auto& r : rep.rows) {
      dw.row(r.pair_name, r.n, r.k, r.t, r.reps, r.result.max_cdf_gap, r.result.band,
             std::string(to_string(r.result.verdict)));
      record("domination", r.pair_name, r.t, r.result.max_cdf_gap, 0.0, r.result.band,
             r.result.verdict == Verdict::consistent);
    }
    dw.meta("level_per_test", io::format_double(rep.level_per_test));
    dw.close();
  }

  // Edge-length tail bound.
  {
    ExploreLimits lim = c.limits;
    lim.max_generations = c.n_order;
    const RngStream s0 = base.split(2, Purpose::explore);
    const auto clusters = parallel_map(c.replications, c.threads, [&](std::size_t i) {
      RngStream s = s0.split(i, Purpose::explore);
      return explore(model, t0, v, lim, s);
    });
    const auto r_grid = c.r_grid.empty() ? detail::default_r_grid(model) : c.r_grid;
    RngStream rk = base.split(3, Purpose::kernel);
    for (std::size_t n = 1; n <= c.n_order; ++n) {
      const auto rep = check_edge_bound(clusters, model, t0, n, r_grid, c.mark_grid, c.n_mc, rk);
      for (const auto& row : rep.rows) {
        const std::string lab = "n=" + std::to_string(n) + ",r=" + io::format_double(row.r);
        const double tol = 4.0 * std::hypot(row.empirical_se, row.bound_se);
        record("edge_bound", lab, t0, row.empirical, row.bound, tol, row.pass);
        if (row.identity_value)
          record("edge_identity", lab, t0, row.empirical, *row.identity_value, tol, row.identity_pass);
      }
    }
  }

  // Direct and formula magnetization estimators.
  {
    SweepOptions opt;
    opt.t_grid = ts;
    opt.box_lengths = {c.box_lengths.front()};
    opt.reps = c.replications;
    opt.gamma = c.gammas.front();
    opt.dimension = c.space.dimension;
    opt.boundary = Boundary::free;
    opt.threads = c.threads;
    opt.box.mark_grid = c.mark_grid;
    const auto records = run_sweep(model, opt, base.split(4, Purpose::box));
    for (double t : ts)
      for (double g : c.gammas) {
        const auto m = magnetization_from(records, t, g);
        record("magnetization", "gamma=" + io::format_double(g), t, m.direct.value, m.formula.value,
               4.0 * m.difference.std_error, m.agree);
      }
  }

  if (c.lambda_order > 0 && ts.size() >= 2) {
    const auto r = lambda_monotonicity_check(model, ts.front(), ts.back(), c.lambda_order, v,
                                             c.replications, base.split(5, Purpose::explore), 1e-3, c.threads);
    record("lambda_monotonicity", "m=" + std::to_string(c.lambda_order), ts.back(), r.max_cdf_gap, 0.0,
           r.band, r.verdict == Verdict::consistent);
  }

  out.meta("overall", all_pass ? "PASS" : "FAIL");
  out.close();
  log << "check: " << (all_pass ? "PASS" : "FAIL") << "\n";
  return all_pass ? kSuccess : kCheckFailed;
}

// ---------------------------------------------------------------------------

inline int cmd_fit(const io::ExperimentConfig& c, const std::vector<std::string>& inputs, std::ostream& log) {
  if (inputs.empty()) throw ConfigError("fit: at least one --input clusters.csv is required");
  const RngStream base(c.seed, kStreamFit, Purpose::bootstrap);
  auto fw = detail::writer(c, "fit", "fit.csv",
                           {"input", "t", "quantity", "slope", "ci_lo", "ci_hi", "k_lo", "k_hi", "n_points",
                            "censored_fraction", "n_samples", "status", "message"});
  TailFitOptions opt;
  opt.n_boot = c.n_boot;
  struct Sharp {
    double t;
    std::optional<TailFit> size, diam;
  };
  std::vector<Sharp> sharp;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto table = io::read_csv(inputs[i]);
    const auto it = table.meta.find("resolved.intensity");
    const double t = it == table.meta.end() ? std::numeric_limits<double>::quiet_NaN()
                                            : io::parse_double("resolved.intensity", it->second);
    const auto sizes = table.numbers("size");
    const auto diams = table.numbers("diameter");
    const auto trunc = table.numbers("truncated");
    std::vector<bool> cens(trunc.size());
    for (std::size_t j = 0; j < trunc.size(); ++j) cens[j] = trunc[j] != 0.0;
    const std::string name = std::filesystem::path(inputs[i]).filename().string();
    Sharp sh{t, std::nullopt, std::nullopt};
    auto fit_one = [&](const char* quantity, const std::vector<double>& x, bool discrete,
                       std::optional<TailFit>& slot, std::uint64_t sid) {
      try {
        const RngStream s = base.split(2 * i + sid, Purpose::bootstrap);
        const TailFit f = discrete ? tail_fit_size(x, cens, s, opt) : tail_fit_diameter(x, cens, s, opt);
        fw.row(name, t, std::string(quantity), f.slope, f.ci_lo, f.ci_hi, f.k_lo, f.k_hi, f.n_points,
               f.censored_fraction, f.n_samples, std::string("ok"), std::string());
        slot = f;
        ++ok;
      } catch (const RefusalError& e) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        fw.row(name, t, std::string(quantity), nan, nan, nan, nan, nan, std::size_t{0}, nan, x.size(),
               std::string("refused"), std::string(e.what()));
        log << "fit: " << name << " " << quantity << " refused: " << e.what() << "\n";
      }
    };
    fit_one("size", sizes, true, sh.size, 0);
    fit_one("diameter", diams, false, sh.diam, 1);
    sharp.push_back(sh);
  }
  fw.close();

  std::stable_sort(sharp.begin(), sharp.end(), [](const Sharp& a, const Sharp& b) { return a.t < b.t; });
  auto sw = detail::writer(c, "fit", "sharpness.csv",
                           {"t", "delta_size", "delta_size_lo", "delta_size_hi", "delta_diameter",
                            "delta_diameter_lo", "delta_diameter_hi", "size_ci_excludes_zero"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  bool nonincreasing = true;
  double prev = kInf;
  for (const auto& s : sharp) {
    const double ds = s.size ? s.size->slope : nan;
    if (s.size) {
      nonincreasing = nonincreasing && ds <= prev + 1e-12;
      prev = ds;
    }
    sw.row(s.t, ds, s.size ? s.size->ci_lo : nan, s.size ? s.size->ci_hi : nan,
           s.diam ? s.diam->slope : nan, s.diam ? s.diam->ci_lo : nan, s.diam ? s.diam->ci_hi : nan,
           s.size ? s.size->ci_lo > 0.0 : false);
  }
  sw.meta("delta_size_nonincreasing_in_t", nonincreasing ? "1" : "0");
  sw.close();
  log << "fit: " << ok << " tail fit(s) over " << inputs.size() << " input(s)\n";
  if (ok == 0) throw RefusalError("fit: every tail fit was refused");
  return kSuccess;
}

// ---------------------------------------------------------------------------

struct Invocation {
  std::string command;
  std::string config_path;
  io::Overrides overrides;
  std::vector<std::string> inputs;
};

// Loads the config, runs the command and maps failures to exit codes.
inline int run(const Invocation& inv, std::ostream& log, std::ostream& err) {
  try {
    const auto cfg = io::load_config(inv.config_path, inv.overrides);
    if (inv.command == "explore") return cmd_explore(cfg, log);
    if (inv.command == "sweep") return cmd_sweep(cfg, log);
    if (inv.command == "bounds") return cmd_bounds(cfg, log);
    if (inv.command == "check") return cmd_check(cfg, log);
    if (inv.command == "fit") return cmd_fit(cfg, inv.inputs, log);
    err << "error: unknown command '" << inv.command << "'\n";
    return kConfigError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const RefusalError& e) {
    err << "refused: " << e.what() << "\n";
    return kRefused;
  } catch (const DomainError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace rcm::app
