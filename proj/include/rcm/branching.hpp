#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "rcm/error.hpp"
#include "rcm/explorer.hpp"
#include "rcm/model.hpp"
#include "rcm/parallel.hpp"
#include "rcm/rng.hpp"
#include "rcm/stats.hpp"

namespace rcm {

// h: mark -> number of cluster generations a branching particle contributes.
struct GenerationSchedule {
  std::function<std::size_t(double)> h;
  std::size_t h_star = 1;

  static GenerationSchedule constant(std::size_t n) {
    if (n == 0) throw DomainError("generation schedule: h must be >= 1");
    return {[n](double) { return n; }, n};
  }

  // h from a function, with h* taken over a mark grid.
  static GenerationSchedule from(std::function<std::size_t(double)> h,
                                 const std::vector<double>& mark_grid) {
    GenerationSchedule s{std::move(h), 0};
    for (double p : mark_grid) {
      const auto v = s.h(p);
      if (v == 0) throw DomainError("generation schedule: h must be >= 1");
      s.h_star = std::max(s.h_star, v);
    }
    return s;
  }
};

struct BranchingRun {
  std::vector<std::uint64_t> generation_sizes;  // W_k (or |W^{v,h}_k|), k = 0..
  std::vector<std::uint64_t> tilde_cumulative;  // |W~^{v,h}_{<=k}|, k = 0.. (spatial only)
  std::uint64_t total = 0;                      // sum_k W_k
  std::uint64_t tilde_total = 0;
  bool extinct = false;
  bool truncated = false;

  std::uint64_t at(std::size_t k) const noexcept {
    return k < generation_sizes.size() ? generation_sizes[k] : 0;
  }
  std::uint64_t cumulative(std::size_t k) const noexcept {
    std::uint64_t s = 0;
    for (std::size_t j = 0; j <= k && j < generation_sizes.size(); ++j) s += generation_sizes[j];
    return s;
  }
  // |W~_{<=k}|, constant after extinction.
  std::uint64_t tilde_at(std::size_t k) const noexcept {
    if (tilde_cumulative.empty()) return 0;
    return k < tilde_cumulative.size() ? tilde_cumulative[k] : tilde_cumulative.back();
  }
};

// Galton-Watson process with Poisson(mu) offspring.
inline BranchingRun gw_poisson(double mu, std::size_t max_generations, RngStream& rng,
                               std::uint64_t max_total = 1'000'000'000ULL) {
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw DomainError("gw_poisson: mean must be finite and >= 0");
  BranchingRun run;
  std::uint64_t w = 1;
  run.generation_sizes.push_back(1);
  run.total = 1;
  for (std::size_t k = 0; k < max_generations && w > 0; ++k) {
    w = rng.poisson(mu * static_cast<double>(w));
    run.generation_sizes.push_back(w);
    run.total += w;
    if (run.total > max_total) {
      run.truncated = true;
      break;
    }
  }
  while (run.generation_sizes.size() > 1 && run.generation_sizes.back() == 0) run.generation_sizes.pop_back();
  run.extinct = !run.truncated && w == 0;
  return run;
}

// P(total progeny = n) of a Poisson(mu) Galton-Watson tree (Borel law).
inline double borel_pmf(double mu, std::uint64_t n) {
  if (n == 0) return 0.0;
  if (mu == 0.0) return n == 1 ? 1.0 : 0.0;
  const double nn = static_cast<double>(n);
  return std::exp(-mu * nn + (nn - 1.0) * std::log(mu * nn) - std::lgamma(nn + 1.0));
}

struct SpatialBranchingOptions {
  std::size_t max_levels = std::numeric_limits<std::size_t>::max();
  std::uint64_t max_total = 10'000'000;
  ExploreLimits explore;
};

// Spatial branching W^{v,h}: every particle x of level k runs an independent
// cluster exploration from itself; its generation-h(x) vertices are its
// children at level k+1, and its generations 1..h(x) feed W~^{v,h}_{k+1}.
// Translation invariance of phi means only marks need to be tracked.
inline BranchingRun spatial_branching(const ConnectionModel& model, double t, double root_mark,
                                      const GenerationSchedule& schedule, RngStream& rng,
                                      const SpatialBranchingOptions& opt = {}) {
  model.check_mark(root_mark);
  BranchingRun run;
  std::vector<double> level{root_mark};
  run.generation_sizes.push_back(1);
  run.tilde_cumulative.push_back(1);
  run.total = 1;
  run.tilde_total = 1;
  std::size_t k = 0;
  while (!level.empty() && k < opt.max_levels) {
    std::vector<double> next;
    std::uint64_t tilde_add = 0;
    for (double mark : level) {
      const std::size_t h = schedule.h(mark);
      if (h == 0) throw DomainError("spatial_branching: h must be >= 1");
      ExploreLimits lim = opt.explore;
      lim.max_generations = h;
      RngStream s = rng.split(rng(), Purpose::branching);
      const Cluster c = explore(model, t, mark, lim, s);
      if (c.truncation == Truncation::max_points || c.truncation == Truncation::max_radius)
        run.truncated = true;
      for (const auto& v : c.vertices) {
        if (v.generation == h) next.push_back(v.mark);
        if (v.generation >= 1 && v.generation <= h) ++tilde_add;
      }
      if (run.total + next.size() > opt.max_total) {
        run.truncated = true;
        break;
      }
    }
    run.total += next.size();
    run.tilde_total += tilde_add;
    run.generation_sizes.push_back(next.size());
    run.tilde_cumulative.push_back(run.tilde_total);
    level = std::move(next);
    ++k;
    if (run.truncated) break;
  }
  run.extinct = level.empty() && !run.truncated;
  // The last level can be empty while its parents still added to W~.
  while (run.generation_sizes.size() > 1 && run.generation_sizes.back() == 0) run.generation_sizes.pop_back();
  return run;
}

// ---------------------------------------------------------------------------
// Stochastic domination checks

enum class Verdict { consistent, violated };

inline std::string_view to_string(Verdict v) {
  return v == Verdict::consistent ? "consistent" : "violated";
}

struct DominanceResult {
  double max_cdf_gap = 0.0;  // max_x F_B(x) - F_A(x)
  double band = 0.0;
  Verdict verdict = Verdict::consistent;
};

// One-sided test of A <=_st B: violated iff F_B exceeds F_A somewhere by more
// than the sum of two one-sided DKW bands at level/2 each.
inline DominanceResult dominance_test(const std::vector<double>& a, const std::vector<double>& b,
                                      double level) {
  DominanceResult r;
  r.max_cdf_gap = max_cdf_gap(a, b);
  r.band = dkw_band(static_cast<double>(a.size()), 0.5 * level) +
           dkw_band(static_cast<double>(b.size()), 0.5 * level);
  r.verdict = r.max_cdf_gap > r.band ? Verdict::violated : Verdict::consistent;
  return r;
}

struct DominationRow {
  std::string pair_name;
  std::size_t n = 0;
  std::size_t k = 0;
  double t = 0.0;
  std::size_t reps = 0;
  DominanceResult result;
};

struct DominationReport {
  std::vector<DominationRow> rows;
  double level_per_test = 0.0;
  KernelEstimate c_n;  // E|V^v_n|, used for the subcriticality guard
  bool pass = true;
};

struct DominationSamples {
  std::vector<double> v_n, v_le_kn, v_total, v_le_n;
  std::vector<double> w1_n, w1_le_n, w1_kn;
  std::vector<double> gw_n, gw_le_n;
  std::vector<double> wn_k, wtilde_le_k, wtilde_total;
};

// Draws every scalar used by the suite; each family has its own streams.
inline DominationSamples domination_samples(const ConnectionModel& model, double t, double v_mark,
                                            std::size_t n, std::size_t k, std::size_t reps,
                                            RngStream rng, unsigned threads = 1,
                                            const ExploreLimits& limits = {}) {
  const double mu = t * model.degree_sup();
  if (!std::isfinite(mu)) throw RefusalError("domination: D* is infinite for this model");
  struct Row {
    double v_n, v_le_kn, v_total, v_le_n, w1_n, w1_le_n, w1_kn, gw_n, gw_le_n, wn_k, wt_le_k, wt_total;
    bool truncated;
  };
  const RngStream base = rng.split(0, Purpose::branching);
  auto rows = parallel_map(reps, threads, [&](std::size_t r) {
    RngStream sv = base.split(4 * r + 0, Purpose::explore);
    RngStream s1 = base.split(4 * r + 1, Purpose::branching);
    RngStream sg = base.split(4 * r + 2, Purpose::galton_watson);
    RngStream sn = base.split(4 * r + 3, Purpose::branching);
    const Cluster c = explore(model, t, v_mark, limits, sv);
    SpatialBranchingOptions o1;
    o1.explore = limits;
    o1.max_levels = k * n;
    const auto w1 = spatial_branching(model, t, v_mark, GenerationSchedule::constant(1), s1, o1);
    const auto gw = gw_poisson(mu, n, sg);
    SpatialBranchingOptions on;
    on.explore = limits;
    const auto wn = spatial_branching(model, t, v_mark, GenerationSchedule::constant(n), sn, on);
    return Row{static_cast<double>(c.generation_size(n)),
               static_cast<double>(c.cumulative_size(k * n)),
               static_cast<double>(c.size()),
               static_cast<double>(c.cumulative_size(n)),
               static_cast<double>(w1.at(n)),
               static_cast<double>(w1.cumulative(n)),
               static_cast<double>(w1.at(k * n)),
               static_cast<double>(gw.at(n)),
               static_cast<double>(gw.cumulative(n)),
               static_cast<double>(wn.at(k)),
               static_cast<double>(wn.tilde_at(k)),
               static_cast<double>(wn.tilde_total),
               c.truncated() || w1.truncated || wn.truncated};
  });
  DominationSamples s;
  for (const auto& r : rows) {
    if (r.truncated)
      throw RefusalError("domination: a cluster or branching run was censored; the intensity is "
                         "not safely subcritical for this comparison");
    s.v_n.push_back(r.v_n);
    s.v_le_kn.push_back(r.v_le_kn);
    s.v_total.push_back(r.v_total);
    s.v_le_n.push_back(r.v_le_n);
    s.w1_n.push_back(r.w1_n);
    s.w1_le_n.push_back(r.w1_le_n);
    s.w1_kn.push_back(r.w1_kn);
    s.gw_n.push_back(r.gw_n);
    s.gw_le_n.push_back(r.gw_le_n);
    s.wn_k.push_back(r.wn_k);
    s.wtilde_le_k.push_back(r.wt_le_k);
    s.wtilde_total.push_back(r.wt_total);
  }
  return s;
}

// Runs dominance tests along the ordering chain at overall level alpha
// (Bonferroni across pairs). Refuses unless E|V_n| is clearly below 1.
inline DominationReport domination_suite(const ConnectionModel& model, double t, double v_mark,
                                         std::size_t n, std::size_t k, std::size_t reps,
                                         RngStream rng, unsigned threads = 1, double alpha = 1e-3,
                                         double margin = 4.0) {
  if (n == 0 || k == 0) throw DomainError("domination: n and k must be >= 1");
  if (reps < 2) throw DomainError("domination: need at least two replications");
  // Pilot run of the first n generations only: supercritical branching runs
  // are expensive, so the guard comes before the full samples.
  ExploreLimits pilot;
  pilot.max_generations = n;
  const RngStream pilot_base = rng.split(1, Purpose::explore);
  const auto pilot_n = parallel_map(reps, threads, [&](std::size_t r) {
    RngStream s = pilot_base.split(r, Purpose::explore);
    return static_cast<double>(explore(model, t, v_mark, pilot, s).generation_size(n));
  });
  DominationReport rep;
  StreamingMoments mv;
  for (double x : pilot_n) mv.add(x);
  rep.c_n = KernelEstimate::from(mv);
  if (!(rep.c_n.value + margin * rep.c_n.std_error < 1.0))
    throw RefusalError("domination: E|V_n| is not clearly below 1, so |V| vs |W~| may be infinite");
  const auto s = domination_samples(model, t, v_mark, n, k, reps, rng, threads);
  struct Pair {
    const char* name;
    const std::vector<double>* a;
    const std::vector<double>* b;
  };
  const std::vector<Pair> pairs{
      {"V_n<=W1_n", &s.v_n, &s.w1_n},
      {"W1_n<=GW_n", &s.w1_n, &s.gw_n},
      {"W1_le_n<=GW_le_n", &s.w1_le_n, &s.gw_le_n},
      {"Wn_k<=W1_kn", &s.wn_k, &s.w1_kn},
      {"V_le_kn<=Wtilde_n_le_k", &s.v_le_kn, &s.wtilde_le_k},
      {"V<=Wtilde_n", &s.v_total, &s.wtilde_total},
  };
  rep.level_per_test = alpha / static_cast<double>(pairs.size());
  for (const auto& p : pairs) {
    DominationRow row{p.name, n, k, t, reps, dominance_test(*p.a, *p.b, rep.level_per_test)};
    rep.pass = rep.pass && row.result.verdict == Verdict::consistent;
    rep.rows.push_back(row);
  }
  return rep;
}

// |V^v_m| at t1 against t2 >= t1; higher generations are refused.
inline DominanceResult lambda_monotonicity_check(const ConnectionModel& model, double t1, double t2,
                                                 std::size_t m, double v_mark, std::size_t reps,
                                                 RngStream rng, double level = 1e-3,
                                                 unsigned threads = 1) {
  if (m >= 3)
    throw RefusalError("lambda monotonicity of generation " + std::to_string(m) +
                       " is an open question; only m = 1 and m = 2 are checked");
  if (m == 0) throw DomainError("lambda monotonicity: m must be 1 or 2");
  if (!(t1 <= t2)) throw DomainError("lambda monotonicity: need t1 <= t2");
  ExploreLimits lim;
  lim.max_generations = m;
  auto draw = [&](double t, std::uint64_t tag) {
    const RngStream base = rng.split(tag, Purpose::explore);
    return parallel_map(reps, threads, [&](std::size_t r) {
      RngStream s = base.split(r, Purpose::explore);
      return static_cast<double>(explore(model, t, v_mark, lim, s).generation_size(m));
    });
  };
  return dominance_test(draw(t1, 1), draw(t2, 2), level);
}

}  // namespace rcm
