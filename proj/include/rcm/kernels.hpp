#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "rcm/error.hpp"
#include "rcm/explorer.hpp"
#include "rcm/marks.hpp"
#include "rcm/model.hpp"
#include "rcm/parallel.hpp"
#include "rcm/rng.hpp"
#include "rcm/stats.hpp"

namespace rcm {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Path kernels

inline KernelEstimate d_phi(const ConnectionModel& model, double p, double q, std::size_t n_mc,
                            RngStream& rng) {
  if (const auto v = model.d_phi_exact(p, q)) return KernelEstimate::exact(*v);
  if (n_mc == 0) throw DomainError("d_phi: n_mc must be positive");
  StreamingMoments m;
  for (std::size_t i = 0; i < n_mc; ++i) m.add(model.sample_step(p, q, rng).weight);
  return KernelEstimate::from(m);
}

namespace detail {

// d^(n)(p,q) by summation over intermediate atoms of an atomic Q.
inline double path_kernel_atomic(const ConnectionModel& model, double p, double q, std::size_t n) {
  const auto& a = model.marks().atoms();
  const auto& w = model.marks().weights();
  if (n == 1) return *model.d_phi_exact(p, q);
  std::vector<double> v(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) v[j] = *model.d_phi_exact(p, a[j]) * w[j];
  for (std::size_t step = 2; step < n; ++step) {
    std::vector<double> nv(a.size(), 0.0);
    for (std::size_t j = 0; j < a.size(); ++j)
      for (std::size_t k = 0; k < a.size(); ++k) nv[k] += v[j] * *model.d_phi_exact(a[j], a[k]) * w[k];
    v = std::move(nv);
  }
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += v[j] * *model.d_phi_exact(a[j], q);
  return s;
}

struct PathSample {
  double path = 0.0;           // prod of d_phi factors
  double self_avoiding = 0.0;  // times the loop-avoidance product
};

// One path 0 -> x_1 -> ... -> x_n with marks p, p_1..p_{n-1}, q.
inline PathSample sample_path(const ConnectionModel& model, const std::vector<double>& marks,
                              RngStream& rng, std::vector<Coord>& pos) {
  const std::size_t n = marks.size() - 1;
  pos.assign(n + 1, Coord(model.dimension()));
  double w = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto step = model.sample_step(marks[i], marks[i + 1], rng);
    w *= step.weight;
    if (w == 0.0) return {0.0, 0.0};
    pos[i + 1] = pos[i] + step.delta;
  }
  double avoid = 1.0;
  for (std::size_t i = 0; i + 2 <= n && avoid > 0.0; ++i)
    for (std::size_t j = i + 2; j <= n; ++j)
      avoid *= 1.0 - model.phi(pos[j] - pos[i], marks[i], marks[j]);
  return {w, w * avoid};
}

inline double avoidance(const ConnectionModel& model, const std::vector<double>& marks,
                        const std::vector<Coord>& pos, std::size_t from, std::size_t to) {
  double avoid = 1.0;
  for (std::size_t i = from; i + 2 <= to && avoid > 0.0; ++i)
    for (std::size_t j = i + 2; j <= to; ++j)
      avoid *= 1.0 - model.phi(pos[j] - pos[i], marks[i], marks[j]);
  return avoid;
}

inline std::vector<double> path_marks(const ConnectionModel& model, double p, double q,
                                      std::size_t n, RngStream& rng) {
  std::vector<double> marks(n + 1);
  marks[0] = p;
  for (std::size_t i = 1; i < n; ++i) marks[i] = model.marks().sample(rng);
  marks[n] = q;
  return marks;
}

}  // namespace detail

// d^(n)(p,q): all n-step paths.
inline KernelEstimate d_phi_path(const ConnectionModel& model, double p, double q, std::size_t n,
                                 std::size_t n_mc, RngStream& rng) {
  if (n == 0) throw DomainError("d_phi_path: n must be >= 1");
  if (n == 1) return d_phi(model, p, q, n_mc, rng);
  if (model.marks().atomic() && model.d_phi_exact(p, q))
    return KernelEstimate::exact(detail::path_kernel_atomic(model, p, q, n));
  if (n_mc == 0) throw DomainError("d_phi_path: n_mc must be positive");
  StreamingMoments m;
  const bool closed = model.d_phi_exact(p, q).has_value();
  for (std::size_t s = 0; s < n_mc; ++s) {
    const auto marks = detail::path_marks(model, p, q, n, rng);
    double w = 1.0;
    for (std::size_t i = 0; i < n; ++i)
      w *= closed ? *model.d_phi_exact(marks[i], marks[i + 1])
                  : model.sample_step(marks[i], marks[i + 1], rng).weight;
    m.add(w);
  }
  return KernelEstimate::from(m);
}

struct PathPair {
  KernelEstimate path;
  KernelEstimate self_avoiding;
  KernelEstimate difference;  // path - self_avoiding, per sample (nonnegative)
};

// d^(n) and d^[n] from the same sampled paths.
inline PathPair d_phi_path_pair(const ConnectionModel& model, double p, double q, std::size_t n,
                                std::size_t n_mc, RngStream& rng) {
  if (n == 0) throw DomainError("d_phi_selfavoiding: n must be >= 1");
  if (n_mc == 0) throw DomainError("d_phi_selfavoiding: n_mc must be positive");
  StreamingMoments mp, ms, md;
  std::vector<Coord> pos;
  for (std::size_t s = 0; s < n_mc; ++s) {
    const auto marks = detail::path_marks(model, p, q, n, rng);
    const auto ps = detail::sample_path(model, marks, rng, pos);
    mp.add(ps.path);
    ms.add(ps.self_avoiding);
    md.add(ps.path - ps.self_avoiding);
  }
  return {KernelEstimate::from(mp), KernelEstimate::from(ms), KernelEstimate::from(md)};
}

// d^[n](p,q): paths without loops.
inline KernelEstimate d_phi_selfavoiding(const ConnectionModel& model, double p, double q,
                                         std::size_t n, std::size_t n_mc, RngStream& rng) {
  if (n == 0) throw DomainError("d_phi_selfavoiding: n must be >= 1");
  if (n == 1) return d_phi(model, p, q, n_mc, rng);
  return d_phi_path_pair(model, p, q, n, n_mc, rng).self_avoiding;
}

struct SubmultiplicativityCheck {
  KernelEstimate lhs;   // d^[2n](p,q)
  KernelEstimate rhs;   // int d^[n](p,r) d^[n](r,q) Q(dr)
  KernelEstimate diff;  // rhs - lhs, per sample (nonnegative pathwise)
  bool pass = true;
};

// Paired check of d^[2n](p,q) <= int d^[n](p,r) d^[n](r,q) Q(dr): each sampled
// 2n-path is split at step n; the two halves carry their own avoidance products.
inline SubmultiplicativityCheck submultiplicativity_check(const ConnectionModel& model, double p,
                                                          double q, std::size_t n, std::size_t n_mc,
                                                          RngStream& rng, double margin = 4.0) {
  if (n == 0) throw DomainError("submultiplicativity_check: n must be >= 1");
  StreamingMoments ml, mr, md;
  std::vector<Coord> pos;
  for (std::size_t s = 0; s < n_mc; ++s) {
    const auto marks = detail::path_marks(model, p, q, 2 * n, rng);
    const auto ps = detail::sample_path(model, marks, rng, pos);
    double halves = 0.0;
    if (ps.path > 0.0) {
      std::vector<Coord> second(pos.begin() + static_cast<long>(n), pos.end());
      std::vector<double> second_marks(marks.begin() + static_cast<long>(n), marks.end());
      halves = ps.path * detail::avoidance(model, marks, pos, 0, n) *
               detail::avoidance(model, second_marks, second, 0, n);
    }
    ml.add(ps.self_avoiding);
    mr.add(halves);
    md.add(halves - ps.self_avoiding);
  }
  SubmultiplicativityCheck c{KernelEstimate::from(ml), KernelEstimate::from(mr),
                             KernelEstimate::from(md)};
  c.pass = c.diff.value + margin * c.diff.std_error >= 0.0;
  return c;
}

// ---------------------------------------------------------------------------
// Mixed norms

// Kernel L(p,q) given as a sampler: sample(p,q,rng) is an unbiased draw of
// L(p,q); deterministic kernels return the exact value.
struct KernelFn {
  std::string name;
  std::function<double(double, double, RngStream&)> sample;
  bool deterministic = false;
};

struct NormSpec {
  double r1 = 1.0;
  double r2 = 1.0;
  std::vector<double> mark_grid;
};

struct NormEstimate {
  KernelEstimate estimate;
  bool grid_sup = false;  // an infinite exponent was approximated by a grid maximum
};

inline KernelFn d_phi_kernel(const ConnectionModel& model) {
  const bool det = model.kind() != ModelKind::unmarked_custom;
  return {"d_phi",
          [&model](double p, double q, RngStream& rng) {
            if (const auto v = model.d_phi_exact(p, q)) return *v;
            return model.sample_step(p, q, rng).weight;
          },
          det};
}

inline KernelFn path_kernel(const ConnectionModel& model, std::size_t n) {
  if (n == 1) return d_phi_kernel(model);
  const bool det = model.marks().atomic() && model.kind() != ModelKind::unmarked_custom;
  return {"d_phi_path_" + std::to_string(n),
          [&model, n](double p, double q, RngStream& rng) {
            return d_phi_path(model, p, q, n, 1, rng).value;
          },
          det};
}

inline KernelFn selfavoiding_kernel(const ConnectionModel& model, std::size_t n) {
  if (n == 1) return d_phi_kernel(model);
  return {"d_phi_sa_" + std::to_string(n),
          [&model, n](double p, double q, RngStream& rng) {
            std::vector<Coord> pos;
            const auto marks = detail::path_marks(model, p, q, n, rng);
            return detail::sample_path(model, marks, rng, pos).self_avoiding;
          },
          false};
}

namespace detail {

inline double powr(double x, double r) { return r == 1.0 ? x : std::pow(x, r); }

// Unbiased draw of L(p,q)^r for integer r (product of r independent draws).
inline double sample_power(const KernelFn& fn, double p, double q, double r, RngStream& rng) {
  if (fn.deterministic) return powr(std::abs(fn.sample(p, q, rng)), r);
  double prod = 1.0;
  for (int k = 0; k < static_cast<int>(r); ++k) prod *= std::abs(fn.sample(p, q, rng));
  return prod;
}

inline bool is_integer(double r) { return std::isfinite(r) && r >= 1.0 && std::floor(r) == r; }

}  // namespace detail

inline NormEstimate mixed_norm(const KernelFn& fn, const NormSpec& spec, const MarkDistribution& Q,
                               std::size_t n_mc, RngStream& rng) {
  const bool inf1 = std::isinf(spec.r1), inf2 = std::isinf(spec.r2);
  if (!(spec.r1 >= 1.0) || !(spec.r2 >= 1.0)) throw DomainError("mixed_norm: exponents must be >= 1");
  if ((inf1 || inf2) && spec.mark_grid.empty() && !Q.atomic())
    throw DomainError("mixed_norm: a mark grid is required for infinite exponents");
  const std::vector<double> grid = Q.atomic() ? Q.atoms() : spec.mark_grid;

  if (fn.deterministic) {
    auto L = [&](double p, double q) { return std::abs(fn.sample(p, q, rng)); };
    auto inner = [&](double p) {
      if (inf2) {
        double best = 0.0;
        for (double q : grid) best = std::max(best, L(p, q));
        return best;
      }
      return std::pow(Q.expectation([&](double q) { return detail::powr(L(p, q), spec.r2); }, {p}),
                      1.0 / spec.r2);
    };
    double v;
    if (inf1) {
      v = 0.0;
      for (double p : grid) v = std::max(v, inner(p));
    } else {
      v = std::pow(Q.expectation([&](double p) { return detail::powr(inner(p), spec.r1); }),
                   1.0 / spec.r1);
    }
    const auto method = Q.atomic() ? EstimateMethod::closed_form : EstimateMethod::quadrature;
    return {KernelEstimate::exact(v, method), (inf1 || inf2) && !Q.atomic()};
  }

  if (n_mc == 0) throw DomainError("mixed_norm: n_mc must be positive");
  // Monte Carlo kernels: supported shapes are (r, r), (inf, r) and (inf, inf)
  // with integer r.
  if (!inf1 && !inf2) {
    if (spec.r1 != spec.r2 || !detail::is_integer(spec.r1))
      throw DomainError("mixed_norm: Monte Carlo kernels support only equal integer exponents");
    const double r = spec.r1;
    StreamingMoments m;
    for (std::size_t s = 0; s < n_mc; ++s) {
      const double p = Q.sample(rng), q = Q.sample(rng);
      m.add(detail::sample_power(fn, p, q, r, rng));
    }
    const double mean = std::max(m.mean(), 0.0);
    const double v = std::pow(mean, 1.0 / r);
    const double se = mean > 0.0 ? m.std_error() * v / (r * mean) : 0.0;
    return {{v, se, m.count(), EstimateMethod::mc}, false};
  }
  if (inf1 && !inf2) {
    if (!detail::is_integer(spec.r2))
      throw DomainError("mixed_norm: Monte Carlo kernels need an integer inner exponent");
    const double r = spec.r2;
    KernelEstimate best{-1.0, 0.0, 0, EstimateMethod::mc};
    for (double p : grid) {
      StreamingMoments m;
      for (std::size_t s = 0; s < n_mc; ++s) m.add(detail::sample_power(fn, p, Q.sample(rng), r, rng));
      const double mean = std::max(m.mean(), 0.0);
      const double v = std::pow(mean, 1.0 / r);
      const double se = mean > 0.0 ? m.std_error() * v / (r * mean) : 0.0;
      if (v > best.value) best = {v, se, m.count(), EstimateMethod::mc};
    }
    return {best, true};
  }
  if (inf1 && inf2) {
    KernelEstimate best{-1.0, 0.0, 0, EstimateMethod::mc};
    for (double p : grid)
      for (double q : grid) {
        StreamingMoments m;
        for (std::size_t s = 0; s < n_mc; ++s) m.add(std::abs(fn.sample(p, q, rng)));
        if (m.mean() > best.value) best = KernelEstimate::from(m);
      }
    return {best, true};
  }
  throw DomainError("mixed_norm: unsupported exponent combination for a Monte Carlo kernel");
}

// ---------------------------------------------------------------------------
// Lower bounds on t_T and the constant Delta_n(t)

struct TTBounds {
  double from_degree = 0.0;  // 1 / ||d_phi||_{inf,1}
  double from_degree_se = 0.0;
  double from_l2 = 0.0;  // 1 / ||d_phi||_{2,2}
  double from_l2_se = 0.0;
  bool approximate = false;  // some norm was a grid maximum or Monte Carlo estimate
  bool trivial = false;      // D* = infinity, so t_T = 0
};

inline TTBounds t_T_lower_bounds(const ConnectionModel& model, const std::vector<double>& mark_grid,
                                 std::size_t n_mc, RngStream& rng) {
  TTBounds b;
  const double dstar = model.degree_sup();
  if (!std::isfinite(dstar)) {
    b.trivial = true;
    b.from_degree = 0.0;
  } else {
    b.from_degree = 1.0 / dstar;
    if (model.kind() == ModelKind::unmarked_custom) b.approximate = true;
  }
  try {
    const auto n22 = mixed_norm(d_phi_kernel(model), {2.0, 2.0, mark_grid}, model.marks(), n_mc, rng);
    b.from_l2 = n22.estimate.value > 0.0 ? 1.0 / n22.estimate.value : kInf;
    b.from_l2_se = n22.estimate.std_error / (n22.estimate.value * n22.estimate.value);
    b.approximate = b.approximate || n22.estimate.is_mc();
  } catch (const Error&) {
    b.from_l2 = std::numeric_limits<double>::quiet_NaN();
  }
  if (b.trivial && !std::isfinite(b.from_l2)) b.from_l2 = 0.0;
  return b;
}

// t-independent ingredients of the Delta_n(t) bound.
struct DeltaNorms {
  std::size_t n = 1;
  double d_star = 0.0;  // ||d_phi||_{inf,1}
  double d_star_se = 0.0;
  KernelEstimate sa_inf_inf;  // ||d^[n]||_{inf,inf}
  std::optional<KernelEstimate> half_inf_2;  // ||d^[n/2]||_{inf,2}, n even
  bool grid_sup = false;
};

inline DeltaNorms delta_norms(const ConnectionModel& model, std::size_t n,
                              const std::vector<double>& mark_grid, std::size_t n_mc,
                              RngStream rng) {
  if (n == 0) throw DomainError("delta_n: n must be >= 1");
  DeltaNorms dn;
  dn.n = n;
  dn.d_star = model.degree_sup();
  const auto full = mixed_norm(selfavoiding_kernel(model, n), {kInf, kInf, mark_grid}, model.marks(),
                               n_mc, rng);
  dn.sa_inf_inf = full.estimate;
  dn.grid_sup = full.grid_sup;
  if (n % 2 == 0) {
    const auto half = mixed_norm(selfavoiding_kernel(model, n / 2), {kInf, 2.0, mark_grid},
                                 model.marks(), n_mc, rng);
    dn.half_inf_2 = half.estimate;
    dn.grid_sup = dn.grid_sup || half.grid_sup;
  }
  return dn;
}

struct DeltaBound {
  double t = 0.0;
  std::size_t n = 1;
  KernelEstimate value;
  double early_mass = 1.0;  // sum_{k<n} (t D*)^k >= c*_{<=n-1}(t)
  double v_direct = 0.0;    // t^n ||d^[n]||_{inf,inf}
  double v_split = kInf;    // t^n ||d^[n/2]||_{inf,2}^2 (n even)
  bool used_split = false;
};

inline DeltaBound delta_n_from(const DeltaNorms& dn, double t) {
  if (!(t >= 0.0)) throw DomainError("delta_n: t must be nonnegative");
  DeltaBound b;
  b.t = t;
  b.n = dn.n;
  if (t == 0.0) {
    b.value = KernelEstimate::exact(1.0);
    return b;
  }
  double early = 0.0, early_var = 0.0, term = 1.0;
  for (std::size_t k = 0; k < dn.n; ++k) {
    early += term;
    if (k > 0) {
      const double deriv = static_cast<double>(k) * term / dn.d_star;
      early_var += deriv * deriv * dn.d_star_se * dn.d_star_se;
    }
    term *= t * dn.d_star;
  }
  const double tn = std::pow(t, static_cast<double>(dn.n));
  b.early_mass = early;
  b.v_direct = tn * dn.sa_inf_inf.value;
  double v = b.v_direct, v_se = tn * dn.sa_inf_inf.std_error;
  if (dn.half_inf_2) {
    b.v_split = tn * dn.half_inf_2->value * dn.half_inf_2->value;
    if (b.v_split < b.v_direct) {
      v = b.v_split;
      v_se = 2.0 * tn * dn.half_inf_2->value * dn.half_inf_2->std_error;
      b.used_split = true;
    }
  }
  const bool mc = dn.sa_inf_inf.is_mc() || (dn.half_inf_2 && dn.half_inf_2->is_mc());
  b.value = {std::max(1.0, early + v), std::sqrt(early_var + v_se * v_se), dn.sa_inf_inf.n_samples,
             mc ? EstimateMethod::mc : EstimateMethod::closed_form};
  return b;
}

inline DeltaBound delta_n(const ConnectionModel& model, double t, std::size_t n,
                          const std::vector<double>& mark_grid, std::size_t n_mc, RngStream rng) {
  return delta_n_from(delta_norms(model, n, mark_grid, n_mc, rng), t);
}

// ---------------------------------------------------------------------------
// Subcriticality certificates

struct SubcritCertificate {
  double t = 0.0;
  std::size_t n = 1;
  KernelEstimate c_star_n;
  KernelEstimate c_star_le_n;
  double bound_on_c_star = kInf;
  bool certified = false;
  double margin = 4.0;
  double argmax_mark = 0.0;
  std::size_t n_truncated = 0;
};

struct CertificateOptions {
  std::size_t reps = 20000;
  double margin = 4.0;
  std::size_t max_points = 1'000'000;
  unsigned threads = 1;
};

// c*_n and c*_{<=n} as grid maxima of explorer means; certified iff
// c*_n + margin * SE < 1, in which case c* <= c*_{<=n} / (1 - c*_n).
inline SubcritCertificate subcriticality_certificate(const ConnectionModel& model, double t,
                                                     std::size_t n,
                                                     const std::vector<double>& mark_grid,
                                                     const CertificateOptions& opt, RngStream rng) {
  if (model.t_T_trivial())
    throw RefusalError("certificate: the model has D* = infinity, so t_T = 0 and no certificate exists");
  if (n == 0) throw DomainError("certificate: n must be >= 1");
  if (opt.reps < 2) throw DomainError("certificate: need at least two replications");
  const std::vector<double> grid = model.marks().atomic() ? model.marks().atoms() : mark_grid;
  if (grid.empty()) throw DomainError("certificate: empty mark grid");
  SubcritCertificate c;
  c.t = t;
  c.n = n;
  c.margin = opt.margin;
  c.c_star_n = {-1.0, 0.0, 0, EstimateMethod::mc};
  c.c_star_le_n = {-1.0, 0.0, 0, EstimateMethod::mc};
  ExploreLimits lim;
  lim.max_generations = n;
  lim.max_points = opt.max_points;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double p = grid[g];
    struct Row {
      double vn, vle;
      bool censored;
    };
    const RngStream base = rng.split(g, Purpose::explore);
    auto rows = parallel_map(opt.reps, opt.threads, [&](std::size_t r) {
      RngStream s = base.split(r, Purpose::explore);
      const Cluster cl = explore(model, t, p, lim, s);
      return Row{static_cast<double>(cl.generation_size(n)), static_cast<double>(cl.cumulative_size(n)),
                 cl.truncation == Truncation::max_points || cl.truncation == Truncation::max_radius};
    });
    StreamingMoments mn, mle;
    for (const auto& row : rows) {
      mn.add(row.vn);
      mle.add(row.vle);
      if (row.censored) ++c.n_truncated;
    }
    if (mn.mean() > c.c_star_n.value) {
      c.c_star_n = KernelEstimate::from(mn);
      c.argmax_mark = p;
    }
    if (mle.mean() > c.c_star_le_n.value) c.c_star_le_n = KernelEstimate::from(mle);
  }
  c.certified = c.n_truncated == 0 && c.c_star_n.value + c.margin * c.c_star_n.std_error < 1.0;
  c.bound_on_c_star = c.certified ? c.c_star_le_n.value / (1.0 - c.c_star_n.value) : kInf;
  return c;
}

struct CertificateScan {
  std::vector<SubcritCertificate> best;  // per t: first certifying n, else the last tried
  double largest_certified_t = 0.0;      // largest t with every smaller grid t certified
  bool non_monotone = false;             // a certified t follows an uncertified one
};

inline CertificateScan certificate_scan(const ConnectionModel& model, std::vector<double> t_grid,
                                        std::size_t n_max, const std::vector<double>& mark_grid,
                                        const CertificateOptions& opt, RngStream rng) {
  std::sort(t_grid.begin(), t_grid.end());
  CertificateScan scan;
  bool prefix = true, seen_fail = false;
  for (double t : t_grid) {
    SubcritCertificate chosen;
    for (std::size_t n = 1; n <= n_max; ++n) {
      // Same streams at every t, so estimates are coupled across the grid.
      chosen = subcriticality_certificate(model, t, n, mark_grid, opt, rng.split(n, Purpose::explore));
      if (chosen.certified) break;
    }
    if (chosen.certified) {
      if (seen_fail) scan.non_monotone = true;
      if (prefix) scan.largest_certified_t = t;
    } else {
      seen_fail = true;
      prefix = false;
    }
    scan.best.push_back(chosen);
  }
  return scan;
}

// ---------------------------------------------------------------------------
// Mean-field curves

struct CurvePoint {
  double t = 0.0;
  double value = 0.0;
};

// t -> t_c / (Delta(t) (t_c - t)) for t < t_c.
inline std::vector<CurvePoint> mean_field_susceptibility_curve(
    double t_c, const std::function<double(double)>& delta, const std::vector<double>& t_grid) {
  if (!(t_c > 0.0)) throw DomainError("mean-field curve: t_c must be positive");
  std::vector<CurvePoint> out;
  for (double t : t_grid) {
    if (!(t >= 0.0) || t >= t_c) continue;
    const double d = delta(t);
    if (!(d >= 1.0)) throw DomainError("mean-field curve: Delta must be >= 1");
    out.push_back({t, t_c / (d * (t_c - t))});
  }
  return out;
}

// t -> (theta(t_c)/width + 1{theta(t_c)=0} / (2 t Delta(t))) (t - t_c) on [t_c, t_c + width].
inline std::vector<CurvePoint> mean_field_percolation_curve(
    double t_c, const std::function<double(double)>& delta, double theta_at_tc, double width,
    const std::vector<double>& t_grid) {
  if (!(t_c > 0.0)) throw DomainError("mean-field curve: t_c must be positive");
  if (!(width > 0.0)) throw DomainError("mean-field curve: width must be positive");
  if (!(theta_at_tc >= 0.0 && theta_at_tc <= 1.0))
    throw DomainError("mean-field curve: theta(t_c) must lie in [0,1]");
  std::vector<CurvePoint> out;
  for (double t : t_grid) {
    if (t < t_c || t > t_c + width) continue;
    const double d = delta(t);
    if (!(d >= 1.0)) throw DomainError("mean-field curve: Delta must be >= 1");
    const double coef = theta_at_tc / width + (theta_at_tc == 0.0 ? 1.0 / (2.0 * t * d) : 0.0);
    out.push_back({t, coef * (t - t_c)});
  }
  return out;
}

}  // namespace rcm
