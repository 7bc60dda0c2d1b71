#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "rcm/error.hpp"
#include "rcm/rng.hpp"

namespace rcm {

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  void add(const CompensatedSum& o) noexcept {
    add(o.sum_);
    add(o.comp_);
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Count, mean, centred second moment, min and max; merges are associative.
class StreamingMoments {
 public:
  void add(double x) noexcept {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
    min_ = std::min(min_, x);
    max_ = std::max(max_, x);
  }

  // Chan et al. pairwise update.
  static StreamingMoments merge(const StreamingMoments& a, const StreamingMoments& b) noexcept {
    if (a.count_ == 0) return b;
    if (b.count_ == 0) return a;
    StreamingMoments r;
    r.count_ = a.count_ + b.count_;
    const double na = static_cast<double>(a.count_);
    const double nb = static_cast<double>(b.count_);
    const double n = static_cast<double>(r.count_);
    const double delta = b.mean_ - a.mean_;
    // Weighted average is symmetric in (a, b), unlike mean_a + delta*nb/n.
    r.mean_ = (na * a.mean_ + nb * b.mean_) / n;
    r.m2_ = a.m2_ + b.m2_ + delta * delta * (na * nb / n);
    r.min_ = std::min(a.min_, b.min_);
    r.max_ = std::max(a.max_, b.max_);
    return r;
  }
  StreamingMoments& operator+=(const StreamingMoments& o) noexcept { return *this = merge(*this, o); }

  std::uint64_t count() const noexcept { return count_; }
  double mean() const noexcept { return count_ ? mean_ : 0.0; }
  double m2() const noexcept { return m2_; }
  double variance() const noexcept {
    return count_ > 1 ? std::max(0.0, m2_ / static_cast<double>(count_ - 1)) : 0.0;
  }
  double stddev() const noexcept { return std::sqrt(variance()); }
  double std_error() const noexcept {
    return count_ > 1 ? std::sqrt(variance() / static_cast<double>(count_)) : 0.0;
  }
  double min() const noexcept { return min_; }
  double max() const noexcept { return max_; }

 private:
  std::uint64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  double min_ = std::numeric_limits<double>::infinity();
  double max_ = -std::numeric_limits<double>::infinity();
};

enum class EstimateMethod { mc, closed_form, quadrature };

inline std::string_view to_string(EstimateMethod m) {
  switch (m) {
    case EstimateMethod::mc: return "mc";
    case EstimateMethod::closed_form: return "closed_form";
    case EstimateMethod::quadrature: return "quadrature";
  }
  return "?";
}

struct KernelEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::uint64_t n_samples = 0;
  EstimateMethod method = EstimateMethod::closed_form;

  static KernelEstimate exact(double v, EstimateMethod m = EstimateMethod::closed_form) {
    return {v, 0.0, 0, m};
  }
  static KernelEstimate from(const StreamingMoments& m) {
    return {m.mean(), m.std_error(), m.count(), EstimateMethod::mc};
  }
  bool is_mc() const noexcept { return method == EstimateMethod::mc; }
};

// |a - b| within k joint standard errors (plus an absolute slack for exact values).
inline bool agree_within(double a, double se_a, double b, double se_b, double k = 4.0,
                         double abs_slack = 1e-9) {
  return std::abs(a - b) <= k * std::hypot(se_a, se_b) + abs_slack;
}

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

// One-sided DKW band: P(sup (F_n - F) > eps) <= exp(-2 n eps^2) = level.
inline double dkw_band(double n, double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("dkw_band: level must lie in (0,1)");
  if (!(n > 0.0)) throw DomainError("dkw_band: n must be positive");
  if (std::isinf(n)) return 0.0;
  return std::sqrt(std::log(1.0 / level) / (2.0 * n));
}

// Survival function of the Kolmogorov distribution, Q(x) = 2 sum (-1)^{k-1} e^{-2k^2x^2}.
inline double kolmogorov_survival(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

struct TwoSampleResult {
  double statistic = 0.0;  // sup |F_a - F_b|
  double p_value = 1.0;
};

// Two-sample Kolmogorov-Smirnov test with the asymptotic (Stephens-corrected)
// p-value. Ties are handled by evaluating both CDFs after each distinct value,
// which makes the test conservative on discrete data.
inline TwoSampleResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DomainError("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() || j < b.size()) {
    double x;
    if (j == b.size() || (i < a.size() && a[i] <= b[j]))
      x = a[i];
    else
      x = b[j];
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d)};
}

// Largest one-sided gap max_x (F_b(x) - F_a(x)); positive values are evidence
// against A <=_st B.
inline double max_cdf_gap(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DomainError("max_cdf_gap: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double gap = 0.0;
  while (i < a.size() || j < b.size()) {
    double x;
    if (j == b.size() || (i < a.size() && a[i] <= b[j]))
      x = a[i];
    else
      x = b[j];
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    gap = std::max(gap, static_cast<double>(j) / nb - static_cast<double>(i) / na);
  }
  return gap;
}

struct ChiSquareResult {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

// Pearson goodness of fit. Bins with expected count below min_expected are
// pooled into their neighbour.
inline ChiSquareResult chi_square_gof(const std::vector<double>& observed,
                                      const std::vector<double>& expected,
                                      int fitted_parameters = 0, double min_expected = 5.0) {
  if (observed.size() != expected.size() || observed.empty())
    throw StructuralError("chi_square_gof: observed/expected size mismatch");
  std::vector<double> o, e;
  double acc_o = 0.0, acc_e = 0.0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    acc_o += observed[k];
    acc_e += expected[k];
    if (acc_e >= min_expected) {
      o.push_back(acc_o);
      e.push_back(acc_e);
      acc_o = acc_e = 0.0;
    }
  }
  if (acc_e > 0.0 || acc_o > 0.0) {
    if (e.empty()) {
      o.push_back(acc_o);
      e.push_back(acc_e);
    } else {
      o.back() += acc_o;
      e.back() += acc_e;
    }
  }
  ChiSquareResult r;
  for (std::size_t k = 0; k < o.size(); ++k) {
    if (e[k] <= 0.0) {
      if (o[k] > 0.0) return {std::numeric_limits<double>::infinity(), 1.0, 0.0};
      continue;
    }
    r.statistic += (o[k] - e[k]) * (o[k] - e[k]) / e[k];
  }
  r.dof = static_cast<double>(o.size()) - 1.0 - fitted_parameters;
  if (r.dof < 1.0) {
    r.dof = 0.0;
    r.p_value = 1.0;
    return r;
  }
  r.p_value = boost::math::cdf(
      boost::math::complement(boost::math::chi_squared_distribution<double>(r.dof), r.statistic));
  return r;
}

// Percentile interval of a bootstrap replicate vector.
inline std::pair<double, double> percentile_interval(std::vector<double> reps, double coverage) {
  if (reps.empty()) throw DomainError("percentile_interval: no replicates");
  std::sort(reps.begin(), reps.end());
  const double alpha = 0.5 * (1.0 - coverage);
  auto at = [&](double p) {
    const double pos = p * static_cast<double>(reps.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, reps.size() - 1);
    return reps[lo] + (pos - static_cast<double>(lo)) * (reps[hi] - reps[lo]);
  };
  return {at(alpha), at(1.0 - alpha)};
}

// Nonparametric bootstrap: stat(resampled indices) for n_boot resamples.
template <class Stat>
std::vector<double> bootstrap_replicates(std::size_t n, std::size_t n_boot, RngStream rng,
                                         Stat&& stat) {
  std::vector<double> out;
  out.reserve(n_boot);
  std::vector<std::size_t> idx(n);
  for (std::size_t b = 0; b < n_boot; ++b) {
    for (auto& k : idx) k = rng.index(n);
    out.push_back(stat(idx));
  }
  return out;
}

inline std::pair<double, double> bootstrap_mean_ci(const std::vector<double>& x, std::size_t n_boot,
                                                   double coverage, RngStream rng) {
  auto reps = bootstrap_replicates(x.size(), n_boot, rng, [&](const std::vector<std::size_t>& idx) {
    double s = 0.0;
    for (auto k : idx) s += x[k];
    return s / static_cast<double>(idx.size());
  });
  return percentile_interval(std::move(reps), coverage);
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

// Weighted least squares y = a + b x.
inline LinearFit weighted_linear_fit(const std::vector<double>& x, const std::vector<double>& y,
                                     const std::vector<double>& w) {
  if (x.size() != y.size() || x.size() != w.size())
    throw StructuralError("weighted_linear_fit: size mismatch");
  if (x.size() < 2) throw DomainError("weighted_linear_fit: need at least two points");
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += w[i] * (x[i] - mx) * (x[i] - mx);
    sxy += w[i] * (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0) throw DomainError("weighted_linear_fit: degenerate abscissae");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    rss += w[i] * r * r;
  }
  const double dof = static_cast<double>(x.size()) - 2.0;
  f.slope_se = dof > 0 ? std::sqrt(rss / dof / sxx) : 0.0;
  return f;
}

struct TailFit {
  double slope = 0.0;  // decay rate: P(X > k) ~ exp(-slope k)
  double intercept = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double k_lo = 0.0;
  double k_hi = 0.0;
  std::size_t n_points = 0;
  double censored_fraction = 0.0;
  std::size_t n_samples = 0;
};

// Points (x, log S(x)) with weights; S is the survival function. Fits
// log S = a - slope x by WLS, with a normal-theory CI on the slope.
inline TailFit tail_slope(const std::vector<double>& x, const std::vector<double>& log_survival,
                          const std::vector<double>& weights, double coverage = 0.95) {
  const LinearFit f = weighted_linear_fit(x, log_survival, weights);
  TailFit t;
  t.slope = -f.slope;
  t.intercept = f.intercept;
  const double z = normal_quantile(0.5 + 0.5 * coverage);
  t.ci_lo = t.slope - z * f.slope_se;
  t.ci_hi = t.slope + z * f.slope_se;
  t.k_lo = *std::min_element(x.begin(), x.end());
  t.k_hi = *std::max_element(x.begin(), x.end());
  t.n_points = x.size();
  return t;
}

struct TailFitOptions {
  double min_exceedances = 50.0;
  double max_censored_fraction = 0.01;
  bool discrete = true;      // integer-valued data: fit at every integer k
  std::size_t grid_points = 32;  // continuous data: evaluation grid size
  std::size_t n_boot = 200;
  double coverage = 0.95;
};

namespace detail {

struct SurvivalGrid {
  std::vector<double> k;
  double k_hi = 0.0;
};

inline SurvivalGrid tail_grid(const std::vector<double>& sorted, std::size_t n_censored,
                              const TailFitOptions& opt) {
  const auto need = static_cast<std::size_t>(opt.min_exceedances);
  // Largest x with at least `need` samples strictly above it (censored samples
  // exceed everything).
  double k_hi = -std::numeric_limits<double>::infinity();
  for (std::size_t idx = sorted.size(); idx-- > 0;) {
    const double x = sorted[idx];
    const auto above =
        static_cast<std::size_t>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), x)) +
        n_censored;
    if (above >= need) {
      k_hi = x;
      break;
    }
  }
  SurvivalGrid g;
  if (!std::isfinite(k_hi) || k_hi <= 0.0) return g;
  g.k_hi = k_hi;
  if (opt.discrete) {
    const double hi = std::floor(k_hi);
    double lo = std::max(0.0, std::floor(hi / 10.0));
    if (hi - lo < 2.0) lo = std::max(0.0, hi - 2.0);
    for (double k = lo; k <= hi; k += 1.0) g.k.push_back(k);
  } else {
    const double lo = k_hi / 10.0;
    for (std::size_t i = 0; i < opt.grid_points; ++i)
      g.k.push_back(lo + (k_hi - lo) * static_cast<double>(i) /
                             static_cast<double>(opt.grid_points - 1));
  }
  return g;
}

inline bool survival_points(const std::vector<double>& sorted, std::size_t n_censored,
                            const std::vector<double>& grid, std::vector<double>& xs,
                            std::vector<double>& ys, std::vector<double>& ws) {
  xs.clear();
  ys.clear();
  ws.clear();
  const double n = static_cast<double>(sorted.size() + n_censored);
  for (double k : grid) {
    const double above =
        static_cast<double>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), k)) +
        static_cast<double>(n_censored);
    if (above <= 0.0 || above >= n) continue;
    const double s = above / n;
    xs.push_back(k);
    ys.push_back(std::log(s));
    // Var(log S_hat) ~ (1 - S) / (n S).
    ws.push_back(n * s / (1.0 - s));
  }
  return xs.size() >= 2;
}

}  // namespace detail

// Exponential-tail fit of P(X > k) over the largest decade of k that still has
// at least opt.min_exceedances exceedances. CI by nonparametric bootstrap.
inline TailFit tail_fit(const std::vector<double>& samples, const std::vector<bool>& censored,
                        const TailFitOptions& opt, RngStream rng) {
  if (!censored.empty() && censored.size() != samples.size())
    throw StructuralError("tail_fit: censor flags do not match samples");
  std::size_t n_cens = 0;
  std::vector<double> finite;
  finite.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!censored.empty() && censored[i])
      ++n_cens;
    else
      finite.push_back(samples[i]);
  }
  if (samples.empty()) throw DomainError("tail_fit: no samples");
  const double cens_frac = static_cast<double>(n_cens) / static_cast<double>(samples.size());
  if (cens_frac > opt.max_censored_fraction)
    throw RefusalError("tail_fit: censored fraction " + std::to_string(cens_frac) +
                       " exceeds the allowed " + std::to_string(opt.max_censored_fraction));
  std::sort(finite.begin(), finite.end());
  const auto grid = detail::tail_grid(finite, n_cens, opt);
  std::vector<double> xs, ys, ws;
  if (grid.k.size() < 2 || !detail::survival_points(finite, n_cens, grid.k, xs, ys, ws))
    throw RefusalError("tail_fit: too few exceedances for a tail fit");
  TailFit fit = tail_slope(xs, ys, ws, opt.coverage);
  fit.censored_fraction = cens_frac;
  fit.n_samples = samples.size();

  if (opt.n_boot > 0) {
    std::vector<double> reps;
    reps.reserve(opt.n_boot);
    std::vector<double> resample(finite.size());
    for (std::size_t b = 0; b < opt.n_boot; ++b) {
      std::size_t nc = 0;
      resample.clear();
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::size_t k = rng.index(samples.size());
        if (!censored.empty() && censored[k])
          ++nc;
        else
          resample.push_back(samples[k]);
      }
      std::sort(resample.begin(), resample.end());
      std::vector<double> bx, by, bw;
      if (!detail::survival_points(resample, nc, xs, bx, by, bw)) continue;
      reps.push_back(-weighted_linear_fit(bx, by, bw).slope);
    }
    if (reps.size() >= opt.n_boot / 2) {
      const auto [lo, hi] = percentile_interval(std::move(reps), opt.coverage);
      fit.ci_lo = lo;
      fit.ci_hi = hi;
    }
  }
  return fit;
}

}  // namespace rcm
