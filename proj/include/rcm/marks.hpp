#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "rcm/error.hpp"
#include "rcm/rng.hpp"

namespace rcm {

// Mark distribution Q on a subset of the real line.
class MarkDistribution {
 public:
  enum class Kind { degenerate, uniform, discrete, bounded_custom, exponential };

  static MarkDistribution degenerate(double value) {
    MarkDistribution m(Kind::degenerate);
    m.lo_ = m.hi_ = value;
    m.atoms_ = {value};
    m.weights_ = {1.0};
    return m;
  }

  static MarkDistribution uniform(double a = 0.0, double b = 1.0) {
    if (!(a < b)) throw DomainError("uniform mark distribution needs a < b");
    MarkDistribution m(Kind::uniform);
    m.lo_ = a;
    m.hi_ = b;
    return m;
  }

  static MarkDistribution discrete(std::vector<double> atoms, std::vector<double> weights) {
    if (atoms.empty() || atoms.size() != weights.size())
      throw StructuralError("discrete mark distribution: atoms and weights must match");
    double total = 0.0;
    for (double w : weights) {
      if (!(w > 0.0)) throw DomainError("discrete mark distribution: weights must be positive");
      total += w;
    }
    std::vector<std::size_t> order(atoms.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto l, auto r) { return atoms[l] < atoms[r]; });
    MarkDistribution m(Kind::discrete);
    for (auto k : order) {
      m.atoms_.push_back(atoms[k]);
      m.weights_.push_back(weights[k] / total);
    }
    m.lo_ = m.atoms_.front();
    m.hi_ = m.atoms_.back();
    double c = 0.0;
    for (double w : m.weights_) m.cumulative_.push_back(c += w);
    m.cumulative_.back() = 1.0;
    return m;
  }

  // Density proportional to f on [a, b]; f must be bounded by f_max.
  static MarkDistribution bounded_custom(std::function<double(double)> f, double a, double b,
                                         double f_max) {
    if (!(a < b) || !std::isfinite(a) || !std::isfinite(b))
      throw DomainError("bounded_custom mark distribution needs a finite interval");
    if (!(f_max > 0.0)) throw DomainError("bounded_custom mark distribution needs f_max > 0");
    MarkDistribution m(Kind::bounded_custom);
    m.lo_ = a;
    m.hi_ = b;
    m.f_ = std::move(f);
    m.f_max_ = f_max;
    m.norm_ = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(m.f_, a, b, 15, 1e-12);
    if (!(m.norm_ > 0.0)) throw DomainError("bounded_custom mark density integrates to zero");
    return m;
  }

  // Unbounded support; models built on it have infinite D*.
  static MarkDistribution exponential(double rate) {
    if (!(rate > 0.0)) throw DomainError("exponential mark distribution needs rate > 0");
    MarkDistribution m(Kind::exponential);
    m.lo_ = 0.0;
    m.hi_ = std::numeric_limits<double>::infinity();
    m.rate_ = rate;
    return m;
  }

  Kind kind() const noexcept { return kind_; }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  bool bounded() const noexcept { return std::isfinite(hi_); }
  bool atomic() const noexcept { return kind_ == Kind::degenerate || kind_ == Kind::discrete; }
  const std::vector<double>& atoms() const noexcept { return atoms_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double rate() const noexcept { return rate_; }

  bool in_support(double x) const {
    switch (kind_) {
      case Kind::degenerate:
      case Kind::discrete:
        return std::find(atoms_.begin(), atoms_.end(), x) != atoms_.end();
      case Kind::exponential:
        return x >= 0.0 && std::isfinite(x);
      default:
        return x >= lo_ && x <= hi_;
    }
  }

  double sample(RngStream& rng) const {
    switch (kind_) {
      case Kind::degenerate:
        return lo_;
      case Kind::uniform:
        return rng.uniform(lo_, hi_);
      case Kind::discrete: {
        const double u = rng.uniform();
        const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        return atoms_[std::min<std::size_t>(it - cumulative_.begin(), atoms_.size() - 1)];
      }
      case Kind::bounded_custom:
        for (;;) {
          const double x = rng.uniform(lo_, hi_);
          if (rng.uniform() * f_max_ < f_(x)) return x;
        }
      case Kind::exponential:
        return rng.exponential(rate_);
    }
    return lo_;
  }

  // Density with respect to Lebesgue measure (continuous kinds only).
  double density(double x) const {
    switch (kind_) {
      case Kind::uniform:
        return (x >= lo_ && x <= hi_) ? 1.0 / (hi_ - lo_) : 0.0;
      case Kind::bounded_custom:
        return (x >= lo_ && x <= hi_) ? f_(x) / norm_ : 0.0;
      case Kind::exponential:
        return x >= 0.0 ? rate_ * std::exp(-rate_ * x) : 0.0;
      default:
        throw DomainError("density requested for an atomic mark distribution");
    }
  }

  // E f(Q): exact for atomic kinds, adaptive quadrature otherwise. `breaks`
  // lists interior points where f has kinks.
  double expectation(const std::function<double(double)>& f,
                     std::vector<double> breaks = {}) const {
    if (atomic()) {
      double s = 0.0;
      for (std::size_t k = 0; k < atoms_.size(); ++k) s += weights_[k] * f(atoms_[k]);
      return s;
    }
    if (kind_ == Kind::exponential) {
      boost::math::quadrature::exp_sinh<double> integrator;
      auto g = [&](double x) {
        const double w = density(x);
        return w > 0.0 ? f(x) * w : 0.0;  // f may overflow where the density has underflowed
      };
      std::vector<double> pts{0.0};
      for (double b : breaks)
        if (b > 0.0) pts.push_back(b);
      std::sort(pts.begin(), pts.end());
      double s = 0.0;
      for (std::size_t k = 0; k + 1 < pts.size(); ++k) s += integrate_finite(g, pts[k], pts[k + 1]);
      s += integrator.integrate([&](double x) { return g(x); }, pts.back(),
                                std::numeric_limits<double>::infinity());
      return s;
    }
    std::vector<double> pts{lo_};
    for (double b : breaks)
      if (b > lo_ && b < hi_) pts.push_back(b);
    pts.push_back(hi_);
    std::sort(pts.begin(), pts.end());
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k)
      s += integrate_finite([&](double x) { return f(x) * density(x); }, pts[k], pts[k + 1]);
    return s;
  }

  // Representative marks for grid suprema: atoms, or a grid covering the support.
  std::vector<double> default_grid(std::size_t n = 9) const {
    if (atomic()) return atoms_;
    std::vector<double> g;
    if (kind_ == Kind::exponential) {
      for (std::size_t i = 0; i < n; ++i) g.push_back(static_cast<double>(i) / rate_);
      return g;
    }
    for (std::size_t i = 0; i < n; ++i)
      g.push_back(lo_ + (hi_ - lo_) * (static_cast<double>(i) + 0.5) / static_cast<double>(n));
    return g;
  }

  // Median (used for typical length scales).
  double median() const {
    switch (kind_) {
      case Kind::degenerate:
        return lo_;
      case Kind::uniform:
        return 0.5 * (lo_ + hi_);
      case Kind::discrete: {
        const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), 0.5);
        return atoms_[std::min<std::size_t>(it - cumulative_.begin(), atoms_.size() - 1)];
      }
      case Kind::exponential:
        return std::log(2.0) / rate_;
      case Kind::bounded_custom: {
        double a = lo_, b = hi_;
        for (int it = 0; it < 60; ++it) {
          const double m = 0.5 * (a + b);
          const double c = integrate_finite([&](double x) { return density(x); }, lo_, m);
          (c < 0.5 ? a : b) = m;
        }
        return 0.5 * (a + b);
      }
    }
    return lo_;
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::degenerate: return "degenerate(" + std::to_string(lo_) + ")";
      case Kind::uniform: return "uniform(" + std::to_string(lo_) + "," + std::to_string(hi_) + ")";
      case Kind::discrete: return "discrete(" + std::to_string(atoms_.size()) + " atoms)";
      case Kind::bounded_custom: return "bounded_custom";
      case Kind::exponential: return "exponential(" + std::to_string(rate_) + ")";
    }
    return "?";
  }

  template <class F>
  static double integrate_finite(F&& f, double a, double b) {
    if (!(b > a)) return 0.0;
    // Double-exponential rule: integrable endpoint singularities (such as
    // kernels like (p v q)^-eps near 0) converge without deep bisection.
    static thread_local boost::math::quadrature::tanh_sinh<double> rule;
    return rule.integrate(f, a, b, 1e-11);
  }

 private:
  explicit MarkDistribution(Kind k) : kind_(k) {}

  Kind kind_;
  double lo_ = 0.0;
  double hi_ = 0.0;
  double rate_ = 0.0;
  std::vector<double> atoms_;
  std::vector<double> weights_;
  std::vector<double> cumulative_;
  std::function<double(double)> f_;
  double f_max_ = 0.0;
  double norm_ = 1.0;
};

}  // namespace rcm
