#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rcm/error.hpp"
#include "rcm/marks.hpp"
#include "rcm/rng.hpp"
#include "rcm/space.hpp"
#include "rcm/stats.hpp"

namespace rcm {

enum class ModelKind { gilbert, weighted, unmarked_indicator, unmarked_custom };

// Profile rho of the weight-dependent model phi = rho(g(p,q) |x|^d).
enum class Profile { indicator, exponential };

// Kernel g of the weight-dependent model.
//   max:          (p v q)^eps
//   sum:          (p + q)^eps
//   preferential: (p ^ q)^{-delta} (p v q)^eps
//   product:      p^eps q^delta (symmetric only when eps == delta)
enum class WeightKernel { max, sum, preferential, product };

// h(r) = inner for r <= radius, tail_amp * exp(-tail_rate (r - radius)) beyond.
struct RadialEnvelope {
  double inner = 1.0;
  double radius = 0.0;
  double tail_amp = 0.0;
  double tail_rate = 1.0;

  double operator()(double r) const {
    return r <= radius ? inner : tail_amp * std::exp(-tail_rate * (r - radius));
  }
};

// One candidate neighbour of a parent with mark p: displacement, mark and the
// probability with which it must be kept (1 for exact samplers).
struct Proposal {
  Coord delta;
  double mark = 0.0;
  double accept = 1.0;
};

// Importance-weighted displacement: E[weight f(delta)] = int f(x) phi(x,p,q) dx.
struct WeightedStep {
  Coord delta;
  double weight = 0.0;
};

inline double binomial_coefficient(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

inline double factorial(int k) { return std::tgamma(k + 1.0); }

class ConnectionModel {
 public:
  using CustomPhi = std::function<double(const Coord&)>;

  // phi = 1{|x| <= p + q}, marks are radii.
  static ConnectionModel gilbert(int d, MarkDistribution radii) {
    if (radii.lo() < 0.0) throw DomainError("gilbert radii must be nonnegative");
    ConnectionModel m(ModelKind::gilbert, d, std::move(radii));
    m.name_ = "gilbert";
    return m;
  }

  // phi = rho(g(p,q) |x|^d), marks uniform on (0,1).
  static ConnectionModel weighted(int d, Profile profile, WeightKernel kernel, double epsilon,
                                  double delta = 0.0) {
    if (!(epsilon >= 0.0) || !(delta >= 0.0))
      throw DomainError("weighted model exponents must be nonnegative");
    if (kernel != WeightKernel::product && !(epsilon < 1.0))
      throw DomainError("weighted model needs epsilon < 1 for a finite degree");
    if (kernel == WeightKernel::product && !(delta < 1.0))
      throw DomainError("product kernel needs delta < 1 for a finite degree");
    ConnectionModel m(ModelKind::weighted, d, MarkDistribution::uniform(0.0, 1.0));
    m.profile_ = profile;
    m.kernel_ = kernel;
    m.eps_ = epsilon;
    m.delta_ = delta;
    m.name_ = "weighted";
    return m;
  }

  // phi = level * 1{|x| <= range}, single mark.
  static ConnectionModel unmarked_indicator(int d, double range, double level = 1.0) {
    if (!(range > 0.0)) throw DomainError("indicator range must be positive");
    if (!(level > 0.0 && level <= 1.0)) throw DomainError("indicator level must lie in (0,1]");
    ConnectionModel m(ModelKind::unmarked_indicator, d, MarkDistribution::degenerate(0.0));
    m.range_ = range;
    m.level_ = level;
    m.name_ = "unmarked_indicator";
    return m;
  }

  // Arbitrary phi(x) dominated by a radial envelope. Without an envelope the
  // model can be evaluated but not sampled or integrated.
  static ConnectionModel unmarked_custom(int d, CustomPhi phi, std::optional<RadialEnvelope> env,
                                         std::string name = "custom") {
    ConnectionModel m(ModelKind::unmarked_custom, d, MarkDistribution::degenerate(0.0));
    m.custom_ = std::make_shared<CustomPhi>(std::move(phi));
    m.envelope_ = env;
    m.name_ = std::move(name);
    if (env) {
      if (!(env->inner >= 0.0 && env->radius >= 0.0 && env->tail_amp >= 0.0) ||
          (env->tail_amp > 0.0 && !(env->tail_rate > 0.0)))
        throw DomainError("custom envelope parameters invalid");
      m.init_envelope();
    }
    return m;
  }

  ModelKind kind() const noexcept { return kind_; }
  int dimension() const noexcept { return dim_; }
  const MarkDistribution& marks() const noexcept { return marks_; }
  const std::string& name() const noexcept { return name_; }
  Profile profile() const noexcept { return profile_; }
  WeightKernel kernel() const noexcept { return kernel_; }
  double epsilon() const noexcept { return eps_; }
  double delta() const noexcept { return delta_; }
  double kappa() const noexcept { return kappa_; }
  const std::optional<RadialEnvelope>& envelope() const noexcept { return envelope_; }

  // Kernel g of the weighted model.
  double g(double p, double q) const {
    switch (kernel_) {
      case WeightKernel::max: return std::pow(std::max(p, q), eps_);
      case WeightKernel::sum: return std::pow(p + q, eps_);
      case WeightKernel::preferential:
        return std::pow(std::min(p, q), -delta_) * std::pow(std::max(p, q), eps_);
      case WeightKernel::product: return std::pow(p, eps_) * std::pow(q, delta_);
    }
    return 1.0;
  }

  double rho(double u) const {
    return profile_ == Profile::indicator ? (u <= 1.0 ? 1.0 : 0.0) : std::exp(-u);
  }

  // phi(x, p, q) without support checks.
  double phi(const Coord& x, double p, double q) const {
    switch (kind_) {
      case ModelKind::gilbert: return x.norm() <= p + q ? 1.0 : 0.0;
      case ModelKind::weighted: {
        const double gv = g(p, q);
        const double r = x.norm();
        if (r == 0.0) return rho(0.0);
        return rho(gv * std::pow(r, dim_));
      }
      case ModelKind::unmarked_indicator: return x.norm() <= range_ ? level_ : 0.0;
      case ModelKind::unmarked_custom: return (*custom_)(x);
    }
    return 0.0;
  }

  double phi_checked(const Coord& x, double p, double q) const {
    if (x.dim() != dim_) throw StructuralError("displacement dimension does not match the model");
    check_mark(p);
    check_mark(q);
    return phi(x, p, q);
  }

  void check_mark(double p) const {
    if (!marks_.in_support(p))
      throw DomainError("mark " + std::to_string(p) + " outside the support of " + marks_.describe());
  }

  // d_phi(p,q) = int phi(x,p,q) dx when available in closed form.
  std::optional<double> d_phi_exact(double p, double q) const {
    switch (kind_) {
      case ModelKind::gilbert: return kappa_ * std::pow(p + q, dim_);
      case ModelKind::weighted: return kappa_ / g(p, q);
      case ModelKind::unmarked_indicator: return level_ * kappa_ * std::pow(range_, dim_);
      case ModelKind::unmarked_custom: return std::nullopt;
    }
    return std::nullopt;
  }

  // Hard support radius of phi(., p, q), if any.
  std::optional<double> range_bound(double p, double q) const {
    switch (kind_) {
      case ModelKind::gilbert: return p + q;
      case ModelKind::weighted:
        if (profile_ == Profile::exponential) return std::nullopt;
        return std::pow(g(p, q), -1.0 / dim_);
      case ModelKind::unmarked_indicator: return range_;
      case ModelKind::unmarked_custom:
        if (envelope_ && envelope_->tail_amp == 0.0) return envelope_->radius;
        return std::nullopt;
    }
    return std::nullopt;
  }

  // sup over p of range_bound(p, q); infinite when no hard range exists.
  double query_radius(double q) const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (kind_) {
      case ModelKind::gilbert: return marks_.bounded() ? q + marks_.hi() : inf;
      case ModelKind::weighted:
        if (profile_ == Profile::exponential) return inf;
        switch (kernel_) {
          case WeightKernel::max:
          case WeightKernel::sum: return std::pow(q, -eps_ / dim_);
          case WeightKernel::preferential: return std::pow(q, (delta_ - eps_) / dim_);
          case WeightKernel::product: return eps_ > 0.0 ? inf : std::pow(q, -delta_ / dim_);
        }
        return inf;
      default: {
        const auto r = range_bound(0.0, 0.0);
        return r ? *r : inf;
      }
    }
  }

  // D_phi((0,p)) in closed form or by quadrature; nullopt for custom models.
  std::optional<double> degree_exact(double p) const {
    switch (kind_) {
      case ModelKind::gilbert: return kappa_ * gilbert_moment(p);
      case ModelKind::weighted: return kappa_ * inverse_g_integral(p);
      case ModelKind::unmarked_indicator: return *d_phi_exact(0.0, 0.0);
      case ModelKind::unmarked_custom: return std::nullopt;
    }
    return std::nullopt;
  }

  // D_phi((0,p)) as an estimate; refuses when phi cannot be integrated safely.
  KernelEstimate degree(double p, std::size_t n_mc, RngStream& rng) const {
    return tail_mass(p, 0.0, n_mc, rng);
  }

  // int int_{|x|>r} phi(x,p,q) dx Q(dq).
  KernelEstimate tail_mass(double p, double r, std::size_t n_mc, RngStream& rng) const {
    if (r < 0.0) throw DomainError("tail_mass: radius must be nonnegative");
    const double rd = std::pow(r, dim_);
    switch (kind_) {
      case ModelKind::gilbert: {
        if (marks_.bounded() && r >= p + marks_.hi()) return KernelEstimate::exact(0.0);
        if (r == 0.0) return KernelEstimate::exact(kappa_ * gilbert_moment(p),
                                                   marks_.atomic() ? EstimateMethod::closed_form
                                                                   : EstimateMethod::quadrature);
        const double v = kappa_ * marks_.expectation(
                                      [&](double q) { return std::max(0.0, std::pow(p + q, dim_) - rd); },
                                      {r - p});
        return KernelEstimate::exact(v, marks_.atomic() ? EstimateMethod::closed_form
                                                        : EstimateMethod::quadrature);
      }
      case ModelKind::weighted: {
        if (r == 0.0) return KernelEstimate::exact(kappa_ * inverse_g_integral(p));
        auto integrand = [&](double q) {
          const double gv = g(p, q);
          if (!(gv > 0.0)) return 0.0;
          const double s = gv * rd;
          const double tail = profile_ == Profile::indicator ? std::max(0.0, 1.0 - s) : std::exp(-s);
          return kappa_ / gv * tail;
        };
        std::vector<double> breaks{p};
        if (profile_ == Profile::indicator && eps_ > 0.0) {
          const double qs = std::pow(rd, -1.0 / eps_);
          if (kernel_ == WeightKernel::max) breaks.push_back(qs);
          if (kernel_ == WeightKernel::sum) breaks.push_back(qs - p);
        }
        return KernelEstimate::exact(marks_.expectation(integrand, breaks), EstimateMethod::quadrature);
      }
      case ModelKind::unmarked_indicator:
        return KernelEstimate::exact(level_ * kappa_ * std::max(0.0, std::pow(range_, dim_) - rd));
      case ModelKind::unmarked_custom: {
        require_envelope("tail_mass");
        if (envelope_->tail_amp == 0.0 && r >= envelope_->radius) return KernelEstimate::exact(0.0);
        if (n_mc == 0) throw DomainError("tail_mass: n_mc must be positive");
        StreamingMoments m;
        for (std::size_t i = 0; i < n_mc; ++i) {
          const auto s = sample_step(p, p, rng);
          m.add(s.delta.norm() > r ? s.weight : 0.0);
        }
        return KernelEstimate::from(m);
      }
    }
    return KernelEstimate::exact(0.0);
  }

  // D* = sup_p D_phi((0,p)); infinite for models with unbounded degree.
  double degree_sup() const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (kind_) {
      case ModelKind::gilbert:
        return marks_.bounded() ? kappa_ * gilbert_moment(marks_.hi()) : inf;
      case ModelKind::weighted:
        switch (kernel_) {
          case WeightKernel::max:
          case WeightKernel::sum: return kappa_ / (1.0 - eps_);
          case WeightKernel::product: return eps_ > 0.0 ? inf : kappa_ / (1.0 - delta_);
          case WeightKernel::preferential: {
            double best = 0.0;
            const int n = 4000;
            for (int i = 1; i <= n; ++i) best = std::max(best, inverse_g_integral(double(i) / n));
            return kappa_ * best;
          }
        }
        return inf;
      case ModelKind::unmarked_indicator: return *d_phi_exact(0.0, 0.0);
      case ModelKind::unmarked_custom:
        require_envelope("degree_sup");
        return custom_mass_.value;
    }
    return inf;
  }

  // Models with D* = infinity have t_T = 0; certificates refuse them.
  bool t_T_trivial() const { return !std::isfinite(degree_sup()); }

  // Length scale of the connection function: radius of the ball whose volume
  // is the degree of a median-marked point.
  double typical_range() const {
    double deg;
    if (kind_ == ModelKind::unmarked_custom) {
      require_envelope("typical_range");
      deg = custom_mass_.value;
    } else {
      deg = *degree_exact(marks_.median());
    }
    return std::pow(deg / kappa_, 1.0 / dim_);
  }

  // Largest support radius of phi over all mark pairs, infinite if none.
  double max_range() const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (kind_ == ModelKind::gilbert) return marks_.bounded() ? 2.0 * marks_.hi() : inf;
    if (kind_ == ModelKind::weighted) {
      const bool scale_free = kernel_ == WeightKernel::max || kernel_ == WeightKernel::sum;
      if (profile_ == Profile::indicator && scale_free && eps_ == 0.0) return 1.0;
      return inf;
    }
    return query_radius(0.0);
  }

  // Total mass of the candidate intensity used by the explorer for a parent
  // with mark p (equals D_phi((0,p)) for exact samplers).
  double proposal_mass(double p) const {
    switch (kind_) {
      case ModelKind::gilbert: return kappa_ * gilbert_moment(p);
      case ModelKind::weighted: return kappa_ * inverse_g_integral(p);
      case ModelKind::unmarked_indicator: return *d_phi_exact(0.0, 0.0);
      case ModelKind::unmarked_custom:
        require_envelope("proposal_mass");
        return envelope_mass_;
    }
    return 0.0;
  }

  // Candidate from the normalised proposal intensity for parent mark p.
  Proposal propose(double p, RngStream& rng) const {
    Proposal out;
    switch (kind_) {
      case ModelKind::gilbert: {
        out.mark = sample_gilbert_partner(p, rng);
        out.delta = uniform_in_ball(dim_, p + out.mark, rng);
        return out;
      }
      case ModelKind::weighted: {
        out.mark = sample_weighted_partner(p, rng);
        out.delta = weighted_displacement(p, out.mark, rng);
        return out;
      }
      case ModelKind::unmarked_indicator:
        out.mark = 0.0;
        out.delta = uniform_in_ball(dim_, range_, rng);
        return out;
      case ModelKind::unmarked_custom: {
        require_envelope("propose");
        out.mark = 0.0;
        out.delta = sample_envelope(rng);
        const double h = (*envelope_)(out.delta.norm());
        out.accept = h > 0.0 ? std::min(1.0, (*custom_)(out.delta) / h) : 0.0;
        return out;
      }
    }
    return out;
  }

  // Exact draw from phi(., p, q) / d_phi(p, q).
  Coord sample_displacement(double p, double q, RngStream& rng) const {
    switch (kind_) {
      case ModelKind::gilbert:
        if (!(p + q > 0.0)) throw DomainError("sample_displacement: d_phi(p,q) = 0");
        return uniform_in_ball(dim_, p + q, rng);
      case ModelKind::weighted: return weighted_displacement(p, q, rng);
      case ModelKind::unmarked_indicator: return uniform_in_ball(dim_, range_, rng);
      case ModelKind::unmarked_custom: {
        require_envelope("sample_displacement");
        for (std::size_t tries = 0; tries < 100000000; ++tries) {
          const Coord x = sample_envelope(rng);
          const double h = (*envelope_)(x.norm());
          if (h > 0.0 && rng.uniform() * h < (*custom_)(x)) return x;
        }
        throw DomainError("sample_displacement: d_phi(p,q) = 0");
      }
    }
    return Coord(dim_);
  }

  WeightedStep sample_step(double p, double q, RngStream& rng) const {
    if (kind_ == ModelKind::unmarked_custom) {
      require_envelope("sample_step");
      const Coord x = sample_envelope(rng);
      const double h = (*envelope_)(x.norm());
      return {x, h > 0.0 ? envelope_mass_ * (*custom_)(x) / h : 0.0};
    }
    const double w = *d_phi_exact(p, q);
    if (!(w > 0.0)) return {Coord(dim_), 0.0};
    if (!std::isfinite(w)) throw DomainError("sample_step: d_phi(p,q) is infinite");
    return {sample_displacement(p, q, rng), w};
  }

  // Exact symmetry, range and [0,1] checks on random triples; throws on failure.
  void validate(RngStream rng, std::size_t n_checks = 2000) const {
    const double scale = 3.0 * typical_range_for_validation();
    for (std::size_t i = 0; i < n_checks; ++i) {
      const double p = marks_.sample(rng);
      const double q = marks_.sample(rng);
      const Coord x = uniform_in_ball(dim_, scale, rng);
      const double a = phi(x, p, q);
      const double b = phi(-x, q, p);
      if (!(a >= 0.0 && a <= 1.0))
        throw DomainError("connection function '" + name_ + "' leaves [0,1]");
      if (a != b)
        throw DomainError("connection function '" + name_ +
                          "' is not symmetric: phi(x,p,q) != phi(-x,q,p)");
      if (const auto rb = range_bound(p, q); rb && x.norm() > *rb && a > 0.0)
        throw DomainError("connection function '" + name_ + "' is positive beyond its range bound");
      if (kind_ == ModelKind::unmarked_custom && envelope_ && a > (*envelope_)(x.norm()) * (1 + 1e-12))
        throw DomainError("connection function '" + name_ + "' exceeds its declared envelope");
    }
  }

  // E (p + Q)^d.
  double gilbert_moment(double p) const {
    switch (marks_.kind()) {
      case MarkDistribution::Kind::uniform: {
        const double a = marks_.lo(), b = marks_.hi();
        return (std::pow(p + b, dim_ + 1) - std::pow(p + a, dim_ + 1)) / ((dim_ + 1) * (b - a));
      }
      case MarkDistribution::Kind::exponential: {
        double s = 0.0;
        for (int k = 0; k <= dim_; ++k)
          s += binomial_coefficient(dim_, k) * std::pow(p, dim_ - k) * factorial(k) /
               std::pow(marks_.rate(), k);
        return s;
      }
      default:
        return marks_.expectation([&](double q) { return std::pow(p + q, dim_); });
    }
  }

  // int_0^1 1/g(p,q) dq for the weighted model.
  double inverse_g_integral(double p) const {
    const double e1 = 1.0 - eps_;
    switch (kernel_) {
      case WeightKernel::max: return std::pow(p, e1) + (1.0 - std::pow(p, e1)) / e1;
      case WeightKernel::sum: return (std::pow(p + 1.0, e1) - std::pow(p, e1)) / e1;
      case WeightKernel::preferential:
        return std::pow(p, 1.0 + delta_ - eps_) / (1.0 + delta_) +
               std::pow(p, delta_) * (1.0 - std::pow(p, e1)) / e1;
      case WeightKernel::product:
        return std::pow(p, -eps_) / (1.0 - delta_);
    }
    return 0.0;
  }

 private:
  ConnectionModel(ModelKind kind, int d, MarkDistribution marks)
      : kind_(kind), dim_(d), marks_(std::move(marks)) {
    if (d < 1 || d > kMaxDimension)
      throw DomainError("model dimension must lie in [1, " + std::to_string(kMaxDimension) + "]");
    kappa_ = unit_ball_volume(d);
  }

  void require_envelope(const char* what) const {
    if (!envelope_)
      throw RefusalError(std::string(what) + ": custom connection function '" + name_ +
                         "' has no envelope, so it cannot be integrated or sampled safely");
  }

  double typical_range_for_validation() const {
    if (kind_ == ModelKind::unmarked_custom && !envelope_) return 1.0;
    return typical_range();
  }

  // Envelope mass and radial sampler.
  void init_envelope() {
    const auto& e = *envelope_;
    const double surface = dim_ * kappa_;
    inner_mass_ = e.inner * kappa_ * std::pow(e.radius, dim_);
    tail_weights_.assign(dim_, 0.0);
    double tail = 0.0;
    if (e.tail_amp > 0.0) {
      for (int k = 0; k < dim_; ++k) {
        tail_weights_[k] = binomial_coefficient(dim_ - 1, k) * std::pow(e.radius, dim_ - 1 - k) *
                           factorial(k) / std::pow(e.tail_rate, k + 1);
        tail += tail_weights_[k];
      }
    }
    tail_mass_ = e.tail_amp * surface * tail;
    envelope_mass_ = inner_mass_ + tail_mass_;
    if (!(envelope_mass_ > 0.0)) throw DomainError("custom envelope has zero mass");
    // Fixed-seed importance-sampling estimate of d_phi, used as D*.
    RngStream rng(0x5eedULL, 0, Purpose::validation);
    StreamingMoments m;
    for (int i = 0; i < 400000; ++i) {
      const Coord x = sample_envelope(rng);
      const double h = e(x.norm());
      m.add(h > 0.0 ? envelope_mass_ * (*custom_)(x) / h : 0.0);
    }
    custom_mass_ = KernelEstimate::from(m);
  }

  Coord sample_envelope(RngStream& rng) const {
    const auto& e = *envelope_;
    if (rng.uniform() * envelope_mass_ < inner_mass_) return uniform_in_ball(dim_, e.radius, rng);
    double total = 0.0;
    for (double w : tail_weights_) total += w;
    double u = rng.uniform() * total;
    int k = 0;
    while (k + 1 < dim_ && u >= tail_weights_[k]) u -= tail_weights_[k++];
    const double s = rng.gamma(k + 1.0, 1.0 / e.tail_rate);
    return uniform_direction(dim_, rng) * (e.radius + s);
  }

  // Partner mark with density proportional to (p + q)^d Q(dq).
  double sample_gilbert_partner(double p, RngStream& rng) const {
    switch (marks_.kind()) {
      case MarkDistribution::Kind::degenerate: return marks_.lo();
      case MarkDistribution::Kind::discrete: {
        const auto& a = marks_.atoms();
        const auto& w = marks_.weights();
        double total = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) total += w[k] * std::pow(p + a[k], dim_);
        double u = rng.uniform() * total;
        for (std::size_t k = 0; k < a.size(); ++k) {
          u -= w[k] * std::pow(p + a[k], dim_);
          if (u < 0.0) return a[k];
        }
        return a.back();
      }
      case MarkDistribution::Kind::exponential: {
        // (p+q)^d e^{-lq} expands into a mixture of Gamma(k+1, 1/l) laws.
        const double lam = marks_.rate();
        std::vector<double> w(dim_ + 1);
        double total = 0.0;
        for (int k = 0; k <= dim_; ++k)
          total += w[k] = binomial_coefficient(dim_, k) * std::pow(p, dim_ - k) * factorial(k) /
                          std::pow(lam, k);
        double u = rng.uniform() * total;
        int k = 0;
        while (k < dim_ && u >= w[k]) u -= w[k++];
        return rng.gamma(k + 1.0, 1.0 / lam);
      }
      default: {
        const double top = std::pow(p + marks_.hi(), dim_);
        for (;;) {
          const double q = marks_.sample(rng);
          if (rng.uniform() * top < std::pow(p + q, dim_)) return q;
        }
      }
    }
  }

  // Partner mark on (0,1) with density proportional to 1/g(p,q) (inverse CDF).
  double sample_weighted_partner(double p, RngStream& rng) const {
    const double e1 = 1.0 - eps_;
    const double v = rng.uniform() * inverse_g_integral(p);
    switch (kernel_) {
      case WeightKernel::max: {
        const double a = std::pow(p, e1);
        if (v < a) return v * std::pow(p, eps_);
        return std::min(1.0, std::pow(a + e1 * (v - a), 1.0 / e1));
      }
      case WeightKernel::sum:
        return std::clamp(std::pow(std::pow(p, e1) + e1 * v, 1.0 / e1) - p, 0.0, 1.0);
      case WeightKernel::preferential: {
        const double a = std::pow(p, 1.0 + delta_ - eps_) / (1.0 + delta_);
        if (v < a) return std::pow(v * (1.0 + delta_) * std::pow(p, eps_), 1.0 / (1.0 + delta_));
        return std::min(1.0, std::pow(std::pow(p, e1) + e1 * (v - a) / std::pow(p, delta_), 1.0 / e1));
      }
      case WeightKernel::product:
        return std::pow(rng.uniform(), 1.0 / (1.0 - delta_));
    }
    return 0.0;
  }

  // |x|^d g ~ u with u distributed as the normalised profile.
  Coord weighted_displacement(double p, double q, RngStream& rng) const {
    const double gv = g(p, q);
    if (!(gv > 0.0) || !std::isfinite(gv))
      throw DomainError("weighted displacement: degenerate kernel value");
    const double u = profile_ == Profile::indicator ? rng.uniform() : rng.exponential(1.0);
    return uniform_direction(dim_, rng) * std::pow(u / gv, 1.0 / dim_);
  }

  ModelKind kind_;
  int dim_;
  MarkDistribution marks_;
  double kappa_ = 0.0;
  std::string name_;
  // weighted
  Profile profile_ = Profile::indicator;
  WeightKernel kernel_ = WeightKernel::max;
  double eps_ = 0.0;
  double delta_ = 0.0;
  // indicator
  double range_ = 0.0;
  double level_ = 1.0;
  // custom
  std::shared_ptr<CustomPhi> custom_;
  std::optional<RadialEnvelope> envelope_;
  double inner_mass_ = 0.0;
  double tail_mass_ = 0.0;
  double envelope_mass_ = 0.0;
  std::vector<double> tail_weights_;
  KernelEstimate custom_mass_;
};

}  // namespace rcm
