#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rcm/error.hpp"
#include "rcm/rng.hpp"

namespace rcm {

inline constexpr int kMaxDimension = 4;

// Point or displacement in R^d, d <= kMaxDimension, stored inline.
class Coord {
 public:
  Coord() = default;
  explicit Coord(int dim) : dim_(dim) {
    if (dim < 1 || dim > kMaxDimension)
      throw DomainError("dimension must lie in [1, " + std::to_string(kMaxDimension) + "]");
  }
  Coord(std::initializer_list<double> xs) : Coord(static_cast<int>(xs.size())) {
    std::copy(xs.begin(), xs.end(), v_.begin());
  }

  int dim() const noexcept { return dim_; }
  double& operator[](int i) noexcept { return v_[static_cast<std::size_t>(i)]; }
  double operator[](int i) const noexcept { return v_[static_cast<std::size_t>(i)]; }

  double norm_squared() const noexcept {
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) s += v_[i] * v_[i];
    return s;
  }
  double norm() const noexcept { return std::sqrt(norm_squared()); }

  Coord operator-() const noexcept {
    Coord r = *this;
    for (int i = 0; i < dim_; ++i) r.v_[i] = -r.v_[i];
    return r;
  }
  Coord& operator+=(const Coord& o) noexcept {
    for (int i = 0; i < dim_; ++i) v_[i] += o.v_[i];
    return *this;
  }
  Coord& operator-=(const Coord& o) noexcept {
    for (int i = 0; i < dim_; ++i) v_[i] -= o.v_[i];
    return *this;
  }
  Coord& operator*=(double s) noexcept {
    for (int i = 0; i < dim_; ++i) v_[i] *= s;
    return *this;
  }
  friend Coord operator+(Coord a, const Coord& b) noexcept { return a += b; }
  friend Coord operator-(Coord a, const Coord& b) noexcept { return a -= b; }
  friend Coord operator*(Coord a, double s) noexcept { return a *= s; }
  friend bool operator==(const Coord& a, const Coord& b) noexcept {
    if (a.dim_ != b.dim_) return false;
    for (int i = 0; i < a.dim_; ++i)
      if (a.v_[i] != b.v_[i]) return false;
    return true;
  }

 private:
  std::array<double, kMaxDimension> v_{};
  int dim_ = 0;
};

enum class Boundary { torus, free };

struct SpaceConfig {
  int dimension = 2;
  double box_length = 1.0;
  Boundary boundary = Boundary::torus;

  void validate() const {
    if (dimension < 1 || dimension > kMaxDimension)
      throw DomainError("space.dimension must lie in [1, " + std::to_string(kMaxDimension) + "]");
    if (!(box_length > 0.0) || !std::isfinite(box_length))
      throw DomainError("space.box_length must be positive and finite");
  }
  double volume() const { return std::pow(box_length, dimension); }
};

struct MarkedPoint {
  Coord location;
  double mark = 0.0;
  std::optional<double> label;
};

// Volume of the unit ball in R^d.
inline double unit_ball_volume(int d) {
  return std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

// Difference b - a, wrapped to the minimal image under torus boundary.
inline Coord displacement(const Coord& a, const Coord& b, const SpaceConfig& cfg) {
  if (a.dim() != b.dim() || a.dim() != cfg.dimension)
    throw StructuralError("dimension mismatch between points and space");
  Coord d = b - a;
  if (cfg.boundary == Boundary::torus) {
    const double L = cfg.box_length;
    for (int i = 0; i < d.dim(); ++i) {
      d[i] -= L * std::round(d[i] / L);
    }
  }
  return d;
}

inline double distance(const Coord& a, const Coord& b, const SpaceConfig& cfg) {
  if (a.dim() != b.dim() || a.dim() != cfg.dimension)
    throw StructuralError("dimension mismatch between points and space");
  double s = 0.0;
  const bool wrap = cfg.boundary == Boundary::torus;
  const double L = cfg.box_length;
  for (int i = 0; i < a.dim(); ++i) {
    double delta = std::abs(b[i] - a[i]);
    if (wrap) {
      delta = std::fmod(delta, L);
      delta = std::min(delta, L - delta);
    }
    s += delta * delta;
  }
  return std::sqrt(s);
}

inline double distance(const MarkedPoint& a, const MarkedPoint& b, const SpaceConfig& cfg) {
  return distance(a.location, b.location, cfg);
}

// Euclidean distance in unbounded R^d.
inline double euclidean(const Coord& a, const Coord& b) { return (b - a).norm(); }

// d_m(A, B) = max over a in A, b in B of d(a, b), with d_m(A, {}) = 0.
template <class Dist>
double max_cross_distance(std::span<const Coord> a, std::span<const Coord> b, Dist&& dist) {
  double best = 0.0;
  for (const auto& x : a)
    for (const auto& y : b) best = std::max(best, dist(x, y));
  return best;
}

// Diameter D(A) = max pairwise distance; 0 for empty or singleton sets.
// Exact: pairs are pruned with the triangle inequality through a pivot, so
// the cost is near-linear for compact sets.
template <class Dist>
double diameter(std::span<const Coord> pts, Dist&& dist) {
  const std::size_t n = pts.size();
  if (n < 2) return 0.0;
  std::vector<std::pair<double, std::size_t>> by_radius(n);
  for (std::size_t i = 0; i < n; ++i) by_radius[i] = {dist(pts[0], pts[i]), i};
  std::sort(by_radius.begin(), by_radius.end(),
            [](const auto& l, const auto& r) { return l.first > r.first; });
  double best = by_radius.front().first;
  for (std::size_t a = 0; a < n; ++a) {
    const auto [ra, ia] = by_radius[a];
    if (ra + by_radius[std::min(a + 1, n - 1)].first <= best) break;
    for (std::size_t b = a + 1; b < n; ++b) {
      const auto [rb, ib] = by_radius[b];
      if (ra + rb <= best) break;
      best = std::max(best, dist(pts[ia], pts[ib]));
    }
  }
  return best;
}

inline double set_diameter(std::span<const MarkedPoint> points, const SpaceConfig& cfg) {
  std::vector<Coord> locs;
  locs.reserve(points.size());
  for (const auto& p : points) locs.push_back(p.location);
  return diameter(std::span<const Coord>(locs),
                  [&](const Coord& a, const Coord& b) { return distance(a, b, cfg); });
}

inline double max_distance_to_root(const MarkedPoint& root, std::span<const MarkedPoint> points,
                                   const SpaceConfig& cfg) {
  double best = 0.0;
  for (const auto& p : points) best = std::max(best, distance(root, p, cfg));
  return best;
}

// Torus distances underestimate the R^d diameter once a set is wider than L/2.
inline bool wrap_ambiguous(double diam, const SpaceConfig& cfg) {
  return cfg.boundary == Boundary::torus && diam > 0.5 * cfg.box_length;
}

// Uniform point in the box [0, L)^d.
inline Coord uniform_in_box(const SpaceConfig& cfg, RngStream& rng) {
  Coord c(cfg.dimension);
  for (int i = 0; i < cfg.dimension; ++i) c[i] = rng.uniform() * cfg.box_length;
  return c;
}

// Uniform direction on the unit sphere S^{d-1}.
inline Coord uniform_direction(int d, RngStream& rng) {
  Coord c(d);
  if (d == 1) {
    c[0] = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return c;
  }
  double n2 = 0.0;
  do {
    for (int i = 0; i < d; ++i) c[i] = rng.normal();
    n2 = c.norm_squared();
  } while (n2 == 0.0);
  c *= 1.0 / std::sqrt(n2);
  return c;
}

// Uniform point in the ball of radius r centred at the origin.
inline Coord uniform_in_ball(int d, double r, RngStream& rng) {
  const double radius = r * std::pow(rng.uniform(), 1.0 / d);
  return uniform_direction(d, rng) * radius;
}

}  // namespace rcm
