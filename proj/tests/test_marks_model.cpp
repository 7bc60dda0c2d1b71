#include <cmath>
#include <numbers>
#include <vector>

#include "catch_amalgamated.hpp"
#include "rcm/model.hpp"

using namespace rcm;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kPi = std::numbers::pi;

ConnectionModel gilbert_half() { return ConnectionModel::gilbert(2, MarkDistribution::degenerate(0.5)); }

ConnectionModel weighted_max(double eps, Profile prof = Profile::indicator) {
  return ConnectionModel::weighted(2, prof, WeightKernel::max, eps);
}

Coord at_norm(double r) { return Coord{r * 0.6, r * 0.8}; }

}  // namespace

TEST_CASE("phi values") {
  const auto g = ConnectionModel::gilbert(2, MarkDistribution::uniform(0.0, 1.0));
  CHECK(g.phi_checked(at_norm(0.3), 0.2, 0.2) == 1.0);
  CHECK(g.phi_checked(at_norm(0.5), 0.2, 0.2) == 0.0);
  const auto w = weighted_max(0.5);
  CHECK(w.g(0.25, 0.04) == 0.5);
  CHECK(w.phi_checked(at_norm(1.2), 0.25, 0.04) == 1.0);
  CHECK(w.phi_checked(at_norm(1.5), 0.25, 0.04) == 0.0);
  CHECK_THROWS_AS(w.phi_checked(at_norm(1.0), 1.5, 0.5), DomainError);
  CHECK_THROWS_AS(g.phi_checked(Coord{0.1, 0.1, 0.1}, 0.2, 0.2), StructuralError);
}

TEST_CASE("symmetry and range on random triples") {
  RngStream rng(21, 0);
  std::vector<ConnectionModel> models{
      ConnectionModel::gilbert(2, MarkDistribution::uniform(0.1, 0.6)),
      ConnectionModel::gilbert(3, MarkDistribution::discrete({0.2, 0.7}, {1, 2})),
      weighted_max(0.5),
      weighted_max(0.3, Profile::exponential),
      ConnectionModel::weighted(2, Profile::indicator, WeightKernel::sum, 0.4),
      ConnectionModel::weighted(2, Profile::indicator, WeightKernel::preferential, 0.5, 0.3),
      ConnectionModel::weighted(2, Profile::indicator, WeightKernel::product, 0.4, 0.4),
      ConnectionModel::unmarked_indicator(2, 0.8, 0.5)};
  for (const auto& m : models) {
    for (int i = 0; i < 5000; ++i) {
      const double p = m.marks().sample(rng), q = m.marks().sample(rng);
      const Coord x = uniform_in_ball(m.dimension(), 3.0, rng);
      const double a = m.phi(x, p, q);
      CHECK(a == m.phi(-x, q, p));
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
      if (const auto rb = m.range_bound(p, q); rb && x.norm() > *rb) CHECK(a == 0.0);
    }
    CHECK_NOTHROW(m.validate(rng.split(1)));
  }
}

TEST_CASE("validation rejects asymmetric connection functions") {
  const auto prod = ConnectionModel::weighted(2, Profile::indicator, WeightKernel::product, 0.5, 0.2);
  CHECK_THROWS_AS(prod.validate(RngStream(1, 0)), DomainError);
  RadialEnvelope env{1.0, 1.0, 0.0, 1.0};
  const auto half = ConnectionModel::unmarked_custom(
      2, [](const Coord& x) { return x.norm() <= 1.0 && x[0] > 0.0 ? 1.0 : 0.0; }, env, "half_disc");
  CHECK_THROWS_AS(half.validate(RngStream(2, 0)), DomainError);
}

TEST_CASE("gilbert phi is nondecreasing in each mark") {
  const auto g = ConnectionModel::gilbert(2, MarkDistribution::uniform(0.0, 1.0));
  RngStream rng(22, 0);
  for (int i = 0; i < 20000; ++i) {
    const double p = rng.uniform(), q = rng.uniform();
    const double p2 = p + (1.0 - p) * rng.uniform(), q2 = q + (1.0 - q) * rng.uniform();
    const Coord x = uniform_in_ball(2, 2.0, rng);
    CHECK(g.phi(x, p, q) <= g.phi(x, p2, q));
    CHECK(g.phi(x, p, q) <= g.phi(x, p, q2));
  }
}

TEST_CASE("degree closed forms") {
  RngStream rng(23, 0);
  const auto d = gilbert_half().degree(0.5, 1, rng);
  CHECK_THAT(d.value, WithinRel(kPi, 1e-15));
  CHECK(d.std_error == 0.0);
  CHECK_THAT(weighted_max(0.5).degree(0.25, 1, rng).value, WithinRel(1.5 * kPi, 1e-12));
  CHECK_THAT(weighted_max(0.5).degree_sup(), WithinRel(2.0 * kPi, 1e-12));
  // Exponential radii with rate 2, d=2: E(p+Q)^2 = p^2 + p + 1/2.
  const auto ge = ConnectionModel::gilbert(2, MarkDistribution::exponential(2.0));
  CHECK_THAT(ge.degree(0.3, 1, rng).value, WithinRel(kPi * (0.09 + 0.3 + 0.5), 1e-12));
  CHECK(ge.t_T_trivial());
  CHECK_FALSE(gilbert_half().t_T_trivial());
}

TEST_CASE("weighted degree matches an independent Monte Carlo oracle") {
  // Sample q ~ U(0,1) and x uniform in a disc of radius 1.5 that contains the
  // support, then average the volume-weighted indicator.
  const auto w = weighted_max(0.5);
  RngStream rng(24, 0);
  const double R = 1.5, area = kPi * R * R, p = 0.25;
  StreamingMoments m;
  for (int i = 0; i < 1000000; ++i) {
    const double q = rng.uniform();
    const double a = std::max(p, q);
    const double r2 = R * R * rng.uniform();  // |x|^2 for a uniform point in the disc
    m.add(area * (std::sqrt(a) * r2 <= 1.0 ? 1.0 : 0.0));
  }
  const double exact = w.degree(p, 1, rng).value;
  CHECK(std::abs(m.mean() - exact) <= 3.0 * m.std_error());
}

TEST_CASE("custom model Monte Carlo degree agrees with the closed form") {
  RadialEnvelope env{1.0, 0.7, 0.0, 1.0};
  const auto c = ConnectionModel::unmarked_custom(
      2, [](const Coord& x) { return x.norm() <= 0.7 ? 0.6 : 0.0; }, env, "disc");
  const auto ind = ConnectionModel::unmarked_indicator(2, 0.7, 0.6);
  RngStream rng(25, 0);
  const auto est = c.degree(0.0, 200000, rng);
  CHECK(est.is_mc());
  const double exact = ind.degree(0.0, 1, rng).value;
  CHECK_THAT(exact, WithinRel(0.6 * kPi * 0.49, 1e-14));
  CHECK(std::abs(est.value - exact) <= 4.0 * est.std_error);
}

TEST_CASE("custom model without an envelope refuses integration") {
  const auto c = ConnectionModel::unmarked_custom(2, [](const Coord&) { return 0.5; }, std::nullopt);
  RngStream rng(26, 0);
  CHECK(c.phi(Coord{0.0, 0.0}, 0.0, 0.0) == 0.5);
  CHECK_THROWS(c.degree(0.0, 100, rng));
}

TEST_CASE("tail mass boundary cases") {
  const auto g = gilbert_half();
  RngStream rng(27, 0);
  CHECK(g.tail_mass(0.5, 1.0, 1, rng).value == 0.0);
  CHECK(g.tail_mass(0.5, 0.0, 1, rng).value == g.degree(0.5, 1, rng).value);
  CHECK_THAT(g.tail_mass(0.5, 0.6, 1, rng).value, WithinRel(kPi * (1.0 - 0.36), 1e-14));
  CHECK_THROWS_AS(g.tail_mass(0.5, -1.0, 1, rng), DomainError);
}

TEST_CASE("weighted tail mass at r=2 against radial quadrature and Monte Carlo") {
  // p = 0.01: phi > 0 beyond r = 2 only when max(p,q) < 1/16, and then the
  // annulus area is pi (1/g - 4). Integrating over q gives 0.15 pi.
  const auto w = weighted_max(0.5);
  RngStream rng(28, 0);
  const double p = 0.01, r = 2.0;
  const double est = w.tail_mass(p, r, 1, rng).value;
  CHECK(est > 0.0);
  CHECK_THAT(est, WithinRel(0.15 * kPi, 1e-9));

  StreamingMoments m;
  const double R = 3.2, ring = kPi * (R * R - r * r);
  for (int i = 0; i < 1000000; ++i) {
    const double q = rng.uniform();
    const double s2 = r * r + (R * R - r * r) * rng.uniform();
    m.add(ring * w.phi(Coord{std::sqrt(s2), 0.0}, p, q));
  }
  CHECK(std::abs(m.mean() - est) <= 3.0 * m.std_error());
}

TEST_CASE("exponential profile tail mass") {
  // int_{|x|>r} exp(-g|x|^2) dx = (pi/g) exp(-g r^2) in d=2.
  const auto w = weighted_max(0.3, Profile::exponential);
  RngStream rng(29, 0);
  const double p = 0.4, r = 0.8;
  const int n = 200000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double q = (i + 0.5) / n;
    const double gv = std::pow(std::max(p, q), 0.3);
    s += kPi / gv * std::exp(-gv * r * r);
  }
  CHECK_THAT(w.tail_mass(p, r, 1, rng).value, WithinRel(s / n, 1e-7));
}

TEST_CASE("gilbert displacement radial moment and support") {
  const auto g = gilbert_half();
  RngStream rng(30, 0);
  StreamingMoments m;
  for (int i = 0; i < 100000; ++i) {
    const Coord x = g.sample_displacement(0.5, 0.5, rng);
    CHECK(g.phi(x, 0.5, 0.5) > 0.0);
    m.add(x.norm());
  }
  CHECK(std::abs(m.mean() - 2.0 / 3.0) <= 3.0 * m.std_error());
}

TEST_CASE("displacement radial histograms match the normalised density") {
  RngStream rng(31, 0);
  const int bins = 20, n = 100000;
  struct Case {
    ConnectionModel model;
    double p, q;
    std::function<double(double)> cdf;  // P(|X| <= s)
    double s_max;
  };
  const double g_ind = std::pow(0.6, 0.5);
  const double g_exp = std::pow(0.6, 0.3);
  std::vector<Case> cases{
      {gilbert_half(), 0.5, 0.5, [](double s) { return std::min(1.0, s * s); }, 1.0},
      {weighted_max(0.5), 0.6, 0.2, [=](double s) { return std::min(1.0, g_ind * s * s); },
       1.0 / std::sqrt(g_ind)},
      {weighted_max(0.3, Profile::exponential), 0.6, 0.2,
       [=](double s) { return 1.0 - std::exp(-g_exp * s * s); }, 3.0}};
  for (auto& c : cases) {
    std::vector<double> obs(bins + 1, 0.0), exp(bins + 1, 0.0);
    for (int i = 0; i < n; ++i) {
      const double s = c.model.sample_displacement(c.p, c.q, rng).norm();
      const int b = std::min(bins, static_cast<int>(s / c.s_max * bins));
      obs[static_cast<std::size_t>(b)] += 1.0;
    }
    for (int b = 0; b <= bins; ++b) {
      const double lo = c.cdf(c.s_max * b / bins);
      const double hi = b == bins ? 1.0 : c.cdf(c.s_max * (b + 1) / bins);
      exp[static_cast<std::size_t>(b)] = n * (hi - lo);
    }
    if (exp.back() == 0.0) {
      CHECK(obs.back() == 0.0);
      obs.pop_back();
      exp.pop_back();
    }
    CHECK(chi_square_gof(obs, exp).p_value > 0.001);
  }
}

TEST_CASE("displacement directions are isotropic") {
  const auto w = weighted_max(0.5);
  RngStream rng(32, 0);
  const int bins = 16, n = 100000;
  std::vector<double> obs(bins, 0.0), exp(bins, static_cast<double>(n) / bins);
  for (int i = 0; i < n; ++i) {
    const Coord x = w.sample_displacement(0.3, 0.7, rng);
    const double a = std::atan2(x[1], x[0]) + kPi;
    obs[static_cast<std::size_t>(std::min(bins - 1, static_cast<int>(a / (2 * kPi) * bins)))] += 1.0;
  }
  CHECK(chi_square_gof(obs, exp).p_value > 0.01);
}

TEST_CASE("mark distributions sample inside their support") {
  RngStream rng(33, 0);
  const std::vector<MarkDistribution> ds{
      MarkDistribution::degenerate(0.5), MarkDistribution::uniform(0.2, 0.9),
      MarkDistribution::discrete({0.1, 0.4, 0.3}, {1, 1, 2}), MarkDistribution::exponential(3.0),
      MarkDistribution::bounded_custom([](double x) { return x * x; }, 0.0, 2.0, 4.0)};
  for (const auto& d : ds) {
    for (int i = 0; i < 10000; ++i) CHECK(d.in_support(d.sample(rng)));
  }
  CHECK_THROWS_AS(MarkDistribution::uniform(1.0, 1.0), DomainError);
  CHECK_THROWS_AS(MarkDistribution::discrete({0.1}, {1, 2}), StructuralError);
  CHECK_THROWS_AS(MarkDistribution::discrete({0.1}, {0.0}), DomainError);
}

TEST_CASE("discrete and custom marks reproduce their laws") {
  RngStream rng(34, 0);
  const auto d = MarkDistribution::discrete({0.1, 0.4, 0.3}, {1, 1, 2});
  std::vector<double> obs(3, 0.0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const double x = d.sample(rng);
    obs[x == 0.1 ? 0 : x == 0.3 ? 1 : 2] += 1.0;
  }
  CHECK(chi_square_gof(obs, {n * 0.25, n * 0.5, n * 0.25}).p_value > 0.01);

  // Density proportional to x^2 on [0,2]: mean 1.5.
  const auto c = MarkDistribution::bounded_custom([](double x) { return x * x; }, 0.0, 2.0, 4.0);
  StreamingMoments m;
  for (int i = 0; i < n; ++i) m.add(c.sample(rng));
  CHECK(std::abs(m.mean() - 1.5) <= 4.0 * m.std_error());
  CHECK_THAT(c.expectation([](double x) { return x; }), WithinRel(1.5, 1e-9));
}

TEST_CASE("degenerate marks reduce gilbert to the unmarked indicator") {
  const auto g = ConnectionModel::gilbert(3, MarkDistribution::degenerate(0.35));
  const auto u = ConnectionModel::unmarked_indicator(3, 0.7);
  RngStream rng(35, 0);
  CHECK_THAT(g.degree(0.35, 1, rng).value, WithinRel(u.degree(0.0, 1, rng).value, 1e-14));
  for (int i = 0; i < 1000; ++i) {
    const Coord x = uniform_in_ball(3, 1.0, rng);
    CHECK(g.phi(x, 0.35, 0.35) == u.phi(x, 0.0, 0.0));
  }
}
