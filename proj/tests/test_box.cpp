#include <cmath>
#include <numbers>
#include <vector>

#include "catch_amalgamated.hpp"
#include "rcm/box.hpp"
#include "rcm/explorer.hpp"

using namespace rcm;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kPi = std::numbers::pi;

ConnectionModel gilbert_half() { return ConnectionModel::gilbert(2, MarkDistribution::degenerate(0.5)); }

SpaceConfig torus(double L) { return {2, L, Boundary::torus}; }

}  // namespace

TEST_CASE("point counts are Poisson") {
  const auto g = gilbert_half();
  RngStream rng(81, 0);
  StreamingMoments m;
  const int reps = 20000;
  for (int i = 0; i < reps; ++i) m.add(static_cast<double>(sample_box(g, 1.0, torus(2.0), rng).points.size()));
  CHECK(std::abs(m.mean() - 4.0) <= 4.0 * m.std_error());
  // Var(s^2) ~ (mu_4 - sigma^4) / n with mu_4 = 4 (1 + 3 * 4) for Poisson(4).
  CHECK(std::abs(m.variance() - 4.0) <= 4.0 * std::sqrt((52.0 - 16.0) / reps));
  CHECK(sample_box(g, 0.0, torus(5.0), rng).points.empty());
  CHECK_THROWS_AS(sample_box(g, -1.0, torus(5.0), rng), DomainError);
}

TEST_CASE("edges respect the connection function") {
  const auto g = gilbert_half();
  RngStream rng(82, 0);
  StreamingMoments edges;
  const double t = 0.7, L = 6.0;
  for (int i = 0; i < 400; ++i) {
    const auto b = sample_box(g, t, torus(L), rng);
    for (auto [a, c] : b.edges) {
      const Coord d = displacement(b.points[a].location, b.points[c].location, b.space);
      CHECK(d.norm() <= 1.0);
      CHECK(g.phi(d, b.points[a].mark, b.points[c].mark) > 0.0);
    }
    edges.add(static_cast<double>(b.edges.size()));
  }
  // E #edges = (t L^2)^2 / 2 * pi / L^2 on a torus with L >= 2.
  const double expect = 0.5 * t * t * L * L * kPi;
  CHECK(std::abs(edges.mean() - expect) <= 4.0 * edges.std_error());
}

TEST_CASE("long-range models report the omitted edge bound") {
  const auto w = ConnectionModel::weighted(2, Profile::exponential, WeightKernel::max, 0.3);
  RngStream rng(83, 0);
  BoxOptions opt;
  opt.mark_grid = {0.01, 0.5, 1.0};
  const auto b = sample_box(w, 0.2, torus(8.0), rng, opt);
  CHECK(b.omitted_edge_bound <= opt.omitted_edge_level * (1 + 1e-9));
  BoxOptions tiny;
  tiny.max_pairs = 10;
  CHECK_THROWS_AS(sample_box(gilbert_half(), 5.0, torus(20.0), rng, tiny), RefusalError);
}

TEST_CASE("typical cluster of an empty box") {
  const auto g = gilbert_half();
  RngStream rng(84, 0);
  const auto b = sample_box(g, 0.0, torus(5.0), rng);
  const auto s = typical_cluster(g, b, 0.5, rng);
  CHECK(s.size == 1);
  CHECK(s.diameter == 0.0);
  CHECK_FALSE(s.boundary_touch);
}

TEST_CASE("root degree in the box matches the Mecke identity") {
  const auto g = gilbert_half();
  RngStream rng(85, 0);
  const double t = 0.4, L = 8.0;
  StreamingMoments deg;
  Coord centre{L / 2, L / 2};
  for (int i = 0; i < 20000; ++i) {
    const auto b = sample_box(g, t, torus(L), rng);
    double k = 0.0;
    for (const auto& p : b.points) k += g.phi(displacement(centre, p.location, b.space), 0.5, p.mark);
    deg.add(k);
  }
  CHECK(std::abs(deg.mean() - t * kPi) <= 4.0 * deg.std_error());
}

TEST_CASE("box and explorer agree on the cluster size law") {
  const auto g = gilbert_half();
  const double t = 0.8;
  std::vector<double> a, b;
  RngStream rng(86, 0);
  for (int i = 0; i < 4000; ++i) {
    RngStream s = rng.split(static_cast<std::uint64_t>(i), Purpose::box);
    const auto box = sample_box(g, t, torus(16.0), s);
    a.push_back(static_cast<double>(typical_cluster(g, box, 0.5, s).size));
    RngStream e = rng.split(static_cast<std::uint64_t>(i), Purpose::explore);
    b.push_back(static_cast<double>(explore(g, t, 0.5, {}, e).size()));
  }
  CHECK(ks_two_sample(a, b).p_value > 0.01);
}

TEST_CASE("coupled sweep is monotone in t") {
  const auto g = ConnectionModel::gilbert(2, MarkDistribution::uniform(0.3, 0.7));
  SweepOptions opt;
  opt.t_grid = {0.2, 0.5, 0.8, 1.1, 1.4};
  opt.box_lengths = {6.0, 10.0};
  opt.reps = 100;
  opt.diameters = true;
  for (auto bc : {Boundary::torus, Boundary::free}) {
    opt.boundary = bc;
    const auto recs = run_sweep(g, opt, RngStream(87, 0));
    REQUIRE(recs.size() == opt.t_grid.size() * opt.box_lengths.size() * opt.reps);
    for (std::size_t i = 1; i < recs.size(); ++i) {
      const auto& p = recs[i - 1];
      const auto& c = recs[i];
      if (p.L != c.L || p.rep != c.rep) continue;
      CHECK(p.t < c.t);
      CHECK(p.size <= c.size);
      CHECK(p.diameter <= c.diameter);
      CHECK(p.boundary_touch <= c.boundary_touch);
      CHECK(p.spanning <= c.spanning);
      CHECK(p.min_label >= c.min_label);
    }
    for (const auto& r : recs) {
      CHECK(r.mag_weight >= 0.0);
      CHECK(r.mag_weight <= 1.0);
    }
    const auto th = theta_table(recs);
    for (std::size_t k = 1; k < th.size(); ++k)
      if (th[k].L == th[k - 1].L) CHECK(th[k - 1].theta_hat <= th[k].theta_hat);
  }
}

TEST_CASE("deep subcritical sweeps see no percolation") {
  const auto g = gilbert_half();
  SweepOptions opt;
  opt.t_grid = {0.01};
  opt.box_lengths = {12.0};
  opt.reps = 500;
  const auto th = theta_table(run_sweep(g, opt, RngStream(88, 0)));
  CHECK(th.front().theta_hat == 0.0);
}

TEST_CASE("sweeps are thread invariant") {
  const auto g = gilbert_half();
  SweepOptions opt;
  opt.t_grid = {0.5, 1.5};
  opt.box_lengths = {6.0};
  opt.reps = 40;
  const auto a = run_sweep(g, opt, RngStream(89, 0));
  opt.threads = 3;
  const auto b = run_sweep(g, opt, RngStream(89, 0));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].size == b[i].size);
    CHECK(a[i].min_label == b[i].min_label);
  }
}

TEST_CASE("crossing estimate on synthetic spanning curves") {
  // L=8 spans with frequencies 0.2, 0.5, 0.8 and L=16 with 0.1, 0.5, 0.9 on
  // t = 1, 2, 3: the difference is -0.1, 0, 0.1 so the crossing is at t = 2.
  std::vector<SweepRecord> recs;
  const std::vector<double> ts{1, 2, 3};
  const std::vector<std::vector<int>> spans{{2, 5, 8}, {1, 5, 9}};
  const std::vector<double> Ls{8, 16};
  for (std::size_t li = 0; li < 2; ++li)
    for (std::size_t rep = 0; rep < 10; ++rep)
      for (std::size_t k = 0; k < 3; ++k) {
        SweepRecord r;
        r.t = ts[k];
        r.L = Ls[li];
        r.rep = rep;
        r.spanning = static_cast<int>(rep) < spans[li][k];
        recs.push_back(r);
      }
  const auto est = estimate_tc(recs, 200, RngStream(90, 0));
  REQUIRE(est.found);
  CHECK_THAT(est.t_c, WithinAbs(2.0, 1e-12));
  CHECK(est.ci_lo <= 2.0);
  CHECK(est.ci_hi >= 2.0);
}

TEST_CASE("magnetization estimators") {
  const auto g = gilbert_half();
  const double gamma = 0.2;
  const auto m0 = magnetization(g, 0.0, gamma, 20000, 8.0, RngStream(91, 0));
  CHECK(m0.formula.value == Catch::Approx(gamma).epsilon(1e-14));
  CHECK(std::abs(m0.direct.value - gamma) <= 4.0 * m0.direct.std_error);

  for (double t : {0.5, 1.2, 1.8}) {
    const auto m = magnetization(g, t, 0.05, 4000, 10.0, RngStream(92, 0));
    CHECK(m.agree);
  }
}

TEST_CASE("magnetization approaches theta as gamma decreases") {
  const auto g = gilbert_half();
  SweepOptions opt;
  opt.t_grid = {1.6};
  opt.box_lengths = {10.0};
  opt.reps = 2000;
  opt.boundary = Boundary::free;
  const auto recs = run_sweep(g, opt, RngStream(93, 0));
  const double theta = theta_table(recs).front().theta_hat;
  double prev = 1.0;
  for (double gamma : {0.5, 0.1, 0.01, 1e-3, 1e-6}) {
    const double m = magnetization_from(recs, 1.6, gamma).formula.value;
    CHECK(m <= prev);
    CHECK(m >= theta);
    prev = m;
  }
  CHECK_THAT(prev, WithinAbs(theta, 1e-3));
}

TEST_CASE("ghost-free susceptibility") {
  const auto g = gilbert_half();
  SweepOptions opt;
  opt.t_grid = {0.0, 0.9};
  opt.box_lengths = {10.0};
  opt.reps = 500;
  opt.boundary = Boundary::free;
  const auto recs = run_sweep(g, opt, RngStream(94, 0));
  CHECK_THAT(ghost_free_susceptibility_from(recs, 0.0, 0.3).value, WithinRel(0.7, 1e-14));
  double prev = std::numeric_limits<double>::infinity();
  for (double gamma : {0.0, 0.01, 0.1, 0.3, 0.9}) {
    const double c = ghost_free_susceptibility_from(recs, 0.9, gamma).value;
    CHECK(c <= prev);
    prev = c;
  }
  // gamma = 0 with no boundary-touching clusters is the mean size.
  StreamingMoments m;
  bool any_touch = false;
  for (const auto& r : recs)
    if (r.t == 0.9) {
      m.add(static_cast<double>(r.size));
      any_touch = any_touch || r.boundary_touch;
    }
  if (!any_touch) CHECK_THAT(ghost_free_susceptibility_from(recs, 0.9, 0.0).value, WithinRel(m.mean(), 1e-14));
}

TEST_CASE("magnetization upper bound") {
  const auto g = gilbert_half();
  const auto r0 = magnetization_upper_bound_check(g, 0.0, 0.1, 2, 500, 8.0, {}, 100, RngStream(95, 0));
  CHECK(r0.pass);
  CHECK(r0.delta == 1.0);
  const auto r1 = magnetization_upper_bound_check(g, 0.5, 0.1, 2, 1000, 8.0, {}, 2000, RngStream(96, 0));
  CHECK(r1.pass);
  const auto w = ConnectionModel::gilbert(2, MarkDistribution::uniform(0.2, 0.6));
  const auto r2 =
      magnetization_upper_bound_check(w, 0.6, 0.1, 2, 1000, 8.0, {0.2, 0.4, 0.6}, 2000, RngStream(97, 0));
  CHECK(r2.pass);
}
