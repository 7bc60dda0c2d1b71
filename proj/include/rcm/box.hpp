#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "rcm/error.hpp"
#include "rcm/grid_index.hpp"
#include "rcm/kernels.hpp"
#include "rcm/model.hpp"
#include "rcm/parallel.hpp"
#include "rcm/rng.hpp"
#include "rcm/space.hpp"
#include "rcm/stats.hpp"

namespace rcm {

struct BoxOptions {
  std::uint64_t max_pairs = 200'000'000;  // ceiling on the expected number of candidate pairs
  double omitted_edge_level = 1e-3;       // target bound on P(some omitted long edge exists)
  double shell_width = -1.0;              // boundary shell for touch detection; < 0: auto
  std::vector<double> mark_grid;          // for tail-mass suprema of long-range models
};

// Candidate-pair cutoff radius for the window and the bound on the
// probability that an edge longer than the cutoff exists (0 for hard range).
struct PairCutoff {
  double radius = 0.0;
  bool full_loop = false;
  double omitted_edge_bound = 0.0;
};

inline PairCutoff pair_cutoff(const ConnectionModel& model, double t, const SpaceConfig& space,
                              const BoxOptions& opt) {
  PairCutoff c;
  const double half_diag = 0.5 * space.box_length * std::sqrt(static_cast<double>(space.dimension));
  const double reach = space.boundary == Boundary::torus ? half_diag
                                                         : 2.0 * half_diag;
  const double range = model.max_range();
  if (std::isfinite(range)) {
    c.radius = range;
  } else {
    // Smallest r (by bisection) with t^2 L^d sup_p tail_mass(p, r) <= level.
    const std::vector<double> grid =
        model.marks().atomic() ? model.marks().atoms()
                               : (opt.mark_grid.empty() ? model.marks().default_grid() : opt.mark_grid);
    RngStream rng(0x7a11ULL, 0, Purpose::validation);
    auto bound = [&](double r) {
      double sup = 0.0;
      for (double p : grid) sup = std::max(sup, model.tail_mass(p, r, 20000, rng).value);
      return t * t * space.volume() * sup;
    };
    double lo = 0.0, hi = model.typical_range();
    while (bound(hi) > opt.omitted_edge_level && hi < reach) hi *= 2.0;
    if (hi >= reach) {
      c.radius = reach;
    } else {
      for (int it = 0; it < 40; ++it) {
        const double mid = 0.5 * (lo + hi);
        (bound(mid) > opt.omitted_edge_level ? lo : hi) = mid;
      }
      c.radius = hi;
      c.omitted_edge_bound = bound(hi);
    }
  }
  if (c.radius >= reach) {
    c.full_loop = true;
    c.omitted_edge_bound = 0.0;
  }
  return c;
}

inline void check_pair_budget(double t, const SpaceConfig& space, const PairCutoff& cut, int dim,
                              const BoxOptions& opt) {
  const double n = t * space.volume();
  const double per_point = cut.full_loop ? n : t * unit_ball_volume(dim) * std::pow(cut.radius, dim);
  const double pairs = 0.5 * n * per_point;
  if (pairs > static_cast<double>(opt.max_pairs)) {
    // L such that the pair count fits: n^2 scales as L^{2d} for full loops, L^d otherwise.
    const double factor = static_cast<double>(opt.max_pairs) / pairs;
    const double l_ok = space.box_length * std::pow(factor, cut.full_loop ? 0.5 / dim : 1.0 / dim);
    throw RefusalError("box: expected " + std::to_string(pairs) + " candidate pairs exceed the ceiling of " +
                       std::to_string(opt.max_pairs) + "; use box_length <= " + std::to_string(l_ok) +
                       " or raise sim.max_pairs");
  }
}

// Calls f(i, j, displacement x_j - x_i) for candidate pairs i < j.
template <class F>
void for_each_candidate_pair(const std::vector<MarkedPoint>& pts, const SpaceConfig& space,
                             const PairCutoff& cut, F&& f) {
  if (cut.full_loop) {
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j)
        f(i, j, displacement(pts[i].location, pts[j].location, space));
    return;
  }
  std::vector<Coord> locs;
  locs.reserve(pts.size());
  for (const auto& p : pts) locs.push_back(p.location);
  GridIndex grid(locs, cut.radius, space);
  std::vector<std::size_t> nb;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    nb.clear();
    grid.for_each_candidate(locs[i], cut.radius, [&](std::size_t j) {
      if (j > i) nb.push_back(j);
    });
    std::sort(nb.begin(), nb.end());
    for (auto j : nb) {
      const Coord d = displacement(locs[i], locs[j], space);
      if (d.norm() <= cut.radius) f(i, j, d);
    }
  }
}

// Union-find with path compression, union by size and, for wrap detection,
// the displacement of every node relative to its parent.
class OffsetUnionFind {
 public:
  explicit OffsetUnionFind(std::size_t n, int dim)
      : parent_(n), size_(n, 1), offset_(n, Coord(dim)), wraps_(n, false) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  // Root of x; off receives the displacement of x relative to the root.
  std::size_t find(std::size_t x, Coord& off) {
    Coord acc(off.dim());
    std::size_t r = x;
    while (parent_[r] != r) {
      acc += offset_[r];
      r = parent_[r];
    }
    // Path compression with offset rewrite.
    Coord rem = acc;
    std::size_t y = x;
    while (parent_[y] != r) {
      const std::size_t next = parent_[y];
      const Coord o = offset_[y];
      offset_[y] = rem;
      parent_[y] = r;
      rem -= o;
      y = next;
    }
    off = acc;
    return r;
  }

  std::size_t find(std::size_t x) {
    Coord off(offset_.empty() ? 1 : offset_[0].dim());
    return find(x, off);
  }

  // Joins i and j, where d is the displacement x_j - x_i. Returns the new root
  // and the absorbed root (equal when already joined).
  std::pair<std::size_t, std::size_t> unite(std::size_t i, std::size_t j, const Coord& d,
                                            double wrap_tol) {
    Coord oi(d.dim()), oj(d.dim());
    std::size_t ri = find(i, oi), rj = find(j, oj);
    if (ri == rj) {
      const Coord loop = oi + d - oj;
      if (loop.norm() > wrap_tol) wraps_[ri] = true;
      return {ri, ri};
    }
    // Offset of rj relative to ri.
    Coord link = oi + d - oj;
    if (size_[ri] < size_[rj]) {
      std::swap(ri, rj);
      link = -link;
    }
    parent_[rj] = ri;
    offset_[rj] = link;
    size_[ri] += size_[rj];
    wraps_[ri] = wraps_[ri] || wraps_[rj];
    return {ri, rj};
  }

  std::size_t size(std::size_t root) const { return size_[root]; }
  bool wraps(std::size_t root) const { return wraps_[root]; }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
  std::vector<Coord> offset_;
  std::vector<bool> wraps_;
};

// ---------------------------------------------------------------------------
// Static box sample

struct BoxSample {
  SpaceConfig space;
  std::vector<MarkedPoint> points;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::vector<std::uint32_t> component;  // representative per point
  std::size_t largest = 0;
  double largest_component_fraction = 0.0;
  double omitted_edge_bound = 0.0;
  double cutoff_radius = 0.0;
};

inline BoxSample sample_box(const ConnectionModel& model, double t, const SpaceConfig& space,
                            RngStream& rng, const BoxOptions& opt = {}) {
  if (!(t >= 0.0)) throw DomainError("sample_box: t must be nonnegative");
  space.validate();
  if (space.dimension != model.dimension()) throw StructuralError("sample_box: dimension mismatch");
  BoxSample b;
  b.space = space;
  const auto cut = pair_cutoff(model, t, space, opt);
  check_pair_budget(t, space, cut, space.dimension, opt);
  b.omitted_edge_bound = cut.omitted_edge_bound;
  b.cutoff_radius = cut.radius;
  const std::uint64_t n = rng.poisson(t * space.volume());
  b.points.reserve(n);
  for (std::uint64_t k = 0; k < n; ++k)
    b.points.push_back({uniform_in_box(space, rng), model.marks().sample(rng), rng.uniform()});
  for_each_candidate_pair(b.points, space, cut, [&](std::size_t i, std::size_t j, const Coord& d) {
    const double p = model.phi(d, b.points[i].mark, b.points[j].mark);
    if (p > 0.0 && rng.bernoulli(p))
      b.edges.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
  });
  OffsetUnionFind uf(b.points.size(), space.dimension);
  for (auto [i, j] : b.edges) uf.unite(i, j, displacement(b.points[i].location, b.points[j].location, space), 0.25 * space.box_length);
  b.component.resize(b.points.size());
  for (std::size_t k = 0; k < b.points.size(); ++k) {
    b.component[k] = static_cast<std::uint32_t>(uf.find(k));
    b.largest = std::max(b.largest, uf.size(b.component[k]));
  }
  b.largest_component_fraction =
      b.points.empty() ? 0.0 : static_cast<double>(b.largest) / static_cast<double>(b.points.size());
  return b;
}

struct TypicalClusterStats {
  std::size_t size = 1;
  double diameter = 0.0;
  bool boundary_touch = false;  // free: reaches the boundary shell; torus: wraps
  bool wrap_ambiguous = false;
  double min_label = 1.0;
};

inline double default_shell_width(const ConnectionModel& model, const BoxOptions& opt) {
  return opt.shell_width >= 0.0 ? opt.shell_width : 0.5 * model.typical_range();
}

inline bool in_shell(const Coord& x, const SpaceConfig& space, double w) {
  for (int i = 0; i < space.dimension; ++i)
    if (x[i] < w || x[i] > space.box_length - w) return true;
  return false;
}

// Adds a root at the window centre with the given mark, connects it
// independently to every box point, and reports its cluster.
inline TypicalClusterStats typical_cluster(const ConnectionModel& model, const BoxSample& box,
                                           double root_mark, RngStream& rng,
                                           const BoxOptions& opt = {}) {
  const auto& space = box.space;
  Coord centre(space.dimension);
  for (int i = 0; i < space.dimension; ++i) centre[i] = 0.5 * space.box_length;
  const std::size_t n = box.points.size();
  OffsetUnionFind uf(n + 1, space.dimension);
  for (auto [i, j] : box.edges)
    uf.unite(i, j, displacement(box.points[i].location, box.points[j].location, space),
             0.25 * space.box_length);
  const double root_label = rng.uniform();
  for (std::size_t k = 0; k < n; ++k) {
    const Coord d = displacement(centre, box.points[k].location, space);
    const double p = model.phi(d, root_mark, box.points[k].mark);
    if (p > 0.0 && rng.bernoulli(p)) uf.unite(n, k, d, 0.25 * space.box_length);
  }
  TypicalClusterStats s;
  Coord root_off(space.dimension);
  const std::size_t r = uf.find(n, root_off);
  s.size = uf.size(r);
  s.min_label = root_label;
  const double w = default_shell_width(model, opt);
  std::vector<Coord> members{centre};
  bool touch = false;
  for (std::size_t k = 0; k < n; ++k) {
    Coord off(space.dimension);
    if (uf.find(k, off) != r) continue;
    members.push_back(centre - root_off + off);
    s.min_label = std::min(s.min_label, box.points[k].label.value_or(1.0));
    if (space.boundary == Boundary::free && in_shell(box.points[k].location, space, w)) touch = true;
  }
  s.boundary_touch = space.boundary == Boundary::torus ? uf.wraps(r) : touch;
  s.diameter = rcm::diameter(std::span<const Coord>(members), euclidean);
  s.wrap_ambiguous = space.boundary == Boundary::torus && (uf.wraps(r) || wrap_ambiguous(s.diameter, space));
  return s;
}

// ---------------------------------------------------------------------------
// Coupled sweeps over t

// Points sampled once at t_max with birth labels u; the configuration at
// t <= t_max keeps points with u <= t / t_max and edges whose endpoints are
// both present, so clusters grow pathwise in t. Index 0 is the root at the
// window centre, present at every t.
struct CoupledBox {
  SpaceConfig space;
  double t_max = 0.0;
  std::vector<MarkedPoint> points;
  std::vector<double> birth;
  struct Edge {
    std::uint32_t i, j;
    double birth;
  };
  std::vector<Edge> edges;  // sorted by birth
  double omitted_edge_bound = 0.0;
};

inline CoupledBox build_coupled_box(const ConnectionModel& model, double t_max,
                                    const SpaceConfig& space, std::optional<double> root_mark,
                                    RngStream& rng, const BoxOptions& opt = {}) {
  if (!(t_max >= 0.0)) throw DomainError("coupled box: t_max must be nonnegative");
  space.validate();
  if (space.dimension != model.dimension()) throw StructuralError("coupled box: dimension mismatch");
  CoupledBox b;
  b.space = space;
  b.t_max = t_max;
  const auto cut = pair_cutoff(model, t_max, space, opt);
  check_pair_budget(t_max, space, cut, space.dimension, opt);
  b.omitted_edge_bound = cut.omitted_edge_bound;
  Coord centre(space.dimension);
  for (int i = 0; i < space.dimension; ++i) centre[i] = 0.5 * space.box_length;
  const double rm = root_mark ? *root_mark : model.marks().sample(rng);
  b.points.push_back({centre, rm, rng.uniform()});
  b.birth.push_back(0.0);
  const std::uint64_t n = rng.poisson(t_max * space.volume());
  for (std::uint64_t k = 0; k < n; ++k) {
    b.points.push_back({uniform_in_box(space, rng), model.marks().sample(rng), rng.uniform()});
    b.birth.push_back(rng.uniform());
  }
  for_each_candidate_pair(b.points, space, cut, [&](std::size_t i, std::size_t j, const Coord& d) {
    const double p = model.phi(d, b.points[i].mark, b.points[j].mark);
    if (p > 0.0 && rng.bernoulli(p))
      b.edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                         std::max(b.birth[i], b.birth[j])});
  });
  std::stable_sort(b.edges.begin(), b.edges.end(),
                   [](const auto& l, const auto& r) { return l.birth < r.birth; });
  return b;
}

struct SweepObservation {
  double t = 0.0;
  std::size_t size = 1;
  double diameter = 0.0;
  bool boundary_touch = false;
  bool spanning = false;  // any cluster spans (free: left-right; torus: wraps)
  double largest_fraction = 0.0;
  double min_label = 1.0;
};

// Root-cluster observables at each t of an ascending grid.
inline std::vector<SweepObservation> sweep_coupled(const CoupledBox& box,
                                                   const std::vector<double>& t_grid,
                                                   double shell_width, bool diameters) {
  const auto& space = box.space;
  const int d = space.dimension;
  const std::size_t n = box.points.size();
  const bool torus = space.boundary == Boundary::torus;
  const double L = space.box_length;
  const double w = shell_width;
  OffsetUnionFind uf(n, d);
  std::vector<std::uint8_t> flags(n, 0);  // bit0: any shell, bit1: left, bit2: right
  std::vector<double> min_label(n);
  for (std::size_t k = 0; k < n; ++k) {
    min_label[k] = box.points[k].label.value_or(1.0);
    const Coord& x = box.points[k].location;
    std::uint8_t f = 0;
    if (!torus) {
      if (in_shell(x, space, w)) f |= 1;
      if (x[0] < w) f |= 2;
      if (x[0] > L - w) f |= 4;
    }
    flags[k] = f;
  }
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto l, auto r) { return box.birth[l] < box.birth[r]; });
  std::vector<std::vector<std::uint32_t>> members;
  if (diameters) {
    members.resize(n);
    for (std::size_t k = 0; k < n; ++k) members[k] = {static_cast<std::uint32_t>(k)};
  }
  std::size_t next_point = 0, next_edge = 0, active = 0, largest = 1;
  bool spanning = false;
  std::vector<SweepObservation> out;
  double prev_t = -1.0;
  for (double t : t_grid) {
    if (t < prev_t) throw DomainError("sweep: t grid must be ascending");
    if (t > box.t_max * (1.0 + 1e-12)) throw DomainError("sweep: t exceeds the coupled t_max");
    prev_t = t;
    const double u = box.t_max > 0.0 ? t / box.t_max : 0.0;
    while (next_point < n && box.birth[order[next_point]] <= u) {
      ++active;
      ++next_point;
    }
    while (next_edge < box.edges.size() && box.edges[next_edge].birth <= u) {
      const auto& e = box.edges[next_edge++];
      const Coord disp = displacement(box.points[e.i].location, box.points[e.j].location, space);
      const auto [keep, gone] = uf.unite(e.i, e.j, disp, 0.25 * L);
      if (keep != gone) {
        flags[keep] |= flags[gone];
        min_label[keep] = std::min(min_label[keep], min_label[gone]);
        if (diameters) {
          auto& a = members[keep];
          auto& b = members[gone];
          a.insert(a.end(), b.begin(), b.end());
          std::vector<std::uint32_t>().swap(b);
        }
        largest = std::max(largest, uf.size(keep));
      }
      const bool spans_now = torus ? uf.wraps(keep) : ((flags[keep] & 6) == 6);
      spanning = spanning || spans_now;
    }
    SweepObservation o;
    o.t = t;
    Coord root_off(d);
    const std::size_t r = uf.find(0, root_off);
    o.size = uf.size(r);
    o.boundary_touch = torus ? uf.wraps(r) : (flags[r] & 1) != 0;
    o.spanning = spanning;
    o.largest_fraction = static_cast<double>(largest) / static_cast<double>(active);
    o.min_label = min_label[r];
    if (diameters) {
      std::vector<Coord> pts;
      pts.reserve(members[r].size());
      for (auto k : members[r]) {
        Coord off(d);
        uf.find(k, off);
        pts.push_back(off);
      }
      o.diameter = rcm::diameter(std::span<const Coord>(pts), euclidean);
    }
    out.push_back(o);
  }
  return out;
}

struct SweepRecord {
  double t = 0.0;
  double L = 0.0;
  std::size_t rep = 0;
  std::size_t size = 1;
  double diameter = 0.0;
  bool boundary_touch = false;
  bool spanning = false;
  double largest_fraction = 0.0;
  double min_label = 1.0;
  double gamma = 0.0;
  double mag_weight = 1.0;  // (1 - gamma)^size, 0 for boundary-touching clusters
};

struct SweepOptions {
  std::vector<double> t_grid;
  std::vector<double> box_lengths;
  std::size_t reps = 100;
  double gamma = 0.01;
  int dimension = 2;
  Boundary boundary = Boundary::torus;
  bool diameters = false;
  std::optional<double> root_mark;  // default: root mark ~ Q
  unsigned threads = 1;
  BoxOptions box;
};

inline double magnetization_weight(std::size_t size, bool touch, double gamma) {
  return touch ? 0.0 : std::pow(1.0 - gamma, static_cast<double>(size));
}

// Records ordered by (L, rep, t); replication streams keyed by (L index, rep).
inline std::vector<SweepRecord> run_sweep(const ConnectionModel& model, SweepOptions opt,
                                          RngStream rng) {
  if (opt.t_grid.empty() || opt.box_lengths.empty()) throw DomainError("sweep: empty grid");
  if (opt.reps == 0) throw DomainError("sweep: replications must be positive");
  std::sort(opt.t_grid.begin(), opt.t_grid.end());
  if (opt.t_grid.front() < 0.0) throw DomainError("sweep: intensities must be nonnegative");
  const double t_max = opt.t_grid.back();
  const double w = default_shell_width(model, opt.box);
  std::vector<SweepRecord> all;
  for (std::size_t li = 0; li < opt.box_lengths.size(); ++li) {
    SpaceConfig space{opt.dimension, opt.box_lengths[li], opt.boundary};
    space.validate();
    check_pair_budget(t_max, space, pair_cutoff(model, t_max, space, opt.box), opt.dimension, opt.box);
    const RngStream base = rng.split(li, Purpose::box);
    auto per_rep = parallel_map(opt.reps, opt.threads, [&](std::size_t rep) {
      RngStream s = base.split(rep, Purpose::box);
      const auto box = build_coupled_box(model, t_max, space, opt.root_mark, s, opt.box);
      const auto obs = sweep_coupled(box, opt.t_grid, w, opt.diameters);
      std::vector<SweepRecord> rows;
      rows.reserve(obs.size());
      for (const auto& o : obs) {
        rows.push_back({o.t, space.box_length, rep, o.size, o.diameter, o.boundary_touch, o.spanning,
                        o.largest_fraction, o.min_label, opt.gamma,
                        magnetization_weight(o.size, o.boundary_touch, opt.gamma)});
      }
      return rows;
    });
    for (auto& rows : per_rep) all.insert(all.end(), rows.begin(), rows.end());
  }
  return all;
}

struct ThetaRow {
  double t = 0.0;
  double L = 0.0;
  double theta_hat = 0.0;
  double se = 0.0;
  double spanning = 0.0;
  double spanning_se = 0.0;
  std::size_t reps = 0;
};

inline std::vector<ThetaRow> theta_table(const std::vector<SweepRecord>& records) {
  std::vector<ThetaRow> rows;
  std::vector<StreamingMoments> th, sp;
  for (const auto& r : records) {
    std::size_t k = 0;
    while (k < rows.size() && !(rows[k].t == r.t && rows[k].L == r.L)) ++k;
    if (k == rows.size()) {
      rows.push_back({r.t, r.L});
      th.emplace_back();
      sp.emplace_back();
    }
    th[k].add(r.boundary_touch ? 1.0 : 0.0);
    sp[k].add(r.spanning ? 1.0 : 0.0);
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows[k].theta_hat = th[k].mean();
    rows[k].se = th[k].std_error();
    rows[k].spanning = sp[k].mean();
    rows[k].spanning_se = sp[k].std_error();
    rows[k].reps = th[k].count();
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.L != b.L ? a.L < b.L : a.t < b.t;
  });
  return rows;
}

struct TcEstimate {
  double t_c = std::numeric_limits<double>::quiet_NaN();
  double ci_lo = std::numeric_limits<double>::quiet_NaN();
  double ci_hi = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> pair_crossings;  // consecutive box sizes
  bool found = false;
};

namespace detail {

// First t where the larger box becomes at least as likely to span (linear
// interpolation of R_b - R_a between grid points).
inline std::optional<double> crossing(const std::vector<double>& t, const std::vector<double>& ra,
                                      const std::vector<double>& rb) {
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    const double d0 = rb[k] - ra[k], d1 = rb[k + 1] - ra[k + 1];
    if (d0 < 0.0 && d1 >= 0.0) return t[k] + (t[k + 1] - t[k]) * (-d0) / (d1 - d0);
  }
  return std::nullopt;
}

// span[L index][rep][t index] -> crossings and their mean.
inline std::pair<std::optional<double>, std::vector<double>> tc_from_spans(
    const std::vector<double>& t_grid, const std::vector<std::vector<std::vector<char>>>& span,
    const std::vector<std::vector<std::size_t>>& pick) {
  std::vector<std::vector<double>> curves;
  for (std::size_t li = 0; li < span.size(); ++li) {
    std::vector<double> c(t_grid.size(), 0.0);
    for (auto rep : pick[li])
      for (std::size_t k = 0; k < t_grid.size(); ++k) c[k] += span[li][rep][k];
    for (auto& v : c) v /= static_cast<double>(pick[li].size());
    curves.push_back(std::move(c));
  }
  std::vector<double> xs;
  for (std::size_t li = 0; li + 1 < curves.size(); ++li) {
    const auto x = crossing(t_grid, curves[li], curves[li + 1]);
    if (!x) return {std::nullopt, {}};
    xs.push_back(*x);
  }
  if (xs.empty()) return {std::nullopt, {}};
  return {std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size()), xs};
}

}  // namespace detail

// Finite-size estimate of t_c from crossings of the spanning probability
// across consecutive box sizes, with a replication-bootstrap CI.
inline TcEstimate estimate_tc(const std::vector<SweepRecord>& records, std::size_t n_boot,
                              RngStream rng, double coverage = 0.95) {
  std::vector<double> t_grid, Ls;
  for (const auto& r : records) {
    if (std::find(t_grid.begin(), t_grid.end(), r.t) == t_grid.end()) t_grid.push_back(r.t);
    if (std::find(Ls.begin(), Ls.end(), r.L) == Ls.end()) Ls.push_back(r.L);
  }
  std::sort(t_grid.begin(), t_grid.end());
  std::sort(Ls.begin(), Ls.end());
  TcEstimate est;
  if (Ls.size() < 2 || t_grid.size() < 2) return est;
  std::vector<std::vector<std::vector<char>>> span(Ls.size());
  for (const auto& r : records) {
    const auto li = static_cast<std::size_t>(std::find(Ls.begin(), Ls.end(), r.L) - Ls.begin());
    const auto ti = static_cast<std::size_t>(std::find(t_grid.begin(), t_grid.end(), r.t) - t_grid.begin());
    if (span[li].size() <= r.rep) span[li].resize(r.rep + 1, std::vector<char>(t_grid.size(), 0));
    span[li][r.rep][ti] = r.spanning ? 1 : 0;
  }
  std::vector<std::vector<std::size_t>> pick(Ls.size());
  for (std::size_t li = 0; li < Ls.size(); ++li) {
    pick[li].resize(span[li].size());
    std::iota(pick[li].begin(), pick[li].end(), 0);
  }
  const auto [tc, xs] = detail::tc_from_spans(t_grid, span, pick);
  if (!tc) return est;
  est.t_c = *tc;
  est.pair_crossings = xs;
  est.found = true;
  std::vector<double> reps;
  for (std::size_t b = 0; b < n_boot; ++b) {
    for (std::size_t li = 0; li < Ls.size(); ++li)
      for (auto& k : pick[li]) k = rng.index(span[li].size());
    const auto [tb, _] = detail::tc_from_spans(t_grid, span, pick);
    // A resample without a crossing counts as an endpoint of the grid.
    reps.push_back(tb ? *tb : t_grid.back());
  }
  if (!reps.empty()) {
    const auto [lo, hi] = percentile_interval(std::move(reps), coverage);
    est.ci_lo = lo;
    est.ci_hi = hi;
  }
  return est;
}

// ---------------------------------------------------------------------------
// Magnetization

struct MagnetizationEstimate {
  double gamma = 0.0;
  KernelEstimate direct;   // cluster has a ghost or reaches the boundary
  KernelEstimate formula;  // 1 - mean (1 - gamma)^size 1{no boundary}
  KernelEstimate difference;
  bool agree = true;
};

// Boundary-reaching clusters stand in for infinite ones: they carry weight 0
// in the formula and count as ghost-connected in the direct estimator.
inline MagnetizationEstimate magnetization_from(const std::vector<SweepRecord>& records, double t,
                                                double gamma, double margin = 4.0) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("magnetization: gamma must lie in [0,1]");
  StreamingMoments md, mf, mdiff;
  for (const auto& r : records) {
    if (r.t != t) continue;
    const double direct = (r.boundary_touch || r.min_label <= gamma) ? 1.0 : 0.0;
    const double formula = 1.0 - magnetization_weight(r.size, r.boundary_touch, gamma);
    md.add(direct);
    mf.add(formula);
    mdiff.add(direct - formula);
  }
  if (md.count() == 0) throw DomainError("magnetization: no records at the requested t");
  MagnetizationEstimate m{gamma, KernelEstimate::from(md), KernelEstimate::from(mf),
                          KernelEstimate::from(mdiff)};
  m.agree = std::abs(m.difference.value) <= margin * m.difference.std_error + 1e-12;
  return m;
}

inline MagnetizationEstimate magnetization(const ConnectionModel& model, double t, double gamma,
                                           std::size_t reps, double box_length, RngStream rng,
                                           unsigned threads = 1, Boundary boundary = Boundary::free) {
  SweepOptions opt;
  opt.t_grid = {t};
  opt.box_lengths = {box_length};
  opt.reps = reps;
  opt.gamma = gamma;
  opt.dimension = model.dimension();
  opt.boundary = boundary;
  opt.threads = threads;
  return magnetization_from(run_sweep(model, opt, rng), t, gamma);
}

// Mean of size (1 - gamma)^size over clusters that stay away from the boundary.
inline KernelEstimate ghost_free_susceptibility_from(const std::vector<SweepRecord>& records,
                                                     double t, double gamma) {
  StreamingMoments m;
  for (const auto& r : records)
    if (r.t == t)
      m.add(static_cast<double>(r.size) * magnetization_weight(r.size, r.boundary_touch, gamma));
  return KernelEstimate::from(m);
}

struct MagnetizationBoundReport {
  double t = 0.0;
  double gamma = 0.0;
  KernelEstimate m_star;  // grid-sup over root marks
  KernelEstimate m_bar;   // root mark ~ Q
  double delta = 1.0;
  double delta_se = 0.0;
  bool pass = true;
};

// Checks M*(t,gamma) <= Delta_n(t) Mbar(t,gamma).
inline MagnetizationBoundReport magnetization_upper_bound_check(
    const ConnectionModel& model, double t, double gamma, std::size_t n, std::size_t reps,
    double box_length, const std::vector<double>& mark_grid, std::size_t n_mc, RngStream rng,
    unsigned threads = 1, double margin = 4.0) {
  MagnetizationBoundReport rep;
  rep.t = t;
  rep.gamma = gamma;
  const auto db = delta_n(model, t, n, mark_grid, n_mc, rng.split(0, Purpose::kernel));
  rep.delta = db.value.value;
  rep.delta_se = db.value.std_error;
  SweepOptions opt;
  opt.t_grid = {t};
  opt.box_lengths = {box_length};
  opt.reps = reps;
  opt.gamma = gamma;
  opt.dimension = model.dimension();
  opt.boundary = Boundary::free;
  opt.threads = threads;
  rep.m_bar = magnetization_from(run_sweep(model, opt, rng.split(1, Purpose::box)), t, gamma).formula;
  const std::vector<double> grid = model.marks().atomic() ? model.marks().atoms() : mark_grid;
  rep.m_star = {-1.0, 0.0, 0, EstimateMethod::mc};
  for (std::size_t g = 0; g < grid.size(); ++g) {
    opt.root_mark = grid[g];
    const auto m =
        magnetization_from(run_sweep(model, opt, rng.split(2 + g, Purpose::box)), t, gamma).formula;
    if (m.value > rep.m_star.value) rep.m_star = m;
  }
  const double rhs = rep.delta * rep.m_bar.value;
  const double se = std::sqrt(rep.m_star.std_error * rep.m_star.std_error +
                              std::pow(rep.delta * rep.m_bar.std_error, 2) +
                              std::pow(rep.m_bar.value * rep.delta_se, 2));
  rep.pass = rep.m_star.value <= rhs + margin * se + 1e-12;
  return rep;
}

}  // namespace rcm
