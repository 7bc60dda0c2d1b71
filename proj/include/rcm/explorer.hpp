#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "rcm/error.hpp"
#include "rcm/grid_index.hpp"
#include "rcm/model.hpp"
#include "rcm/rng.hpp"
#include "rcm/space.hpp"
#include "rcm/stats.hpp"

namespace rcm {

struct ExploreLimits {
  std::size_t max_points = 1'000'000;
  std::size_t max_generations = 10'000;
  double max_radius = std::numeric_limits<double>::infinity();

  // Defaults with max_radius = 1000 typical connection ranges.
  static ExploreLimits defaults(const ConnectionModel& m) {
    ExploreLimits l;
    l.max_radius = 1e3 * m.typical_range();
    return l;
  }
};

enum class Truncation { none, max_points, max_generations, max_radius };

inline std::string_view to_string(Truncation t) {
  switch (t) {
    case Truncation::none: return "none";
    case Truncation::max_points: return "max_points";
    case Truncation::max_generations: return "max_generations";
    case Truncation::max_radius: return "max_radius";
  }
  return "?";
}

struct ClusterVertex {
  Coord location;
  double mark = 0.0;
  std::uint32_t generation = 0;
  std::int64_t parent = -1;
};

// Cluster of a root at the origin, vertices in generation (BFS) order.
// Only edges between consecutive generations are recorded.
struct Cluster {
  std::vector<ClusterVertex> vertices;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::vector<std::size_t> gen_sizes;  // nonempty generations 0..depth-1
  std::vector<double> edge_maxima;     // edge_maxima[n] = E_n; entry 0 is 0
  std::size_t depth = 0;               // index of the first empty generation
  Truncation truncation = Truncation::none;

  bool truncated() const noexcept { return truncation != Truncation::none; }
  std::size_t size() const noexcept { return vertices.size(); }
  const ClusterVertex& root() const { return vertices.front(); }

  std::size_t generation_size(std::size_t n) const noexcept {
    return n < gen_sizes.size() ? gen_sizes[n] : 0;
  }
  std::size_t cumulative_size(std::size_t n) const noexcept {
    std::size_t s = 0;
    for (std::size_t k = 0; k <= n && k < gen_sizes.size(); ++k) s += gen_sizes[k];
    return s;
  }
  // E_{<=n} = max_{1<=k<=n} E_k.
  double edge_max_upto(std::size_t n) const noexcept {
    double e = 0.0;
    for (std::size_t k = 1; k <= n && k < edge_maxima.size(); ++k) e = std::max(e, edge_maxima[k]);
    return e;
  }
  double max_edge() const noexcept { return edge_max_upto(edge_maxima.size()); }

  // d_m(v, V_{<=n}).
  double radius_upto(std::size_t n) const noexcept {
    double r = 0.0;
    for (const auto& v : vertices)
      if (v.generation <= n) r = std::max(r, v.location.norm());
    return r;
  }
  double radius() const noexcept { return radius_upto(std::numeric_limits<std::size_t>::max()); }

  double diameter() const {
    std::vector<Coord> pts;
    pts.reserve(vertices.size());
    for (const auto& v : vertices) pts.push_back(v.location);
    return rcm::diameter(std::span<const Coord>(pts), euclidean);
  }
};

// Generation-by-generation sampler of the cluster of a root at the origin.
//
// Given V_{<=n-1} and V_n, generation n+1 is a Poisson process with intensity
// t * phibar(V_{<=n-1}, x) * phi(V_n, x). It is split by the first vertex y of
// V_n (in index order) that x connects to: that part has intensity
//   t * phi(x - x_y) * prod_{w < y} (1 - phi(x - x_w)),
// so each y proposes Poisson(t phi(. - x_y)) points exactly and every earlier
// vertex w independently removes a proposal with probability phi(x - x_w).
// Edges from survivors to later vertices of V_n are then drawn to complete the
// adjacency between V_n and V_{n+1}.
class ClusterExplorer {
 public:
  ClusterExplorer(const ConnectionModel& model, double t, ExploreLimits limits)
      : model_(model), t_(t), limits_(limits) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("explore: intensity must be >= 0");
    if (limits.max_points == 0) throw DomainError("explore: max_points must be positive");
    const double range = model.max_range();
    cell_ = std::isfinite(range) && range > 0.0 ? range : model.typical_range();
  }

  // Starts from a single root at the origin.
  void reset(double root_mark) {
    model_.check_mark(root_mark);
    cluster_ = Cluster{};
    grid_.reset();
    add_vertex({Coord(model_.dimension()), root_mark, 0, -1});
    cluster_.gen_sizes = {1};
    cluster_.edge_maxima = {0.0};
    gen_begin_ = 0;
    gen_end_ = 1;
    generation_ = 0;
    done_ = false;
  }

  // Starts from an arbitrary history: `vertices` in generation order, the last
  // generation being the active one.
  void reset_to(std::vector<ClusterVertex> vertices) {
    if (vertices.empty()) throw DomainError("explore: empty initial configuration");
    cluster_ = Cluster{};
    grid_.reset();
    const std::uint32_t last = vertices.back().generation;
    std::vector<std::size_t> sizes(last + 1, 0);
    for (auto& v : vertices) {
      if (v.location.dim() != model_.dimension()) throw StructuralError("explore: dimension mismatch");
      ++sizes.at(v.generation);
      add_vertex(v);
    }
    cluster_.gen_sizes = sizes;
    cluster_.edge_maxima.assign(last + 1, 0.0);
    gen_end_ = cluster_.vertices.size();
    gen_begin_ = gen_end_ - sizes[last];
    generation_ = last;
    done_ = false;
  }

  // Samples the next generation; returns false once the process has stopped.
  bool advance(RngStream& rng) {
    if (done_) return false;
    if (gen_end_ == gen_begin_) {
      done_ = true;
      return false;
    }
    if (generation_ >= limits_.max_generations) {
      cluster_.truncation = Truncation::max_generations;
      done_ = true;
      return false;
    }
    const std::size_t new_begin = cluster_.vertices.size();
    double emax = 0.0;
    for (std::size_t y = gen_begin_; y < gen_end_ && !done_; ++y) {
      const ClusterVertex parent = cluster_.vertices[y];
      const double mass = t_ * model_.proposal_mass(parent.mark);
      const std::uint64_t n_prop = rng.poisson(mass);
      for (std::uint64_t k = 0; k < n_prop; ++k) {
        const Proposal prop = model_.propose(parent.mark, rng);
        if (prop.accept < 1.0 && !rng.bernoulli(prop.accept)) continue;
        const Coord x = parent.location + prop.delta;
        if (blocked(x, prop.mark, y, rng)) continue;
        const auto id = static_cast<std::uint32_t>(cluster_.vertices.size());
        cluster_.edges.emplace_back(static_cast<std::uint32_t>(y), id);
        emax = std::max(emax, prop.delta.norm());
        connect_later(x, prop.mark, y, id, emax, rng);
        add_vertex({x, prop.mark, static_cast<std::uint32_t>(generation_ + 1),
                    static_cast<std::int64_t>(y)});
        if (cluster_.vertices.size() > limits_.max_points) {
          cluster_.truncation = Truncation::max_points;
          done_ = true;
          break;
        }
        if (x.norm() > limits_.max_radius) {
          cluster_.truncation = Truncation::max_radius;
          done_ = true;
          break;
        }
      }
    }
    const std::size_t added = cluster_.vertices.size() - new_begin;
    if (added > 0) {
      cluster_.gen_sizes.push_back(added);
      cluster_.edge_maxima.push_back(emax);
    }
    gen_begin_ = new_begin;
    gen_end_ = cluster_.vertices.size();
    ++generation_;
    if (added == 0) done_ = true;
    return !done_;
  }

  Cluster finish(RngStream& rng) {
    while (advance(rng)) {
    }
    cluster_.depth = cluster_.gen_sizes.size();
    return std::move(cluster_);
  }

  const Cluster& current() const noexcept { return cluster_; }
  std::size_t active_begin() const noexcept { return gen_begin_; }
  std::size_t active_end() const noexcept { return gen_end_; }

 private:
  static constexpr std::size_t kLinearScanLimit = 48;

  void add_vertex(const ClusterVertex& v) {
    const auto id = static_cast<std::uint32_t>(cluster_.vertices.size());
    cluster_.vertices.push_back(v);
    if (grid_) {
      grid_->insert(v.location, id);
    } else if (cluster_.vertices.size() > kLinearScanLimit) {
      grid_.emplace(model_.dimension(), cell_);
      for (std::uint32_t k = 0; k < cluster_.vertices.size(); ++k)
        grid_->insert(cluster_.vertices[k].location, k);
    }
  }

  // Visits candidate vertex ids that may connect to a point at x with mark q.
  template <class F>
  void for_each_neighbour_candidate(const Coord& x, double q, std::size_t limit, F&& f) const {
    const double qr = model_.query_radius(q);
    if (grid_ && std::isfinite(qr)) {
      grid_->for_each_candidate(x, qr, [&](std::uint32_t id) {
        if (id < limit) f(id);
      });
    } else {
      for (std::size_t id = 0; id < limit; ++id) f(static_cast<std::uint32_t>(id));
    }
  }

  // True if the proposal connects to any vertex with index < y.
  bool blocked(const Coord& x, double q, std::size_t y, RngStream& rng) const {
    bool hit = false;
    const double qr = model_.query_radius(q);
    if (grid_ && std::isfinite(qr)) {
      // Collect and sort so that the draw order is independent of hashing.
      std::vector<std::uint32_t> ids;
      grid_->for_each_candidate(x, qr, [&](std::uint32_t id) {
        if (id < y) ids.push_back(id);
      });
      std::sort(ids.begin(), ids.end());
      for (auto id : ids)
        if (connects(x, q, id, rng)) return true;
      return false;
    }
    for (std::size_t id = 0; id < y && !hit; ++id) hit = connects(x, q, id, rng);
    return hit;
  }

  void connect_later(const Coord& x, double q, std::size_t y, std::uint32_t new_id, double& emax,
                     RngStream& rng) {
    std::vector<std::uint32_t> ids;
    for_each_neighbour_candidate(x, q, gen_end_, [&](std::uint32_t id) {
      if (id > y) ids.push_back(id);
    });
    std::sort(ids.begin(), ids.end());
    for (auto id : ids) {
      if (connects(x, q, id, rng)) {
        cluster_.edges.emplace_back(id, new_id);
        emax = std::max(emax, (x - cluster_.vertices[id].location).norm());
      }
    }
  }

  bool connects(const Coord& x, double q, std::size_t id, RngStream& rng) const {
    const auto& w = cluster_.vertices[id];
    const double p = model_.phi(x - w.location, w.mark, q);
    return p > 0.0 && rng.bernoulli(p);
  }

  const ConnectionModel& model_;
  double t_;
  ExploreLimits limits_;
  double cell_ = 1.0;
  Cluster cluster_;
  std::optional<SparseGrid> grid_;
  std::size_t gen_begin_ = 0;
  std::size_t gen_end_ = 0;
  std::size_t generation_ = 0;
  bool done_ = true;
};

inline Cluster explore(const ConnectionModel& model, double t, double root_mark,
                       const ExploreLimits& limits, RngStream& rng) {
  ClusterExplorer ex(model, t, limits);
  ex.reset(root_mark);
  return ex.finish(rng);
}

struct GenerationStats {
  std::vector<KernelEstimate> c_n;     // E |V_n|
  std::vector<KernelEstimate> c_le_n;  // E |V_{<=n}|
  KernelEstimate mean_size;            // E |V|
  std::size_t n_clusters = 0;
  std::size_t n_truncated = 0;  // censored clusters make the estimates lower bounds
  bool lower_bounds() const noexcept { return n_truncated > 0; }
};

inline GenerationStats generation_stats(const std::vector<Cluster>& clusters, std::size_t n_max) {
  GenerationStats s;
  s.n_clusters = clusters.size();
  std::vector<StreamingMoments> cn(n_max + 1), cle(n_max + 1);
  StreamingMoments total;
  for (const auto& c : clusters) {
    if (c.truncated()) ++s.n_truncated;
    std::size_t cum = 0;
    for (std::size_t n = 0; n <= n_max; ++n) {
      const auto g = c.generation_size(n);
      cum += g;
      cn[n].add(static_cast<double>(g));
      cle[n].add(static_cast<double>(cum));
    }
    total.add(static_cast<double>(c.size()));
  }
  for (std::size_t n = 0; n <= n_max; ++n) {
    s.c_n.push_back(KernelEstimate::from(cn[n]));
    s.c_le_n.push_back(KernelEstimate::from(cle[n]));
  }
  s.mean_size = KernelEstimate::from(total);
  return s;
}

// Exponential-tail fit of cluster sizes (integer data).
inline TailFit tail_fit_size(const std::vector<double>& sizes, const std::vector<bool>& censored,
                             RngStream rng, TailFitOptions opt = {}) {
  opt.discrete = true;
  return tail_fit(sizes, censored, opt, rng);
}

// Exponential-tail fit of diameters or root distances (continuous data).
inline TailFit tail_fit_diameter(const std::vector<double>& diameters,
                                 const std::vector<bool>& censored, RngStream rng,
                                 TailFitOptions opt = {}) {
  opt.discrete = false;
  return tail_fit(diameters, censored, opt, rng);
}

struct PhiStarRow {
  double r = 0.0;
  double value = 0.0;  // phi*_t(r), grid-sup over marks
  double std_error = 0.0;
  double argmax_mark = 0.0;
};

// phi_t^p(r) = 1 - exp(-t * tail_mass(p, r)).
inline PhiStarRow phi_t(const ConnectionModel& model, double t, double p, double r,
                        std::size_t n_mc, RngStream& rng) {
  const auto m = model.tail_mass(p, r, n_mc, rng);
  const double e = std::exp(-t * m.value);
  return {r, 1.0 - e, t * e * m.std_error, p};
}

inline std::vector<PhiStarRow> phi_star_profile(const ConnectionModel& model, double t,
                                                const std::vector<double>& r_grid,
                                                const std::vector<double>& mark_grid,
                                                std::size_t n_mc, RngStream& rng) {
  if (mark_grid.empty()) throw DomainError("phi_star_profile: empty mark grid");
  std::vector<PhiStarRow> out;
  for (double r : r_grid) {
    PhiStarRow best{r, -1.0, 0.0, mark_grid.front()};
    for (double p : mark_grid) {
      const auto row = phi_t(model, t, p, r, n_mc, rng);
      if (row.value > best.value) best = row;
    }
    out.push_back(best);
  }
  return out;
}

struct EdgeBoundRow {
  double r = 0.0;
  double empirical = 0.0;  // P(E_{<=n} > r)
  double empirical_se = 0.0;
  double bound = 0.0;  // c_{<=n-1} phi*_t(r)
  double bound_se = 0.0;
  bool pass = true;
  // n = 1 only: exact identity P(E_1 > r) = phi_t^v(r).
  std::optional<double> identity_value;
  bool identity_pass = true;
};

struct EdgeBoundReport {
  std::size_t n = 1;
  std::vector<EdgeBoundRow> rows;
  bool pass = true;
};

inline EdgeBoundReport check_edge_bound(const std::vector<Cluster>& clusters,
                                        const ConnectionModel& model, double t, std::size_t n,
                                        const std::vector<double>& r_grid,
                                        const std::vector<double>& mark_grid, std::size_t n_mc,
                                        RngStream& rng, double margin = 4.0) {
  if (clusters.empty()) throw DomainError("check_edge_bound: no clusters");
  if (n == 0) throw DomainError("check_edge_bound: n must be >= 1");
  const auto stats = generation_stats(clusters, n);
  const KernelEstimate c = stats.c_le_n[n - 1];
  const auto phis = phi_star_profile(model, t, r_grid, mark_grid, n_mc, rng);
  const double root_mark = clusters.front().root().mark;
  bool same_root = true;
  for (const auto& cl : clusters) same_root = same_root && cl.root().mark == root_mark;

  EdgeBoundReport rep;
  rep.n = n;
  const double nc = static_cast<double>(clusters.size());
  for (std::size_t i = 0; i < r_grid.size(); ++i) {
    const double r = r_grid[i];
    double hits = 0.0;
    for (const auto& cl : clusters) hits += cl.edge_max_upto(n) > r ? 1.0 : 0.0;
    EdgeBoundRow row;
    row.r = r;
    row.empirical = hits / nc;
    row.empirical_se = std::sqrt(std::max(row.empirical * (1.0 - row.empirical), 1.0 / nc) / nc);
    row.bound = c.value * phis[i].value;
    row.bound_se = std::hypot(c.std_error * phis[i].value, c.value * phis[i].std_error);
    row.pass = row.empirical <= row.bound + margin * std::hypot(row.empirical_se, row.bound_se) + 1e-12;
    if (n == 1 && same_root) {
      const auto exact = phi_t(model, t, root_mark, r, n_mc, rng);
      row.identity_value = exact.value;
      row.identity_pass =
          agree_within(row.empirical, row.empirical_se, exact.value, exact.std_error, margin);
    }
    rep.pass = rep.pass && row.pass && row.identity_pass;
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace rcm
