#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "rcm/error.hpp"
#include "rcm/space.hpp"

namespace rcm {

// Uniform cell grid over the window [0, L)^d. Cells hold point indices.
class GridIndex {
 public:
  GridIndex(std::span<const Coord> points, double cell_size, const SpaceConfig& cfg)
      : cfg_(cfg), points_(points.begin(), points.end()) {
    cfg.validate();
    if (!(cell_size > 0.0)) throw DomainError("grid_index: cell size must be positive");
    per_axis_ = std::max<long>(1, static_cast<long>(std::floor(cfg.box_length / cell_size)));
    // Bound the total cell count so that memory stays proportional to the input.
    const long cap = std::max<long>(1, static_cast<long>(std::pow(4.0 * points_.size() + 16.0,
                                                                  1.0 / cfg.dimension)));
    per_axis_ = std::min(per_axis_, cap);
    cell_ = cfg.box_length / static_cast<double>(per_axis_);
    long total = 1;
    for (int i = 0; i < cfg.dimension; ++i) total *= per_axis_;
    start_.assign(static_cast<std::size_t>(total) + 1, 0);
    std::vector<std::size_t> cell_of(points_.size());
    for (std::size_t k = 0; k < points_.size(); ++k) {
      if (points_[k].dim() != cfg.dimension) throw StructuralError("grid_index: dimension mismatch");
      cell_of[k] = flat(cell_coords(points_[k]));
      ++start_[cell_of[k] + 1];
    }
    for (std::size_t c = 1; c < start_.size(); ++c) start_[c] += start_[c - 1];
    items_.resize(points_.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t k = 0; k < points_.size(); ++k) items_[fill[cell_of[k]]++] = k;
  }

  std::size_t size() const noexcept { return points_.size(); }
  double cell_size() const noexcept { return cell_; }

  // Indices whose cells intersect the ball; a superset of the exact answer.
  template <class F>
  void for_each_candidate(const Coord& center, double radius, F&& f) const {
    if (points_.empty()) return;
    const int d = cfg_.dimension;
    const bool torus = cfg_.boundary == Boundary::torus;
    std::array<long, kMaxDimension> lo{}, hi{};
    for (int i = 0; i < d; ++i) {
      lo[i] = static_cast<long>(std::floor((center[i] - radius) / cell_));
      hi[i] = static_cast<long>(std::floor((center[i] + radius) / cell_));
      if (torus) {
        if (hi[i] - lo[i] + 1 >= per_axis_) {
          lo[i] = 0;
          hi[i] = per_axis_ - 1;
        }
      } else {
        lo[i] = std::max(lo[i], 0L);
        hi[i] = std::min(hi[i], per_axis_ - 1);
        if (lo[i] > hi[i]) return;
      }
    }
    std::array<long, kMaxDimension> c = lo;
    for (;;) {
      std::size_t idx = 0;
      for (int i = d - 1; i >= 0; --i) {
        long ci = c[i];
        if (torus) ci = ((ci % per_axis_) + per_axis_) % per_axis_;
        idx = idx * static_cast<std::size_t>(per_axis_) + static_cast<std::size_t>(ci);
      }
      for (std::size_t s = start_[idx]; s < start_[idx + 1]; ++s) f(items_[s]);
      int i = 0;
      for (; i < d; ++i) {
        if (++c[i] <= hi[i]) break;
        c[i] = lo[i];
      }
      if (i == d) break;
    }
  }

  // Exact: indices with distance(center, point) <= radius, ascending.
  std::vector<std::size_t> within(const Coord& center, double radius) const {
    std::vector<std::size_t> out;
    for_each_candidate(center, radius, [&](std::size_t k) {
      if (distance(center, points_[k], cfg_) <= radius) out.push_back(k);
    });
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::array<long, kMaxDimension> cell_coords(const Coord& x) const {
    std::array<long, kMaxDimension> c{};
    for (int i = 0; i < cfg_.dimension; ++i) {
      long ci = static_cast<long>(std::floor(x[i] / cell_));
      c[i] = std::clamp(ci, 0L, per_axis_ - 1);
    }
    return c;
  }
  std::size_t flat(const std::array<long, kMaxDimension>& c) const {
    std::size_t idx = 0;
    for (int i = cfg_.dimension - 1; i >= 0; --i)
      idx = idx * static_cast<std::size_t>(per_axis_) + static_cast<std::size_t>(c[i]);
    return idx;
  }

  SpaceConfig cfg_;
  std::vector<Coord> points_;
  long per_axis_ = 1;
  double cell_ = 1.0;
  std::vector<std::size_t> start_;
  std::vector<std::size_t> items_;
};

// Hashed cell grid over unbounded R^d with incremental insertion.
class SparseGrid {
 public:
  SparseGrid(int dim, double cell_size) : dim_(dim), cell_(cell_size) {
    if (!(cell_size > 0.0) || !std::isfinite(cell_size))
      throw DomainError("sparse grid: cell size must be positive and finite");
  }

  void insert(const Coord& x, std::uint32_t id) { cells_[key(cell_coords(x))].push_back(id); }

  template <class F>
  void for_each_candidate(const Coord& center, double radius, F&& f) const {
    std::array<long, kMaxDimension> lo{}, hi{};
    for (int i = 0; i < dim_; ++i) {
      lo[i] = static_cast<long>(std::floor((center[i] - radius) / cell_));
      hi[i] = static_cast<long>(std::floor((center[i] + radius) / cell_));
    }
    std::array<long, kMaxDimension> c = lo;
    for (;;) {
      if (const auto it = cells_.find(key(c)); it != cells_.end())
        for (auto id : it->second) f(id);
      int i = 0;
      for (; i < dim_; ++i) {
        if (++c[i] <= hi[i]) break;
        c[i] = lo[i];
      }
      if (i == dim_) break;
    }
  }

  double cell_size() const noexcept { return cell_; }

 private:
  std::array<long, kMaxDimension> cell_coords(const Coord& x) const {
    std::array<long, kMaxDimension> c{};
    for (int i = 0; i < dim_; ++i) c[i] = static_cast<long>(std::floor(x[i] / cell_));
    return c;
  }
  std::uint64_t key(const std::array<long, kMaxDimension>& c) const {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (int i = 0; i < dim_; ++i) h = hash_combine64(h, static_cast<std::uint64_t>(c[i]));
    return h;
  }

  int dim_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> cells_;
};

}  // namespace rcm
