#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "mvcage/errors.hpp"

namespace mvcage {

struct BoundingBox {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  int dim() const { return static_cast<int>(lo.size()); }

  double volume() const {
    double v = 1.0;
    for (int d = 0; d < dim(); ++d) v *= hi[d] - lo[d];
    return v;
  }
};

// Pseudo-point lattice over the domain. Cell centers carry the integration
// measure (cell_areas) used by every quadrature in the library; adjacency is
// interval adjacency in 1-D and rook adjacency in 2-D. Instances are
// immutable after construction and safe to share across threads.
struct SpatialGrid {
  int dim = 1;
  Eigen::MatrixXd cell_centers;           // n x dim
  Eigen::VectorXd cell_areas;             // n, strictly positive
  std::vector<std::vector<int>> adjacency;  // sorted neighbor lists
  BoundingBox bbox;
  std::vector<int> counts;  // cells per axis when regular; empty otherwise

  int size() const { return static_cast<int>(cell_centers.rows()); }
  bool regular() const { return !counts.empty(); }

  double total_area() const { return cell_areas.sum(); }

  std::vector<std::pair<int, int>> edge_list() const {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < size(); ++i)
      for (int j : adjacency[i])
        if (i < j) edges.emplace_back(i, j);
    return edges;
  }

  void validate() const {
    const int n = size();
    if (n == 0) throw InvalidArgumentError("SpatialGrid: empty grid");
    if (cell_areas.size() != n || static_cast<int>(adjacency.size()) != n)
      throw InvalidArgumentError("SpatialGrid: inconsistent field sizes");
    if ((cell_areas.array() <= 0.0).any())
      throw InvalidArgumentError("SpatialGrid: cell areas must be strictly positive");
    const double vol = bbox.volume();
    if (std::abs(total_area() - vol) > 1e-9 * std::max(1.0, std::abs(vol)))
      throw InvalidArgumentError("SpatialGrid: cell areas do not sum to bbox volume");
    for (int i = 0; i < n; ++i) {
      for (int j : adjacency[i]) {
        if (j < 0 || j >= n || j == i)
          throw InvalidArgumentError("SpatialGrid: adjacency must be irreflexive and in range");
        const auto& back = adjacency[j];
        if (!std::binary_search(back.begin(), back.end(), i))
          throw InvalidArgumentError("SpatialGrid: adjacency must be symmetric");
      }
    }
    // whole-grid graph must be connected
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int reached = 1;
    while (!stack.empty()) {
      const int c = stack.back();
      stack.pop_back();
      for (int j : adjacency[c])
        if (!seen[j]) {
          seen[j] = 1;
          ++reached;
          stack.push_back(j);
        }
    }
    if (reached != n) throw InvalidArgumentError("SpatialGrid: adjacency graph is disconnected");
  }
};

// Assignment of grid cells to areal units A_1..A_m. Labels are 0-based unit
// indices; every unit is nonempty by construction.
struct Partition {
  std::vector<int> labels;      // per-cell unit index in [0, m)
  int m = 0;                    // unit count
  std::vector<int> unit_sizes;  // cells per unit, all >= 1

  static Partition from_labels(std::vector<int> labels, int m) {
    Partition p;
    p.m = m;
    p.labels = std::move(labels);
    if (p.m <= 0) throw InvalidArgumentError("Partition: unit count must be positive");
    p.unit_sizes.assign(p.m, 0);
    for (int lab : p.labels) {
      if (lab < 0 || lab >= p.m)
        throw InvalidArgumentError("Partition: label out of range");
      ++p.unit_sizes[lab];
    }
    for (int k = 0; k < p.m; ++k)
      if (p.unit_sizes[k] == 0)
        throw InvalidArgumentError("Partition: unit " + std::to_string(k) + " is empty");
    return p;
  }

  // relabel arbitrary labels to dense 0..m-1 in order of first appearance
  static Partition from_raw_labels(const std::vector<int>& raw) {
    std::vector<int> dense(raw.size());
    std::vector<int> seen;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      auto it = std::find(seen.begin(), seen.end(), raw[i]);
      if (it == seen.end()) {
        dense[i] = static_cast<int>(seen.size());
        seen.push_back(raw[i]);
      } else {
        dense[i] = static_cast<int>(it - seen.begin());
      }
    }
    return from_labels(std::move(dense), static_cast<int>(seen.size()));
  }

  static Partition singletons(int n) {
    std::vector<int> labels(n);
    std::iota(labels.begin(), labels.end(), 0);
    return from_labels(std::move(labels), n);
  }

  static Partition single_unit(int n) {
    return from_labels(std::vector<int>(n, 0), 1);
  }

  std::vector<std::vector<int>> unit_cells() const {
    std::vector<std::vector<int>> cells(m);
    for (int k = 0; k < m; ++k) cells[k].reserve(unit_sizes[k]);
    for (std::size_t i = 0; i < labels.size(); ++i)
      cells[labels[i]].push_back(static_cast<int>(i));
    return cells;
  }
};

// Regular lattice with centers at cell centroids and uniform areas.
inline SpatialGrid build_grid(const BoundingBox& bbox, const std::vector<int>& counts) {
  const int dim = static_cast<int>(counts.size());
  if (dim < 1 || dim > 2)
    throw InvalidArgumentError("build_grid: only 1-D and 2-D grids are supported");
  if (bbox.dim() != dim)
    throw InvalidArgumentError("build_grid: bbox dimension does not match counts");
  long n = 1;
  for (int d = 0; d < dim; ++d) {
    if (counts[d] < 1) throw InvalidArgumentError("build_grid: counts must be >= 1 per axis");
    if (!(bbox.hi[d] > bbox.lo[d]))
      throw InvalidArgumentError("build_grid: bbox is degenerate or inverted");
    n *= counts[d];
  }

  SpatialGrid grid;
  grid.dim = dim;
  grid.bbox = bbox;
  grid.counts = counts;
  grid.cell_centers.resize(n, dim);
  grid.cell_areas.resize(n);
  grid.adjacency.assign(n, {});

  std::vector<double> step(dim);
  for (int d = 0; d < dim; ++d) step[d] = (bbox.hi[d] - bbox.lo[d]) / counts[d];
  double area = 1.0;
  for (int d = 0; d < dim; ++d) area *= step[d];

  if (dim == 1) {
    for (int i = 0; i < counts[0]; ++i) {
      grid.cell_centers(i, 0) = bbox.lo[0] + (i + 0.5) * step[0];
      grid.cell_areas[i] = area;
      if (i > 0) grid.adjacency[i].push_back(i - 1);
      if (i + 1 < counts[0]) grid.adjacency[i].push_back(i + 1);
    }
  } else {
    const int nx = counts[0], ny = counts[1];
    auto id = [nx](int ix, int iy) { return iy * nx + ix; };
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix) {
        const int c = id(ix, iy);
        grid.cell_centers(c, 0) = bbox.lo[0] + (ix + 0.5) * step[0];
        grid.cell_centers(c, 1) = bbox.lo[1] + (iy + 0.5) * step[1];
        grid.cell_areas[c] = area;
        if (ix > 0) grid.adjacency[c].push_back(id(ix - 1, iy));
        if (ix + 1 < nx) grid.adjacency[c].push_back(id(ix + 1, iy));
        if (iy > 0) grid.adjacency[c].push_back(id(ix, iy - 1));
        if (iy + 1 < ny) grid.adjacency[c].push_back(id(ix, iy + 1));
      }
    }
    for (auto& nbrs : grid.adjacency) std::sort(nbrs.begin(), nbrs.end());
  }
  grid.validate();
  return grid;
}

inline Eigen::VectorXd unit_areas(const Partition& part, const Eigen::VectorXd& cell_areas) {
  Eigen::VectorXd areas = Eigen::VectorXd::Zero(part.m);
  for (std::size_t i = 0; i < part.labels.size(); ++i)
    areas[part.labels[i]] += cell_areas[static_cast<int>(i)];
  return areas;
}

// Change-of-support averaging: unit value = sum_j |B_j| field(j) / sum_j |B_j|
// over the unit's cells. Reduces to the arithmetic mean on uniform grids.
inline Eigen::MatrixXd areal_average(const Eigen::MatrixXd& field, const Partition& part,
                                     const Eigen::VectorXd& cell_areas) {
  const int n = static_cast<int>(field.rows());
  if (n != static_cast<int>(part.labels.size()) || n != static_cast<int>(cell_areas.size()))
    throw InvalidArgumentError("areal_average: field length does not match cell count");
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(part.m, field.cols());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(part.m);
  for (int i = 0; i < n; ++i) {
    const int k = part.labels[i];
    acc.row(k) += cell_areas[i] * field.row(i);
    w[k] += cell_areas[i];
  }
  acc.array().colwise() /= w.array();
  return acc;
}

inline Eigen::MatrixXd areal_average(const Eigen::MatrixXd& field, const Partition& part,
                                     const SpatialGrid& grid) {
  return areal_average(field, part, grid.cell_areas);
}

// Per-unit connectivity flags: a unit is contiguous iff its cells induce a
// connected subgraph of the grid adjacency.
inline std::vector<bool> check_contiguity(const Partition& part, const SpatialGrid& grid) {
  if (static_cast<int>(part.labels.size()) != grid.size())
    throw InvalidArgumentError("check_contiguity: partition does not match grid");
  std::vector<bool> contiguous(part.m, false);
  const auto cells = part.unit_cells();
  std::vector<char> seen(grid.size(), 0);
  std::vector<int> stack;
  for (int k = 0; k < part.m; ++k) {
    for (int c : cells[k]) seen[c] = 0;
    stack.assign(1, cells[k].front());
    seen[cells[k].front()] = 1;
    int reached = 1;
    while (!stack.empty()) {
      const int c = stack.back();
      stack.pop_back();
      for (int j : grid.adjacency[c]) {
        if (part.labels[j] == k && !seen[j]) {
          seen[j] = 1;
          ++reached;
          stack.push_back(j);
        }
      }
    }
    contiguous[k] = (reached == static_cast<int>(cells[k].size()));
  }
  return contiguous;
}

}  // namespace mvcage
