#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mvcage/errors.hpp"
#include "mvcage/geometry.hpp"

namespace mvcage {

enum class BasisKind { fourier, gaussian_rbf, custom };

inline std::string to_string(BasisKind k) {
  switch (k) {
    case BasisKind::fourier: return "fourier";
    case BasisKind::gaussian_rbf: return "gaussian_rbf";
    case BasisKind::custom: return "custom";
  }
  return "unknown";
}

// Generating basis functions evaluated at the grid cells (n x M columns).
struct BasisSet {
  BasisKind kind = BasisKind::custom;
  Eigen::MatrixXd eval;  // n x M
  // metadata, populated as applicable
  int frequency_count = 0;       // fourier
  Eigen::MatrixXd knots;         // gaussian_rbf, K x dim
  double bandwidth = 0.0;        // gaussian_rbf
  bool duplicate_knots = false;  // flags a singular Gram downstream

  int count() const { return static_cast<int>(eval.cols()); }

  void validate() const {
    if (eval.size() == 0) throw InvalidArgumentError("BasisSet: empty evaluation matrix");
    if (!eval.allFinite()) throw InvalidArgumentError("BasisSet: non-finite entries");
    for (int k = 0; k < eval.cols(); ++k)
      if (eval.col(k).cwiseAbs().maxCoeff() == 0.0)
        throw InvalidArgumentError("BasisSet: column " + std::to_string(k) +
                                   " is identically zero");
  }
};

// Constant plus K sine/cosine pairs at integer frequencies on the (1-D)
// domain, mapped to the unit interval: 2K+1 columns in total.
inline BasisSet fourier_basis(const SpatialGrid& grid, int K) {
  if (grid.dim != 1)
    throw InvalidArgumentError("fourier_basis: unsupported domain (1-D grids only)");
  if (K < 1) throw InvalidArgumentError("fourier_basis: K must be >= 1");
  const int n = grid.size();
  const double lo = grid.bbox.lo[0];
  const double len = grid.bbox.hi[0] - grid.bbox.lo[0];

  BasisSet basis;
  basis.kind = BasisKind::fourier;
  basis.frequency_count = K;
  basis.eval.resize(n, 2 * K + 1);
  basis.eval.col(0).setOnes();
  for (int i = 0; i < n; ++i) {
    const double u = (grid.cell_centers(i, 0) - lo) / len;
    for (int k = 1; k <= K; ++k) {
      basis.eval(i, 2 * k - 1) = std::sin(2.0 * M_PI * k * u);
      basis.eval(i, 2 * k) = std::cos(2.0 * M_PI * k * u);
    }
  }
  basis.validate();
  return basis;
}

// column k = exp(-|s - r_k|^2 / (2 bandwidth^2))
inline BasisSet gaussian_rbf_basis(const SpatialGrid& grid, const Eigen::MatrixXd& knots,
                                   double bandwidth) {
  if (knots.rows() < 1) throw InvalidArgumentError("gaussian_rbf_basis: need at least one knot");
  if (knots.cols() != grid.dim)
    throw InvalidArgumentError("gaussian_rbf_basis: knot dimension does not match grid");
  if (!(bandwidth > 0.0)) throw InvalidArgumentError("gaussian_rbf_basis: bandwidth must be > 0");

  BasisSet basis;
  basis.kind = BasisKind::gaussian_rbf;
  basis.knots = knots;
  basis.bandwidth = bandwidth;
  const int n = grid.size();
  const int K = static_cast<int>(knots.rows());
  basis.eval.resize(n, K);
  const double denom = 2.0 * bandwidth * bandwidth;
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < n; ++i)
      basis.eval(i, k) =
          std::exp(-(grid.cell_centers.row(i) - knots.row(k)).squaredNorm() / denom);
  for (int k = 0; k < K && !basis.duplicate_knots; ++k)
    for (int l = k + 1; l < K; ++l)
      if ((knots.row(k) - knots.row(l)).norm() == 0.0) {
        basis.duplicate_knots = true;
        break;
      }
  basis.validate();
  return basis;
}

// 1.5 x median nearest-neighbor spacing of the knots
inline double default_rbf_bandwidth(const Eigen::MatrixXd& knots) {
  const int K = static_cast<int>(knots.rows());
  if (K < 2) return 1.0;
  std::vector<double> nn(K);
  for (int k = 0; k < K; ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (int l = 0; l < K; ++l)
      if (l != k) best = std::min(best, (knots.row(k) - knots.row(l)).norm());
    nn[k] = best;
  }
  std::nth_element(nn.begin(), nn.begin() + K / 2, nn.end());
  const double med = nn[K / 2];
  return med > 0.0 ? 1.5 * med : 1.0;
}

// regular knot lattice at the cell centers of a coarse grid over bbox
inline Eigen::MatrixXd regular_knots(const BoundingBox& bbox, const std::vector<int>& counts) {
  const SpatialGrid coarse = build_grid(bbox, counts);
  return coarse.cell_centers;
}

// W = Theta^T diag(areas) Theta, the Gram matrix of the generating basis
// under the grid quadrature measure.
inline Eigen::MatrixXd gram_matrix(const BasisSet& basis, const SpatialGrid& grid) {
  if (basis.eval.rows() != grid.size())
    throw InvalidArgumentError("gram_matrix: basis evaluation does not match grid");
  const Eigen::MatrixXd weighted = grid.cell_areas.asDiagonal() * basis.eval;
  Eigen::MatrixXd w = basis.eval.transpose() * weighted;
  w = ((w + w.transpose()) * 0.5).eval();
  return w;
}

// Obled-Creutin basis: Psi = Theta Q with W^{-1} = Q Q^T, so the columns are
// orthonormal under the quadrature measure. When W is numerically rank
// deficient the trailing eigendirections are dropped (tolerant mode) and the
// dropped count is recorded.
struct OcBasis {
  Eigen::MatrixXd eval;       // n x M'
  Eigen::MatrixXd transform;  // Mtilde x M'
  Eigen::MatrixXd gram;       // Mtilde x Mtilde, the input Gram W
  int dropped = 0;

  int count() const { return static_cast<int>(eval.cols()); }
};

inline OcBasis oc_orthogonalize(const BasisSet& basis, const SpatialGrid& grid,
                                double rank_tol = 1e-10, bool strict = false) {
  OcBasis oc;
  oc.gram = gram_matrix(basis, grid);
  const int mt = static_cast<int>(oc.gram.rows());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(oc.gram);
  const Eigen::VectorXd evals = es.eigenvalues();  // ascending
  const double emax = evals[mt - 1];
  if (!(emax > 0.0)) throw ModelError("oc_orthogonalize: Gram matrix is not positive");

  if (evals[0] > rank_tol * emax) {
    // full rank: inverse Cholesky, Q = L^{-T} with W = L L^T
    const Eigen::LLT<Eigen::MatrixXd> llt(oc.gram);
    if (llt.info() != Eigen::Success)
      throw ModelError("oc_orthogonalize: Cholesky of Gram matrix failed");
    oc.transform = llt.matrixU().solve(Eigen::MatrixXd::Identity(mt, mt));
  } else if (strict) {
    throw ModelError("oc_orthogonalize: Gram matrix rank deficient in strict mode");
  } else {
    int kept = 0;
    for (int i = 0; i < mt; ++i)
      if (evals[i] >= rank_tol * emax) ++kept;
    oc.dropped = mt - kept;
    oc.transform.resize(mt, kept);
    for (int c = 0; c < kept; ++c) {
      const int src = mt - 1 - c;  // descending eigenvalue order
      Eigen::VectorXd v = es.eigenvectors().col(src);
      int imax = 0;
      v.cwiseAbs().maxCoeff(&imax);
      if (v[imax] < 0.0) v = -v;
      oc.transform.col(c) = v / std::sqrt(evals[src]);
    }
  }
  oc.eval = basis.eval * oc.transform;

  // one refinement pass if roundoff degraded the quadrature orthonormality
  const int m = oc.count();
  Eigen::MatrixXd g2 =
      oc.eval.transpose() * (grid.cell_areas.asDiagonal() * oc.eval).eval();
  if ((g2 - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff() > 1e-10) {
    const Eigen::LLT<Eigen::MatrixXd> llt2(((g2 + g2.transpose()) * 0.5).eval());
    if (llt2.info() == Eigen::Success) {
      const Eigen::MatrixXd fix = llt2.matrixU().solve(Eigen::MatrixXd::Identity(m, m));
      oc.eval *= fix;
      oc.transform *= fix;
      g2 = oc.eval.transpose() * (grid.cell_areas.asDiagonal() * oc.eval).eval();
    }
  }
  if ((g2 - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff() > 1e-8)
    throw ModelError("oc_orthogonalize: orthonormalization failed (Gram too ill-conditioned)");
  return oc;
}

}  // namespace mvcage
