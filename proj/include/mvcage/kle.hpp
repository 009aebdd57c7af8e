#pragma once

#include <Eigen/Dense>
#include <numeric>
#include <string>
#include <vector>

#include "mvcage/basis.hpp"
#include "mvcage/covariance.hpp"
#include "mvcage/errors.hpp"
#include "mvcage/geometry.hpp"

namespace mvcage {

namespace detail {

// deterministic sign: entry of largest magnitude made positive
inline void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  int imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  if (v[imax] < 0.0) v = -v;
}

inline void check_sorted_nonnegative(const Eigen::VectorXd& lambda, const char* who) {
  const int m = static_cast<int>(lambda.size());
  if (m == 0) throw ModelError(std::string(who) + ": empty spectrum");
  const double tol = 1e-10 * std::max(lambda[0], 1.0);
  for (int k = 0; k < m; ++k) {
    if (lambda[k] < -tol) throw ModelError(std::string(who) + ": negative eigenvalue");
    if (k > 0 && lambda[k] > lambda[k - 1] + tol)
      throw ModelError(std::string(who) + ": eigenvalues not sorted");
  }
}

}  // namespace detail

// Truncated KLE of one process: eigenvalues, eigenfunctions at the grid
// cells, and the basis-coefficient back-transform from the Galerkin step.
struct UnivariateEigenSystem {
  int process = 0;
  Eigen::VectorXd eigenvalues;     // M_j, non-increasing, >= 0
  Eigen::MatrixXd eigenfunctions;  // n x M_j, quadrature-orthonormal columns
  Eigen::MatrixXd coeffs;          // Mtilde x M_j, psi_k = Theta_oc * coeffs.col(k)

  int truncation() const { return static_cast<int>(eigenvalues.size()); }

  void validate(const SpatialGrid& grid) const {
    detail::check_sorted_nonnegative(eigenvalues, "UnivariateEigenSystem");
    const int m = truncation();
    const Eigen::MatrixXd g =
        eigenfunctions.transpose() * (grid.cell_areas.asDiagonal() * eigenfunctions).eval();
    if ((g - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff() > 1e-8)
      throw ModelError("UnivariateEigenSystem: eigenfunctions not quadrature-orthonormal");
  }
};

// Galerkin projection of a covariance matrix onto an orthonormal basis:
//   U_{kl} = psi_k^T diag(a) C diag(a) psi_l
// followed by the eigendecomposition of U; eigenfunctions are mapped back to
// the grid through the basis. Truncation keeps the top M_j pairs, or by
// default every pair with lambda_k >= 1e-10 lambda_1.
inline UnivariateEigenSystem univariate_kle_galerkin(const Eigen::MatrixXd& c_jj,
                                                     const OcBasis& basis,
                                                     const SpatialGrid& grid,
                                                     int truncation = -1,
                                                     int process = 0) {
  const int n = grid.size();
  if (c_jj.rows() != n || c_jj.cols() != n)
    throw InvalidArgumentError("univariate_kle_galerkin: covariance does not match grid");
  const double scale = std::max(1.0, c_jj.cwiseAbs().maxCoeff());
  if ((c_jj - c_jj.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw ModelError("univariate_kle_galerkin: invalid covariance (asymmetric beyond 1e-8)");
  const int mt = basis.count();
  if (truncation > mt)
    throw InvalidArgumentError("univariate_kle_galerkin: truncation exceeds basis size");

  const Eigen::MatrixXd wpsi = grid.cell_areas.asDiagonal() * basis.eval;
  Eigen::MatrixXd u = wpsi.transpose() * c_jj * wpsi;
  u = ((u + u.transpose()) * 0.5).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(u);
  int keep;
  if (truncation > 0) {
    keep = truncation;
  } else {
    const double lmax = std::max(es.eigenvalues()[mt - 1], 0.0);
    keep = 0;
    for (int i = 0; i < mt; ++i)
      if (es.eigenvalues()[i] >= 1e-10 * lmax) ++keep;
    if (keep == 0) keep = 1;
  }

  UnivariateEigenSystem sys;
  sys.process = process;
  sys.eigenvalues.resize(keep);
  sys.coeffs.resize(mt, keep);
  for (int k = 0; k < keep; ++k) {
    const int src = mt - 1 - k;  // descending
    sys.eigenvalues[k] = std::max(es.eigenvalues()[src], 0.0);
    sys.coeffs.col(k) = es.eigenvectors().col(src);
  }
  sys.eigenfunctions = basis.eval * sys.coeffs;
  for (int k = 0; k < keep; ++k) {
    Eigen::VectorXd col = sys.eigenfunctions.col(k);
    int imax = 0;
    col.cwiseAbs().maxCoeff(&imax);
    if (col[imax] < 0.0) {
      sys.eigenfunctions.col(k) = -col;
      sys.coeffs.col(k) = -sys.coeffs.col(k);
    }
  }
  sys.validate(grid);
  return sys;
}

// Cross-covariance of the univariate KLE scores,
//   K^{ij}_{kl} = int int C_ij(s, r) psi_ik(s) psi_jl(r) ds dr,
// assembled as a symmetric M x M block matrix, M = sum_j M_j. Diagonal
// blocks must come out diagonal with the univariate eigenvalues.
struct ScoreCovariance {
  std::vector<int> block_sizes;
  Eigen::MatrixXd full;  // M x M

  int total() const { return static_cast<int>(full.rows()); }

  int offset(int j) const {
    return std::accumulate(block_sizes.begin(), block_sizes.begin() + j, 0);
  }

  Eigen::Block<const Eigen::MatrixXd> block(int i, int j) const {
    return full.block(offset(i), offset(j), block_sizes[i], block_sizes[j]);
  }
};

inline ScoreCovariance score_cov(const JointCovariance& cov,
                                 const std::vector<UnivariateEigenSystem>& systems,
                                 const SpatialGrid& grid) {
  const int N = static_cast<int>(systems.size());
  if (cov.N != N) throw InvalidArgumentError("score_cov: process count mismatch");
  if (cov.n != grid.size())
    throw InvalidArgumentError("score_cov: covariance does not match grid");

  ScoreCovariance k;
  k.block_sizes.resize(N);
  std::vector<Eigen::MatrixXd> wpsi(N);
  for (int j = 0; j < N; ++j) {
    if (systems[j].eigenfunctions.rows() != grid.size())
      throw InvalidArgumentError("score_cov: eigensystem built on a different grid");
    k.block_sizes[j] = systems[j].truncation();
    wpsi[j] = grid.cell_areas.asDiagonal() * systems[j].eigenfunctions;
  }
  const int m = std::accumulate(k.block_sizes.begin(), k.block_sizes.end(), 0);
  k.full.resize(m, m);
  for (int i = 0; i < N; ++i)
    for (int j = i; j < N; ++j) {
      const Eigen::MatrixXd kij = wpsi[i].transpose() * cov.block(i, j) * wpsi[j];
      k.full.block(k.offset(i), k.offset(j), k.block_sizes[i], k.block_sizes[j]) = kij;
      if (j > i)
        k.full.block(k.offset(j), k.offset(i), k.block_sizes[j], k.block_sizes[i]) =
            kij.transpose();
    }
  k.full = ((k.full + k.full.transpose()) * 0.5).eval();

  // diagonal blocks must recover diag(lambda_j) for a consistent eigensystem
  for (int j = 0; j < N; ++j) {
    const auto kjj = k.block(j, j);
    const double l1 = std::max(systems[j].eigenvalues[0], 1e-300);
    for (int r = 0; r < k.block_sizes[j]; ++r)
      for (int c = 0; c < k.block_sizes[j]; ++c) {
        if (r == c) {
          if (std::abs(kjj(r, c) - systems[j].eigenvalues[r]) > 1e-8 * std::max(1.0, l1))
            throw ModelError("score_cov: inconsistent eigensystem (diagonal mismatch)");
        } else if (std::abs(kjj(r, c)) > 1e-6 * l1) {
          throw ModelError("score_cov: inconsistent eigensystem (off-diagonal energy)");
        }
      }
  }
  return k;
}

enum class EigenProvenance { score_cov, posterior_eof, plug_in };

inline std::string to_string(EigenProvenance p) {
  switch (p) {
    case EigenProvenance::score_cov: return "score-cov";
    case EigenProvenance::posterior_eof: return "posterior-eof";
    case EigenProvenance::plug_in: return "plug-in";
  }
  return "unknown";
}

// Truncated multivariate KLE: shared eigenvalues lambda_k with vector-valued
// eigenfunctions, stored per process as n x M matrices with column k holding
// [psi_k]_j at the grid cells.
struct MultivariateEigenSystem {
  Eigen::VectorXd eigenvalues;                  // M
  std::vector<Eigen::MatrixXd> eigenfunctions;  // per process, n x M
  Eigen::MatrixXd mixing;                       // M x M, columns e_k (row blocks per process)
  std::vector<int> block_sizes;                 // univariate truncations M_j
  EigenProvenance provenance = EigenProvenance::plug_in;

  int processes() const { return static_cast<int>(eigenfunctions.size()); }
  int truncation() const { return static_cast<int>(eigenvalues.size()); }
  int cells() const {
    return eigenfunctions.empty() ? 0 : static_cast<int>(eigenfunctions.front().rows());
  }

  static MultivariateEigenSystem from_components(Eigen::VectorXd lambda,
                                                 std::vector<Eigen::MatrixXd> funcs,
                                                 EigenProvenance prov = EigenProvenance::plug_in) {
    MultivariateEigenSystem sys;
    sys.eigenvalues = std::move(lambda);
    sys.eigenfunctions = std::move(funcs);
    sys.provenance = prov;
    return sys;
  }

  // P8: sum_j int [psi_k]_j [psi_l]_j = delta_kl under the grid quadrature
  void validate(const SpatialGrid& grid) const {
    detail::check_sorted_nonnegative(eigenvalues, "MultivariateEigenSystem");
    const int m = truncation();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, m);
    for (const auto& psi : eigenfunctions)
      g += psi.transpose() * (grid.cell_areas.asDiagonal() * psi).eval();
    if ((g - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff() > 1e-7)
      throw ModelError("MultivariateEigenSystem: multivariate orthonormality (P8) violated");
  }
};

namespace detail {

inline void fix_multivariate_signs(MultivariateEigenSystem& sys) {
  const int m = sys.truncation();
  const int nproc = sys.processes();
  for (int k = 0; k < m; ++k) {
    double best = 0.0;
    double signed_best = 1.0;
    for (int j = 0; j < nproc; ++j) {
      int imax = 0;
      const double v = sys.eigenfunctions[j].col(k).cwiseAbs().maxCoeff(&imax);
      if (v > best) {
        best = v;
        signed_best = sys.eigenfunctions[j](imax, k);
      }
    }
    if (signed_best < 0.0) {
      for (int j = 0; j < nproc; ++j) sys.eigenfunctions[j].col(k) *= -1.0;
      if (sys.mixing.size() > 0) sys.mixing.col(k) *= -1.0;
    }
  }
}

}  // namespace detail

// Eigendecomposition of the score covariance; mixing vectors e_k re-combine
// the univariate eigenfunctions into multivariate ones, [psi_k]_j = Psi_j e_k^j.
inline MultivariateEigenSystem multivariate_eigensystem(
    const ScoreCovariance& k, const std::vector<UnivariateEigenSystem>& systems) {
  const int N = static_cast<int>(systems.size());
  if (static_cast<int>(k.block_sizes.size()) != N)
    throw InvalidArgumentError("multivariate_eigensystem: block count mismatch");
  const int m = k.total();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k.full);
  const double lmax = es.eigenvalues()[m - 1];
  if (es.eigenvalues()[0] < -1e-8 * std::max(lmax, 1e-300))
    throw ModelError("multivariate_eigensystem: indefinite score covariance");

  MultivariateEigenSystem sys;
  sys.provenance = EigenProvenance::score_cov;
  sys.block_sizes = k.block_sizes;
  sys.eigenvalues.resize(m);
  sys.mixing.resize(m, m);
  for (int c = 0; c < m; ++c) {
    const int src = m - 1 - c;
    sys.eigenvalues[c] = std::max(es.eigenvalues()[src], 0.0);
    sys.mixing.col(c) = es.eigenvectors().col(src);
  }
  sys.eigenfunctions.resize(N);
  for (int j = 0; j < N; ++j)
    sys.eigenfunctions[j] =
        systems[j].eigenfunctions * sys.mixing.middleRows(k.offset(j), k.block_sizes[j]);
  detail::fix_multivariate_signs(sys);
  return sys;
}

// EOF route: eigendecompose the posterior coefficient covariance and push the
// eigenvectors through the per-process OC bases, [psi_k]_j = Psi^OC_j e_k^j.
inline MultivariateEigenSystem posterior_eof_eigensystem(const Eigen::MatrixXd& sigma_hat,
                                                         const std::vector<OcBasis>& oc,
                                                         const SpatialGrid& grid) {
  const int N = static_cast<int>(oc.size());
  if (N == 0) throw InvalidArgumentError("posterior_eof_eigensystem: no OC bases");
  std::vector<int> sizes(N);
  int m = 0;
  for (int j = 0; j < N; ++j) {
    sizes[j] = oc[j].count();
    m += sizes[j];
    if (oc[j].eval.rows() != grid.size())
      throw InvalidArgumentError("posterior_eof_eigensystem: OC basis built on a different grid");
  }
  if (sigma_hat.rows() != m || sigma_hat.cols() != m)
    throw InvalidArgumentError(
        "posterior_eof_eigensystem: coefficient covariance does not match OC blocks");

  const Eigen::MatrixXd sym = ((sigma_hat + sigma_hat.transpose()) * 0.5).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const double lmax = es.eigenvalues()[m - 1];
  if (es.eigenvalues()[0] < -1e-8 * std::max(lmax, 1e-300))
    throw ModelError("posterior_eof_eigensystem: indefinite coefficient covariance");

  MultivariateEigenSystem sys;
  sys.provenance = EigenProvenance::posterior_eof;
  sys.block_sizes = sizes;
  sys.eigenvalues.resize(m);
  sys.mixing.resize(m, m);
  for (int c = 0; c < m; ++c) {
    const int src = m - 1 - c;
    sys.eigenvalues[c] = std::max(es.eigenvalues()[src], 0.0);
    sys.mixing.col(c) = es.eigenvectors().col(src);
  }
  sys.eigenfunctions.resize(N);
  int off = 0;
  for (int j = 0; j < N; ++j) {
    sys.eigenfunctions[j] = oc[j].eval * sys.mixing.middleRows(off, sizes[j]);
    off += sizes[j];
  }
  detail::fix_multivariate_signs(sys);
  return sys;
}

// Mercer reconstruction: block (i, j) = sum_{k <= M_use} lambda_k [psi_k]_i [psi_k]_j^T.
inline JointCovariance mercer_reconstruct(const MultivariateEigenSystem& sys, int m_use) {
  const int m = sys.truncation();
  if (m_use < 1 || m_use > m)
    throw InvalidArgumentError("mercer_reconstruct: truncation out of range");
  const int n = sys.cells();
  const int N = sys.processes();

  Eigen::MatrixXd stacked(n * N, m_use);
  for (int j = 0; j < N; ++j)
    stacked.middleRows(j * n, n) = sys.eigenfunctions[j].leftCols(m_use);

  JointCovariance cov;
  cov.n = n;
  cov.N = N;
  cov.source = CovSource::reconstructed;
  cov.full = stacked * sys.eigenvalues.head(m_use).asDiagonal() * stacked.transpose();
  cov.symmetrize();
  return cov;
}

// Areal eigenfunctions: change-of-support averages of [psi_k]_j per unit.
struct ArealEigenfunctions {
  std::vector<Eigen::MatrixXd> values;  // per process, m_units x M

  int units() const { return values.empty() ? 0 : static_cast<int>(values.front().rows()); }
};

inline ArealEigenfunctions areal_eigensystem(const MultivariateEigenSystem& sys,
                                             const Partition& part, const SpatialGrid& grid) {
  ArealEigenfunctions areal;
  areal.values.reserve(sys.processes());
  for (const auto& psi : sys.eigenfunctions)
    areal.values.push_back(areal_average(psi, part, grid));
  return areal;
}

// Areal Mercer covariance between units (Proposition 3.1.b right-hand side):
// block (u, v) entry (i, j) = sum_k lambda_k psi^A_k(A_u)_i psi^A_k(A_v)_j.
// Returned with process-major blocks, matching JointCovariance layout.
inline Eigen::MatrixXd areal_mercer_cov(const ArealEigenfunctions& areal,
                                        const Eigen::VectorXd& lambda) {
  const int N = static_cast<int>(areal.values.size());
  const int m_units = areal.units();
  const int m = static_cast<int>(lambda.size());
  Eigen::MatrixXd stacked(m_units * N, m);
  for (int j = 0; j < N; ++j) stacked.middleRows(j * m_units, m_units) = areal.values[j];
  Eigen::MatrixXd out = stacked * lambda.asDiagonal() * stacked.transpose();
  return ((out + out.transpose()) * 0.5).eval();
}

// KLE scores of one field: alpha_k = sum_j int Y_j(s) [psi_k]_j(s) ds.
inline Eigen::VectorXd multivariate_scores(const Eigen::MatrixXd& field,
                                           const MultivariateEigenSystem& sys,
                                           const SpatialGrid& grid) {
  if (field.rows() != grid.size() || field.cols() != sys.processes())
    throw InvalidArgumentError("multivariate_scores: field does not match system");
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(sys.truncation());
  for (int j = 0; j < sys.processes(); ++j)
    alpha += sys.eigenfunctions[j].transpose() *
             (grid.cell_areas.asDiagonal() * field.col(j)).eval();
  return alpha;
}

}  // namespace mvcage
