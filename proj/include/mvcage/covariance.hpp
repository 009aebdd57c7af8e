#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "mvcage/bessel.hpp"
#include "mvcage/errors.hpp"
#include "mvcage/geometry.hpp"
#include "mvcage/rng.hpp"

namespace mvcage {

struct MaternParams {
  double nu = 0.5;      // smoothness
  double a = 1.0;       // inverse range, 1/domain-units
  double sigma2 = 1.0;  // marginal variance

  void validate() const {
    if (!(nu > 0.0) || !(a > 0.0) || !(sigma2 >= 0.0))
      throw InvalidArgumentError("MaternParams: require nu > 0, a > 0, sigma2 >= 0");
  }
};

// Matern correlation M(d; nu, a) = 2^{1-nu}/Gamma(nu) (a d)^nu K_nu(a d),
// equal to 1 at d = 0 and strictly decreasing in d.
inline double matern_kernel(double d, double nu, double a) {
  if (std::isnan(d) || std::isnan(nu) || std::isnan(a))
    throw InvalidArgumentError("matern_kernel: NaN input");
  if (d < 0.0 || !(nu > 0.0) || !(a > 0.0))
    throw InvalidArgumentError("matern_kernel: require d >= 0, nu > 0, a > 0");
  const double x = a * d;
  if (x == 0.0) return 1.0;
  // half-integer closed forms
  if (std::fabs(nu - 0.5) < 1e-13) return std::exp(-x);
  if (std::fabs(nu - 1.5) < 1e-13) return (1.0 + x) * std::exp(-x);
  if (std::fabs(nu - 2.5) < 1e-13) return (1.0 + x + x * x / 3.0) * std::exp(-x);
  const double log_pre = (1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(x);
  const double k = bessel_k(nu, x);
  if (k == 0.0) return 0.0;
  return std::exp(log_pre + std::log(k));
}

// Full bivariate Matern cross-covariance model: C_ii = sigma_i^2 M(nu_i, a_i),
// C_12 = rho sigma_1 sigma_2 M(nu_12, a_12). Admissibility of (rho, nu_12, a_12)
// is checked numerically when the joint matrix is built.
struct BivariateMaternParams {
  MaternParams p1;
  MaternParams p2;
  double nu12 = 0.45;
  double a12 = 1.0;
  double rho = 0.5;

  // cross defaults: a12 = 1.2 max(a1, a2), nu12 = (nu1 + nu2) / 2
  static BivariateMaternParams with_cross_defaults(MaternParams p1, MaternParams p2,
                                                   double rho) {
    BivariateMaternParams p;
    p.p1 = p1;
    p.p2 = p2;
    p.rho = rho;
    p.a12 = 1.2 * std::max(p1.a, p2.a);
    p.nu12 = 0.5 * (p1.nu + p2.nu);
    return p;
  }

  void validate() const {
    p1.validate();
    p2.validate();
    if (!(nu12 > 0.0) || !(a12 > 0.0))
      throw InvalidArgumentError("BivariateMaternParams: require nu12 > 0, a12 > 0");
    if (!(rho >= -1.0 && rho <= 1.0))
      throw InvalidArgumentError("BivariateMaternParams: rho must lie in [-1, 1]");
  }
};

enum class CovSource { parametric, empirical, posterior, reconstructed };

inline std::string to_string(CovSource s) {
  switch (s) {
    case CovSource::parametric: return "parametric";
    case CovSource::empirical: return "empirical";
    case CovSource::posterior: return "posterior";
    case CovSource::reconstructed: return "reconstructed";
  }
  return "unknown";
}

// N x N block covariance over n grid cells, stored as one (nN x nN) matrix
// with process-major blocks: block (i, j) covers rows [i n, (i+1) n).
struct JointCovariance {
  int n = 0;
  int N = 0;
  Eigen::MatrixXd full;  // symmetric (nN x nN)
  CovSource source = CovSource::parametric;

  Eigen::Block<Eigen::MatrixXd> block(int i, int j) {
    return full.block(i * n, j * n, n, n);
  }
  Eigen::Block<const Eigen::MatrixXd> block(int i, int j) const {
    return full.block(i * n, j * n, n, n);
  }

  double max_diagonal() const { return full.diagonal().maxCoeff(); }

  void symmetrize() { full = ((full + full.transpose()) * 0.5).eval(); }

  // C_ij = C_ji^T elementwise; with the block layout this is plain symmetry
  void validate_symmetry(double tol = 1e-10) const {
    const double scale = std::max(1.0, full.cwiseAbs().maxCoeff());
    if ((full - full.transpose()).cwiseAbs().maxCoeff() > tol * scale)
      throw ModelError("JointCovariance: blocks violate C_ij = C_ji^T");
  }

  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(full, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  // PSD within -1e-8 * max diagonal; exact eigenvalue check on small
  // matrices, Cholesky probe of the shifted matrix on large ones
  void validate_psd(double tol_factor = 1e-8) const {
    const double tol = tol_factor * std::max(max_diagonal(), 1e-300);
    if (full.rows() <= 2048) {
      const double lmin = min_eigenvalue();
      if (lmin < -tol) {
        std::ostringstream msg;
        msg << "JointCovariance: indefinite joint matrix, minimum eigenvalue " << lmin
            << " below tolerance " << -tol;
        throw ModelError(msg.str());
      }
      return;
    }
    Eigen::MatrixXd shifted = full;
    shifted.diagonal().array() += tol;
    if (Eigen::LLT<Eigen::MatrixXd>(shifted).info() != Eigen::Success) {
      std::ostringstream msg;
      msg << "JointCovariance: indefinite joint matrix, minimum eigenvalue "
          << min_eigenvalue() << " below tolerance " << -tol;
      throw ModelError(msg.str());
    }
  }
};

inline JointCovariance build_joint_cov(const SpatialGrid& grid,
                                       const BivariateMaternParams& params) {
  params.validate();
  const int n = grid.size();
  if (n == 0) throw InvalidArgumentError("build_joint_cov: empty grid");

  JointCovariance cov;
  cov.n = n;
  cov.N = 2;
  cov.source = CovSource::parametric;
  cov.full.resize(2 * n, 2 * n);

  const double s1 = std::sqrt(params.p1.sigma2);
  const double s2 = std::sqrt(params.p2.sigma2);
  const double c12 = params.rho * s1 * s2;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const double d = (grid.cell_centers.row(i) - grid.cell_centers.row(j)).norm();
      const double m11 = params.p1.sigma2 * matern_kernel(d, params.p1.nu, params.p1.a);
      const double m22 = params.p2.sigma2 * matern_kernel(d, params.p2.nu, params.p2.a);
      const double m12 = c12 * matern_kernel(d, params.nu12, params.a12);
      cov.full(i, j) = cov.full(j, i) = m11;
      cov.full(n + i, n + j) = cov.full(n + j, n + i) = m22;
      cov.full(i, n + j) = cov.full(j, n + i) = m12;
      cov.full(i + n, j) = cov.full(j + n, i) = m12;
    }
  }
  cov.validate_psd();  // throws model-invalid naming the minimum eigenvalue
  return cov;
}

// Replicated multivariate fields: r independent realizations, each an n x N
// matrix of process values at the grid cells.
struct ReplicatedData {
  std::vector<Eigen::MatrixXd> reps;

  int r() const { return static_cast<int>(reps.size()); }
  int n() const { return reps.empty() ? 0 : static_cast<int>(reps.front().rows()); }
  int N() const { return reps.empty() ? 0 : static_cast<int>(reps.front().cols()); }

  // process-major stacked vector (z_1^T, ..., z_N^T)^T of replication k
  Eigen::VectorXd stacked(int k) const {
    const auto& m = reps[k];
    Eigen::VectorXd v(m.size());
    for (int j = 0; j < m.cols(); ++j) v.segment(j * m.rows(), m.rows()) = m.col(j);
    return v;
  }
};

// Empirical cross-covariance with divisor r:
//   C_ij(s, t) = (1/r) sum_k [Z_ik(s) - Zbar_i(s)][Z_jk(t) - Zbar_j(t)].
// `centered` skips the mean subtraction for data known to be zero-mean.
inline JointCovariance empirical_cross_cov(const ReplicatedData& data, bool centered = false) {
  const int r = data.r();
  if (r < 2) throw ModelError("empirical_cross_cov: insufficient replications (need r >= 2)");
  const int n = data.n();
  const int N = data.N();

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n * N);
  if (!centered) {
    for (int k = 0; k < r; ++k) mean += data.stacked(k);
    mean /= r;
  }

  JointCovariance cov;
  cov.n = n;
  cov.N = N;
  cov.source = CovSource::empirical;
  cov.full = Eigen::MatrixXd::Zero(n * N, n * N);
  for (int k = 0; k < r; ++k) {
    const Eigen::VectorXd v = data.stacked(k) - mean;
    cov.full.selfadjointView<Eigen::Lower>().rankUpdate(v, 1.0 / r);
  }
  cov.full = cov.full.selfadjointView<Eigen::Lower>();
  return cov;
}

// Zero-mean Gaussian replications with the given covariance. Cholesky with a
// bounded jitter ladder (1e-10 .. 1e-6 of the max diagonal); deterministic
// given the seed, with per-replication substreams from (seed, k).
inline ReplicatedData simulate_gp(const JointCovariance& cov, int r, std::uint64_t seed,
                                  double* jitter_used = nullptr) {
  if (r < 1) throw InvalidArgumentError("simulate_gp: replication count must be >= 1");
  const int dim = static_cast<int>(cov.full.rows());
  const double scale = std::max(cov.max_diagonal(), 1e-300);

  Eigen::MatrixXd m = cov.full;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  double jitter = 0.0;
  double level = 1e-10;
  while (llt.info() != Eigen::Success && level <= 1e-6 + 1e-20) {
    m = cov.full;
    jitter = level * scale;
    m.diagonal().array() += jitter;
    llt.compute(m);
    level *= 10.0;
  }
  if (llt.info() != Eigen::Success)
    throw ModelError("simulate_gp: factorization failure, covariance not PSD within max jitter");
  if (jitter_used) *jitter_used = jitter;
  const Eigen::MatrixXd L = llt.matrixL();

  ReplicatedData data;
  data.reps.resize(r);
  const int n = cov.n;
  for (int k = 0; k < r; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    Eigen::VectorXd g(dim);
    for (int i = 0; i < dim; ++i) g[i] = rng.normal();
    const Eigen::VectorXd v = L * g;
    Eigen::MatrixXd rep(n, cov.N);
    for (int j = 0; j < cov.N; ++j) rep.col(j) = v.segment(j * n, n);
    data.reps[k] = std::move(rep);
  }
  return data;
}

}  // namespace mvcage
