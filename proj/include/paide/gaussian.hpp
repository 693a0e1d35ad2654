#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

namespace paide {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

/// Lower Cholesky factor of a symmetric positive-definite matrix. On failure
/// the diagonal is loaded with 1e-9 * trace / D and the factorization retried
/// once before giving up.
template <typename Scalar>
MatrixX<Scalar> cholesky_with_jitter(const MatrixX<Scalar>& cov) {
  if (!cov.allFinite()) throw std::domain_error("degenerate covariance");
  Eigen::LLT<MatrixX<Scalar>> llt(cov);
  if (llt.info() == Eigen::Success) {
    MatrixX<Scalar> lower = llt.matrixL();
    if (lower.allFinite() && lower.diagonal().minCoeff() > 0) return lower;
  }
  const Eigen::Index dim = cov.rows();
  const Scalar jitter = Scalar(1e-9) * cov.trace() / static_cast<Scalar>(dim);
  MatrixX<Scalar> loaded = cov;
  loaded.diagonal().array() += jitter;
  llt.compute(loaded);
  if (llt.info() != Eigen::Success || !(jitter > 0)) {
    throw std::domain_error("degenerate covariance");
  }
  MatrixX<Scalar> lower = llt.matrixL();
  if (!lower.allFinite() || !(lower.diagonal().minCoeff() > 0)) throw std::domain_error("degenerate covariance");
  return lower;
}

inline void require_same_dim(Eigen::Index a, Eigen::Index b) {
  if (a != b) {
    throw std::invalid_argument("dimension mismatch: " + std::to_string(a) + " vs " +
                                std::to_string(b));
  }
}

}  // namespace detail

/// Multivariate normal N(mean, cov) with covariance held either as a vector of
/// variances (diagonal) or as the lower Cholesky factor L of a full matrix,
/// cov = L * L^T. Immutable once built.
template <typename Scalar = double>
class Gaussian {
 public:
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;

  static Gaussian diagonal(Vector mean, Vector variances) {
    if (mean.size() < 1) throw std::invalid_argument("gaussian dimension must be positive");
    detail::require_same_dim(mean.size(), variances.size());
    if (!mean.allFinite()) throw std::invalid_argument("non-finite mean");
    for (Eigen::Index k = 0; k < variances.size(); ++k) {
      if (!(variances[k] > 0) || !std::isfinite(variances[k])) {
        throw std::invalid_argument("variances must be finite and positive");
      }
    }
    Gaussian g;
    g.mean_ = std::move(mean);
    g.variances_ = std::move(variances);
    g.diagonal_ = true;
    g.log_det_ = g.variances_.array().log().sum();
    return g;
  }

  /// Full covariance; factorized with Cholesky (one jitter retry).
  static Gaussian full(Vector mean, const Matrix& cov) {
    detail::require_same_dim(mean.size(), cov.rows());
    detail::require_same_dim(cov.rows(), cov.cols());
    const Scalar scale = cov.cwiseAbs().maxCoeff();
    if (!((cov - cov.transpose()).cwiseAbs().maxCoeff() <= Scalar(1e-12) * scale)) {
      throw std::invalid_argument("covariance is not symmetric");
    }
    return from_cholesky(std::move(mean), detail::cholesky_with_jitter<Scalar>(cov));
  }

  static Gaussian from_cholesky(Vector mean, Matrix lower) {
    if (mean.size() < 1) throw std::invalid_argument("gaussian dimension must be positive");
    detail::require_same_dim(mean.size(), lower.rows());
    detail::require_same_dim(lower.rows(), lower.cols());
    if (!mean.allFinite() || !lower.allFinite()) throw std::invalid_argument("non-finite parameters");
    if (!(lower.diagonal().minCoeff() > 0)) {
      throw std::invalid_argument("cholesky factor needs a strictly positive diagonal");
    }
    Gaussian g;
    g.mean_ = std::move(mean);
    g.lower_ = lower.template triangularView<Eigen::Lower>();
    g.diagonal_ = false;
    g.log_det_ = Scalar(2) * g.lower_.diagonal().array().log().sum();
    return g;
  }

  Eigen::Index dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  bool is_diagonal() const { return diagonal_; }
  Scalar log_det() const { return log_det_; }

  /// Variances; for full storage this is diag(cov).
  Vector variances() const {
    if (diagonal_) return variances_;
    return lower_.rowwise().squaredNorm();
  }

  /// Cholesky factor; for diagonal storage this is diag(sqrt(variances)).
  Matrix cholesky() const {
    if (diagonal_) return variances_.cwiseSqrt().asDiagonal();
    return lower_;
  }

  Matrix covariance() const {
    if (diagonal_) return variances_.asDiagonal();
    return lower_ * lower_.transpose();
  }

  /// Squared Mahalanobis norm of v under this covariance, v^T cov^{-1} v.
  template <typename Derived>
  Scalar mahalanobis_squared(const Eigen::MatrixBase<Derived>& v) const {
    if (diagonal_) return (v.derived().array().square() / variances_.array()).sum();
    return lower_.template triangularView<Eigen::Lower>().solve(v.derived()).squaredNorm();
  }

  /// Writes mean + L z into out.
  template <typename Derived, typename OutDerived>
  void transform_standard(const Eigen::MatrixBase<Derived>& z,
                          Eigen::MatrixBase<OutDerived>& out) const {
    if (diagonal_) {
      out.derived() = mean_.array() + variances_.array().sqrt() * z.derived().array();
    } else {
      out.derived().noalias() = lower_.template triangularView<Eigen::Lower>() * z.derived();
      out.derived() += mean_;
    }
  }

 private:
  Gaussian() = default;

  Vector mean_;
  Vector variances_;
  Matrix lower_;
  bool diagonal_ = true;
  Scalar log_det_ = 0;
};

using Gaussiand = Gaussian<double>;

template <typename Scalar>
Scalar entropy(const Gaussian<Scalar>& g) {
  const Scalar d = static_cast<Scalar>(g.dim());
  const Scalar log_det = g.log_det();
  if (!std::isfinite(log_det)) throw std::domain_error("degenerate covariance");
  return Scalar(0.5) * (d * std::log(Scalar(2) * std::numbers::pi_v<Scalar> * std::numbers::e_v<Scalar>) +
                        log_det);
}

template <typename Scalar, typename Derived>
Scalar log_density(const Gaussian<Scalar>& g, const Eigen::MatrixBase<Derived>& y) {
  detail::require_same_dim(g.dim(), y.size());
  const Scalar d = static_cast<Scalar>(g.dim());
  const VectorX<Scalar> diff = y.derived() - g.mean();
  return Scalar(-0.5) * (d * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) + g.log_det() +
                         g.mahalanobis_squared(diff));
}

/// One draw mean + L z, z ~ N(0, I). Deterministic given the generator state.
template <typename Scalar, typename Rng>
VectorX<Scalar> sample(const Gaussian<Scalar>& g, Rng& rng) {
  std::normal_distribution<Scalar> normal(0, 1);
  VectorX<Scalar> z(g.dim());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
  VectorX<Scalar> out(g.dim());
  g.transform_standard(z, out);
  return out;
}

namespace detail {

/// log det and factor of (1 - a) S_p + a S_q for two stored Gaussians.
template <typename Scalar>
struct BlendedCovariance {
  bool diagonal;
  VectorX<Scalar> variances;
  MatrixX<Scalar> lower;
  Scalar log_det;

  Scalar mahalanobis_squared(const VectorX<Scalar>& v) const {
    if (diagonal) return (v.array().square() / variances.array()).sum();
    return lower.template triangularView<Eigen::Lower>().solve(v).squaredNorm();
  }
};

template <typename Scalar>
BlendedCovariance<Scalar> blend(const Gaussian<Scalar>& p, Scalar wp, const Gaussian<Scalar>& q,
                                Scalar wq) {
  BlendedCovariance<Scalar> out;
  if (p.is_diagonal() && q.is_diagonal()) {
    out.diagonal = true;
    out.variances = wp * p.variances() + wq * q.variances();
    out.log_det = out.variances.array().log().sum();
  } else {
    out.diagonal = false;
    const MatrixX<Scalar> cov = wp * p.covariance() + wq * q.covariance();
    out.lower = cholesky_with_jitter<Scalar>(cov);
    out.log_det = Scalar(2) * out.lower.diagonal().array().log().sum();
  }
  return out;
}

template <typename Scalar>
Scalar clamp_nonnegative(Scalar v) {
  return v > 0 ? v : Scalar(0);
}

}  // namespace detail

/// KL(p || q) in nats.
template <typename Scalar>
Scalar kl_divergence(const Gaussian<Scalar>& p, const Gaussian<Scalar>& q) {
  detail::require_same_dim(p.dim(), q.dim());
  const Scalar d = static_cast<Scalar>(p.dim());
  const VectorX<Scalar> diff = q.mean() - p.mean();
  Scalar trace_term;
  if (p.is_diagonal() && q.is_diagonal()) {
    trace_term = (p.variances().array() / q.variances().array()).sum();
  } else {
    const MatrixX<Scalar> lq = q.cholesky();
    trace_term = lq.template triangularView<Eigen::Lower>().solve(p.cholesky()).squaredNorm();
  }
  const Scalar value =
      Scalar(0.5) * (trace_term - d + (q.log_det() - p.log_det()) + q.mahalanobis_squared(diff));
  if (!std::isfinite(value)) throw std::domain_error("singular covariance in kl_divergence");
  return detail::clamp_nonnegative(value);
}

/// Bhattacharyya distance -ln \int sqrt(p q). Symmetric in its arguments bit for bit.
template <typename Scalar>
Scalar bhattacharyya(const Gaussian<Scalar>& p, const Gaussian<Scalar>& q) {
  detail::require_same_dim(p.dim(), q.dim());
  const auto avg = detail::blend(p, Scalar(0.5), q, Scalar(0.5));
  const VectorX<Scalar> diff = p.mean() - q.mean();
  const Scalar value = Scalar(0.125) * avg.mahalanobis_squared(diff) +
                       Scalar(0.5) * (avg.log_det - Scalar(0.5) * (p.log_det() + q.log_det()));
  return detail::clamp_nonnegative(value);
}

/// Chernoff alpha-divergence -ln \int p^a q^(1-a), alpha in [0, 1].
/// Closed form: with S = (1-a) S_p + a S_q,
///   a(1-a)/2 d^T S^{-1} d + 1/2 ln(det S / (det S_p^(1-a) det S_q^a)).
template <typename Scalar>
Scalar chernoff_alpha(const Gaussian<Scalar>& p, const Gaussian<Scalar>& q, Scalar alpha) {
  if (!(alpha >= 0 && alpha <= 1)) throw std::invalid_argument("chernoff alpha outside [0, 1]");
  detail::require_same_dim(p.dim(), q.dim());
  if (alpha == 0 || alpha == 1) return Scalar(0);
  const auto blended = detail::blend(p, Scalar(1) - alpha, q, alpha);
  const VectorX<Scalar> diff = p.mean() - q.mean();
  const Scalar value =
      Scalar(0.5) * alpha * (Scalar(1) - alpha) * blended.mahalanobis_squared(diff) +
      Scalar(0.5) * (blended.log_det - (Scalar(1) - alpha) * p.log_det() - alpha * q.log_det());
  return detail::clamp_nonnegative(value);
}

}  // namespace paide
