#pragma once

#include "paide/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace paide {

/// The ensemble's predictive distribution at one input x: sum_j w_j p_j(y).
template <typename Scalar = double>
class Mixture {
 public:
  using Component = Gaussian<Scalar>;
  using Vector = VectorX<Scalar>;

  Mixture(std::vector<Component> components, Vector weights)
      : components_(std::move(components)), weights_(std::move(weights)) {
    if (components_.empty()) throw std::invalid_argument("mixture needs at least one component");
    if (static_cast<Eigen::Index>(components_.size()) != weights_.size()) {
      throw std::invalid_argument("mixture weight count does not match component count");
    }
    const Eigen::Index d = components_.front().dim();
    for (const auto& c : components_) detail::require_same_dim(d, c.dim());
    for (Eigen::Index j = 0; j < weights_.size(); ++j) {
      if (!(weights_[j] >= 0) || !std::isfinite(weights_[j])) {
        throw std::invalid_argument("mixture weights must be non-negative");
      }
    }
    if (std::abs(weights_.sum() - Scalar(1)) > Scalar(1e-12)) {
      throw std::invalid_argument("mixture weights must sum to one");
    }
  }

  static Mixture uniform(std::vector<Component> components) {
    const auto m = static_cast<Eigen::Index>(components.size());
    if (m == 0) throw std::invalid_argument("mixture needs at least one component");
    return Mixture(std::move(components), Vector::Constant(m, Scalar(1) / static_cast<Scalar>(m)));
  }

  std::size_t size() const { return components_.size(); }
  Eigen::Index dim() const { return components_.front().dim(); }
  const std::vector<Component>& components() const { return components_; }
  const Component& component(std::size_t j) const { return components_[j]; }
  const Vector& weights() const { return weights_; }
  Scalar weight(std::size_t j) const { return weights_[static_cast<Eigen::Index>(j)]; }

  /// Mixture mean sum_j w_j mu_j.
  Vector mean() const {
    Vector out = Vector::Zero(dim());
    for (std::size_t j = 0; j < size(); ++j) out += weight(j) * components_[j].mean();
    return out;
  }

 private:
  std::vector<Component> components_;
  Vector weights_;
};

using Mixtured = Mixture<double>;

/// Distance used by the pairwise estimators.
struct Distance {
  enum class Kind { KL, Bhattacharyya, Chernoff };

  Kind kind = Kind::KL;
  double alpha = 0.5;

  static Distance kl() { return {Kind::KL, 0.5}; }
  static Distance bhattacharyya() { return {Kind::Bhattacharyya, 0.5}; }
  static Distance chernoff(double alpha) {
    if (!(alpha >= 0 && alpha <= 1)) throw std::invalid_argument("chernoff alpha outside [0, 1]");
    return {Kind::Chernoff, alpha};
  }

  bool symmetric() const {
    return kind == Kind::Bhattacharyya || (kind == Kind::Chernoff && alpha == 0.5);
  }

  std::string name() const {
    switch (kind) {
      case Kind::KL: return "kl";
      case Kind::Bhattacharyya: return "bhatt";
      case Kind::Chernoff: return "chernoff(" + std::to_string(alpha) + ")";
    }
    return "unknown";
  }

  template <typename Scalar>
  Scalar operator()(const Gaussian<Scalar>& p, const Gaussian<Scalar>& q) const {
    switch (kind) {
      case Kind::KL: return paide::kl_divergence(p, q);
      case Kind::Bhattacharyya: return paide::bhattacharyya(p, q);
      case Kind::Chernoff: return paide::chernoff_alpha(p, q, static_cast<Scalar>(alpha));
    }
    throw std::logic_error("unknown distance kind");
  }
};

struct McConfig {
  std::size_t sample_count = 1000;
  std::uint64_t seed = 0;
};

template <typename Scalar = double>
struct McEstimate {
  Scalar value = 0;
  Scalar standard_error = 0;
};

template <typename Scalar, typename Derived>
Scalar mixture_log_density(const Mixture<Scalar>& mix, const Eigen::MatrixBase<Derived>& y) {
  detail::require_same_dim(mix.dim(), y.size());
  Scalar best = -std::numeric_limits<Scalar>::infinity();
  std::vector<Scalar> terms(mix.size(), best);
  for (std::size_t j = 0; j < mix.size(); ++j) {
    if (mix.weight(j) == 0) continue;
    terms[j] = std::log(mix.weight(j)) + log_density(mix.component(j), y);
    best = std::max(best, terms[j]);
  }
  if (!std::isfinite(best)) return best;
  Scalar acc = 0;
  for (const Scalar t : terms) acc += std::exp(t - best);
  return best + std::log(acc);
}

namespace detail {

/// Allocation-free repeated evaluation of ln f(y) for one mixture; the MC
/// estimator calls it K times per input.
template <typename Scalar>
class MixtureLogDensity {
 public:
  explicit MixtureLogDensity(const Mixture<Scalar>& mix) : mix_(mix) {
    const Scalar log_two_pi = std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
    for (std::size_t j = 0; j < mix.size(); ++j) {
      if (mix.weight(j) == 0) continue;
      const auto& c = mix.component(j);
      Entry e;
      e.index = j;
      e.offset = std::log(mix.weight(j)) -
                 Scalar(0.5) * (static_cast<Scalar>(c.dim()) * log_two_pi + c.log_det());
      if (c.is_diagonal()) e.inv_std = c.variances().cwiseSqrt().cwiseInverse();
      entries_.push_back(std::move(e));
    }
    terms_.resize(entries_.size());
    diff_.resize(mix.dim());
  }

  template <typename Derived>
  Scalar operator()(const Eigen::MatrixBase<Derived>& y) const {
    Scalar best = -std::numeric_limits<Scalar>::infinity();
    for (std::size_t e = 0; e < entries_.size(); ++e) {
      const auto& entry = entries_[e];
      const auto& c = mix_.component(entry.index);
      Scalar maha;
      if (c.is_diagonal()) {
        maha = ((y.derived() - c.mean()).array() * entry.inv_std.array()).square().sum();
      } else {
        diff_ = y.derived() - c.mean();
        maha = c.mahalanobis_squared(diff_);
      }
      terms_[e] = entry.offset - Scalar(0.5) * maha;
      best = std::max(best, terms_[e]);
    }
    if (!std::isfinite(best)) return best;
    Scalar acc = 0;
    for (const Scalar t : terms_) acc += std::exp(t - best);
    return best + std::log(acc);
  }

 private:
  struct Entry {
    std::size_t index = 0;
    Scalar offset = 0;
    VectorX<Scalar> inv_std;
  };
  const Mixture<Scalar>& mix_;
  std::vector<Entry> entries_;
  mutable std::vector<Scalar> terms_;
  mutable VectorX<Scalar> diff_;
};

}  // namespace detail

/// H(theta) = -sum_j w_j ln w_j.
template <typename Scalar>
Scalar weight_entropy(const Mixture<Scalar>& mix) {
  Scalar h = 0;
  for (std::size_t j = 0; j < mix.size(); ++j) {
    const Scalar w = mix.weight(j);
    if (w > 0) h -= w * std::log(w);
  }
  return h;
}

/// Expected component entropy sum_j w_j H(p_j); exact for Gaussian components.
template <typename Scalar>
Scalar aleatoric_entropy(const Mixture<Scalar>& mix) {
  Scalar h = 0;
  for (std::size_t j = 0; j < mix.size(); ++j) {
    if (mix.weight(j) > 0) h += mix.weight(j) * entropy(mix.component(j));
  }
  return h;
}

/// -sum_i w_i ln sum_j w_j exp(-D(p_i || p_j)) for an arbitrary premetric.
///
/// `distance(i, j)` is called only for i != j with both weights positive; for
/// symmetric distances only i < j is evaluated and mirrored. D(p_i || p_i) = 0.
/// The inner sum always holds its own w_i exp(0) term, so it is evaluated
/// shifted by that term as log1p(-sum_j w_j (1 - exp(-D_ij))): it never
/// underflows for large D and the result is exactly zero when all D vanish.
template <typename Scalar, typename DistanceFn>
Scalar pairwise_epistemic(const Mixture<Scalar>& mix, DistanceFn&& distance, bool symmetric) {
  const std::size_t m = mix.size();
  // deficit[i] = sum_j w_j (1 - exp(-D_ij))
  std::vector<Scalar> deficit(m, Scalar(0));
  for (std::size_t i = 0; i < m; ++i) {
    if (mix.weight(i) == 0) continue;
    for (std::size_t j = symmetric ? i + 1 : 0; j < m; ++j) {
      if (j == i || mix.weight(j) == 0) continue;
      const Scalar d = static_cast<Scalar>(distance(i, j));
      if (std::isnan(d) || d < 0) throw std::domain_error("distance evaluation failed");
      const Scalar gap = -std::expm1(-d);
      deficit[i] += mix.weight(j) * gap;
      if (symmetric) deficit[j] += mix.weight(i) * gap;
    }
  }
  Scalar total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (mix.weight(i) == 0) continue;
    total -= mix.weight(i) * std::log1p(-deficit[i]);
  }
  return std::max(total, Scalar(0));
}

/// Pairwise-distance estimate of epistemic uncertainty (mutual information
/// between the output and the member index). KL gives an upper bound on the
/// true value, Bhattacharyya (and any Chernoff alpha) a lower bound.
template <typename Scalar>
Scalar epistemic_paide(const Mixture<Scalar>& mix, const Distance& distance) {
  return pairwise_epistemic(
      mix,
      [&](std::size_t i, std::size_t j) { return distance(mix.component(i), mix.component(j)); },
      distance.symmetric());
}

template <typename Scalar>
Scalar paide_total_entropy(const Mixture<Scalar>& mix, const Distance& distance) {
  return aleatoric_entropy(mix) + epistemic_paide(mix, distance);
}

/// Monte-Carlo total entropy -1/K sum ln f(y_k) with y_k drawn ancestrally
/// (component index ~ w, then y ~ p_index). Returns the mean and its standard
/// error.
template <typename Scalar>
McEstimate<Scalar> mc_total_entropy(const Mixture<Scalar>& mix, const McConfig& cfg) {
  if (cfg.sample_count < 1) throw std::invalid_argument("mc sample count must be positive");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<Scalar> uniform(0, 1);
  std::normal_distribution<Scalar> normal(0, 1);

  const std::size_t m = mix.size();
  std::vector<Scalar> cumulative(m);
  Scalar running = 0;
  for (std::size_t j = 0; j < m; ++j) cumulative[j] = (running += mix.weight(j));

  const detail::MixtureLogDensity<Scalar> evaluator(mix);
  VectorX<Scalar> z(mix.dim());
  VectorX<Scalar> y(mix.dim());
  // Welford accumulation of -ln f(y).
  Scalar mean = 0;
  Scalar m2 = 0;
  for (std::size_t k = 0; k < cfg.sample_count; ++k) {
    const Scalar u = uniform(rng) * running;
    std::size_t c = static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    c = std::min(c, m - 1);
    for (Eigen::Index t = 0; t < z.size(); ++t) z[t] = normal(rng);
    mix.component(c).transform_standard(z, y);
    const Scalar value = -evaluator(y);
    const Scalar delta = value - mean;
    mean += delta / static_cast<Scalar>(k + 1);
    m2 += delta * (value - mean);
  }
  McEstimate<Scalar> out;
  out.value = mean;
  const auto k = static_cast<Scalar>(cfg.sample_count);
  out.standard_error = cfg.sample_count > 1 ? std::sqrt(m2 / (k - 1) / k)
                                            : std::numeric_limits<Scalar>::infinity();
  return out;
}

/// MC epistemic estimate: MC total entropy minus the exact aleatoric term.
template <typename Scalar>
McEstimate<Scalar> epistemic_mc(const Mixture<Scalar>& mix, const McConfig& cfg) {
  auto total = mc_total_entropy(mix, cfg);
  total.value -= aleatoric_entropy(mix);
  return total;
}

}  // namespace paide
