#pragma once

#include "paide/pne.hpp"

#include <algorithm>
#include <cmath>

namespace fdcheck {

struct Toy {
  paide::PneConfig cfg;
  paide::PneMember member;
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
};

/// Small random net with perturbed biases so no unit sits exactly on a kink,
/// and raw log-variances kept inside the clamp.
inline Toy random_toy(std::uint64_t seed) {
  paide::Rng rng(seed);
  std::uniform_int_distribution<int> width(2, 6);
  std::uniform_int_distribution<int> dim(1, 3);
  Toy t;
  t.cfg.input_dim = dim(rng);
  t.cfg.output_dim = dim(rng);
  t.cfg.hidden_layers = {width(rng), width(rng)};
  t.cfg.member_count = 1;
  t.member = paide::init_member(t.cfg, rng);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (auto& b : t.member.biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.3 * n01(rng);
  }
  const int batch = 7;
  t.x.resize(t.cfg.input_dim, batch);
  t.y.resize(t.cfg.output_dim, batch);
  for (Eigen::Index i = 0; i < t.x.size(); ++i) t.x.data()[i] = n01(rng);
  for (Eigen::Index i = 0; i < t.y.size(); ++i) t.y.data()[i] = n01(rng);
  return t;
}

/// Largest relative error between the analytic gradient and central
/// differences with step h; the denominator is floored at `floor`.
inline double max_relative_error(const Toy& t, double h = 1e-5, double floor = 1e-6) {
  paide::Gradients grad;
  paide::nll_and_gradients(t.member, t.x, t.y, t.cfg, &grad);
  const Eigen::VectorXd analytic = paide::flatten(grad);
  const Eigen::VectorXd base = paide::flatten(t.member);
  paide::PneMember probe = t.member;
  double worst = 0.0;
  for (Eigen::Index k = 0; k < base.size(); ++k) {
    Eigen::VectorXd p = base;
    p[k] = base[k] + h;
    paide::unflatten(probe, p);
    const double up = paide::nll_and_gradients(probe, t.x, t.y, t.cfg, nullptr);
    p[k] = base[k] - h;
    paide::unflatten(probe, p);
    const double down = paide::nll_and_gradients(probe, t.x, t.y, t.cfg, nullptr);
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
  }
  return worst;
}

}  // namespace fdcheck
