#include "paide/stats.hpp"

#include "paide/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace paide {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Continued fraction for I_x(a, b), modified Lentz; converges for x < (a+1)/(a+b+2).
double beta_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) return h;
  }
  throw std::runtime_error("incomplete beta: continued fraction did not converge");
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // unbiased
  double n = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  m.n = static_cast<double>(v.size());
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / m.n;
  for (const double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= m.n - 1.0;
  return m;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("incomplete beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("incomplete beta: x must lie in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(log_front) * beta_fraction(a, b, x) / a;
  return 1.0 - std::exp(log_front) * beta_fraction(b, a, 1.0 - x) / b;
}

double student_t_sf(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("student t: df must be positive");
  if (std::isnan(t)) return kNaN;
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t >= 0.0 ? tail : 1.0 - tail;
}

WelchResult welch_t(const std::vector<double>& a, const std::vector<double>& b, Alternative alternative) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("welch: each sample needs at least 2 values");
  for (const auto* v : {&a, &b}) {
    for (const double x : *v) {
      if (!std::isfinite(x)) throw std::invalid_argument("welch: non-finite sample value");
    }
  }
  const Moments ma = moments(a);
  const Moments mb = moments(b);
  const double va = ma.var / ma.n;
  const double vb = mb.var / mb.n;
  if (!(va + vb > 0.0)) throw std::invalid_argument("welch: both samples have zero variance");
  WelchResult r;
  r.t = (ma.mean - mb.mean) / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) / (va * va / (ma.n - 1.0) + vb * vb / (mb.n - 1.0));
  switch (alternative) {
    case Alternative::TwoSided:
      r.p = std::min(1.0, incomplete_beta(0.5 * r.df, 0.5, r.df / (r.df + r.t * r.t)));
      break;
    case Alternative::Greater: r.p = student_t_sf(r.t, r.df); break;
    case Alternative::Less: r.p = student_t_sf(-r.t, r.df); break;
  }
  return r;
}

HolmResult holm_bonferroni(const std::vector<double>& p_values, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("holm: alpha must lie in (0, 1)");
  for (const double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("holm: p-values must lie in [0, 1]");
  }
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p_values[i] < p_values[j]; });
  HolmResult r{std::vector<double>(m), std::vector<bool>(m, false)};
  double running = 0.0;
  bool rejecting = true;
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = order[k];
    running = std::max(running, std::min(1.0, static_cast<double>(m - k) * p_values[i]));
    r.adjusted[i] = running;
    rejecting = rejecting && running < alpha;
    r.reject[i] = rejecting;
  }
  return r;
}

std::vector<ComparisonRow> compare_strategies(const std::vector<BatchRecord>& rows, const CompareOptions& options) {
  std::vector<std::string> strategies;
  std::map<std::size_t, std::map<std::string, std::vector<double>>> by_batch;
  for (const auto& r : rows) {
    if (std::find(strategies.begin(), strategies.end(), r.strategy) == strategies.end()) {
      strategies.push_back(r.strategy);
    }
    if (!r.failed && std::isfinite(r.rmse)) by_batch[r.batch][r.strategy].push_back(r.rmse);
  }

  std::vector<ComparisonRow> out;
  for (const auto& [batch, samples] : by_batch) {
    for (std::size_t i = 0; i < strategies.size(); ++i) {
      for (std::size_t j = i + 1; j < strategies.size(); ++j) {
        ComparisonRow row;
        row.env = options.env;
        row.batch = batch;
        row.comparison = strategies[i] + "_vs_" + strategies[j];
        const auto a = samples.find(strategies[i]);
        const auto b = samples.find(strategies[j]);
        try {
          if (a == samples.end() || b == samples.end()) throw std::invalid_argument("missing sample");
          row.result = welch_t(a->second, b->second, options.alternative);
        } catch (const std::invalid_argument&) {
          row.degenerate = true;
          row.result = {kNaN, kNaN, kNaN};
          row.p_adjusted = kNaN;
        }
        out.push_back(row);
      }
    }
  }

  // Holm within each family; degenerate rows take no part.
  std::map<std::size_t, std::vector<std::size_t>> families;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (out[k].degenerate) continue;
    families[options.family == Family::Batch ? out[k].batch : 0].push_back(k);
  }
  for (const auto& [key, members] : families) {
    std::vector<double> p;
    for (const auto k : members) p.push_back(out[k].result.p);
    const HolmResult holm = holm_bonferroni(p, options.alpha);
    for (std::size_t m = 0; m < members.size(); ++m) {
      out[members[m]].p_adjusted = holm.adjusted[m];
      out[members[m]].significant = holm.reject[m];
    }
  }
  return out;
}

void write_comparisons_csv(const std::vector<ComparisonRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "env,batch,comparison,t,df,p,p_adjusted,significant\n";
  for (const auto& r : rows) {
    out << r.env << ',' << r.batch << ',' << r.comparison << ',' << format_real(r.result.t) << ','
        << format_real(r.result.df) << ',' << format_real(r.result.p) << ',' << format_real(r.p_adjusted) << ','
        << (r.significant ? "true" : "false") << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace paide
