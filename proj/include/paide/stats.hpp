#pragma once

#include "paide/active.hpp"

#include <string>
#include <vector>

namespace paide {

enum class Alternative { TwoSided, Less, Greater };

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  /// Two-sided unless another alternative was requested.
  double p = 1.0;
};

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double incomplete_beta(double a, double b, double x);
/// P(T > t) for Student's t with `df` degrees of freedom.
double student_t_sf(double t, double df);

/// Unequal-variance two-sample t-test. Throws std::invalid_argument if either
/// sample has fewer than 2 values or both have zero variance.
WelchResult welch_t(const std::vector<double>& a, const std::vector<double>& b,
                    Alternative alternative = Alternative::TwoSided);

struct HolmResult {
  std::vector<double> adjusted;
  std::vector<bool> reject;
};

/// Step-down correction; outputs are aligned with the input order.
HolmResult holm_bonferroni(const std::vector<double>& p_values, double alpha);

/// Which comparisons share one Holm family.
enum class Family { Batch, All };

struct ComparisonRow {
  std::string env;
  std::size_t batch = 0;
  std::string comparison;  // "a_vs_b": t > 0 when a has the larger mean RMSE
  WelchResult result;
  double p_adjusted = 1.0;
  bool significant = false;
  /// Too few values or zero variance; statistics are NaN.
  bool degenerate = false;
};

struct CompareOptions {
  std::string env = "env";
  double alpha = 0.05;
  Family family = Family::Batch;
  Alternative alternative = Alternative::TwoSided;
};

/// Welch tests on per-seed RMSE for every strategy pair at every batch,
/// strategies taken in order of first appearance. Failed rows are skipped.
std::vector<ComparisonRow> compare_strategies(const std::vector<BatchRecord>& rows, const CompareOptions& options);

/// `env,batch,comparison,t,df,p,p_adjusted,significant`.
void write_comparisons_csv(const std::vector<ComparisonRow>& rows, const std::filesystem::path& path);

}  // namespace paide
