#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace paide {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Output directory used when neither a flag nor the config names one.
inline constexpr const char* kOutDirEnv = "PAIDE_OUT_DIR";
inline constexpr const char* kDefaultOutDir = "paide_out";

/// Min-max rescaling onto [0, 1]. A constant vector maps to zeros.
Eigen::VectorXd min_max_normalize(const Eigen::VectorXd& v);

/// Entry point of the `paide` tool; `args` excludes the program name.
/// Subcommands: gen-data, train, estimate, active, bench, stats.
/// Relative output file names resolve inside the output directory, chosen as
/// --out-dir, else the config's out_dir, else $PAIDE_OUT_DIR, else paide_out.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace paide
