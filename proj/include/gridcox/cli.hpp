#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "gridcox/checks.hpp"

namespace gridcox {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitValidation = 2,
  kExitConvergence = 3,
  kExitCheckFailed = 4,
};

/// Entry point of the command-line tool; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Prints the variance table; kExitCheckFailed when a row exceeds the tolerance.
int cmd_check_variance(std::ostream& out, double tolerance, const VarianceFormula& closed_form = marginal_variance);

std::string version_string();

}  // namespace gridcox
