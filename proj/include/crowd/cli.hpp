#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "crowd/errors.hpp"
#include "crowd/projection.hpp"

namespace crowd {

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitSolver = 2,
  kExitIo = 3,
};

int exit_code_for(ErrorKind kind) noexcept;

/// Entry point of the `crowd` tool. `args` excludes the program name.
///   crowd run <scenario> [--dt S] [--T S] [--seed N] [--out DIR] [--tol X] [--cold-start] [--plain] [-v]
///   crowd field <scenario> [--out DIR] [--spacing M]
///   crowd project <system.json> [--tol X] [--rho X] [--max-iter N] [--cold-start]
///   crowd check <scenario>
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct SystemFile {
  ConstraintSystem system;
  Eigen::VectorXd target;
  UzawaOptions options;
};

/// Reads a projection problem: either explicit "constraints" rows or a disk
/// configuration ("positions", "radii", optional "walls", "cutoff_m") from
/// which the constraints are assembled. Throws ValidationError / IoError.
SystemFile parse_system(const std::string& text);

}  // namespace crowd
