#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace urbanvae::cli {

/// Runs one subcommand. `args` excludes the program name. Diagnostics go to
/// `err`; data is only ever written to files. Returns 0 on success, 1 for
/// usage and validation errors, 2 for I/O and corrupt-artifact errors.
int run(const std::vector<std::string>& args, std::ostream& err);

}  // namespace urbanvae::cli
