#ifndef RLSTM_TOOLS_CLI_HPP
#define RLSTM_TOOLS_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace rlstm::cli {

enum ExitCode { kSuccess = 0, kUsage = 1, kDataError = 2, kNumerical = 3 };

/// Runs the command line `args` (without the program name). Reports go to
/// `out`, diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace rlstm::cli

#endif // RLSTM_TOOLS_CLI_HPP
