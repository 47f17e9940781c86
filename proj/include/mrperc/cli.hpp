#ifndef MRPERC_CLI_HPP
#define MRPERC_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace mrperc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitCap = 3;
inline constexpr int kExitNonConvergence = 4;

// Runs the command line `args` (program name excluded). Results go to `out`
// unless --out names a file; diagnostics go to `err`. Returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Inclusive grid "a:b:step" or list "x,y,z", parsed as exact decimals.
std::vector<double> parse_grid(const std::string& spec);

}  // namespace mrperc

#endif  // MRPERC_CLI_HPP
