#ifndef STREAMGDA_CLI_HPP
#define STREAMGDA_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace streamgda {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

// Entry point of the `streamgda` tool; args excludes the program name.
// Subcommands: run, ablate, oracle, synth, ckpt.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace streamgda

#endif  // STREAMGDA_CLI_HPP
