#pragma once

#include <ostream>

namespace myoreg {

// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // unreadable or invalid input file, training failure
inline constexpr int kExitUsage = 2;    // unknown subcommand or flag, invalid argument value

// Subcommands: synth, train, register, eval, spectra. Progress goes to `out`;
// errors go to `err` as one JSON object per line.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace myoreg
