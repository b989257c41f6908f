#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace slim::cli {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumerical = 4;
inline constexpr int kExitInternal = 1;

// Default output root when --out is not given.
inline constexpr const char* kOutputRootEnv = "SLIM_OUTPUT_ROOT";

// Runs one command; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace slim::cli
