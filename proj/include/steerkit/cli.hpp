#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace steerkit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;

/// Runs one command line (args excludes the program name). Returns the exit
/// code: 0 on success, 2 on a validation error, 1 on a runtime error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace steerkit::cli
