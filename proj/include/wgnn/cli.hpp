#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wgnn {

// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wgnn
