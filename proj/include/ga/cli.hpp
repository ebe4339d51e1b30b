#pragma once

#include <string>
#include <vector>

namespace ga::cli {

inline constexpr const char* kToolVersion = "1.0.0";

// Exit codes: 0 success, 2 usage/configuration error, 1 runtime failure.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args); // args[0] is the program name

} // namespace ga::cli
