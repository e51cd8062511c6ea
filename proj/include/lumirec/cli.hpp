#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lumirec::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kArtifactFormatVersion = 1;

// Exit codes: 0 success, 1 validation error, 2 internal error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace lumirec::cli
