#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace diffl2o {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

// Entry point of the command-line tool. args excludes the program name.
// Returns 0 on success, 1 on a config or usage error (one-line diagnostic on
// `err`), 2 on a runtime failure such as divergence or I/O.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace diffl2o
