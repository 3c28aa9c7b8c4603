#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace stts::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // run aborted, failing check, unreadable log
inline constexpr int kExitConfig = 2;   // bad flags, config, dataset path or output directory

/// Entry point behind the `stts` binary. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stts::cli
