#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace otkd::cli {

// Exit codes: 0 success, 1 usage/parse/config error, 2 degenerate input or non-convergence,
// 3 training diverged (partial results are still written).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace otkd::cli
