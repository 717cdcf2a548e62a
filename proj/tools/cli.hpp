// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sfda::cli {

// Runs one experiment. Returns 0 on success, 2 on a bad config or bad flags,
// 1 on a runtime failure; messages go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sfda::cli
