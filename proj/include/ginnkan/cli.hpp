// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ginnkan::cli {

inline constexpr int kOk = 0;
inline constexpr int kRunFailure = 1;
inline constexpr int kUsage = 2;

/// Entry point of the ginnkan tool. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ginnkan::cli
