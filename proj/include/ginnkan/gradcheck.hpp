// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ginnkan::ad {

/// One primitive checked at one nesting level: level 0 compares reverse-mode
/// gradients of f with central differences, level k does the same for the
/// k-th derivative of f built on the graph.
struct OracleResult {
  std::string name;
  int nesting = 0;
  std::size_t points = 0;
  double max_error = 0.0;  // |g - fd| / max(1, |fd|)
  double tolerance = 0.0;
  bool passed = false;
};

/// Every primitive at nesting 0, 1 and 2 on `points` random points each.
std::vector<OracleResult> gradient_oracles(std::uint64_t seed = 0, std::size_t points = 20);

}  // namespace ginnkan::ad
