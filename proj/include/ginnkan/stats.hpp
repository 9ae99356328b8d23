// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace ginnkan::stats {

/// Median; NaN counts as +inf. Empty input gives NaN.
double median(std::vector<double> v);

/// 1-based ranks, lower value is better, ties share the average of their
/// positions. NaN ranks with +inf (worst).
std::vector<double> average_ranks(std::span<const double> values);

}  // namespace ginnkan::stats
