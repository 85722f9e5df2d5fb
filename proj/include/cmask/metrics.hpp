#pragma once

#include <vector>

namespace cmask {

// Values beyond this are reported as the cap; covers exact reconstructions
// (ratio -> inf) and silent references (ratio -> 0).
inline constexpr double kMetricCapDb = 300.0;

// 10 log10(||ref||^2 / ||ref - est||^2), capped to [-300, 300] dB.
double sdr_db(const std::vector<double>& ref, const std::vector<double>& est);

// Scale-invariant variant: the estimate is split into its projection onto the
// reference and an orthogonal error term before the ratio is taken.
double si_sdr_db(const std::vector<double>& ref, const std::vector<double>& est);

}  // namespace cmask
