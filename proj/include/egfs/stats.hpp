#pragma once

#include <vector>

namespace egfs {

/// Interpolated median: mean of the two middle order statistics for even n.
double median_interpolated(std::vector<double> values);

/// Lower order statistic median: sorted[(n-1)/2].
double median_lower(std::vector<double> values);

}  // namespace egfs
