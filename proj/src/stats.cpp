#include "egfs/stats.hpp"

#include <algorithm>
#include <stdexcept>

namespace egfs {

double median_interpolated(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty range");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double median_lower(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty range");
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

}  // namespace egfs
