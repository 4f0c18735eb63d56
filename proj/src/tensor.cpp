#include "bugsem/tensor.hpp"

#include <cmath>

namespace bugsem {

std::size_t count_nonstochastic_rows(const AttentionTensor& t, double tolerance) {
  std::size_t off = 0;
  const std::size_t rows = t.layers * t.heads * t.n;
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    const float* row = t.data.data() + r * t.n;
    for (std::size_t j = 0; j < t.n; ++j) s += static_cast<double>(row[j]);
    if (std::abs(s - 1.0) > tolerance) ++off;
  }
  return off;
}

}  // namespace bugsem
