#include <omp.h>

#include "bugsem/errors.hpp"
#include "bugsem/kernels.hpp"

namespace bugsem::kernels::omp {

namespace {

// Below this size the thread fork costs more than the loop.
constexpr std::size_t kParallelMin = 64;

template <typename T>
Matrix pool_impl(std::span<const T> m, std::size_t n,
                 std::span<const std::size_t> group_of, std::size_t groups,
                 Pooling pooling) {
  if (m.size() != n * n || group_of.size() != n) {
    throw ArgumentError("pool: matrix/grouping size mismatch");
  }
  std::vector<std::vector<std::size_t>> members(groups);
  for (std::size_t i = 0; i < n; ++i) {
    if (group_of[i] != kNoGroup) members[group_of[i]].push_back(i);
  }
  Matrix out(groups, groups);
  const auto g = static_cast<std::ptrdiff_t>(groups);
#pragma omp parallel for schedule(dynamic, 8) if (n >= kParallelMin)
  for (std::ptrdiff_t a = 0; a < g; ++a) {
    const auto& rows = members[static_cast<std::size_t>(a)];
    auto acc = out.row(static_cast<std::size_t>(a));
    for (std::size_t i : rows) {
      const T* src = m.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t gj = group_of[j];
        if (gj != kNoGroup) acc[gj] += static_cast<double>(src[j]);
      }
    }
    const double ca = static_cast<double>(rows.size());
    for (std::size_t b = 0; b < groups; ++b) {
      const double denom = pooling == Pooling::block_mean
                               ? ca * static_cast<double>(members[b].size())
                               : ca;
      acc[b] = denom > 0.0 ? acc[b] / denom : 0.0;
    }
  }
  return out;
}

}  // namespace

Matrix pool(std::span<const float> m, std::size_t n,
            std::span<const std::size_t> group_of, std::size_t groups,
            Pooling pooling) {
  return pool_impl(m, n, group_of, groups, pooling);
}

Matrix pool(std::span<const double> m, std::size_t n,
            std::span<const std::size_t> group_of, std::size_t groups,
            Pooling pooling) {
  return pool_impl(m, n, group_of, groups, pooling);
}

Matrix head_average(std::span<const float> layer, std::size_t heads, std::size_t n) {
  if (layer.size() != heads * n * n || heads == 0) {
    throw ArgumentError("head_average: layer size mismatch");
  }
  Matrix out(n, n);
  const double inv = 1.0 / static_cast<double>(heads);
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n >= kParallelMin)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    auto dst = out.row(static_cast<std::size_t>(i));
    for (std::size_t h = 0; h < heads; ++h) {
      const float* src = layer.data() + (h * n + static_cast<std::size_t>(i)) * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += static_cast<double>(src[j]);
    }
    for (double& v : dst) v *= inv;
  }
  return out;
}

void add_product(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols()) {
    throw ArgumentError("add_product: shape mismatch");
  }
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
  const std::size_t inner = a.cols();
#pragma omp parallel for schedule(static) if (a.rows() >= kParallelMin)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    auto dst = c.row(static_cast<std::size_t>(i));
    auto lhs = a.row(static_cast<std::size_t>(i));
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = lhs[k];
      if (aik == 0.0) continue;
      auto rhs = b.row(k);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += aik * rhs[j];
    }
  }
}

void row_normalize(Matrix& m) {
  const auto rows = static_cast<std::ptrdiff_t>(m.rows());
  const double uniform = m.cols() ? 1.0 / static_cast<double>(m.cols()) : 0.0;
#pragma omp parallel for schedule(static) if (m.rows() >= kParallelMin)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    auto r = m.row(static_cast<std::size_t>(i));
    double s = 0.0;
    for (double v : r) s += v;
    if (s > 0.0) {
      for (double& v : r) v /= s;
    } else {
      for (double& v : r) v = uniform;
    }
  }
}

}  // namespace bugsem::kernels::omp
