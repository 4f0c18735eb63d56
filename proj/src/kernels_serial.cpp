#include "bugsem/errors.hpp"
#include "bugsem/kernels.hpp"

namespace bugsem::kernels::serial {

namespace {

template <typename T>
Matrix pool_impl(std::span<const T> m, std::size_t n,
                 std::span<const std::size_t> group_of, std::size_t groups,
                 Pooling pooling) {
  if (m.size() != n * n || group_of.size() != n) {
    throw ArgumentError("pool: matrix/grouping size mismatch");
  }
  Matrix sum(groups, groups);
  std::vector<double> count(groups, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (group_of[i] != kNoGroup) count[group_of[i]] += 1.0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t gi = group_of[i];
    if (gi == kNoGroup) continue;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t gj = group_of[j];
      if (gj == kNoGroup) continue;
      sum(gi, gj) += static_cast<double>(m[i * n + j]);
    }
  }
  for (std::size_t a = 0; a < groups; ++a) {
    for (std::size_t b = 0; b < groups; ++b) {
      const double denom =
          pooling == Pooling::block_mean ? count[a] * count[b] : count[a];
      sum(a, b) = denom > 0.0 ? sum(a, b) / denom : 0.0;
    }
  }
  return sum;
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
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        out(i, j) += static_cast<double>(layer[(h * n + i) * n + j]);
      }
    }
  }
  for (double& v : out.data()) v /= static_cast<double>(heads);
  return out;
}

void add_product(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols()) {
    throw ArgumentError("add_product: shape mismatch");
  }
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) += s;
    }
  }
}

void row_normalize(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (double v : m.row(i)) s += v;
    if (s > 0.0) {
      for (double& v : m.row(i)) v /= s;
    } else {
      for (double& v : m.row(i)) v = 1.0 / static_cast<double>(m.cols());
    }
  }
}

}  // namespace bugsem::kernels::serial
