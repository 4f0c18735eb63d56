#pragma once

// Dense kernels behind attention aggregation and interaction-matrix
// construction. `serial` holds straightforward reference loops; `omp` holds
// the OpenMP versions used by default. Both compute the same values up to
// floating-point reassociation.

#include <cstddef>
#include <span>

#include "bugsem/matrix.hpp"

namespace bugsem::kernels {

enum class Backend { serial, openmp };

/// How an input-token block (I, J) collapses to one AST-level cell.
enum class Pooling {
  block_mean,             // mean over every (i, j) in the block
  source_mean_target_sum  // mean over sources i of the mass sent into J
};

inline constexpr std::size_t kNoGroup = static_cast<std::size_t>(-1);

namespace serial {

Matrix pool(std::span<const float> m, std::size_t n,
            std::span<const std::size_t> group_of, std::size_t groups,
            Pooling pooling);
Matrix pool(std::span<const double> m, std::size_t n,
            std::span<const std::size_t> group_of, std::size_t groups,
            Pooling pooling);

/// Mean over heads of one layer stored as heads x n x n floats.
Matrix head_average(std::span<const float> layer, std::size_t heads, std::size_t n);

/// c += a * b
void add_product(const Matrix& a, const Matrix& b, Matrix& c);

/// Scales rows to sum 1; all-zero rows become uniform.
void row_normalize(Matrix& m);

}  // namespace serial

namespace omp {

Matrix pool(std::span<const float> m, std::size_t n,
            std::span<const std::size_t> group_of, std::size_t groups,
            Pooling pooling);
Matrix pool(std::span<const double> m, std::size_t n,
            std::span<const std::size_t> group_of, std::size_t groups,
            Pooling pooling);
Matrix head_average(std::span<const float> layer, std::size_t heads, std::size_t n);
void add_product(const Matrix& a, const Matrix& b, Matrix& c);
void row_normalize(Matrix& m);

}  // namespace omp

template <typename T>
Matrix pool(std::span<const T> m, std::size_t n, std::span<const std::size_t> group_of,
            std::size_t groups, Pooling pooling, Backend backend) {
  return backend == Backend::serial ? serial::pool(m, n, group_of, groups, pooling)
                                    : omp::pool(m, n, group_of, groups, pooling);
}

inline Matrix head_average(std::span<const float> layer, std::size_t heads,
                           std::size_t n, Backend backend) {
  return backend == Backend::serial ? serial::head_average(layer, heads, n)
                                    : omp::head_average(layer, heads, n);
}

inline void add_product(const Matrix& a, const Matrix& b, Matrix& c, Backend backend) {
  backend == Backend::serial ? serial::add_product(a, b, c) : omp::add_product(a, b, c);
}

inline void row_normalize(Matrix& m, Backend backend) {
  backend == Backend::serial ? serial::row_normalize(m) : omp::row_normalize(m);
}

}  // namespace bugsem::kernels
