#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "bugsem/kernels.hpp"
#include "fixtures.hpp"

using namespace bugsem;
using namespace bugsem::kernels;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  double d = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
  }
  return d;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.data()) v = u(rng);
  return m;
}

}  // namespace

TEST_CASE("serial and OpenMP kernels agree") {
  std::mt19937_64 rng(7);
  // Sizes straddle the OpenMP threshold of 64 rows.
  for (std::size_t n : {1u, 5u, 63u, 64u, 130u}) {
    CAPTURE(n);
    const auto att = fixtures::random_attention(rng, 1, 3, n);

    const Matrix hs = serial::head_average(att.layer(0), 3, n);
    const Matrix ho = omp::head_average(att.layer(0), 3, n);
    CHECK(max_abs_diff(hs, ho) < 1e-12);

    std::uniform_int_distribution<std::size_t> pick(0, n / 2 + 1);
    std::vector<std::size_t> group(n);
    std::size_t groups = 0;
    for (std::size_t i = 0; i < n; ++i) {
      group[i] = (i % 7 == 3) ? kNoGroup : std::min(pick(rng), n);
    }
    // compact group ids
    std::vector<std::size_t> remap(n + 1, kNoGroup);
    for (auto& g : group) {
      if (g == kNoGroup) continue;
      if (remap[g] == kNoGroup) remap[g] = groups++;
      g = remap[g];
    }
    for (Pooling p : {Pooling::block_mean, Pooling::source_mean_target_sum}) {
      const Matrix ps = serial::pool(att.head(0, 0), n, group, groups, p);
      const Matrix po = omp::pool(att.head(0, 0), n, group, groups, p);
      CHECK(max_abs_diff(ps, po) < 1e-12);
    }

    const Matrix a = random_matrix(rng, n, n);
    const Matrix b = random_matrix(rng, n, n);
    Matrix cs(n, n, 0.5);
    Matrix co(n, n, 0.5);
    serial::add_product(a, b, cs);
    omp::add_product(a, b, co);
    CHECK(max_abs_diff(cs, co) < 1e-9);

    Matrix rs = random_matrix(rng, n, n);
    for (std::size_t j = 0; j < n; ++j) rs(0, j) = 0.0;
    Matrix ro = rs;
    serial::row_normalize(rs);
    omp::row_normalize(ro);
    CHECK(max_abs_diff(rs, ro) < 1e-12);
  }
}

TEST_CASE("add_product by hand") {
  Matrix a(2, 2);
  a(0, 0) = 1;
  a(0, 1) = 2;
  a(1, 0) = 3;
  a(1, 1) = 4;
  Matrix c(2, 2, 1.0);
  for (Backend be : {Backend::serial, Backend::openmp}) {
    Matrix out = c;
    add_product(a, a, out, be);
    CHECK(out(0, 0) == 8);
    CHECK(out(0, 1) == 11);
    CHECK(out(1, 0) == 16);
    CHECK(out(1, 1) == 23);
  }
}

TEST_CASE("row_normalize turns zero rows uniform") {
  Matrix m(2, 4);
  m(1, 0) = 1;
  m(1, 3) = 3;
  for (Backend be : {Backend::serial, Backend::openmp}) {
    Matrix out = m;
    row_normalize(out, be);
    for (std::size_t j = 0; j < 4; ++j) CHECK(out(0, j) == doctest::Approx(0.25));
    CHECK(out(1, 0) == doctest::Approx(0.25));
    CHECK(out(1, 3) == doctest::Approx(0.75));
  }
}

TEST_CASE("head_average of one head is the head") {
  std::mt19937_64 rng(3);
  const auto att = fixtures::random_attention(rng, 1, 1, 6);
  const Matrix m = head_average(att.layer(0), 1, 6, Backend::openmp);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(m(i, j) == doctest::Approx(att.at(0, 0, i, j)));
    }
  }
}

TEST_CASE("pooling skips tokens without a group") {
  const std::vector<double> m = {1, 2, 3, 4};
  const std::vector<std::size_t> group = {0, kNoGroup};
  const Matrix p = serial::pool(std::span<const double>(m), 2, group, 1,
                                Pooling::block_mean);
  CHECK(p.rows() == 1);
  CHECK(p(0, 0) == 1);
}
