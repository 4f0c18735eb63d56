#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "bugsem/errors.hpp"
#include "bugsem/interaction.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bugsem;
using Idx = std::vector<std::size_t>;

namespace {

TokenAlignment identity_alignment(std::size_t n) {
  TokenAlignment a;
  a.ast_size = n;
  for (std::size_t i = 0; i < n; ++i) a.map.push_back(i);
  return a;
}

Matrix uniform(std::size_t m) { return Matrix(m, m, 1.0 / static_cast<double>(m)); }

}  // namespace

TEST_CASE("identity layers give an identity interaction matrix") {
  AttentionTensor att(3, 2, 4);
  for (std::size_t l = 0; l < 3; ++l) {
    for (std::size_t h = 0; h < 2; ++h) {
      for (std::size_t i = 0; i < 4; ++i) att.at(l, h, i, i) = 1.0f;
    }
  }
  const auto im = build_interaction_matrix(att, identity_alignment(4));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(im.probs(i, j) == (i == j ? 1.0 : 0.0));
  }
}

TEST_CASE("uniform layers give a uniform interaction matrix") {
  const auto im = build_interaction_matrix(fixtures::uniform_attention(4, 3, 6),
                                           identity_alignment(6));
  for (double v : im.probs.data()) CHECK(v == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("two-layer product by hand") {
  Matrix a1(2, 2);
  a1(0, 0) = a1(1, 1) = 1;
  Matrix a2(2, 2);
  a2(0, 1) = a2(1, 0) = 1;
  const std::vector<Matrix> layers{a1, a2};
  const auto im = build_interaction_matrix(layers, identity_alignment(2));
  CHECK(im.probs(0, 0) == 0.0);
  CHECK(im.probs(0, 1) == 1.0);
  CHECK(im.probs(1, 0) == 1.0);
  CHECK(im.probs(1, 1) == 0.0);
}

TEST_CASE("one layer is too few") {
  CHECK_THROWS_AS(build_interaction_matrix(fixtures::uniform_attention(1, 2, 3),
                                           identity_alignment(3)),
                  TooFewLayers);
}

TEST_CASE("rows are stochastic on random input and both backends agree") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const auto att = fixtures::random_attention(rng, 3, 2, 9);
    TokenAlignment align;
    align.ast_size = 6;
    align.map = {std::nullopt, 0, 0, 1, 2, 3, 3, 5, std::nullopt};
    InteractionOptions so;
    so.backend = kernels::Backend::serial;
    const auto a = build_interaction_matrix(att, align, so);
    const auto b = build_interaction_matrix(att, align);
    CHECK(a.tokens == Idx{0, 1, 2, 3, 5});
    for (std::size_t i = 0; i < a.size(); ++i) {
      double sum = 0;
      for (std::size_t j = 0; j < a.size(); ++j) {
        sum += a.probs(i, j);
        CHECK(a.probs(i, j) >= 0.0);
        CHECK(std::abs(a.probs(i, j) - b.probs(i, j)) < 1e-12);
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
    CHECK(a.position(5) == 4);
    CHECK_FALSE(a.position(4).has_value());
  }
}

TEST_CASE("alignment_im on a peaked matrix") {
  InteractionMatrix im;
  im.tokens = {0, 1, 2, 3, 4};
  im.probs = Matrix(5, 5, 0.01);
  im.probs(0, 4) = 0.9;
  im.probs(1, 3) = 0.8;
  CHECK(alignment_im(im, Idx{0, 1, 3, 4}) == 1.0);
  CHECK(alignment_im(im, Idx{0, 4}) == 1.0);
  im.tokens = {0, 1, 2, 3, 7};
  CHECK_FALSE(alignment_im(im, Idx{5, 6}).has_value());
  CHECK(alignment_im(im, Idx{0, 7}) == 1.0);
}

TEST_CASE("joint probability examples") {
  Matrix m(3, 3, 0.0);
  m(0, 1) = 0.5;
  m(1, 2) = 0.25;
  CHECK(path_joint_probability(m, Idx{0, 1}) == 0.5);
  CHECK(path_joint_probability(m, Idx{0, 1, 2}) == 0.125);
  CHECK(path_joint_probability(m, Idx{0, 2}) == 0.0);
  CHECK(path_joint_probability(uniform(4), Idx{0, 1, 2, 3, 0}) ==
        doctest::Approx(std::pow(0.25, 4)).epsilon(1e-12));
  CHECK_THROWS_AS(path_joint_probability(m, Idx{1}), PathTooShort);
}

TEST_CASE("path positions drop uncovered tokens and repeats") {
  InteractionMatrix im;
  im.tokens = {2, 4, 6};
  im.probs = uniform(3);
  CHECK(path_positions(im, Idx{1, 2, 2, 3, 4, 6, 6}) == Idx{0, 1, 2});
  CHECK(path_positions(im, Idx{2, 4, 2}) == Idx{0, 1, 0});
}

TEST_CASE("longest chain examples") {
  const Idx path{0, 1, 2, 3, 4};
  Matrix m(5, 5, 0.0);
  m(0, 1) = 0.9;
  m(2, 3) = 0.8;
  const auto r = longest_chain(m, path, 2);
  CHECK(r.chain_length == 1);
  CHECK(r.edge_coverage == 0.5);
  const auto all = longest_chain(m, path, 25);
  CHECK(all.chain_length == 4);
  CHECK(all.edge_coverage == 1.0);
  Matrix far(5, 5, 0.0);
  far(4, 0) = 1.0;
  const auto none = longest_chain(far, path, 1);
  CHECK(none.chain_length == 0);
  CHECK(none.edge_coverage == 0.0);
  CHECK_THROWS_AS(longest_chain(m, Idx{0}, 2), PathTooShort);
}

TEST_CASE("induced components examples") {
  const Idx path{0, 1, 2, 3, 4};
  Matrix m(5, 5, 0.0);
  m(0, 1) = 0.9;
  m(3, 4) = 0.8;
  CHECK(induced_components(m, path, 2) == 3);
  Matrix chain(5, 5, 0.0);
  for (std::size_t i = 0; i < 4; ++i) chain(i, i + 1) = 1.0;
  CHECK(induced_components(chain, path, 4) == 1);
  Matrix off(6, 6, 0.0);
  off(5, 5) = 1.0;
  CHECK(induced_components(off, path, 1) == 5);
}

TEST_CASE("default t") {
  CHECK(default_top_t(10, 3) == 10);
  CHECK(default_top_t(4, 5) == 10);
}

TEST_CASE("path-length buckets") {
  auto rec = [](std::size_t len, double score) {
    AlignmentRecord r;
    r.metric = Metric::joint_prob;
    r.path_length = len;
    r.score = score;
    return r;
  };
  const std::vector<AlignmentRecord> same{rec(2, 0.1), rec(2, 0.3)};
  CHECK(bucket_by_path_length(same).size() == 1);
  const std::vector<AlignmentRecord> mixed{rec(2, 0.1), rec(3, 0.05), rec(2, 0.3)};
  const auto b = bucket_by_path_length(mixed);
  REQUIRE(b.size() == 2);
  CHECK(b[0].path_length == 2);
  CHECK(b[0].stats.count == 2);
  CHECK(b[0].stats.mean == doctest::Approx(0.2));
  CHECK(b[1].stats.count == 1);
  CHECK(b[1].stats.median == 0.05);
}

TEST_CASE("chain and components match the brute-force oracles") {
  std::mt19937_64 rng(424242);
  std::uniform_int_distribution<std::size_t> size(2, 8);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = size(rng);
    const Matrix im = fixtures::random_tied_matrix(rng, m);
    std::uniform_int_distribution<std::size_t> node(0, m - 1);
    std::uniform_int_distribution<std::size_t> len(2, 6);
    Idx path;
    const std::size_t n = len(rng);
    while (path.size() < n) {
      const std::size_t v = node(rng);
      if (path.empty() || path.back() != v) path.push_back(v);
    }
    std::uniform_int_distribution<std::size_t> td(1, m * m);
    const std::size_t t = td(rng);
    const auto got = longest_chain(im, path, t);
    const auto want = oracle::longest_chain(im, path, t);
    CHECK(got.chain_length == want.length);
    CHECK(got.edge_coverage == want.coverage);
    CHECK(induced_components(im, path, t) == oracle::components(im, path, t));
    CHECK(got.chain_length <= path.size() - 1);
    CHECK(got.edge_coverage >=
          static_cast<double>(got.chain_length) / static_cast<double>(path.size() - 1));
    if (t < m * m) {
      CHECK(induced_components(im, path, t + 1) <= induced_components(im, path, t));
    }
  }
}
