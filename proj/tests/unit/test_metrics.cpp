#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <vector>

#include "bugsem/errors.hpp"
#include "bugsem/metrics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bugsem;
using Idx = std::vector<std::size_t>;

namespace {

Matrix matrix(std::size_t n, std::initializer_list<double> values) {
  Matrix m(n, n);
  std::size_t i = 0;
  for (double v : values) m.data()[i++] = v;
  return m;
}

AstScores scores(std::vector<double> v) {
  AstScores s;
  s.covered.assign(v.size(), 1);
  s.values = std::move(v);
  return s;
}

}  // namespace

TEST_CASE("iou examples") {
  CHECK(iou(Idx{1, 2, 3}, Idx{1, 2, 3}) == 1.0);
  CHECK(iou(Idx{1, 2}, Idx{3, 4}) == 0.0);
  CHECK(iou(Idx{1, 2, 3}, Idx{3, 4, 5}) == doctest::Approx(0.2));
  CHECK(iou(Idx{3, 1, 1}, Idx{1}) == doctest::Approx(0.5));
  CHECK(iou(Idx{}, Idx{4}) == 0.0);
  CHECK_THROWS_AS(iou(Idx{}, Idx{}), BothEmpty);
}

TEST_CASE("top_k_tokens examples") {
  CHECK(top_k_tokens(std::vector<double>{0.1, 0.9, 0.5}, 2) == Idx{1, 2});
  CHECK(top_k_tokens(std::vector<double>{0.3, 0.3, 0.3}, 2) == Idx{0, 1});
  CHECK(top_k_tokens(std::vector<double>{0.3, 0.1, 0.2}, 3) == Idx{0, 1, 2});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK(top_k_tokens(std::vector<double>{nan, -5.0}, 1) == Idx{1});
  CHECK_THROWS_AS(top_k_tokens(std::vector<double>{0.1}, 2), KOutOfRange);
  CHECK_THROWS_AS(top_k_tokens(std::vector<double>{0.1}, 0), KOutOfRange);
}

TEST_CASE("top_k_tokens ranks only covered tokens") {
  AstScores s = scores({0.9, 0.1, 0.8, 0.2});
  s.covered[0] = 0;
  CHECK(top_k_tokens(s, 2) == Idx{2, 3});
}

TEST_CASE("top_k_incident_tokens examples") {
  CHECK(top_k_incident_tokens(matrix(2, {0, 1, 0, 0}), 2) == Idx{0, 1});
  Matrix diag(3, 3);
  diag(2, 2) = 1;
  CHECK(top_k_incident_tokens(diag, 1) == Idx{2});
  Matrix two(5, 5);
  two(0, 1) = 0.9;
  two(3, 4) = 0.8;
  CHECK(top_k_incident_tokens(two, 3) == Idx{0, 1, 3});
  CHECK_THROWS_AS(top_k_incident_tokens(two, 6), KOutOfRange);
}

TEST_CASE("ranked_cells orders by value then position") {
  const Matrix m = matrix(2, {0.5, 0.9, 0.9, 0.1});
  const auto cells = ranked_cells(m, 3);
  REQUIRE(cells.size() == 3);
  CHECK(cells[0].row == 0);
  CHECK(cells[0].col == 1);
  CHECK(cells[1].row == 1);
  CHECK(cells[1].col == 0);
  CHECK(cells[2].value == 0.5);
  CHECK(ranked_cells(m, 99).size() == 4);
}

TEST_CASE("alignment_interpret examples") {
  std::map<std::string, AstScores> one{{"saliency", scores({0.9, 0.1, 0.8, 0.2})}};
  auto r = alignment_interpret(one, Idx{0, 3});
  REQUIRE(r);
  CHECK(r->k == 2);
  CHECK(r->mean == doctest::Approx(1.0 / 3.0));
  CHECK(r->per_tool.size() == 1);
  CHECK(r->per_tool[0].second == r->mean);

  std::map<std::string, AstScores> two{{"a", scores({1, 1, 0, 0})},
                                       {"b", scores({0, 0, 1, 1})}};
  r = alignment_interpret(two, Idx{0, 1});
  REQUIRE(r);
  CHECK(r->per_tool[0].second == 1.0);
  CHECK(r->per_tool[1].second == 0.0);
  CHECK(r->mean == 0.5);
}

TEST_CASE("alignment_interpret drops uncovered bug tokens") {
  AstScores s = scores({0.9, 0.1, 0.8, 0.2});
  s.covered[3] = 0;
  std::map<std::string, AstScores> tools{{"t", s}};
  const auto r = alignment_interpret(tools, Idx{0, 3});
  REQUIRE(r);
  CHECK(r->k == 1);
  CHECK(r->mean == 1.0);
  CHECK_FALSE(alignment_interpret(tools, Idx{3}).has_value());
  CHECK(alignment_interpret(tools, Idx{0, 2}, 3)->k == 3);
  CHECK(alignment_interpret(tools, Idx{0, 2}, 10)->k == 3);
}

TEST_CASE("pair_proportion examples") {
  AstMatrix m;
  m.tokens = {0, 1, 2};
  m.values = matrix(3, {0.9, 0.0, 0.0,  //
                        0.0, 0.0, 0.8,  //
                        0.7, 0.0, 0.0});
  CHECK(pair_proportion(m, Idx{0, 2}, 0.5) == doctest::Approx(2.0 / 3.0));
  CHECK(pair_proportion(m, Idx{0, 1, 2}, 0.5) == 1.0);
  CHECK(pair_proportion(m, Idx{1}, 0.5) == 0.0);
  CHECK(pair_proportion(m, Idx{0}, 0.5) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(pair_proportion(m, Idx{0}, 0.95), NoHighAttention);
}

TEST_CASE("alignment_attention per head") {
  // Four AST tokens, identity tokenization; head (0,0) peaks on (0,3) and
  // (1,2), head (0,1) on (0,0).
  AttentionTensor att(1, 2, 4);
  att.at(0, 0, 0, 3) = 0.9f;
  att.at(0, 0, 1, 2) = 0.8f;
  att.at(0, 1, 0, 0) = 1.0f;
  TokenAlignment align;
  align.ast_size = 4;
  align.map = {0, 1, 2, 3};
  BugFeatureSet b;
  b.tokens = {0, 1, 2, 3};
  for (auto backend : {kernels::Backend::serial, kernels::Backend::openmp}) {
    AttentionOptions opt;
    opt.backend = backend;
    const auto recs = alignment_attention(att, align, b, "ex", opt);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].score == 1.0);
    CHECK(recs[0].layer == 0);
    CHECK(recs[0].head == 0);
    CHECK(recs[0].k == 4);
    CHECK(recs[0].metric == Metric::attention);
    // head 1: top cell (0,0) then ties in row-major order give 1,2,3.
    CHECK(recs[1].score == 1.0);
  }
  b.tokens = {1, 2};
  const auto recs = alignment_attention(att, align, b, "ex");
  CHECK(recs[0].score == 0.0);  // top cell (0,3) gives {0,3}
  CHECK(recs[1].score == doctest::Approx(1.0 / 3.0));  // {0,1}
  b.tokens = {};
  CHECK(alignment_attention(att, align, b, "ex").empty());
}

TEST_CASE("quantiles use Hazen interpolation") {
  const auto s = box_stats({0.4, 0.1, 0.3, 0.2});
  CHECK(s.q1 == doctest::Approx(0.15));
  CHECK(s.median == doctest::Approx(0.25));
  CHECK(s.q3 == doctest::Approx(0.35));
  CHECK(s.min == 0.1);
  CHECK(s.max == 0.4);
  CHECK(s.mean == doctest::Approx(0.25));
  CHECK(box_stats({0.1, 0.3, 0.5}).median == doctest::Approx(0.3));
  const auto one = box_stats({0.7});
  CHECK(one.q1 == 0.7);
  CHECK(one.q3 == 0.7);
  CHECK(box_stats({}).count == 0);
}

TEST_CASE("aggregate_records views") {
  auto rec = [](std::string id, int head, double score) {
    AlignmentRecord r;
    r.example_id = std::move(id);
    r.metric = Metric::attention;
    r.layer = 0;
    r.head = head;
    r.k = 2;
    r.score = score;
    return r;
  };
  SUBCASE("single record") {
    const std::vector<AlignmentRecord> recs{rec("a", 0, 0.4)};
    const auto s = aggregate_records(recs);
    REQUIRE(s.per_example.size() == 1);
    REQUIRE(s.per_head.size() == 1);
    CHECK(s.per_example[0].value == 0.4);
    CHECK(s.per_head[0].stats.mean == 0.4);
  }
  SUBCASE("two heads on one example") {
    const std::vector<AlignmentRecord> recs{rec("a", 0, 0.2), rec("a", 1, 0.4)};
    CHECK(aggregate_records(recs).per_example[0].value == doctest::Approx(0.3));
    CHECK(aggregate_records(recs, HeadReduce::max).per_example[0].value == 0.4);
  }
  SUBCASE("per-head median over examples") {
    std::vector<AlignmentRecord> recs{rec("c", 0, 0.5), rec("a", 0, 0.1),
                                      rec("b", 0, 0.3)};
    const auto s = aggregate_records(recs);
    REQUIRE(s.per_head.size() == 1);
    CHECK(s.per_head[0].stats.median == doctest::Approx(0.3));
    CHECK(s.per_metric[0].stats.count == 3);
    std::reverse(recs.begin(), recs.end());
    const auto t = aggregate_records(recs);
    CHECK(t.per_head[0].stats.mean == s.per_head[0].stats.mean);
    CHECK(t.per_example.size() == 3);
    CHECK(t.per_example[0].example_id == "a");
  }
}

TEST_CASE("metric names round trip") {
  for (Metric m : {Metric::interpret, Metric::attention, Metric::interaction,
                   Metric::pair_proportion, Metric::joint_prob, Metric::chain,
                   Metric::chain_coverage, Metric::components}) {
    CHECK(parse_metric(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_metric("bogus"), ArgumentError);
}

TEST_CASE("selection matches the brute-force oracles") {
  std::mt19937_64 rng(20240517);
  std::uniform_int_distribution<std::size_t> size(1, 10);
  std::uniform_int_distribution<int> level(0, 5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = size(rng);
    std::vector<double> s(n);
    for (double& v : s) v = level(rng) / 5.0;
    std::uniform_int_distribution<std::size_t> kd(1, n);
    const std::size_t k = kd(rng);
    CHECK(oracle::to_mask(top_k_tokens(s, k)) == oracle::top_k(s, k));

    const Matrix m = fixtures::random_tied_matrix(rng, n);
    CHECK(oracle::to_mask(top_k_incident_tokens(m, k)) == oracle::top_incident(m, k));

    const auto a = fixtures::random_subset(rng, n);
    const auto b = fixtures::random_subset(rng, n);
    const auto expected = oracle::iou(oracle::to_mask(a), oracle::to_mask(b));
    if (expected) {
      CHECK(iou(a, b) == *expected);
    } else {
      CHECK_THROWS_AS(iou(a, b), BothEmpty);
    }
  }
}

TEST_CASE("iou properties") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = fixtures::random_subset(rng, 12);
    const auto b = fixtures::random_subset(rng, 12);
    if (a.empty() && b.empty()) continue;
    const double v = iou(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == iou(b, a));
    CHECK((v == 1.0) == (a == b));
  }
}

TEST_CASE("growing k never shrinks the intersection") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(9);
    for (double& v : s) v = u(rng);
    const auto b = fixtures::random_subset(rng, 9);
    std::size_t prev = 0;
    for (std::size_t k = 1; k <= 9; ++k) {
      const auto m = top_k_tokens(s, k);
      std::size_t inter = 0;
      for (std::size_t t : m) inter += std::count(b.begin(), b.end(), t);
      CHECK(inter >= prev);
      prev = inter;
    }
  }
}
