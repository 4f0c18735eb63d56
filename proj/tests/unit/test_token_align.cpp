#include <doctest.h>

#include <random>
#include <vector>

#include "bugsem/ast.hpp"
#include "bugsem/errors.hpp"
#include "bugsem/token_align.hpp"
#include "fixtures.hpp"

using namespace bugsem;

namespace {

InputToken tok(std::size_t i, const char* text, std::size_t b, std::size_t e) {
  return {i, text, Span{b, e}};
}

}  // namespace

TEST_CASE("figure subwords map to their AST tokens") {
  const Ast ast = parse(fixtures::kFigureCode);
  const auto tokens = fixtures::figure_tokens();
  const TokenAlignment align = build_alignment(ast, tokens);
  using O = std::optional<std::size_t>;
  const std::vector<O> expected = {std::nullopt, 0, 1, 2, 4, 5, 5, 6, 7, 8, 10,
                                   std::nullopt};
  CHECK(align.map == expected);
  CHECK(align.unmatched == 0);
  // ")" at 3 and ";" at 9 are shadowed by multi-token subwords.
  CHECK(align.covered() == std::vector<std::size_t>{0, 1, 2, 4, 5, 6, 7, 8, 10});
  const auto groups = align.groups();
  CHECK(groups[0] == kernels::kNoGroup);
  CHECK(groups[5] == 4);
  CHECK(groups[6] == 4);
  CHECK(groups[10] == 8);
}

TEST_CASE("ties in overlap go to the earlier AST token") {
  const Ast ast = parse("a = b ;");
  // "= b" overlaps "=" by 1 and "b" by 1 (plus the space).
  const auto align = build_alignment(ast, std::vector{tok(0, "= b", 2, 5)});
  CHECK(align.map[0] == 1);
}

TEST_CASE("larger overlap wins") {
  const Ast ast = parse("ab = cdef ;");
  const auto align = build_alignment(ast, std::vector{tok(0, "= cde", 3, 8)});
  CHECK(align.map[0] == 2);
}

TEST_CASE("offsets count code points, not bytes") {
  const Ast ast = parse("s = \"\xC3\xA9t\xC3\xA9\" ;");
  // normalized: s = "été" ;   code points: s0 =2 "été"4..9 ;10
  REQUIRE(ast.normalized() == "s = \"\xC3\xA9t\xC3\xA9\" ;");
  const auto align = build_alignment(ast, std::vector{tok(0, ";", 10, 11),
                                                      tok(1, "\"\xC3\xA9", 4, 6)});
  CHECK(align.map[0] == 3);
  CHECK(align.map[1] == 2);
  const auto pre = pretokenize(ast);
  CHECK(pre[2].char_span == Span{4, 9});
  CHECK(pre[3].char_span == Span{10, 11});
}

TEST_CASE("pretokenize aligns one to one") {
  const Ast ast = parse("int f(int x) { return x + 1; }");
  const auto pre = pretokenize(ast);
  const auto align = build_alignment(ast, pre);
  REQUIRE(align.map.size() == ast.size());
  for (std::size_t i = 0; i < ast.size(); ++i) CHECK(align.map[i] == i);
}

TEST_CASE("spans beyond the code are rejected") {
  const Ast ast = parse("a ;");
  CHECK_THROWS_AS(build_alignment(ast, std::vector{tok(0, "x", 2, 40)}), MisalignedDump);
}

TEST_CASE("too many whitespace-only tokens fail the alignment") {
  const Ast ast = parse("a = b ;");
  std::vector<InputToken> tokens = {tok(0, "a", 0, 1), tok(1, " ", 1, 2),
                                    tok(2, "=", 2, 3), tok(3, "b", 4, 5)};
  CHECK_THROWS_AS(build_alignment(ast, tokens), MisalignedDump);
  // 1 of 10 unmatched is within the 10% budget.
  std::vector<InputToken> many;
  for (std::size_t i = 0; i < 9; ++i) many.push_back(tok(i, "a", 0, 1));
  many.push_back(tok(9, " ", 1, 2));
  const auto align = build_alignment(ast, many);
  CHECK(align.unmatched == 1);
  CHECK_FALSE(align.map[9].has_value());
}

TEST_CASE("attribution pools by mean over subwords") {
  const Ast ast = parse(fixtures::kFigureCode);
  const auto align = build_alignment(ast, fixtures::figure_tokens());
  std::vector<double> attr(12, 0.0);
  attr[5] = 0.2;  // mall
  attr[6] = 0.6;  // oc
  attr[9] = 0.3;  // );
  const AstScores s = aggregate_attribution(attr, align);
  CHECK(s.values[5] == doctest::Approx(0.4));
  CHECK(s.values[8] == doctest::Approx(0.3));
  CHECK(s.covered[3] == 0);
  CHECK(s.covered[9] == 0);
  CHECK(s.covered_count() == 9);
  CHECK_THROWS_AS(aggregate_attribution(std::vector<double>(3, 0.0), align), LengthMismatch);
}

TEST_CASE("constant inputs pool to constant outputs") {
  const Ast ast = parse(fixtures::kFigureCode);
  const auto tokens = fixtures::figure_tokens();
  const auto align = build_alignment(ast, tokens);
  const AstScores s = aggregate_attribution(std::vector<double>(tokens.size(), 0.7), align);
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    if (s.covered[i]) CHECK(s.values[i] == doctest::Approx(0.7));
  }
  const std::size_t n = tokens.size();
  std::vector<float> att(n * n, 0.25f);
  for (auto pooling : {kernels::Pooling::block_mean}) {
    for (auto backend : {kernels::Backend::serial, kernels::Backend::openmp}) {
      const AstMatrix m = aggregate_attention(att, n, align, pooling, backend);
      CHECK(m.size() == 9);
      for (double v : m.values.data()) CHECK(v == doctest::Approx(0.25));
    }
  }
}

TEST_CASE("block-mean attention pooling by hand") {
  // Two input tokens on AST token 0, one on AST token 1.
  const Ast ast = parse("ab c");
  std::vector<InputToken> tokens = {tok(0, "a", 0, 1), tok(1, "b", 1, 2),
                                    tok(2, "c", 3, 4)};
  const auto align = build_alignment(ast, tokens);
  const std::vector<float> att = {0.1f, 0.2f, 0.7f,  //
                                  0.3f, 0.3f, 0.4f,  //
                                  0.5f, 0.5f, 0.0f};
  const AstMatrix mean = aggregate_attention(att, 3, align);
  CHECK(mean.values(0, 0) == doctest::Approx(0.225));
  CHECK(mean.values(0, 1) == doctest::Approx(0.55));
  CHECK(mean.values(1, 0) == doctest::Approx(0.5));
  CHECK(mean.values(1, 1) == doctest::Approx(0.0));
  const AstMatrix sum = aggregate_attention(att, 3, align,
                                            kernels::Pooling::source_mean_target_sum);
  CHECK(sum.values(0, 0) == doctest::Approx(0.45));
  CHECK(sum.values(0, 1) == doctest::Approx(0.55));
  CHECK(sum.values(1, 0) == doctest::Approx(1.0));
  CHECK(sum.values(1, 1) == doctest::Approx(0.0));
}
