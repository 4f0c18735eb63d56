#include <doctest.h>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "bugsem/ast.hpp"
#include "bugsem/bug_features.hpp"
#include "bugsem/errors.hpp"

using namespace bugsem;

namespace {

std::vector<std::string> texts_of(const Ast& ast, const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  for (std::size_t i : idx) out.push_back(ast.terminal(i).text);
  return out;
}

std::vector<std::string> pvs_texts(const std::string& code, PvsVersion v) {
  const Ast ast = parse(code);
  return texts_of(ast, extract_pvs(ast, PvsRuleSet::preset(v)).tokens);
}

std::vector<std::string> abstraction(const std::string& code) {
  const Ast ast = parse(code);
  return texts_of(ast, abstract_expression(ast, 0));
}

using Strings = std::vector<std::string>;

const char* const kSamples[] = {
    "int main() { malloc(10); }",
    "void f(char *d, char *s) { strcpy(d, s); d[0] = *s + 1; }",
    "int g(struct node *n, int k) { int t = n->val / k; t %= 3; return t * 2; }",
    "void h(int *a, int n) { for (int i = 0; i < n; i++) a[i] -= a[i - 1]; }",
    "void q(char *b) { strncpy(b, \"x\", 1); puts(b); x.free(); free(b); }",
    "int r(int a) { return -a + ~a; }",
};

}  // namespace

TEST_CASE("abstraction keeps only callee names, operators and brackets") {
  CHECK(abstraction("strcpy(a, foo(b));") == Strings{"strcpy"});
  CHECK(abstraction("(a + b) - c") == Strings{"+", "-"});
  CHECK(abstraction("arr[i++];") == Strings{"[", "++", "]"});
}

TEST_CASE("figure program PVS under V2 is the whole call statement") {
  CHECK(pvs_texts("int main() { malloc(10); }", PvsVersion::v2) ==
        Strings{"malloc", "(", "10", ")", ";"});
}

TEST_CASE("V3 on an arrow and a division") {
  CHECK(pvs_texts("p->f = a / b;", PvsVersion::v3) == Strings{"->", "/"});
}

TEST_CASE("calls outside the catalog do not trigger") {
  CHECK(pvs_texts("printf(\"x\");", PvsVersion::v2).empty());
  CHECK(pvs_texts("int f() { return g(1); }", PvsVersion::v2).empty());
}

TEST_CASE("member calls never match a catalog name") {
  CHECK(pvs_texts("void f() { obj.free(); }", PvsVersion::v2).empty());
  CHECK(pvs_texts("void f() { obj.free(); p->free(); }", PvsVersion::v3) ==
        Strings{"->"});
}

TEST_CASE("V2 extends the V1 catalog") {
  CHECK(pvs_texts("strncpy(a, b, n);", PvsVersion::v1).empty());
  CHECK(pvs_texts("strncpy(a, b, n);", PvsVersion::v2) ==
        Strings{"strncpy", "(", "a", ",", "b", ",", "n", ")", ";"});
  CHECK(pvs_texts("x += 1;", PvsVersion::v1).empty());
  CHECK(pvs_texts("x += 1;", PvsVersion::v2) == Strings{"x", "+=", "1", ";"});
  CHECK(pvs_texts("free_sized(p, 4);", PvsVersion::v2).size() == 7);
}

TEST_CASE("unary star is a dereference, binary star is multiplication") {
  const PvsRuleSet no_ops = [] {
    PvsRuleSet r = PvsRuleSet::preset(PvsVersion::v2);
    r.operators.clear();
    return r;
  }();
  const Ast deref = parse("y = *p;");
  CHECK(texts_of(deref, extract_pvs(deref, no_ops).tokens) == Strings{"*", "p", ";"});
  const Ast mul = parse("y = a * b;");
  CHECK(extract_pvs(mul, no_ops).tokens.empty());
  CHECK(pvs_texts("y = a * b;", PvsVersion::v2) == Strings{"a", "*", "b", ";"});
  CHECK(pvs_texts("y = &x;", PvsVersion::v2).empty());
}

TEST_CASE("structural triggers can be switched off") {
  PvsRuleSet r = PvsRuleSet::preset(PvsVersion::v2);
  r.structural = {false, false, false};
  const Ast ast = parse("v = a[i] + p->f + *q;");
  const auto t = texts_of(ast, abstract_expression(ast, 0, r));
  CHECK(t == Strings{"+", "+"});
}

TEST_CASE("statement terminator can be excluded") {
  PvsRuleSet r = PvsRuleSet::preset(PvsVersion::v2);
  r.include_statement_terminator = false;
  const Ast ast = parse("int main() { malloc(10); }");
  CHECK(texts_of(ast, extract_pvs(ast, r).tokens) == Strings{"malloc", "(", "10", ")"});
}

TEST_CASE("PVS inside a for header takes no terminator") {
  const Ast ast = parse("void f(int n) { for (;;) n++; }");
  const auto t = texts_of(ast, extract_pvs(ast, PvsRuleSet::preset(PvsVersion::v2)).tokens);
  CHECK(t == Strings{"n", "++", ";"});
}

TEST_CASE("nested triggers union without duplicates") {
  const Ast ast = parse("x = a[i] + b;");
  const auto set = extract_pvs(ast, PvsRuleSet::preset(PvsVersion::v2));
  CHECK(std::is_sorted(set.tokens.begin(), set.tokens.end()));
  CHECK(std::adjacent_find(set.tokens.begin(), set.tokens.end()) == set.tokens.end());
  CHECK(texts_of(ast, set.tokens) == Strings{"a", "[", "i", "]", "+", "b", ";"});
}

TEST_CASE("rule-set invariants hold on sample functions") {
  const auto v1 = PvsRuleSet::preset(PvsVersion::v1);
  const auto v2 = PvsRuleSet::preset(PvsVersion::v2);
  const auto v3 = PvsRuleSet::preset(PvsVersion::v3);
  CHECK(std::includes(v2.call_names.begin(), v2.call_names.end(), v1.call_names.begin(),
                      v1.call_names.end()));
  CHECK(v2.call_names.size() == 23);
  CHECK(v2.operators.size() == 12);
  CHECK(v3.call_names == v2.call_names);
  for (const char* code : kSamples) {
    CAPTURE(code);
    const Ast ast = parse(code);
    const auto s1 = extract_pvs(ast, v1).tokens;
    const auto s2 = extract_pvs(ast, v2).tokens;
    const auto s3 = extract_pvs(ast, v3).tokens;
    CHECK(std::includes(s2.begin(), s2.end(), s1.begin(), s1.end()));
    CHECK(std::includes(s2.begin(), s2.end(), s3.begin(), s3.end()));
    CHECK(extract_pvs(ast, v2).tokens == s2);
    for (std::size_t t : s2) CHECK(t < ast.size());
    CHECK_FALSE(extract_pvs(ast, v2).path_id.has_value());
  }
}

TEST_CASE("buggy paths follow trace lines") {
  SourceFunction fn;
  fn.code = "int f(int *p)\n{\n  int x = *p;\n  return x / 0;\n}";
  fn.bug_line_traces = {{3, 4}, {3, 4}, {99}, {4}};
  const Ast ast = parse(fn.code);
  const auto paths = extract_buggy_paths(ast, ast.line_table(), fn);
  REQUIRE(paths.size() == 4);
  CHECK(paths[0].path_id == 0);
  CHECK(paths[1].path_id == 1);
  CHECK(paths[0].tokens == paths[1].tokens);
  CHECK(paths[2].empty());
  CHECK(texts_of(ast, paths[3].tokens) == Strings{"return", "x", "/", "0", ";"});
  CHECK(texts_of(ast, paths[0].tokens).size() == 11);
  for (const auto& p : paths) {
    CHECK(p.kind == FeatureKind::buggy_path);
    CHECK(std::is_sorted(p.tokens.begin(), p.tokens.end()));
  }
}

TEST_CASE("single-line trace covers a one-line function") {
  SourceFunction fn;
  fn.code = "void g() { a = b; }";
  fn.bug_line_traces = {{1}};
  const Ast ast = parse(fn.code);
  const auto paths = extract_buggy_paths(ast, ast.line_table(), fn);
  REQUIRE(paths.size() == 1);
  CHECK(paths[0].tokens.size() == ast.size());
}

TEST_CASE("PVS statistics from sizes") {
  const auto st = pvs_statistics_from_sizes(
      {Label::vulnerable, Label::vulnerable, Label::non_vulnerable}, {4, 6, 2});
  CHECK(st.mean_vulnerable == doctest::Approx(5.0));
  CHECK(st.mean_non_vulnerable == doctest::Approx(2.0));
  CHECK(st.ratio == doctest::Approx(2.5));
  CHECK(pvs_statistics_from_sizes({Label::vulnerable, Label::non_vulnerable}, {5, 5})
            .ratio == doctest::Approx(1.0));
  CHECK_THROWS_AS(pvs_statistics_from_sizes({Label::vulnerable}, {3}), EmptyLabelClass);
}

TEST_CASE("PVS statistics over a corpus skip unparseable code") {
  std::vector<SourceFunction> corpus(3);
  corpus[0] = {"a", "int main() { malloc(10); }", Label::vulnerable, "", {}};
  corpus[1] = {"b", "void f() { x += 1; }", Label::non_vulnerable, "", {}};
  corpus[2] = {"c", "   ", Label::non_vulnerable, "", {}};
  const auto st = pvs_statistics(corpus, PvsRuleSet::preset(PvsVersion::v2));
  CHECK(st.skipped == 1);
  CHECK(st.mean_vulnerable == doctest::Approx(5.0));
  CHECK(st.mean_non_vulnerable == doctest::Approx(4.0));
  CHECK(st.ratio == doctest::Approx(1.25));
}

TEST_CASE("rule sets round-trip through JSON") {
  PvsRuleSet r = PvsRuleSet::preset(PvsVersion::v1);
  r.call_names.insert("memcpy");
  r.structural.field_arrow = false;
  const PvsRuleSet back = PvsRuleSet::from_json(r.to_json());
  CHECK(back.version == r.version);
  CHECK(back.call_names == r.call_names);
  CHECK(back.operators == r.operators);
  CHECK_FALSE(back.structural.field_arrow);
  CHECK(pvs_texts("memcpy(a, b, 1);", PvsVersion::v1).empty());
  const Ast ast = parse("memcpy(a, b, 1);");
  CHECK(extract_pvs(ast, back).size() == 9);
  CHECK_THROWS_AS(PvsRuleSet::from_json(nlohmann::json::array()), SchemaError);
  CHECK_THROWS_AS(PvsRuleSet::from_json({{"version", "v9"}}), SchemaError);
}

TEST_CASE("version and kind names parse") {
  CHECK(parse_pvs_version("v3") == PvsVersion::v3);
  CHECK(parse_feature_kind("buggy-path") == FeatureKind::buggy_path);
  CHECK_THROWS_AS(parse_pvs_version("v4"), ArgumentError);
  CHECK_THROWS_AS(parse_feature_kind("paths"), ArgumentError);
}
