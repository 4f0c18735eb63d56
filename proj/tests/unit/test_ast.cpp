#include <doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "bugsem/ast.hpp"
#include "bugsem/errors.hpp"

using namespace bugsem;

namespace {

std::vector<std::string> token_texts(const Ast& ast) {
  std::vector<std::string> out;
  for (const auto& t : ast.terminals()) out.push_back(t.text);
  return out;
}

}  // namespace

TEST_CASE("normalization joins terminals with single spaces") {
  const Ast ast = parse("int  main()\n{\n\treturn 0;\n}\n");
  CHECK(ast.normalized() == "int main ( ) { return 0 ; }");
  CHECK(ast.size() == 9);
}

TEST_CASE("figure program normalizes to the figure token sequence") {
  const Ast ast = parse("int main() { malloc(10); }");
  CHECK(ast.normalized() == "int main ( ) { malloc ( 10 ) ; }");
}

TEST_CASE("spans re-slice the normalized code") {
  const Ast ast = parse(
      "static int f(char *p, int n) {\n"
      "  /* copy */ char buf[16];\n"
      "  for (int i = 0; i < n; i++) buf[i] = p[i]; // loop\n"
      "  return strlen(buf) + sizeof(struct s);\n"
      "}\n");
  std::size_t prev_end = 0;
  for (const auto& t : ast.terminals()) {
    CHECK(ast.normalized().substr(t.span.begin, t.span.size()) == t.text);
    CHECK(t.span.begin >= prev_end);
    prev_end = t.span.end;
  }
  CHECK(ast.normalized().find("copy") == std::string::npos);
  CHECK(ast.normalized().find("loop") == std::string::npos);
}

TEST_CASE("literals stay single tokens") {
  const Ast ast = parse("puts(\"a  b\"); c = 'x'; s = L\"wide\";");
  const auto texts = token_texts(ast);
  CHECK(std::find(texts.begin(), texts.end(), "\"a  b\"") != texts.end());
  CHECK(std::find(texts.begin(), texts.end(), "'x'") != texts.end());
  CHECK(std::find(texts.begin(), texts.end(), "L\"wide\"") != texts.end());
}

TEST_CASE("tokens remember their original line and column") {
  const Ast ast = parse("int f()\n{\n  x = 1;\n}");
  const auto& x = ast.terminal(5);
  CHECK(x.text == "x");
  CHECK(x.line == 3);
  CHECK(x.column == 3);
  CHECK(ast.line_table() == LineTable{1, 1, 1, 1, 2, 3, 3, 3, 3, 4});
}

TEST_CASE("tokens_on_lines selects by original line") {
  const Ast ast = parse("int f()\n{\n  x = 1;\n  y = 2;\n}");
  const auto table = ast.line_table();
  const auto on3 = tokens_on_lines(ast, table, {3});
  REQUIRE(on3.size() == 4);
  CHECK(ast.terminal(on3.front()).text == "x");
  CHECK(tokens_on_lines(ast, table, {}).empty());
  CHECK(tokens_on_lines(ast, table, {99}).empty());
  CHECK(tokens_on_lines(ast, table, {3, 4}).size() == 8);
}

TEST_CASE("node terminal ranges nest") {
  const Ast ast = parse("void g(int *a) { if (a[0] > 1) { a->b = *a; } }");
  const auto nodes = ast.nodes();
  CHECK(ast.root().first_terminal == 0);
  CHECK(ast.root().end_terminal == ast.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t c : nodes[i].children) {
      CHECK(nodes[c].parent == i);
      CHECK(nodes[c].first_terminal >= nodes[i].first_terminal);
      CHECK(nodes[c].end_terminal <= nodes[i].end_terminal);
    }
  }
  for (std::size_t t = 0; t < ast.size(); ++t) {
    const auto& leaf = ast.node(ast.leaf_of(t));
    CHECK(leaf.is_terminal());
    CHECK(leaf.first_terminal == t);
  }
}

TEST_CASE("error recovery keeps fragments parseable") {
  const Ast ast = parse("(a + b) - c");
  CHECK(ast.normalized() == "( a + b ) - c");
  CHECK(ast.find_first("binary_expression") != kNoNode);
  const Ast broken = parse("int f( { x = ; ");
  CHECK(broken.size() > 0);
}

TEST_CASE("parse of a well-formed function reports no errors") {
  CHECK_FALSE(parse("int f(int a) { return a * 2; }").has_errors());
}

TEST_CASE("sources without terminals are unparseable") {
  CHECK_THROWS_AS(parse(""), UnparseableSource);
  CHECK_THROWS_AS(parse("   \n\t"), UnparseableSource);
  CHECK_THROWS_AS(parse("// only a comment"), UnparseableSource);
}

TEST_CASE("normalize_whitespace matches the parse") {
  const auto nc = normalize_whitespace("a =\n b;");
  CHECK(nc.text == "a = b ;");
  CHECK(nc.lines == LineTable{1, 1, 2, 2});
}
