#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bugsem/annotate.hpp"
#include "bugsem/errors.hpp"
#include "fixtures.hpp"
#include "generators.hpp"

using namespace bugsem;
using Strings = std::vector<std::string>;

namespace {

struct Figure {
  Ast ast = parse(fixtures::kFigureCode);
  std::vector<InputToken> tokens = fixtures::figure_tokens();
  TokenAlignment align = build_alignment(ast, tokens);
  BugFeatureSet pvs = extract_pvs(ast, PvsRuleSet::preset(PvsVersion::v2));
};

std::vector<InputToken> with_specials(std::vector<InputToken> tokens) {
  InputToken bos;
  bos.text = "<s>";
  InputToken eos;
  eos.text = "</s>";
  tokens.insert(tokens.begin(), bos);
  tokens.push_back(eos);
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i].index = i;
  return tokens;
}

}  // namespace

TEST_CASE("mark wraps every PVS subword") {
  const Figure f;
  const auto ex = mark_annotate(f.tokens, f.align, f.pvs);
  CHECK(ex.tokens == Strings{"[BOS]", "int", "main", "()", "{",
                             "<vul-b>", "mall", "<vul-e>", "<vul-b>", "oc", "<vul-e>",
                             "<vul-b>", "(", "<vul-e>", "<vul-b>", "10", "<vul-e>",
                             "<vul-b>", ");", "<vul-e>", "}", "[EOS]"});
  CHECK(ex.marked == 5);
  CHECK(ex.b_extension.empty());
  CHECK(ex.source[6] == 5u);
  CHECK_FALSE(ex.source[5].has_value());
}

TEST_CASE("prepend copies the PVS in front of the code") {
  const Figure f;
  const auto ex = prepend_annotate(f.tokens, f.align, f.pvs);
  CHECK(ex.tokens == Strings{"[BOS]", "mall", "oc", "(", "10", ");", "[SEP]", "int",
                             "main", "()", "{", "mall", "oc", "(", "10", ");", "}",
                             "[EOS]"});
  CHECK(ex.b_extension == std::vector<std::size_t>{1, 2, 3, 4, 5});
  CHECK_FALSE(ex.degenerate);
  const std::vector<std::size_t> b{5, 6};  // mall, oc
  CHECK(extend_bug_set_for_prepend(b, ex) == std::vector<std::size_t>{1, 2, 3, 4, 5, 11, 12});
}

TEST_CASE("empty PVS") {
  const Figure f;
  const BugFeatureSet none;
  const auto mark = mark_annotate(f.tokens, f.align, none);
  const auto base = baseline_annotate(f.tokens);
  CHECK(mark.tokens == base.tokens);
  CHECK(mark.mode == AnnotationMode::mark);
  CHECK(base.mode == AnnotationMode::baseline);
  const auto pre = prepend_annotate(f.tokens, f.align, none);
  CHECK(pre.degenerate);
  CHECK(pre.tokens[1] == "[SEP]");
  CHECK(pre.tokens.size() == f.tokens.size() + 1);
}

TEST_CASE("prepend block is capped") {
  std::string code = "void f(char *d, char *s) {";
  for (int i = 0; i < 30; ++i) code += " strcpy(d, s);";  // 7 tokens each
  code += " }";
  const Ast ast = parse(code);
  const auto tokens = with_specials(pretokenize(ast));
  const auto align = build_alignment(ast, tokens);
  const auto pvs = extract_pvs(ast, PvsRuleSet::preset(PvsVersion::v2));
  REQUIRE(pvs.size() == 210);
  const auto ex = prepend_annotate(tokens, align, pvs);
  CHECK(ex.b_extension.size() == 100);
  CHECK(ex.tokens[101] == "[SEP]");
  CHECK(ex.tokens.size() <= 512);
  CHECK(ex.tokens.front() == "<s>");
  CHECK(ex.tokens.back() == "</s>");

  AnnotationOptions small;
  small.context_limit = 40;
  const auto cut = prepend_annotate(tokens, align, pvs, small);
  CHECK(cut.tokens.size() == 40);
  CHECK(cut.b_extension.size() == 37);
  CHECK(cut.tokens[38] == "[SEP]");
  const auto mark = mark_annotate(tokens, align, pvs, small);
  CHECK(mark.tokens.size() <= 40);
  CHECK(mark.tokens.back() == "</s>");
}

TEST_CASE("custom markers") {
  const Figure f;
  AnnotationOptions o;
  o.begin_marker = "<<";
  o.end_marker = ">>";
  o.separator = "||";
  const auto m = mark_annotate(f.tokens, f.align, f.pvs, o);
  CHECK(std::count(m.tokens.begin(), m.tokens.end(), "<<") == 5);
  const auto p = prepend_annotate(f.tokens, f.align, f.pvs, o);
  CHECK(p.tokens[6] == "||");
}

TEST_CASE("bug-set extension needs a prepend example") {
  const Figure f;
  const auto ex = mark_annotate(f.tokens, f.align, f.pvs);
  CHECK_THROWS_AS(extend_bug_set_for_prepend(std::vector<std::size_t>{1}, ex), ModeMismatch);
  CHECK_THROWS_AS(parse_annotation_mode("wrap"), ArgumentError);
}

TEST_CASE("annotation invariants on random functions") {
  std::mt19937_64 rng(77);
  const auto rules = PvsRuleSet::preset(PvsVersion::v2);
  for (int trial = 0; trial < 150; ++trial) {
    const std::string code = fixtures::random_function(rng, 90);
    CAPTURE(code);
    const Ast ast = parse(code);
    const auto tokens = with_specials(pretokenize(ast));
    const auto align = build_alignment(ast, tokens);
    const auto pvs = extract_pvs(ast, rules);

    const auto mark = mark_annotate(tokens, align, pvs);
    CHECK(mark.tokens.size() <= 512);
    std::vector<std::string> stripped;
    int depth = 0;
    bool balanced = true;
    for (const auto& t : mark.tokens) {
      if (t == "<vul-b>") {
        balanced &= depth++ == 0;
      } else if (t == "<vul-e>") {
        balanced &= --depth == 0;
      } else {
        stripped.push_back(t);
      }
    }
    CHECK(balanced);
    CHECK(depth == 0);
    const auto base = baseline_annotate(tokens);
    // Markers removed, Mark is a prefix-preserving truncation of the baseline.
    REQUIRE(stripped.size() <= base.tokens.size());
    CHECK(std::equal(stripped.begin(), stripped.end() - 1, base.tokens.begin()));
    const std::size_t in_pvs = input_tokens_in(align, pvs.tokens).size();
    if (tokens.size() + 2 * in_pvs <= 512) {
      CHECK(mark.marked == in_pvs);
      CHECK(mark.tokens.size() == tokens.size() + 2 * in_pvs);
    }

    const auto pre = prepend_annotate(tokens, align, pvs);
    CHECK(pre.tokens.size() <= 512);
    CHECK(pre.b_extension.size() <= 100);
    CHECK(std::count(pre.tokens.begin(), pre.tokens.end(), "[SEP]") == 1);
    CHECK(pre.degenerate == pvs.empty());
  }
}

TEST_CASE("training corpus emission") {
  std::vector<SourceFunction> corpus(3);
  corpus[0] = {"a", "int main() { malloc(10); }", Label::vulnerable, "", {}};
  corpus[1] = {"b", "", Label::non_vulnerable, "", {}};
  corpus[2] = {"c", "void g() { x = 1; }", Label::non_vulnerable, "", {}};
  const auto rules = PvsRuleSet::preset(PvsVersion::v2);
  const auto out = emit_training_corpus(corpus, AnnotationMode::prepend, rules, {},
                                        ast_token_source());
  REQUIRE(out.records.size() == 2);
  REQUIRE(out.errors.size() == 1);
  CHECK(out.errors[0].rfind("b: ", 0) == 0);
  CHECK(out.records[0].example.id == "a");
  CHECK(out.records[0].label == Label::vulnerable);
  CHECK(out.records[1].example.degenerate);

  std::ostringstream os;
  write_training_corpus(os, out);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  const auto j = nlohmann::json::parse(line);
  CHECK(j["id"] == "a");
  CHECK(j["label"] == 1);
  CHECK(j["mode"] == "prepend");
  CHECK(j["pvs_version"] == "v2");
  CHECK(j["tokens"].size() == 17);
  CHECK(j["b_extension"] == nlohmann::json::array({0, 1, 2, 3, 4}));

  const PvsSource none = [](const SourceFunction&) { return std::optional<BugFeatureSet>{BugFeatureSet{}}; };
  const auto forced = emit_training_corpus(corpus, AnnotationMode::mark, rules, {},
                                           ast_token_source(), none);
  CHECK(forced.records[0].example.marked == 0);

  const TokenSource missing = [](const SourceFunction&, const Ast&) {
    return std::optional<std::vector<InputToken>>{};
  };
  CHECK(emit_training_corpus(corpus, AnnotationMode::baseline, rules, {}, missing)
            .records.empty());
}
