#include <doctest.h>

#include <omp.h>

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "bugsem/pipeline.hpp"
#include "fixtures.hpp"

using namespace bugsem;
namespace fs = std::filesystem;

namespace {

constexpr const char* kPathCode = "int f(int *p)\n{\n  int x = *p;\n  return x / 0;\n}";

std::vector<InputToken> bracketed(const Ast& ast) {
  std::vector<InputToken> tokens = pretokenize(ast);
  InputToken bos;
  bos.text = "<s>";
  InputToken eos;
  eos.text = "</s>";
  tokens.insert(tokens.begin(), bos);
  tokens.push_back(eos);
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i].index = i;
  return tokens;
}

// Every row of every head puts all of its mass on input token `col`.
AttentionTensor column_attention(std::size_t layers, std::size_t n, std::size_t col) {
  AttentionTensor t(layers, 1, n);
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t i = 0; i < n; ++i) t.at(l, 0, i, col) = 1.0f;
  }
  return t;
}

AttentionTensor identity_attention(std::size_t layers, std::size_t n) {
  AttentionTensor t(layers, 1, n);
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t i = 0; i < n; ++i) t.at(l, 0, i, i) = 1.0f;
  }
  return t;
}

struct Scenario {
  fs::path dir = fixtures::scratch_dir("pipeline");
  std::vector<SourceFunction> corpus;
  std::vector<FeatureRecord> features;

  Scenario() {
    corpus = {
        {"a", fixtures::kFigureCode, Label::vulnerable, "", {}},
        {"b", kPathCode, Label::vulnerable, "", {{3, 4}}},
        {"c", "void g() { free(p); }", Label::vulnerable, "", {}},
        {"d", "void h() { return; }", Label::non_vulnerable, "", {}},
        {"e", "void k() { free(q); }", Label::vulnerable, "", {}},
    };
    ExtractOptions pvs;
    auto a = extract_features(corpus, pvs);
    REQUIRE(a.errors.empty());
    ExtractOptions paths;
    paths.kind = FeatureKind::buggy_path;
    const auto b = extract_features(corpus, paths);
    for (auto& r : a.records) {
      if (r.id != "b") features.push_back(r);
    }
    features.insert(features.end(), b.records.begin(), b.records.end());

    {
      const Ast ast = parse(corpus[0].code);
      ModelDump d;
      d.example_id = "a";
      d.tokens = bracketed(ast);
      const std::size_t n = d.tokens.size();
      d.attention = column_attention(2, n, 8);  // input 8 is AST token 7, "10"
      std::vector<double> grad(n, 0.0);
      std::vector<double> ig(n, 0.0);
      for (std::size_t i = 6; i <= 10; ++i) grad[i] = 1.0;  // AST 5..9
      for (std::size_t i = 1; i <= 5; ++i) ig[i] = 1.0;     // AST 0..4
      d.attributions = {{"grad", grad}, {"ig", ig}};
      write_dump(dir, d);
    }
    {
      const Ast ast = parse(corpus[1].code);
      ModelDump d;
      d.example_id = "b";
      d.tokens = bracketed(ast);
      d.attention = identity_attention(2, d.tokens.size());
      write_dump(dir, d);
    }
    {
      const Ast ast = parse(corpus[4].code);
      ModelDump d;
      d.example_id = "e";
      d.tokens = bracketed(ast);
      d.attention = identity_attention(1, d.tokens.size());
      write_dump(dir, d);
    }
  }
  ~Scenario() { fs::remove_all(dir); }
};

std::vector<AlignmentRecord> of(const AlignResult& r, const std::string& id, Metric m) {
  std::vector<AlignmentRecord> out;
  for (const auto& rec : r.records) {
    if (rec.example_id == id && rec.metric == m) out.push_back(rec);
  }
  return out;
}

}  // namespace

TEST_CASE("extract emits one PVS record per example and one per trace") {
  const Scenario s;
  REQUIRE(s.features.size() == 5);
  CHECK(s.features[0].texts == std::vector<std::string>{"malloc", "(", "10", ")", ";"});
  CHECK(s.features[2].id == "d");
  CHECK(s.features[2].set.empty());
  CHECK(s.features[4].id == "b");
  CHECK(s.features[4].set.kind == FeatureKind::buggy_path);
  CHECK(s.features[4].set.path_id == 0);
  CHECK(s.features[4].set.tokens.size() == 11);
}

TEST_CASE("align computes every metric on hand-built dumps") {
  const Scenario s;
  AlignOptions opt;
  for (Metric m : {Metric::interpret, Metric::attention, Metric::interaction,
                   Metric::pair_proportion, Metric::joint_prob, Metric::chain,
                   Metric::chain_coverage, Metric::components}) {
    opt.metrics.insert(m);
  }
  const AlignResult r = align_corpus(s.corpus, s.features, s.dir, opt);

  CHECK(r.examples == 2);
  CHECK(r.missing_dumps == 1);     // c
  CHECK(r.empty_bug_sets == 1);    // d
  CHECK(r.nonstochastic_rows == 0);
  REQUIRE(r.errors.size() == 3);
  CHECK(r.errors[0] == "b: no attributions, interpret skipped");
  CHECK(r.errors[1] == "c: no model dump");
  CHECK(r.errors[2].rfind("e: ", 0) == 0);
  CHECK(r.errors[2].find("layers") != std::string::npos);
  CHECK(std::is_sorted(r.records.begin(), r.records.end(), record_less));

  SUBCASE("PVS example") {
    // B = AST {5..9}; all mass on AST 7.
    const auto interp = of(r, "a", Metric::interpret);
    REQUIRE(interp.size() == 3);
    CHECK(interp[0].tool == "grad");
    CHECK(interp[0].score == 1.0);
    CHECK(interp[1].tool == "ig");
    CHECK(interp[1].score == 0.0);
    CHECK(interp[2].tool == "mean");
    CHECK(interp[2].score == 0.5);
    CHECK(interp[2].k == 5);

    // Top cells (0,7),(1,7),(2,7),(3,7) give {0,1,2,3,7}; IoU 1/9.
    const auto att = of(r, "a", Metric::attention);
    REQUIRE(att.size() == 2);
    for (const auto& rec : att) {
      CHECK(rec.score == doctest::Approx(1.0 / 9.0));
      CHECK(rec.k == 5);
      CHECK(rec.head == 0);
    }
    CHECK(att[0].layer == 0);
    CHECK(att[1].layer == 1);
    const auto im = of(r, "a", Metric::interaction);
    REQUIRE(im.size() == 1);
    CHECK(im[0].score == doctest::Approx(1.0 / 9.0));
    // Eleven cells above theta, five of them inside B x B.
    const auto pp = of(r, "a", Metric::pair_proportion);
    REQUIRE(pp.size() == 2);
    CHECK(pp[0].score == doctest::Approx(5.0 / 11.0));
    CHECK(of(r, "a", Metric::joint_prob).empty());
  }

  SUBCASE("buggy-path example") {
    // 20 AST tokens, path covers AST 8..18, identity attention.
    const auto im = of(r, "b", Metric::interaction);
    REQUIRE(im.size() == 1);
    CHECK(im[0].score == doctest::Approx(3.0 / 19.0));
    CHECK(im[0].k == 11);
    CHECK(im[0].path_id == 0);
    CHECK(of(r, "b", Metric::attention)[0].score == doctest::Approx(3.0 / 19.0));
    CHECK(of(r, "b", Metric::pair_proportion)[1].score == doctest::Approx(11.0 / 20.0));
    CHECK(of(r, "b", Metric::interpret).empty());

    const auto jp = of(r, "b", Metric::joint_prob);
    REQUIRE(jp.size() == 1);
    CHECK(jp[0].score == 0.0);
    CHECK(jp[0].path_length == 11);
    CHECK(jp[0].k == 11);
    const auto chain = of(r, "b", Metric::chain);
    REQUIRE(chain.size() == 1);
    CHECK(chain[0].score == 0.0);
    CHECK(chain[0].k == 22);
    CHECK(of(r, "b", Metric::chain_coverage)[0].score == 0.0);
    CHECK(of(r, "b", Metric::components)[0].score == 11.0);
  }
}

TEST_CASE("fixed k and metric selection") {
  const Scenario s;
  AlignOptions opt;
  opt.metrics = {Metric::interaction};
  opt.fixed_k = 2;
  const AlignResult r = align_corpus(s.corpus, s.features, s.dir, opt);
  const auto im = of(r, "a", Metric::interaction);
  REQUIRE(im.size() == 1);
  CHECK(im[0].k == 2);
  // Top cell (0,7) gives {0,7}; B = {5..9}.
  CHECK(im[0].score == doctest::Approx(1.0 / 6.0));
  CHECK(of(r, "a", Metric::attention).empty());
}

TEST_CASE("feature indices beyond the AST are a per-example error") {
  const Scenario s;
  auto features = s.features;
  features[0].set.tokens = {3, 400};
  const AlignResult r = align_corpus(s.corpus, features, s.dir, {});
  CHECK(of(r, "a", Metric::interaction).empty());
  CHECK(std::any_of(r.errors.begin(), r.errors.end(), [](const std::string& e) {
    return e.rfind("a: ", 0) == 0 && e.find("400") != std::string::npos;
  }));
}

TEST_CASE("results do not depend on the thread count") {
  const Scenario s;
  AlignOptions opt;
  opt.metrics.insert(Metric::pair_proportion);
  opt.metrics.insert(Metric::components);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const AlignResult one = align_corpus(s.corpus, s.features, s.dir, opt);
  const auto ex1 = extract_features(s.corpus, {});
  omp_set_num_threads(4);
  const AlignResult four = align_corpus(s.corpus, s.features, s.dir, opt);
  const auto ex4 = extract_features(s.corpus, {});
  omp_set_num_threads(saved);
  CHECK(one.records == four.records);
  CHECK(one.errors == four.errors);
  REQUIRE(ex1.records.size() == ex4.records.size());
  for (std::size_t i = 0; i < ex1.records.size(); ++i) {
    CHECK(ex1.records[i].id == ex4.records[i].id);
    CHECK(ex1.records[i].set.tokens == ex4.records[i].set.tokens);
  }
}

TEST_CASE("dump token source") {
  const Scenario s;
  const auto src = dump_token_source(s.dir);
  const Ast ast = parse(s.corpus[0].code);
  const auto tokens = src(s.corpus[0], ast);
  REQUIRE(tokens);
  CHECK(tokens->size() == 13);
  CHECK_FALSE(src(s.corpus[2], ast).has_value());
}

TEST_CASE("corpus statistics") {
  std::vector<SourceFunction> corpus = {
      {"a", fixtures::kFigureCode, Label::vulnerable, "", {{1}, {1}}},
      {"b", "void f() { x += 1; }", Label::non_vulnerable, "", {}},
      {"c", "   ", Label::vulnerable, "", {{1}}},
      {"d", "void g() { y = 2; }", Label::non_vulnerable, "", {{1}, {1}, {1}, {1}}},
  };
  const auto st = corpus_statistics(corpus, PvsRuleSet::preset(PvsVersion::v2));
  CHECK(st.examples == 4);
  CHECK(st.skipped == 1);
  CHECK(st.vulnerable == 1);
  CHECK(st.non_vulnerable == 2);
  CHECK(*st.mean_pvs_vulnerable == doctest::Approx(5.0));
  CHECK(*st.mean_pvs_non_vulnerable == doctest::Approx(2.0));
  CHECK(*st.ratio == doctest::Approx(2.5));
  CHECK(st.programs_with_traces == 3);
  CHECK(st.traces == 7);
  CHECK(st.mean_traces == doctest::Approx(7.0 / 3.0));

  corpus.resize(1);
  const auto one = corpus_statistics(corpus, PvsRuleSet::preset(PvsVersion::v2));
  CHECK_FALSE(one.ratio.has_value());
  CHECK_FALSE(one.mean_pvs_non_vulnerable.has_value());
}
