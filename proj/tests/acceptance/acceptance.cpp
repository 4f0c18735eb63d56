// Acceptance run: prints one PASS/FAIL/SKIP line per criterion and exits
// nonzero when any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bugsem/annotate.hpp"
#include "bugsem/ast.hpp"
#include "bugsem/bug_features.hpp"
#include "bugsem/errors.hpp"
#include "bugsem/interaction.hpp"
#include "bugsem/metrics.hpp"
#include "bugsem/token_align.hpp"
#include "fixtures.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace bugsem;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using Idx = std::vector<std::size_t>;

namespace {

const fs::path kFixtures = BUGSEM_FIXTURES;

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict = Verdict::pass;
  std::string detail;
};

Outcome fail(std::string why) { return {Verdict::fail, std::move(why)}; }

std::string quote(const std::string& s) { return "'" + s + "'"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& out) {
  const std::string cmd = quote(BUGSEM_CLI) + " " + args + " >" + quote(out.string()) + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& t : v) s += (s.empty() ? "" : " ") + t;
  return s;
}

// Pretokenized terminals split at random code-point boundaries, wrapped in
// specials. Generated code is ASCII, so byte and code-point offsets agree.
std::vector<InputToken> random_subwords(const Ast& ast, std::mt19937_64& rng) {
  std::vector<InputToken> out;
  InputToken bos;
  bos.text = "<s>";
  out.push_back(bos);
  const std::string& code = ast.normalized();
  for (const auto& t : pretokenize(ast)) {
    std::size_t b = t.char_span->begin;
    const std::size_t e = t.char_span->end;
    while (b < e) {
      std::uniform_int_distribution<std::size_t> len(1, std::min<std::size_t>(e - b, 3));
      const std::size_t step = (e - b > 1 && std::bernoulli_distribution(0.4)(rng)) ? len(rng) : e - b;
      InputToken piece;
      piece.text = code.substr(b, step);
      piece.char_span = Span{b, b + step};
      out.push_back(piece);
      b += step;
    }
  }
  InputToken eos;
  eos.text = "</s>";
  out.push_back(eos);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].index = i;
  return out;
}

Outcome figure_fidelity() {
  const auto dir = fixtures::scratch_dir("acceptance-figure");
  const auto corpus = quote((kFixtures / "figure.jsonl").string());
  const auto dumps = quote((kFixtures / "figure_dumps").string());
  const auto features = dir / "features.jsonl";
  const auto log = dir / "log.txt";
  if (run_cli("extract --corpus " + corpus + " -o " + quote(features.string()), log) != 0) {
    return fail("extract failed: " + slurp(log));
  }
  const std::map<std::string, std::vector<std::string>> expected = {
      {"mark",
       {"[BOS]", "int", "main", "()", "{", "<vul-b>", "mall", "<vul-e>", "<vul-b>", "oc",
        "<vul-e>", "<vul-b>", "(", "<vul-e>", "<vul-b>", "10", "<vul-e>", "<vul-b>", ");",
        "<vul-e>", "}", "[EOS]"}},
      {"prepend",
       {"[BOS]", "mall", "oc", "(", "10", ");", "[SEP]", "int", "main", "()", "{", "mall",
        "oc", "(", "10", ");", "}", "[EOS]"}},
  };
  for (const auto& [mode, want] : expected) {
    const auto out = dir / (mode + ".jsonl");
    if (run_cli("annotate --corpus " + corpus + " --dumps " + dumps + " --features " +
                    quote(features.string()) + " --mode " + mode + " -o " +
                    quote(out.string()),
                log) != 0) {
      return fail("annotate " + mode + " failed: " + slurp(log));
    }
    const auto j = nlohmann::json::parse(slurp(out));
    const auto got = j.at("tokens").get<std::vector<std::string>>();
    if (got != want) return fail(mode + " row is '" + join(got) + "'");
  }
  fs::remove_all(dir);
  return {};
}

Outcome abstraction_rules() {
  const std::pair<const char*, std::vector<std::string>> cases[] = {
      {"strcpy(a, foo(b));", {"strcpy"}},
      {"(a + b) - c", {"+", "-"}},
      {"arr[i++];", {"[", "++", "]"}},
  };
  for (const auto& [code, want] : cases) {
    const Ast ast = parse(code);
    std::vector<std::string> got;
    for (std::size_t t : abstract_expression(ast, 0)) got.push_back(ast.terminal(t).text);
    if (got != want) return fail(std::string(code) + " gives {" + join(got) + "}");
  }
  return {};
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-12; }

Outcome oracle_equivalence() {
  std::mt19937_64 rng(20241019);
  std::uniform_int_distribution<std::size_t> size(2, 10);
  std::uniform_int_distribution<int> level(0, 4);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = size(rng);
    const std::string tag = "instance " + std::to_string(trial) + ": ";
    std::uniform_int_distribution<std::size_t> kd(1, n);
    const std::size_t k = kd(rng);

    const auto a = fixtures::random_subset(rng, n);
    const auto b = fixtures::random_subset(rng, n);
    const auto want_iou = oracle::iou(oracle::to_mask(a), oracle::to_mask(b));
    if (want_iou) {
      if (!close(iou(a, b), *want_iou)) return fail(tag + "iou");
    } else {
      try {
        iou(a, b);
        return fail(tag + "iou of two empty sets did not throw");
      } catch (const BothEmpty&) {
      }
    }

    std::vector<double> s(n);
    for (double& v : s) v = level(rng) / 4.0;
    if (oracle::to_mask(top_k_tokens(s, k)) != oracle::top_k(s, k)) {
      return fail(tag + "top_k_tokens");
    }

    const Matrix m = fixtures::random_tied_matrix(rng, n);
    if (oracle::to_mask(top_k_incident_tokens(m, k)) != oracle::top_incident(m, k)) {
      return fail(tag + "top_k_incident_tokens");
    }

    // alignment_im over an interaction matrix covering a subset of n AST tokens.
    InteractionMatrix im;
    im.probs = m;
    for (std::size_t i = 0; i < n; ++i) im.tokens.push_back(2 * i);
    const auto bug = fixtures::random_subset(rng, 2 * n);
    Idx covered_positions;
    for (std::size_t t : bug) {
      if (t % 2 == 0) covered_positions.push_back(t / 2);
    }
    const auto got_im = alignment_im(im, bug);
    if (covered_positions.empty()) {
      if (got_im) return fail(tag + "alignment_im with no covered bug token");
    } else {
      const auto top = oracle::top_incident(m, covered_positions.size());
      const auto want = oracle::iou(top, oracle::to_mask(covered_positions));
      if (!got_im || !close(*got_im, *want)) return fail(tag + "alignment_im");
    }

    Idx path;
    std::uniform_int_distribution<std::size_t> node(0, n - 1);
    const std::size_t len = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
    while (path.size() < len) {
      const std::size_t v = node(rng);
      if (path.empty() || path.back() != v) path.push_back(v);
    }
    const std::size_t t = std::uniform_int_distribution<std::size_t>(1, n * n)(rng);
    const auto chain = longest_chain(m, path, t);
    const auto want_chain = oracle::longest_chain(m, path, t);
    if (chain.chain_length != want_chain.length ||
        !close(chain.edge_coverage, want_chain.coverage)) {
      return fail(tag + "longest_chain");
    }
    if (induced_components(m, path, t) != oracle::components(m, path, t)) {
      return fail(tag + "induced_components");
    }
  }
  return {};
}

Outcome interaction_properties() {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Ast ast = parse(fixtures::random_function(rng, 6));
    const auto tokens = random_subwords(ast, rng);
    const auto align = build_alignment(ast, tokens);
    const auto att = fixtures::random_attention(rng, 3, 2, tokens.size());
    const auto im = build_interaction_matrix(att, align);
    for (std::size_t i = 0; i < im.size(); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < im.size(); ++j) sum += im.probs(i, j);
      if (std::abs(sum - 1.0) > 1e-9) return fail("row sum " + std::to_string(sum));
    }
  }

  for (std::size_t m : {2u, 5u, 17u, 40u}) {
    TokenAlignment align;
    align.ast_size = m;
    for (std::size_t i = 0; i < m; ++i) align.map.push_back(i);
    const auto im = build_interaction_matrix(fixtures::uniform_attention(4, 2, m), align);
    for (std::size_t n = 2; n <= 8; ++n) {
      Idx path;
      for (std::size_t i = 0; i < n; ++i) path.push_back((i * 7) % m);
      const double want = std::pow(1.0 / static_cast<double>(m), static_cast<double>(n - 1));
      const double got = path_joint_probability(im.probs, path);
      if (std::abs(got - want) > 1e-12) return fail("uniform joint probability");
    }
  }

  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = std::uniform_int_distribution<std::size_t>(2, 12)(rng);
    TokenAlignment align;
    align.ast_size = m;
    for (std::size_t i = 0; i < m; ++i) align.map.push_back(i);
    const auto im = build_interaction_matrix(fixtures::random_attention(rng, 2, 2, m), align);
    std::uniform_int_distribution<std::size_t> node(0, m - 1);
    Idx path{node(rng)};
    double prev = 1.0;
    while (path.size() < 8) {
      std::size_t v = node(rng);
      if (v == path.back()) v = (v + 1) % m;
      path.push_back(v);
      const double p = path_joint_probability(im.probs, path);
      if (p > prev) return fail("joint probability grew under extension");
      prev = p;
    }
  }
  return {};
}

Outcome aggregation_invariance() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 500; ++trial) {
    const Ast ast = parse(fixtures::random_function(rng, 5));
    const auto tokens = random_subwords(ast, rng);
    const auto align = build_alignment(ast, tokens);
    const std::size_t n = tokens.size();

    const double c = u(rng);
    const auto flat = aggregate_attribution(std::vector<double>(n, c), align);
    for (std::size_t i = 0; i < flat.values.size(); ++i) {
      if (flat.covered[i] && std::abs(flat.values[i] - c) > 1e-12) {
        return fail("constant attribution not preserved");
      }
    }
    const float a = static_cast<float>(std::abs(c));
    const std::vector<float> att(n * n, a);
    for (auto pooling : {kernels::Pooling::block_mean}) {
      const auto pooled = aggregate_attention(att, n, align, pooling);
      for (double v : pooled.values.data()) {
        if (std::abs(v - a) > 1e-6) return fail("constant attention not preserved");
      }
    }

    std::vector<double> raw(n);
    for (double& v : raw) v = u(rng);
    std::vector<double> scaled = raw;
    const double f = scale(rng);
    for (double& v : scaled) v *= f;
    const auto bug = extract_pvs(ast, PvsRuleSet::preset(PvsVersion::v2)).tokens;
    if (bug.empty()) continue;
    const auto r1 = alignment_interpret({{"t", aggregate_attribution(raw, align)}}, bug);
    const auto r2 = alignment_interpret({{"t", aggregate_attribution(scaled, align)}}, bug);
    if (r1.has_value() != r2.has_value() || (r1 && r1->mean != r2->mean)) {
      return fail("rescaling changed an IoU");
    }
  }
  return {};
}

Outcome annotation_invariants() {
  std::mt19937_64 rng(6);
  const auto rules = PvsRuleSet::preset(PvsVersion::v2);
  const AnnotationOptions opt;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::string tag = "function " + std::to_string(trial) + ": ";
    const Ast ast = parse(fixtures::random_function(rng, 70));
    const auto tokens = random_subwords(ast, rng);
    const auto align = build_alignment(ast, tokens);
    const auto pvs = extract_pvs(ast, rules);

    const auto base = baseline_annotate(tokens, opt);
    const auto mark = mark_annotate(tokens, align, pvs, opt);
    const auto pre = prepend_annotate(tokens, align, pvs, opt);
    for (const auto* ex : {&base, &mark, &pre}) {
      if (ex->tokens.size() > opt.context_limit) return fail(tag + "over 512 tokens");
    }
    if (pre.b_extension.size() > opt.prepend_limit) return fail(tag + "prepend over 100");

    std::vector<std::string> stripped;
    int depth = 0;
    for (const auto& t : mark.tokens) {
      if (t == opt.begin_marker) {
        if (++depth != 1) return fail(tag + "nested begin marker");
      } else if (t == opt.end_marker) {
        if (--depth != 0) return fail(tag + "unmatched end marker");
      } else {
        stripped.push_back(t);
      }
    }
    if (depth != 0) return fail(tag + "unclosed marker");
    // Round trip: with markers removed, Mark keeps the specials and a prefix
    // of the code, and the whole code when it fits.
    std::vector<std::string> want{tokens.front().text};
    for (std::size_t i = 1; i + 1 < stripped.size(); ++i) want.push_back(tokens[i].text);
    want.push_back(tokens.back().text);
    if (stripped != want) return fail(tag + "marker round trip");
    const std::size_t marked = input_tokens_in(align, pvs.tokens).size();
    if (tokens.size() + 2 * marked <= opt.context_limit) {
      std::vector<std::string> all;
      for (const auto& t : tokens) all.push_back(t.text);
      if (stripped != all) return fail(tag + "marker round trip lost tokens");
    }
  }
  return {};
}

std::optional<double> json_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) return std::nullopt;
  return j.at(key).get<double>();
}

Outcome dataset_statistics() {
  struct Target {
    const char* env;
    const char* name;
    double ratio;
    double ratio_tol;
    std::optional<double> traces;
  };
  const Target targets[] = {{"BUGSEM_D2A_CORPUS", "D2A", 1.00, 0.05, 5.29},
                            {"BUGSEM_BIGVUL_CORPUS", "Big-Vul", 2.90, 0.15, std::nullopt}};
  std::string detail;
  bool any = false;
  const auto dir = fixtures::scratch_dir("acceptance-stats");
  for (const auto& t : targets) {
    const char* path = std::getenv(t.env);
    if (!path || !fs::exists(path)) continue;
    any = true;
    const auto out = dir / "stats.json";
    if (run_cli("stats --json --corpus " + quote(path), out) != 0) {
      return fail(std::string(t.name) + " stats failed: " + slurp(out));
    }
    const std::string text = slurp(out);
    const auto j = nlohmann::json::parse(text.substr(text.find('{')));
    const auto ratio = json_number(j, "pvs_ratio");
    if (!ratio || std::abs(*ratio - t.ratio) > t.ratio_tol) {
      return fail(std::string(t.name) + " ratio " + (ratio ? std::to_string(*ratio) : "n/a"));
    }
    detail += std::string(detail.empty() ? "" : ", ") + t.name + " ratio " + std::to_string(*ratio);
    if (t.traces) {
      const auto traces = json_number(j, "mean_traces");
      if (!traces || std::abs(*traces - *t.traces) > 0.10) {
        return fail(std::string(t.name) + " mean traces " +
                    (traces ? std::to_string(*traces) : "n/a"));
      }
      detail += ", traces " + std::to_string(*traces);
    }
  }
  fs::remove_all(dir);
  if (!any) return {Verdict::skip, "set BUGSEM_D2A_CORPUS or BUGSEM_BIGVUL_CORPUS"};
  return {Verdict::pass, detail};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> check;
    double budget_s;
  };
  const Criterion criteria[] = {
      {"figure fidelity", figure_fidelity, 1.0},
      {"abstraction rules", abstraction_rules, 0.0},
      {"metric-oracle equivalence", oracle_equivalence, 60.0},
      {"interaction-matrix properties", interaction_properties, 0.0},
      {"aggregation invariance", aggregation_invariance, 0.0},
      {"annotation invariants", annotation_invariants, 0.0},
      {"dataset statistics", dataset_statistics, 0.0},
  };
  int failed = 0;
  int index = 0;
  for (const auto& c : criteria) {
    ++index;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    if (o.verdict == Verdict::pass && c.budget_s > 0.0 && secs > c.budget_s) {
      o = fail("took " + std::to_string(secs) + " s");
    }
    const char* label = o.verdict == Verdict::pass   ? "PASS"
                        : o.verdict == Verdict::skip ? "SKIP"
                                                     : "FAIL";
    if (o.verdict == Verdict::fail) ++failed;
    std::printf("AC%d %s %s (%.3f s)%s%s\n", index, label, c.name, secs,
                o.detail.empty() ? "" : ": ", o.detail.c_str());
  }
  return failed == 0 ? 0 : 1;
}
