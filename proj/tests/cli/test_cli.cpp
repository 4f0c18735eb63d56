#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "bugsem/corpus_io.hpp"
#include "fixtures.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = BUGSEM_FIXTURES;

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

Run run(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt";
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = quote(BUGSEM_CLI) + " " + args + " >" + quote(out.string()) +
                          " 2>" + quote(err.string());
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string corpus_arg(const std::string& name) {
  return "--corpus " + quote((kFixtures / name).string());
}

}  // namespace

TEST_CASE("outputs match the golden files") {
  const auto dir = fixtures::scratch_dir("cli-golden");
  const struct {
    std::string args;
    std::string golden;
  } cases[] = {
      {"extract " + corpus_arg("corpus.jsonl"), "extract_pvs.jsonl"},
      {"extract --kind buggy-path " + corpus_arg("corpus.jsonl"), "extract_paths.jsonl"},
      {"extract --pvs-version v3 " + corpus_arg("corpus.jsonl"), "extract_pvs_v3.jsonl"},
      {"annotate --mode mark " + corpus_arg("corpus.jsonl"), "annotate_mark.jsonl"},
      {"annotate --mode prepend " + corpus_arg("corpus.jsonl"), "annotate_prepend.jsonl"},
      {"annotate --mode mark --dumps " + quote((kFixtures / "figure_dumps").string()) + " " +
           corpus_arg("figure.jsonl"),
       "figure_mark.jsonl"},
      {"annotate --mode prepend --dumps " + quote((kFixtures / "figure_dumps").string()) +
           " " + corpus_arg("figure.jsonl"),
       "figure_prepend.jsonl"},
      {"stats --json " + corpus_arg("corpus.jsonl"), "stats.json"},
  };
  for (const auto& c : cases) {
    CAPTURE(c.args);
    const Run r = run(c.args, dir);
    CHECK(r.code == 0);
    CHECK(r.out == slurp(kFixtures / "golden" / c.golden));
  }
  fs::remove_all(dir);
}

TEST_CASE("written files equal stdout output") {
  const auto dir = fixtures::scratch_dir("cli-out");
  const auto path = dir / "features.jsonl";
  const Run r = run("extract " + corpus_arg("corpus.jsonl") + " -o " + quote(path.string()), dir);
  CHECK(r.code == 0);
  CHECK(r.out.empty());
  CHECK(r.err.find("12 feature records from 12 examples") != std::string::npos);
  CHECK(slurp(path) == slurp(kFixtures / "golden" / "extract_pvs.jsonl"));
  fs::remove_all(dir);
}

TEST_CASE("exit codes") {
  const auto dir = fixtures::scratch_dir("cli-exit");
  CHECK(run("", dir).code == 1);
  CHECK(run("frobnicate", dir).code == 1);
  CHECK(run("extract", dir).code == 1);
  CHECK(run("extract --kind lines " + corpus_arg("corpus.jsonl"), dir).code == 1);
  CHECK(run("extract --corpus /nonexistent.jsonl", dir).code == 2);

  std::ofstream(dir / "empty.jsonl").close();
  const Run empty = run("extract --corpus " + quote((dir / "empty.jsonl").string()), dir);
  CHECK(empty.code == 2);
  CHECK(empty.err.find("empty") != std::string::npos);

  std::ofstream(dir / "bad.jsonl") << "{\"id\": \"a\", \"code\": \"x;\", \"label\": 3}\n";
  const Run bad = run("stats --corpus " + quote((dir / "bad.jsonl").string()), dir);
  CHECK(bad.code == 2);
  CHECK(bad.err.find("line 1") != std::string::npos);

  std::ofstream(dir / "mixed.jsonl")
      << "{\"id\": \"blank\", \"code\": \"   \", \"label\": 1}\n"
      << "{\"id\": \"ok\", \"code\": \"int f() { return 0; }\", \"label\": 0}\n";
  const Run mixed = run("extract --corpus " + quote((dir / "mixed.jsonl").string()), dir);
  CHECK(mixed.code == 0);
  CHECK(mixed.err.find("skipped blank") != std::string::npos);
  CHECK(mixed.out.find("\"id\":\"ok\"") != std::string::npos);

  CHECK(run("align " + corpus_arg("corpus.jsonl") + " --dumps " + quote(dir.string()) +
                " --out -",
            dir)
            .code == 1);
  CHECK(run("align " + corpus_arg("corpus.jsonl") + " --dumps " + quote(dir.string()) +
                " --metrics bogus --out " + quote((dir / "r.csv").string()),
            dir)
            .code == 1);
  CHECK(run("align " + corpus_arg("corpus.jsonl") + " --dumps " + quote(dir.string()) +
                " --out " + quote((dir / "r.csv").string()),
            dir)
            .code == 2);
  fs::remove_all(dir);
}

TEST_CASE("align and report end to end") {
  const auto dir = fixtures::scratch_dir("cli-align");
  const auto dumps = dir / "dumps";
  {
    bugsem::ModelDump d;
    d.example_id = "fig";
    d.tokens = fixtures::figure_tokens();
    const std::size_t n = d.tokens.size();
    d.attention = bugsem::AttentionTensor(2, 2, n);
    // Every row attends to "10" (input 8, AST token 7).
    for (std::size_t l = 0; l < 2; ++l) {
      for (std::size_t h = 0; h < 2; ++h) {
        for (std::size_t i = 0; i < n; ++i) d.attention.at(l, h, i, 8) = 1.0f;
      }
    }
    std::vector<double> attr(n, 0.0);
    for (std::size_t i = 5; i <= 9; ++i) attr[i] = 1.0;  // AST 5..8
    d.attributions["saliency"] = attr;
    bugsem::write_dump(dumps, d);
  }
  const auto report = dir / "run.csv";
  const Run a = run("-j 2 align " + corpus_arg("figure.jsonl") + " --dumps " +
                        quote(dumps.string()) +
                        " --metrics all --run r1 --dataset fig --out " +
                        quote(report.string()),
                    dir);
  REQUIRE(a.code == 0);
  CHECK(a.err.find("1 examples aligned") != std::string::npos);

  const auto records = bugsem::read_report(report, bugsem::ReportFormat::csv);
  // interpret (tool + mean), attention and pair_proportion per head, interaction.
  CHECK(records.size() == 2 + 4 + 4 + 1);
  for (const auto& r : records) {
    if (r.metric == bugsem::Metric::interpret) {
      // B' = AST {5,6,7,8}: ";" is shadowed by ");". Top-4 = {5,6,7,8}.
      CHECK(r.k == 4);
      CHECK(r.score == 1.0);
    }
    if (r.metric == bugsem::Metric::interaction) {
      // Cells (0,7),(1,7),(2,7) then token 2: {0,1,2,7} against {5,6,7,8}.
      CHECK(r.score == doctest::Approx(1.0 / 7.0));
    }
  }
  const std::string summary = slurp(dir / "run.summary.csv");
  CHECK(summary.find("r1,fig,interpret,mean,1,1,1,1,1,1,1") != std::string::npos);

  const Run head = run("report " + quote(report.string()) + " --view head", dir);
  CHECK(head.code == 0);
  CHECK(head.out.find("attention") != std::string::npos);
  const Run metric = run("report " + quote(report.string()), dir);
  CHECK(metric.code == 0);
  CHECK(metric.out.find("interaction") != std::string::npos);

  const auto json_report = dir / "run.json";
  const Run j = run("align " + corpus_arg("figure.jsonl") + " --dumps " +
                        quote(dumps.string()) + " --out " + quote(json_report.string()),
                    dir);
  REQUIRE(j.code == 0);
  const auto parsed = nlohmann::json::parse(slurp(json_report));
  CHECK(parsed["records"].size() == 2 + 4 + 1);
  CHECK(run("report " + quote(json_report.string()) + " --view example", dir).code == 0);
  fs::remove_all(dir);
}
