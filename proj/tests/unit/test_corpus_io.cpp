#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bugsem/corpus_io.hpp"
#include "bugsem/errors.hpp"
#include "fixtures.hpp"

using namespace bugsem;
namespace fs = std::filesystem;

namespace {

std::vector<SourceFunction> corpus_from(const std::string& text) {
  std::istringstream in(text);
  return read_corpus(in);
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

AlignmentRecord record(std::string id, Metric m, std::string tool, double score) {
  AlignmentRecord r;
  r.example_id = std::move(id);
  r.metric = m;
  r.tool = std::move(tool);
  r.k = 3;
  r.score = score;
  return r;
}

}  // namespace

TEST_CASE("corpus lines parse") {
  const auto c = corpus_from(
      "{\"id\": \"a\", \"code\": \"int f() { return 0; }\", \"label\": 1}\n"
      "\n"
      "{\"id\": 7, \"code\": \"void g() {}\", \"label\": false, \"dataset\": \"d2a\","
      " \"bug_lines\": [[1], [1, 1], [2, 3]]}\n");
  REQUIRE(c.size() == 2);
  CHECK(c[0].id == "a");
  CHECK(c[0].label == Label::vulnerable);
  CHECK(c[0].bug_line_traces.empty());
  CHECK(c[1].id == "7");
  CHECK(c[1].label == Label::non_vulnerable);
  CHECK(c[1].dataset == "d2a");
  CHECK(c[1].bug_line_traces.size() == 3);
  CHECK(c[1].bug_line_traces[2] == std::vector<int>{2, 3});

  std::ostringstream out;
  write_corpus(out, c);
  const auto back = corpus_from(out.str());
  REQUIRE(back.size() == 2);
  CHECK(back[1].bug_line_traces == c[1].bug_line_traces);
  CHECK(back[0].code == c[0].code);
}

TEST_CASE("corpus errors name the line") {
  const std::string ok = "{\"id\": \"a\", \"code\": \"x;\", \"label\": 0}\n";
  try {
    corpus_from(ok + ok);
    FAIL("duplicate id accepted");
  } catch (const SchemaError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
  }
  CHECK_THROWS_AS(corpus_from("{\"id\": \"a\", \"code\": \"x;\", \"label\": 2}"), LabelError);
  CHECK_THROWS_AS(corpus_from("{\"id\": \"a\", \"code\": \"x;\", \"label\": \"1\"}"), LabelError);
  CHECK_THROWS_AS(corpus_from("{\"id\": \"a\", \"code\": \"x;\"}"), LabelError);
  CHECK_THROWS_AS(corpus_from("{\"code\": \"x;\", \"label\": 0}"), SchemaError);
  CHECK_THROWS_AS(corpus_from("{\"id\": \"a\", \"code\": \"\", \"label\": 0}"), SchemaError);
  CHECK_THROWS_AS(corpus_from("not json"), SchemaError);
  CHECK_THROWS_AS(corpus_from("[1, 2]"), SchemaError);
  CHECK_THROWS_AS(
      corpus_from("{\"id\": \"a\", \"code\": \"x;\", \"label\": 0, \"bug_lines\": [[0]]}"),
      SchemaError);
  CHECK_THROWS_AS(
      corpus_from("{\"id\": \"a\", \"code\": \"x;\", \"label\": 0, \"bug_lines\": [[]]}"),
      SchemaError);
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl"), MissingFile);
}

TEST_CASE("dumps round-trip bit for bit") {
  const auto dir = fixtures::scratch_dir("dump");
  std::mt19937_64 rng(1);
  ModelDump d;
  d.example_id = "ex1";
  d.tokens = fixtures::figure_tokens();
  d.attention = fixtures::random_attention(rng, 3, 2, d.tokens.size());
  d.attention.at(0, 0, 0, 0) = -0.0f;
  d.attention.at(1, 1, 2, 3) = 1e-38f;
  d.attributions["saliency"] = std::vector<double>(d.tokens.size(), 0.125);
  d.attributions["ig"] = std::vector<double>(d.tokens.size(), -2.5);

  for (bool split : {false, true}) {
    const auto sub = dir / (split ? "split" : "whole");
    write_dump(sub, d, split);
    CHECK(dump_exists(sub, "ex1"));
    CHECK(fs::exists(sub / (split ? "ex1.attn.2.bin" : "ex1.attn.bin")));
    const ModelDump back = load_dump(sub, "ex1");
    CHECK(back.tokens.size() == d.tokens.size());
    for (std::size_t i = 0; i < d.tokens.size(); ++i) {
      CHECK(back.tokens[i].text == d.tokens[i].text);
      CHECK(back.tokens[i].char_span == d.tokens[i].char_span);
    }
    REQUIRE(back.attention.data.size() == d.attention.data.size());
    CHECK(std::memcmp(back.attention.data.data(), d.attention.data.data(),
                      d.attention.data.size() * sizeof(float)) == 0);
    CHECK(back.attention.layers == 3);
    CHECK(back.attributions == d.attributions);
    CHECK(back.nonstochastic_rows == 2);  // the two perturbed cells
  }
  fs::remove_all(dir);
}

TEST_CASE("tensor header is little-endian") {
  AttentionTensor t(1, 1, 1);
  t.data[0] = 1.0f;
  std::ostringstream out;
  write_attention(out, t);
  const std::string bytes = out.str();
  REQUIRE(bytes.size() == 20);
  CHECK(bytes.substr(0, 4) == "ATTN");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(static_cast<unsigned char>(bytes[19]) == 0x3F);
  CHECK(static_cast<unsigned char>(bytes[18]) == 0x80);
}

TEST_CASE("corrupt and missing dump files") {
  const auto dir = fixtures::scratch_dir("corrupt");
  ModelDump d;
  d.example_id = "e";
  d.tokens = fixtures::figure_tokens();
  d.attention = fixtures::uniform_attention(2, 1, d.tokens.size());
  write_dump(dir, d);

  SUBCASE("truncated tensor") {
    const auto p = dir / "e.attn.bin";
    const std::string bytes = slurp(p);
    write_file(p, bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_dump(dir, "e"), CorruptTensor);
  }
  SUBCASE("bad magic") {
    const auto p = dir / "e.attn.bin";
    std::string bytes = slurp(p);
    bytes[0] = 'X';
    write_file(p, bytes);
    CHECK_THROWS_AS(load_dump(dir, "e"), CorruptTensor);
  }
  SUBCASE("token count disagrees with the tensor") {
    write_file(dir / "e.tokens.json", "[{\"text\": \"a\", \"start\": 0, \"end\": 1}]");
    CHECK_THROWS_AS(load_dump(dir, "e"), CorruptTensor);
  }
  SUBCASE("half a span") {
    write_file(dir / "e.tokens.json", "[{\"text\": \"a\", \"start\": 0}]");
    CHECK_THROWS_AS(load_dump(dir, "e"), SchemaError);
  }
  SUBCASE("malformed token files") {
    write_file(dir / "e.tokens.json", "{\"toks\": []}");
    CHECK_THROWS_AS(load_dump(dir, "e"), SchemaError);
    write_file(dir / "e.tokens.json", "[{\"text\": \"a\", \"start\": \"0\", \"end\": 1}]");
    CHECK_THROWS_AS(load_dump(dir, "e"), SchemaError);
    write_file(dir / "e.tokens.json", "[3]");
    CHECK_THROWS_AS(load_dump(dir, "e"), SchemaError);
  }
  SUBCASE("attribution length") {
    write_file(dir / "e.attr.json", "{\"saliency\": [0.1, 0.2]}");
    CHECK_THROWS_AS(load_dump(dir, "e"), SchemaError);
    write_file(dir / "e.attr.json", "{\"saliency\": \"high\"}");
    CHECK_THROWS_AS(load_dump(dir, "e"), SchemaError);
  }
  SUBCASE("missing token file") {
    CHECK_FALSE(dump_exists(dir, "other"));
    CHECK_THROWS_AS(load_dump(dir, "other"), MissingFile);
  }
  SUBCASE("nonstochastic rows are counted") {
    d.attention.at(1, 0, 4, 4) += 0.5f;
    write_dump(dir, d);
    CHECK(load_dump(dir, "e").nonstochastic_rows == 1);
  }
  fs::remove_all(dir);
}

TEST_CASE("token files accept a bare array") {
  std::istringstream in(
      "[{\"text\": \"<s>\", \"start\": null, \"end\": null},"
      " {\"text\": \"a\", \"start\": 0, \"end\": 1}]");
  const auto t = read_input_tokens(in);
  REQUIRE(t.size() == 2);
  CHECK(t[0].special());
  CHECK(t[1].char_span == Span{0, 1});
  CHECK(t[1].index == 1);
}

TEST_CASE("feature files round-trip") {
  FeatureRecord a;
  a.id = "x";
  a.version = PvsVersion::v3;
  a.set.kind = FeatureKind::pvs;
  a.set.tokens = {1, 4};
  a.texts = {"->", "/"};
  FeatureRecord b;
  b.id = "y";
  b.set.kind = FeatureKind::buggy_path;
  b.set.path_id = 2;
  const std::vector<FeatureRecord> recs{a, b};
  std::ostringstream out;
  write_features(out, recs);
  std::istringstream in(out.str());
  const auto back = read_features(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0].version == PvsVersion::v3);
  CHECK(back[0].set.tokens == a.set.tokens);
  CHECK(back[0].texts == a.texts);
  CHECK_FALSE(back[0].set.path_id.has_value());
  CHECK(back[1].set.kind == FeatureKind::buggy_path);
  CHECK(back[1].set.path_id == 2);
  std::istringstream bad("{\"id\": \"x\", \"kind\": \"lines\", \"tokens\": []}");
  CHECK_THROWS_AS(read_features(bad), SchemaError);
}

TEST_CASE("csv quoting") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(split_csv_line("\"a,b\",c,,\"x\"\"y\"") ==
        std::vector<std::string>{"a,b", "c", "", "x\"y"});
}

TEST_CASE("reports round-trip in both formats") {
  const auto dir = fixtures::scratch_dir("report");
  std::vector<AlignmentRecord> recs;
  recs.push_back(record("b", Metric::interpret, "ig", 0.1));
  recs.push_back(record("a,1", Metric::interpret, "ig", 1.0 / 3.0));
  auto att = record("a,1", Metric::attention, "", 0.4);
  att.layer = 11;
  att.head = 0;
  recs.push_back(att);
  auto jp = record("a,1", Metric::joint_prob, "", 1.2345678901234567e-300);
  jp.path_id = 4;
  jp.path_length = 7;
  recs.push_back(jp);
  recs.push_back(record("c", Metric::interpret, "ig", 0.2));
  recs.push_back(record("d", Metric::interpret, "ig", 0.3));

  std::vector<AlignmentRecord> sorted = recs;
  std::stable_sort(sorted.begin(), sorted.end(), record_less);

  for (ReportFormat f : {ReportFormat::csv, ReportFormat::json}) {
    const auto path = dir / (f == ReportFormat::csv ? "r.csv" : "r.json");
    CHECK(report_format_for(path) == f);
    write_report(recs, path, f, {"run1", "d2a"});
    CHECK(read_report(path, f) == sorted);
  }
  CHECK(summary_path_for(dir / "r.csv") == dir / "r.summary.csv");
  const std::string summary = slurp(dir / "r.summary.csv");
  CHECK(summary.rfind("run,dataset,metric,tool,count,mean,median,q1,q3,min,max\n", 0) == 0);
  // interpret/ig holds {0.1, 1/3, 0.2, 0.3}.
  CHECK(summary.find("run1,d2a,interpret,ig,4,") != std::string::npos);

  const auto rows = summarize(recs, {"run1", "d2a"});
  REQUIRE(rows.size() == 3);
  const auto& ig = rows[0];
  CHECK(ig.metric == Metric::interpret);
  CHECK(ig.stats.q1 == doctest::Approx(0.15));
  CHECK(ig.stats.median == doctest::Approx(0.25));
  CHECK(ig.stats.q3 == doctest::Approx((0.3 + 1.0 / 3.0) / 2.0));

  const auto j = nlohmann::json::parse(slurp(dir / "r.json"));
  CHECK(j["meta"]["run"] == "run1");
  CHECK(j["records"].size() == 6);
  CHECK(j["summary"].size() == 3);

  CHECK_THROWS_AS(write_report({}, dir / "e.csv", ReportFormat::csv), DataError);
  std::vector<AlignmentRecord> bad{record("z", Metric::interpret, "ig", std::nan(""))};
  CHECK_THROWS_AS(write_report(bad, dir / "n.csv", ReportFormat::csv), DataError);
  write_file(dir / "x.csv", "header\nb,nope,ig,,,,,3,0.1\n");
  CHECK_THROWS_AS(read_report(dir / "x.csv", ReportFormat::csv), SchemaError);
  CHECK_THROWS_AS(parse_report_format("xml"), ArgumentError);
  fs::remove_all(dir);
}
