#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bugsem/annotate.hpp"
#include "bugsem/corpus_io.hpp"
#include "bugsem/errors.hpp"
#include "bugsem/interaction.hpp"
#include "bugsem/pipeline.hpp"

namespace fs = std::filesystem;
using namespace bugsem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct Common {
  std::string corpus;
  std::string pvs_version = "v2";
  std::string rules;
  std::string out = "-";

  PvsRuleSet rule_set() const {
    if (!rules.empty()) return load_rules(rules);
    return PvsRuleSet::preset(parse_pvs_version(pvs_version));
  }
};

// Writes to the named file, or stdout for "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path != "-") {
      if (fs::path(path).has_parent_path()) {
        fs::create_directories(fs::path(path).parent_path());
      }
      file_.open(path);
      if (!file_) throw DataError("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }
  void close() {
    if (file_.is_open()) {
      file_.close();
      if (!file_) throw DataError("write failed");
    } else {
      std::cout.flush();
    }
  }

 private:
  std::ofstream file_;
};

void report_errors(const std::vector<std::string>& errors) {
  for (const auto& e : errors) std::cerr << "skipped " << e << '\n';
}

std::vector<SourceFunction> require_corpus(const std::string& path) {
  auto corpus = load_corpus(path);
  if (corpus.empty()) throw DataError("corpus " + path + " is empty");
  return corpus;
}

std::vector<FeatureRecord> features_for(const Common& c, const std::string& features_path,
                                        FeatureKind kind,
                                        const std::vector<SourceFunction>& corpus) {
  if (!features_path.empty()) return load_features(features_path);
  ExtractOptions opt;
  opt.kind = kind;
  opt.rules = c.rule_set();
  auto res = extract_features(corpus, opt);
  report_errors(res.errors);
  return std::move(res.records);
}

std::set<Metric> parse_metrics(const std::vector<std::string>& names) {
  std::set<Metric> out;
  for (const auto& n : names) {
    if (n == "all") {
      for (Metric m : {Metric::interpret, Metric::attention, Metric::interaction,
                       Metric::pair_proportion, Metric::joint_prob, Metric::chain,
                       Metric::chain_coverage, Metric::components}) {
        out.insert(m);
      }
    } else {
      out.insert(parse_metric(n));
    }
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string opt_str(const std::optional<int>& v) {
  return v ? std::to_string(*v) : std::string();
}

void write_stats_columns(std::ostream& out, const BoxStats& s) {
  out << s.count << ',' << fmt(s.mean) << ',' << fmt(s.median) << ',' << fmt(s.q1) << ','
      << fmt(s.q3) << ',' << fmt(s.min) << ',' << fmt(s.max);
}

constexpr const char* kStatsHeader = "count,mean,median,q1,q3,min,max";

int cmd_extract(const Common& c, const std::string& kind) {
  const auto corpus = require_corpus(c.corpus);
  ExtractOptions opt;
  opt.kind = parse_feature_kind(kind);
  opt.rules = c.rule_set();
  const auto res = extract_features(corpus, opt);
  report_errors(res.errors);
  if (res.errors.size() == corpus.size()) {
    throw DataError("no example of " + c.corpus + " could be processed");
  }
  Output out(c.out);
  write_features(out.stream(), res.records);
  out.close();
  std::cerr << res.records.size() << " feature records from " << corpus.size()
            << " examples\n";
  return 0;
}

struct AlignArgs {
  std::string dumps;
  std::string features;
  std::string kind = "pvs";
  std::vector<std::string> metrics = {"interpret", "attention", "interaction"};
  std::optional<std::size_t> k;
  double theta = 0.1;
  std::optional<std::size_t> top_t;
  std::string pooling = "block-mean";
  std::string format;
  std::string run = "run";
  std::string dataset = "dataset";
};

kernels::Pooling parse_pooling(const std::string& s) {
  if (s == "block-mean") return kernels::Pooling::block_mean;
  if (s == "source-mean-target-sum") return kernels::Pooling::source_mean_target_sum;
  throw ArgumentError("unknown pooling '" + s + "'");
}

int cmd_align(const Common& c, const AlignArgs& a) {
  if (c.out == "-") throw ArgumentError("align needs --out");
  const auto corpus = require_corpus(c.corpus);
  const auto features = features_for(c, a.features, parse_feature_kind(a.kind), corpus);

  AlignOptions opt;
  opt.metrics = parse_metrics(a.metrics);
  opt.fixed_k = a.k;
  opt.theta = a.theta;
  opt.top_t = a.top_t;
  opt.pooling = parse_pooling(a.pooling);
  const auto res = align_corpus(corpus, features, a.dumps, opt);
  report_errors(res.errors);
  std::cerr << res.examples << " examples aligned, " << res.records.size()
            << " records, " << res.missing_dumps << " missing dumps, "
            << res.empty_bug_sets << " empty bug sets skipped\n";
  if (res.nonstochastic_rows > 0) {
    std::cerr << "warning: " << res.nonstochastic_rows
              << " attention rows deviate from 1 by more than 1e-3\n";
  }
  if (res.records.empty()) throw DataError("no alignment records: nothing to report");

  const fs::path path = c.out;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const ReportFormat format =
      a.format.empty() ? report_format_for(path) : parse_report_format(a.format);
  write_report(res.records, path, format, {a.run, a.dataset});
  return 0;
}

struct AnnotateArgs {
  std::string mode = "baseline";
  std::string dumps;
  std::string features;
  AnnotationOptions options;
};

int cmd_annotate(const Common& c, const AnnotateArgs& a) {
  const auto corpus = require_corpus(c.corpus);
  const PvsRuleSet rules = c.rule_set();
  const TokenSource tokens = a.dumps.empty() ? ast_token_source() : dump_token_source(a.dumps);

  PvsSource pvs;
  std::map<std::string, BugFeatureSet> overrides;
  if (!a.features.empty()) {
    for (auto& f : load_features(a.features)) {
      if (f.set.kind == FeatureKind::pvs) overrides[f.id] = std::move(f.set);
    }
    pvs = [&overrides](const SourceFunction& fn) -> std::optional<BugFeatureSet> {
      auto it = overrides.find(fn.id);
      if (it == overrides.end()) return std::nullopt;
      return it->second;
    };
  }

  const auto res = emit_training_corpus(corpus, parse_annotation_mode(a.mode), rules,
                                        a.options, tokens, pvs);
  report_errors(res.errors);
  if (res.records.empty()) throw DataError("no example could be annotated");
  Output out(c.out);
  write_training_corpus(out.stream(), res);
  out.close();
  return 0;
}

int cmd_stats(const Common& c, bool json) {
  const auto corpus = require_corpus(c.corpus);
  const auto st = corpus_statistics(corpus, c.rule_set());
  Output out(c.out);
  auto& os = out.stream();
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  if (json) {
    nlohmann::ordered_json j;
    j["examples"] = st.examples;
    j["vulnerable"] = st.vulnerable;
    j["non_vulnerable"] = st.non_vulnerable;
    j["skipped"] = st.skipped;
    j["mean_pvs_vulnerable"] = opt(st.mean_pvs_vulnerable);
    j["mean_pvs_non_vulnerable"] = opt(st.mean_pvs_non_vulnerable);
    j["pvs_ratio"] = opt(st.ratio);
    j["programs_with_traces"] = st.programs_with_traces;
    j["traces"] = st.traces;
    j["mean_traces"] = st.mean_traces;
    os << j.dump(2) << '\n';
  } else {
    auto show = [](const std::optional<double>& v) {
      if (!v) return std::string("n/a");
      std::ostringstream s;
      s << std::fixed << std::setprecision(2) << *v;
      return s.str();
    };
    os << "examples                " << st.examples << '\n'
       << "vulnerable              " << st.vulnerable << '\n'
       << "non-vulnerable          " << st.non_vulnerable << '\n'
       << "unparseable             " << st.skipped << '\n'
       << "mean |PVS| vulnerable   " << show(st.mean_pvs_vulnerable) << '\n'
       << "mean |PVS| non-vuln     " << show(st.mean_pvs_non_vulnerable) << '\n'
       << "Vul:Non-vul ratio       " << show(st.ratio) << '\n'
       << "programs with traces    " << st.programs_with_traces << '\n'
       << "mean traces per program "
       << show(st.programs_with_traces ? std::optional<double>(st.mean_traces)
                                       : std::nullopt)
       << '\n';
  }
  out.close();
  return 0;
}

int cmd_report(const std::string& in_path, const std::string& format,
               const std::string& view, const std::string& reduce,
               const std::string& out_path) {
  const ReportFormat fmt_in =
      format.empty() ? report_format_for(in_path) : parse_report_format(format);
  const auto records = read_report(in_path, fmt_in);
  if (records.empty()) throw DataError("report " + in_path + " has no records");
  HeadReduce hr = HeadReduce::mean;
  if (reduce == "max") {
    hr = HeadReduce::max;
  } else if (reduce != "mean") {
    throw ArgumentError("unknown head reduction '" + reduce + "'");
  }

  Output out(out_path);
  auto& os = out.stream();
  if (view == "length") {
    os << "path_length," << kStatsHeader << '\n';
    for (const auto& b : bucket_by_path_length(records)) {
      os << b.path_length << ',';
      write_stats_columns(os, b.stats);
      os << '\n';
    }
    out.close();
    return 0;
  }
  const auto summary = aggregate_records(records, hr);
  if (view == "example") {
    os << "metric,tool,example_id,path_id,value,records\n";
    for (const auto& r : summary.per_example) {
      os << to_string(r.metric) << ',' << csv_field(r.tool) << ','
         << csv_field(r.example_id) << ',' << opt_str(r.path_id) << ',' << fmt(r.value)
         << ',' << r.records << '\n';
    }
  } else if (view == "head") {
    os << "metric,tool,layer,head," << kStatsHeader << '\n';
    for (const auto& r : summary.per_head) {
      os << to_string(r.metric) << ',' << csv_field(r.tool) << ',' << opt_str(r.layer)
         << ',' << opt_str(r.head) << ',';
      write_stats_columns(os, r.stats);
      os << '\n';
    }
  } else if (view == "metric") {
    os << "metric,tool," << kStatsHeader << '\n';
    for (const auto& r : summary.per_metric) {
      os << to_string(r.metric) << ',' << csv_field(r.tool) << ',';
      write_stats_columns(os, r.stats);
      os << '\n';
    }
  } else {
    throw ArgumentError("unknown view '" + view + "'");
  }
  out.close();
  return 0;
}

int default_jobs() {
  if (const char* env = std::getenv("BUGSEM_JOBS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
    std::cerr << "ignoring invalid BUGSEM_JOBS='" << env << "'\n";
  }
  return 0;
}

void add_common(CLI::App* cmd, Common& c, bool with_rules = true) {
  cmd->add_option("--corpus", c.corpus, "JSON-lines corpus")->required();
  if (with_rules) {
    cmd->add_option("--pvs-version", c.pvs_version, "PVS rule preset")
        ->check(CLI::IsMember({"v1", "v2", "v3"}))
        ->capture_default_str();
    cmd->add_option("--rules", c.rules, "PVS rule file (overrides --pvs-version)")
        ->check(CLI::ExistingFile);
  }
  cmd->add_option("-o,--out", c.out, "output path, - for stdout")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bug-semantics alignment toolkit for vulnerability-detection models"};
  app.require_subcommand(1);
  int jobs = default_jobs();
  app.add_option("-j,--jobs", jobs, "worker threads (default: BUGSEM_JOBS or all cores)");

  Common common;

  std::string kind = "pvs";
  auto* extract = app.add_subcommand("extract", "compute PVS or buggy-path token sets");
  add_common(extract, common);
  extract->add_option("--kind", kind, "feature kind")
      ->check(CLI::IsMember({"pvs", "buggy-path"}))
      ->capture_default_str();

  AlignArgs align_args;
  auto* align = app.add_subcommand("align", "score model dumps against bug sets");
  add_common(align, common);
  align->add_option("--dumps", align_args.dumps, "model dump directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  align->add_option("--features", align_args.features, "feature file from extract")
      ->check(CLI::ExistingFile);
  align->add_option("--kind", align_args.kind, "feature kind when extracting on the fly")
      ->check(CLI::IsMember({"pvs", "buggy-path"}))
      ->capture_default_str();
  align->add_option("--metrics", align_args.metrics, "metrics to compute, or all")
      ->delimiter(',')
      ->capture_default_str();
  align->add_option("-k,--k", align_args.k, "fixed k instead of |B|")
      ->check(CLI::PositiveNumber);
  align->add_option("--theta", align_args.theta, "pair_proportion threshold")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  align->add_option("--top-t", align_args.top_t, "top-t cells for chain/components")
      ->check(CLI::PositiveNumber);
  align->add_option("--pooling", align_args.pooling, "attention pooling")
      ->check(CLI::IsMember({"block-mean", "source-mean-target-sum"}))
      ->capture_default_str();
  align->add_option("--format", align_args.format, "csv or json (default: by extension)")
      ->check(CLI::IsMember({"csv", "json"}));
  align->add_option("--run", align_args.run, "run label for the summary")
      ->capture_default_str();
  align->add_option("--dataset", align_args.dataset, "dataset label for the summary")
      ->capture_default_str();

  AnnotateArgs ann;
  auto* annotate = app.add_subcommand("annotate", "write an annotated training corpus");
  add_common(annotate, common);
  annotate->add_option("--mode", ann.mode, "annotation mode")
      ->check(CLI::IsMember({"baseline", "mark", "prepend"}))
      ->capture_default_str();
  annotate->add_option("--dumps", ann.dumps,
                       "dump directory with token files (default: AST tokens)")
      ->check(CLI::ExistingDirectory);
  annotate->add_option("--features", ann.features, "PVS feature file from extract")
      ->check(CLI::ExistingFile);
  annotate->add_option("--begin-marker", ann.options.begin_marker)->capture_default_str();
  annotate->add_option("--end-marker", ann.options.end_marker)->capture_default_str();
  annotate->add_option("--separator", ann.options.separator)->capture_default_str();
  annotate->add_option("--context-limit", ann.options.context_limit)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  annotate->add_option("--prepend-limit", ann.options.prepend_limit)
      ->capture_default_str();

  bool stats_json = false;
  auto* stats = app.add_subcommand("stats", "PVS sizes per label and trace counts");
  add_common(stats, common);
  stats->add_flag("--json", stats_json, "print JSON instead of a table");

  std::string report_in;
  std::string report_format;
  std::string report_view = "metric";
  std::string head_reduce = "mean";
  std::string report_out = "-";
  auto* report = app.add_subcommand("report", "summary views of an alignment report");
  report->add_option("report", report_in, "report written by align")
      ->required()
      ->check(CLI::ExistingFile);
  report->add_option("--format", report_format, "csv or json (default: by extension)")
      ->check(CLI::IsMember({"csv", "json"}));
  report->add_option("--view", report_view, "example, head, metric or length")
      ->check(CLI::IsMember({"example", "head", "metric", "length"}))
      ->capture_default_str();
  report->add_option("--head-reduce", head_reduce, "per-example reduction over heads")
      ->check(CLI::IsMember({"mean", "max"}))
      ->capture_default_str();
  report->add_option("-o,--out", report_out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }
  if (jobs > 0) omp_set_num_threads(jobs);

  try {
    if (*extract) return cmd_extract(common, kind);
    if (*align) return cmd_align(common, align_args);
    if (*annotate) return cmd_annotate(common, ann);
    if (*stats) return cmd_stats(common, stats_json);
    if (*report) {
      return cmd_report(report_in, report_format, report_view, head_reduce, report_out);
    }
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
