#pragma once

// Corpus-level drivers behind the CLI subcommands. Each runs examples in
// parallel, merges results in corpus order, and collects per-example
// failures as "<id>: <reason>" strings instead of aborting.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bugsem/annotate.hpp"
#include "bugsem/bug_features.hpp"
#include "bugsem/corpus_io.hpp"
#include "bugsem/kernels.hpp"
#include "bugsem/metrics.hpp"

namespace bugsem {

struct ExtractOptions {
  FeatureKind kind = FeatureKind::pvs;
  PvsRuleSet rules = PvsRuleSet::preset(PvsVersion::v2);
};

struct ExtractResult {
  std::vector<FeatureRecord> records;  // corpus order, then path_id
  std::vector<std::string> errors;
};

/// PVS mode emits one record per parsed example (possibly empty); buggy-path
/// mode emits one per trace and nothing for trace-less examples.
ExtractResult extract_features(const std::vector<SourceFunction>& corpus,
                               const ExtractOptions& options);

struct AlignOptions {
  std::set<Metric> metrics = {Metric::interpret, Metric::attention, Metric::interaction};
  std::optional<std::size_t> fixed_k;
  double theta = 0.1;
  std::optional<std::size_t> top_t;  // default_top_t when unset
  kernels::Pooling pooling = kernels::Pooling::block_mean;
  kernels::Backend backend = kernels::Backend::openmp;
};

struct AlignResult {
  std::vector<AlignmentRecord> records;  // sorted by record_less
  std::vector<std::string> errors;
  std::size_t examples = 0;        // examples with at least one record
  std::size_t missing_dumps = 0;
  std::size_t empty_bug_sets = 0;  // feature sets skipped because B is empty
  std::size_t nonstochastic_rows = 0;
};

/// Metrics for every feature set with a nonempty B and a dump. Feature
/// token indices refer to the AST of the matching corpus example.
AlignResult align_corpus(const std::vector<SourceFunction>& corpus,
                         const std::vector<FeatureRecord>& features,
                         const std::filesystem::path& dump_dir,
                         const AlignOptions& options);

/// Input tokens from `<dir>/<id>.tokens.json`; nullopt when absent.
TokenSource dump_token_source(const std::filesystem::path& dir);

/// Table-style corpus statistics. Means are absent for a label class with
/// no parsed example, and the ratio needs both classes.
struct CorpusStats {
  std::size_t examples = 0;
  std::size_t vulnerable = 0;
  std::size_t non_vulnerable = 0;
  std::size_t skipped = 0;  // unparseable
  std::optional<double> mean_pvs_vulnerable;
  std::optional<double> mean_pvs_non_vulnerable;
  std::optional<double> ratio;
  std::size_t programs_with_traces = 0;
  std::size_t traces = 0;
  double mean_traces = 0.0;  // over programs with at least one trace
};

CorpusStats corpus_statistics(const std::vector<SourceFunction>& corpus,
                              const PvsRuleSet& rules);

}  // namespace bugsem
