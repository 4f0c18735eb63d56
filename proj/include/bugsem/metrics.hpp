#pragma once

// IoU-based alignment between model-important token sets M and bug sets B,
// plus the dataset-level aggregation of the resulting records.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bugsem/bug_features.hpp"
#include "bugsem/kernels.hpp"
#include "bugsem/matrix.hpp"
#include "bugsem/tensor.hpp"
#include "bugsem/token_align.hpp"

namespace bugsem {

enum class Metric {
  interpret,
  attention,
  interaction,
  pair_proportion,
  joint_prob,
  chain,
  chain_coverage,
  components
};

std::string_view to_string(Metric m);
Metric parse_metric(std::string_view s);

struct AlignmentRecord {
  std::string example_id;
  Metric metric = Metric::interpret;
  std::string tool;  // attribution tool, "mean" for the cross-tool mean
  std::optional<int> layer;
  std::optional<int> head;
  std::optional<int> path_id;
  std::optional<std::size_t> path_length;  // path node count, path metrics only
  std::size_t k = 0;
  double score = 0.0;

  bool operator==(const AlignmentRecord&) const = default;
};

/// Row order used by reports: example, metric, tool, layer, head, path.
bool record_less(const AlignmentRecord& a, const AlignmentRecord& b);

/// |M ∩ B| / |M ∪ B|. Inputs need not be sorted; duplicates are ignored.
double iou(std::span<const std::size_t> m, std::span<const std::size_t> b);

/// Indices of the k highest scores, ties to the lower index; ascending.
std::vector<std::size_t> top_k_tokens(std::span<const double> scores, std::size_t k);

/// Same, ranking only covered tokens.
std::vector<std::size_t> top_k_tokens(const AstScores& scores, std::size_t k);

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
};

/// The first `count` cells by descending value, ties by ascending (row, col).
std::vector<Cell> ranked_cells(const Matrix& m, std::size_t count);

/// Endpoints of the highest cells, taken in order until k tokens are
/// collected (row endpoint before column endpoint). Positions are matrix
/// rows; result ascending.
std::vector<std::size_t> top_k_incident_tokens(const Matrix& m, std::size_t k);

/// AST-index version over a compact AST-level matrix.
std::vector<std::size_t> top_k_incident_tokens(const AstMatrix& m, std::size_t k);

/// B without tokens the model never saw (beyond truncation).
std::vector<std::size_t> restrict_to(std::span<const std::size_t> bug,
                                     std::span<const std::size_t> covered_sorted);

struct InterpretResult {
  std::vector<std::pair<std::string, double>> per_tool;
  double mean = 0.0;
  std::size_t k = 0;
};

/// Per-tool IoU of top-k attributed tokens against B, and their mean.
/// k defaults to |B| after dropping uncovered tokens. Returns nullopt when
/// that leaves B empty.
std::optional<InterpretResult> alignment_interpret(
    const std::map<std::string, AstScores>& attributions,
    std::span<const std::size_t> bug, std::optional<std::size_t> fixed_k = {});

struct AttentionOptions {
  kernels::Pooling pooling = kernels::Pooling::block_mean;
  kernels::Backend backend = kernels::Backend::openmp;
  std::optional<std::size_t> fixed_k;
};

/// One record per (layer, head). Empty when B has no covered token.
std::vector<AlignmentRecord> alignment_attention(const AttentionTensor& attention,
                                                 const TokenAlignment& align,
                                                 const BugFeatureSet& bug,
                                                 const std::string& example_id,
                                                 const AttentionOptions& options = {});

/// Share of cells above theta whose two endpoints are both in B.
double pair_proportion(const AstMatrix& m, std::span<const std::size_t> bug,
                       double theta);

struct BoxStats {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Quantile by linear interpolation between order statistics placed at
/// (i - 0.5) / n, clamped at the ends.
double quantile(std::span<const double> sorted, double p);

BoxStats box_stats(std::vector<double> values);

enum class HeadReduce { mean, max };

struct ExampleRow {
  Metric metric = Metric::interpret;
  std::string tool;
  std::string example_id;
  std::optional<int> path_id;
  double value = 0.0;
  std::size_t records = 0;
};

struct HeadRow {
  Metric metric = Metric::interpret;
  std::string tool;
  std::optional<int> layer;
  std::optional<int> head;
  BoxStats stats;
};

struct MetricRow {
  Metric metric = Metric::interpret;
  std::string tool;
  BoxStats stats;  // over the per-example values
};

struct RecordSummary {
  std::vector<ExampleRow> per_example;
  std::vector<HeadRow> per_head;
  std::vector<MetricRow> per_metric;
};

/// Per-example view (layer/head records of one example and path reduced by
/// `reduce`) and per-head view (mean over examples). Independent of input
/// order.
RecordSummary aggregate_records(std::span<const AlignmentRecord> records,
                                HeadReduce reduce = HeadReduce::mean);

}  // namespace bugsem
