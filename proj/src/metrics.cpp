#include "bugsem/metrics.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "bugsem/errors.hpp"

namespace bugsem {

namespace {

double rank_value(double v) {
  return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
}

std::vector<std::size_t> sorted_unique(std::span<const std::size_t> v) {
  std::vector<std::size_t> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool cell_before(const Cell& a, const Cell& b) {
  const double va = rank_value(a.value);
  const double vb = rank_value(b.value);
  if (va != vb) return va > vb;
  return std::tie(a.row, a.col) < std::tie(b.row, b.col);
}

// Opt keys compare with "absent" first.
template <typename T>
int compare_opt(const std::optional<T>& a, const std::optional<T>& b) {
  if (a == b) return 0;
  return a < b ? -1 : 1;
}

}  // namespace

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::interpret: return "interpret";
    case Metric::attention: return "attention";
    case Metric::interaction: return "interaction";
    case Metric::pair_proportion: return "pair_proportion";
    case Metric::joint_prob: return "joint_prob";
    case Metric::chain: return "chain";
    case Metric::chain_coverage: return "chain_coverage";
    case Metric::components: return "components";
  }
  return "interpret";
}

Metric parse_metric(std::string_view s) {
  for (Metric m : {Metric::interpret, Metric::attention, Metric::interaction,
                   Metric::pair_proportion, Metric::joint_prob, Metric::chain,
                   Metric::chain_coverage, Metric::components}) {
    if (to_string(m) == s) return m;
  }
  throw ArgumentError("unknown metric '" + std::string(s) + "'");
}

bool record_less(const AlignmentRecord& a, const AlignmentRecord& b) {
  if (a.example_id != b.example_id) return a.example_id < b.example_id;
  if (a.metric != b.metric) return a.metric < b.metric;
  if (a.tool != b.tool) return a.tool < b.tool;
  if (int c = compare_opt(a.layer, b.layer)) return c < 0;
  if (int c = compare_opt(a.head, b.head)) return c < 0;
  if (int c = compare_opt(a.path_id, b.path_id)) return c < 0;
  if (a.k != b.k) return a.k < b.k;
  return a.score < b.score;
}

double iou(std::span<const std::size_t> m, std::span<const std::size_t> b) {
  const auto ms = sorted_unique(m);
  const auto bs = sorted_unique(b);
  if (ms.empty() && bs.empty()) throw BothEmpty("iou of two empty sets");
  std::size_t inter = 0;
  auto i = ms.begin();
  auto j = bs.begin();
  while (i != ms.end() && j != bs.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++inter;
      ++i;
      ++j;
    }
  }
  const std::size_t uni = ms.size() + bs.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::size_t> top_k_tokens(std::span<const double> scores, std::size_t k) {
  if (k < 1 || k > scores.size()) {
    throw KOutOfRange("k=" + std::to_string(k) + " with " +
                      std::to_string(scores.size()) + " scored tokens");
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto before = [&](std::size_t a, std::size_t b) {
    const double va = rank_value(scores[a]);
    const double vb = rank_value(scores[b]);
    return va != vb ? va > vb : a < b;
  };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   idx.end(), before);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::size_t> top_k_tokens(const AstScores& scores, std::size_t k) {
  std::vector<std::size_t> positions;
  std::vector<double> values;
  for (std::size_t i = 0; i < scores.values.size(); ++i) {
    if (!scores.covered[i]) continue;
    positions.push_back(i);
    values.push_back(scores.values[i]);
  }
  auto picked = top_k_tokens(values, k);
  for (auto& p : picked) p = positions[p];
  return picked;
}

std::vector<Cell> ranked_cells(const Matrix& m, std::size_t count) {
  std::vector<Cell> cells;
  cells.reserve(m.rows() * m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) cells.push_back({r, c, m(r, c)});
  }
  count = std::min(count, cells.size());
  if (count < cells.size()) {
    std::nth_element(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(count),
                     cells.end(), cell_before);
    cells.resize(count);
  }
  std::sort(cells.begin(), cells.end(), cell_before);
  return cells;
}

std::vector<std::size_t> top_k_incident_tokens(const Matrix& m, std::size_t k) {
  const std::size_t size = m.rows();
  if (m.rows() != m.cols()) throw ArgumentError("attention matrix is not square");
  if (k < 1 || k > size) {
    throw KOutOfRange("k=" + std::to_string(k) + " with " + std::to_string(size) +
                      " tokens");
  }
  const std::size_t total = size * size;
  // Most of the time k tokens come from about k/2 cells; widen only if the
  // top cells keep revisiting the same tokens.
  std::size_t window = std::min(total, std::max<std::size_t>(2 * k, 16));
  for (;;) {
    const auto cells = ranked_cells(m, window);
    std::vector<char> taken(size, 0);
    std::vector<std::size_t> picked;
    auto add = [&](std::size_t t) {
      if (picked.size() < k && !taken[t]) {
        taken[t] = 1;
        picked.push_back(t);
      }
    };
    for (const Cell& c : cells) {
      add(c.row);
      add(c.col);
      if (picked.size() >= k) break;
    }
    if (picked.size() >= k || window == total) {
      std::sort(picked.begin(), picked.end());
      return picked;
    }
    window = std::min(total, window * 4);
  }
}

std::vector<std::size_t> top_k_incident_tokens(const AstMatrix& m, std::size_t k) {
  auto picked = top_k_incident_tokens(m.values, k);
  for (auto& p : picked) p = m.tokens[p];
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::vector<std::size_t> restrict_to(std::span<const std::size_t> bug,
                                     std::span<const std::size_t> covered_sorted) {
  std::vector<std::size_t> out;
  for (std::size_t t : sorted_unique(bug)) {
    if (std::binary_search(covered_sorted.begin(), covered_sorted.end(), t)) {
      out.push_back(t);
    }
  }
  return out;
}

std::optional<InterpretResult> alignment_interpret(
    const std::map<std::string, AstScores>& attributions,
    std::span<const std::size_t> bug, std::optional<std::size_t> fixed_k) {
  if (attributions.empty()) return std::nullopt;
  const AstScores& first = attributions.begin()->second;
  std::vector<std::size_t> covered;
  for (std::size_t i = 0; i < first.covered.size(); ++i) {
    if (first.covered[i]) covered.push_back(i);
  }
  const auto b = restrict_to(bug, covered);
  if (b.empty()) return std::nullopt;

  InterpretResult result;
  result.k = std::min(fixed_k.value_or(b.size()), covered.size());
  double sum = 0.0;
  for (const auto& [tool, scores] : attributions) {
    const double score = iou(top_k_tokens(scores, result.k), b);
    result.per_tool.emplace_back(tool, score);
    sum += score;
  }
  result.mean = sum / static_cast<double>(result.per_tool.size());
  return result;
}

std::vector<AlignmentRecord> alignment_attention(const AttentionTensor& attention,
                                                 const TokenAlignment& align,
                                                 const BugFeatureSet& bug,
                                                 const std::string& example_id,
                                                 const AttentionOptions& options) {
  if (attention.n != align.input_size()) {
    throw LengthMismatch("attention size " + std::to_string(attention.n) +
                         " != input token count " +
                         std::to_string(align.input_size()));
  }
  const auto covered = align.covered();
  const auto b = restrict_to(bug.tokens, covered);
  if (b.empty()) return {};
  const std::size_t k = std::min(options.fixed_k.value_or(b.size()), covered.size());
  const auto groups = align.groups();

  const std::size_t heads = attention.layers * attention.heads;
  std::vector<AlignmentRecord> out(heads);
  const auto count = static_cast<std::ptrdiff_t>(heads);
  // Heads are independent; each one pools with the serial kernel so the
  // outer loop owns the threads.
#pragma omp parallel for schedule(dynamic, 1) if (options.backend == kernels::Backend::openmp)
  for (std::ptrdiff_t idx = 0; idx < count; ++idx) {
    const std::size_t l = static_cast<std::size_t>(idx) / attention.heads;
    const std::size_t h = static_cast<std::size_t>(idx) % attention.heads;
    AstMatrix m;
    m.tokens = covered;
    m.values = kernels::serial::pool(attention.head(l, h), attention.n, groups,
                                     covered.size(), options.pooling);
    AlignmentRecord& r = out[static_cast<std::size_t>(idx)];
    r.example_id = example_id;
    r.metric = Metric::attention;
    r.layer = static_cast<int>(l);
    r.head = static_cast<int>(h);
    r.path_id = bug.path_id;
    r.k = k;
    r.score = iou(top_k_incident_tokens(m, k), b);
  }
  return out;
}

double pair_proportion(const AstMatrix& m, std::span<const std::size_t> bug,
                       double theta) {
  const auto b = sorted_unique(bug);
  std::vector<char> in_bug(m.size(), 0);
  for (std::size_t p = 0; p < m.size(); ++p) {
    in_bug[p] = std::binary_search(b.begin(), b.end(), m.tokens[p]) ? 1 : 0;
  }
  std::size_t high = 0;
  std::size_t inside = 0;
  for (std::size_t r = 0; r < m.size(); ++r) {
    for (std::size_t c = 0; c < m.size(); ++c) {
      if (!(m.values(r, c) > theta)) continue;
      ++high;
      if (in_bug[r] && in_bug[c]) ++inside;
    }
  }
  if (high == 0) throw NoHighAttention("no attention cell exceeds theta");
  return static_cast<double>(inside) / static_cast<double>(high);
}

double quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) return 0.0;
  const double n = static_cast<double>(sorted.size());
  const double h = n * p + 0.5;  // 1-based position
  if (h <= 1.0) return sorted.front();
  if (h >= n) return sorted.back();
  const double lo = std::floor(h);
  const auto i = static_cast<std::size_t>(lo) - 1;
  return sorted[i] + (h - lo) * (sorted[i + 1] - sorted[i]);
}

BoxStats box_stats(std::vector<double> values) {
  BoxStats s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  s.median = quantile(values, 0.5);
  s.q1 = quantile(values, 0.25);
  s.q3 = quantile(values, 0.75);
  s.min = values.front();
  s.max = values.back();
  return s;
}

RecordSummary aggregate_records(std::span<const AlignmentRecord> records,
                                HeadReduce reduce) {
  std::vector<AlignmentRecord> sorted(records.begin(), records.end());
  std::sort(sorted.begin(), sorted.end(), record_less);

  RecordSummary summary;

  using ExampleKey =
      std::tuple<Metric, std::string, std::string, std::optional<int>>;
  std::map<ExampleKey, std::vector<double>> by_example;
  using HeadKey =
      std::tuple<Metric, std::string, std::optional<int>, std::optional<int>>;
  std::map<HeadKey, std::vector<double>> by_head;

  for (const auto& r : sorted) {
    by_example[{r.metric, r.tool, r.example_id, r.path_id}].push_back(r.score);
    by_head[{r.metric, r.tool, r.layer, r.head}].push_back(r.score);
  }

  std::map<std::pair<Metric, std::string>, std::vector<double>> by_metric;
  for (const auto& [key, values] : by_example) {
    ExampleRow row;
    std::tie(row.metric, row.tool, row.example_id, row.path_id) = key;
    row.records = values.size();
    if (reduce == HeadReduce::max) {
      row.value = *std::max_element(values.begin(), values.end());
    } else {
      double s = 0.0;
      for (double v : values) s += v;
      row.value = s / static_cast<double>(values.size());
    }
    by_metric[{row.metric, row.tool}].push_back(row.value);
    summary.per_example.push_back(std::move(row));
  }
  for (const auto& [key, values] : by_head) {
    HeadRow row;
    std::tie(row.metric, row.tool, row.layer, row.head) = key;
    row.stats = box_stats(values);
    summary.per_head.push_back(std::move(row));
  }
  for (const auto& [key, values] : by_metric) {
    summary.per_metric.push_back({key.first, key.second, box_stats(values)});
  }
  return summary;
}

}  // namespace bugsem
