#pragma once

// File formats: the JSON-lines corpus, per-example model dumps, feature
// files written by `extract`, and alignment reports.
//
// Model dump layout for example <id> inside a dump directory:
//   <id>.tokens.json  {"example_id": ..., "tokens": [{"text", "start", "end"}]}
//                     start/end are code-point offsets into the normalized
//                     code, null for special tokens
//   <id>.attn.bin     "ATTN", u32 layers, u32 heads, u32 n, then
//                     layers*heads*n*n little-endian float32
//   <id>.attn.<l>.bin optional per-layer split, each with layers == 1
//   <id>.attr.json    {"<tool>": [n floats], ...}

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bugsem/ast.hpp"
#include "bugsem/bug_features.hpp"
#include "bugsem/metrics.hpp"
#include "bugsem/tensor.hpp"
#include "bugsem/token_align.hpp"

namespace bugsem {

std::vector<SourceFunction> read_corpus(std::istream& in);
std::vector<SourceFunction> load_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, std::span<const SourceFunction> corpus);

struct ModelDump {
  std::string example_id;
  std::vector<InputToken> tokens;
  AttentionTensor attention;  // empty when the dump has no attention file
  std::map<std::string, std::vector<double>> attributions;
  std::size_t nonstochastic_rows = 0;
};

inline constexpr char kAttentionMagic[4] = {'A', 'T', 'T', 'N'};

AttentionTensor read_attention(std::istream& in, std::size_t byte_size);
void write_attention(std::ostream& out, const AttentionTensor& t);

bool dump_exists(const std::filesystem::path& dir, const std::string& id);

/// Throws MissingFile when the token file is absent, CorruptTensor on bad
/// tensor headers or sizes.
ModelDump load_dump(const std::filesystem::path& dir, const std::string& id);
void write_dump(const std::filesystem::path& dir, const ModelDump& dump,
                bool split_layers = false);

std::vector<InputToken> read_input_tokens(std::istream& in);

/// One line of an `extract` output file.
struct FeatureRecord {
  std::string id;
  PvsVersion version = PvsVersion::v2;
  BugFeatureSet set;
  std::vector<std::string> texts;
};

void write_features(std::ostream& out, std::span<const FeatureRecord> records);
std::vector<FeatureRecord> read_features(std::istream& in);
std::vector<FeatureRecord> load_features(const std::filesystem::path& path);

enum class ReportFormat { csv, json };

ReportFormat parse_report_format(std::string_view s);
/// csv unless the extension is .json.
ReportFormat report_format_for(const std::filesystem::path& path);

struct ReportMeta {
  std::string run = "run";
  std::string dataset = "dataset";
};

struct SummaryRow {
  std::string run;
  std::string dataset;
  Metric metric = Metric::interpret;
  std::string tool;
  BoxStats stats;
};

/// Score distribution per (run, dataset, metric, tool).
std::vector<SummaryRow> summarize(std::span<const AlignmentRecord> records,
                                  const ReportMeta& meta);

/// Records sorted by (example, metric, tool, layer, head, path). CSV puts
/// the summary in <stem>.summary.csv next to `path`; JSON embeds it.
void write_report(std::span<const AlignmentRecord> records,
                  const std::filesystem::path& path, ReportFormat format,
                  const ReportMeta& meta = {});

std::vector<AlignmentRecord> read_report(const std::filesystem::path& path,
                                         ReportFormat format);

std::filesystem::path summary_path_for(const std::filesystem::path& csv_path);

/// RFC 4180 quoting as needed.
std::string csv_field(std::string_view s);
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace bugsem
