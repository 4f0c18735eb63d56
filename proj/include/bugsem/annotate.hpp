#pragma once

// PVS-annotated model inputs. Mark wraps every input token inside the PVS in
// begin/end marker tokens; Prepend copies the PVS tokens in front of the
// code behind a separator.

#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bugsem/ast.hpp"
#include "bugsem/bug_features.hpp"
#include "bugsem/token_align.hpp"

namespace bugsem {

enum class AnnotationMode { baseline, mark, prepend };

std::string_view to_string(AnnotationMode m);
AnnotationMode parse_annotation_mode(std::string_view s);

struct AnnotationOptions {
  std::string begin_marker = "<vul-b>";
  std::string end_marker = "<vul-e>";
  std::string separator = "[SEP]";
  std::size_t context_limit = 512;
  std::size_t prepend_limit = 100;
};

struct AnnotatedExample {
  std::string id;
  AnnotationMode mode = AnnotationMode::baseline;
  std::vector<std::string> tokens;
  // Original input-token index behind each output token; nullopt for
  // inserted markers and the separator. Prepended copies point at their
  // original too.
  std::vector<std::optional<std::size_t>> source;
  std::vector<std::size_t> b_extension;  // prepended block positions
  std::size_t marked = 0;                // input tokens wrapped in markers
  bool degenerate = false;               // prepend with an empty PVS block
};

/// Input-token indices whose AST token is in `bug`.
std::vector<std::size_t> input_tokens_in(const TokenAlignment& align,
                                         std::span<const std::size_t> bug);

/// Unchanged tokens, truncated to the context limit.
AnnotatedExample baseline_annotate(std::span<const InputToken> tokens,
                                   const AnnotationOptions& options = {});

AnnotatedExample mark_annotate(std::span<const InputToken> tokens,
                               const TokenAlignment& align, const BugFeatureSet& pvs,
                               const AnnotationOptions& options = {});

AnnotatedExample prepend_annotate(std::span<const InputToken> tokens,
                                  const TokenAlignment& align, const BugFeatureSet& pvs,
                                  const AnnotationOptions& options = {});

/// B (input-token indices of the unannotated example) moved into the
/// annotated index space, plus every prepended position.
std::vector<std::size_t> extend_bug_set_for_prepend(std::span<const std::size_t> bug,
                                                    const AnnotatedExample& annotated);

/// Tokenization used for an example; nullopt means "not available" and the
/// example is skipped.
using TokenSource = std::function<std::optional<std::vector<InputToken>>(
    const SourceFunction&, const Ast&)>;

/// Pre-tokenization mode: every AST terminal is one input token.
TokenSource ast_token_source();

struct TrainingRecord {
  AnnotatedExample example;
  Label label = Label::non_vulnerable;
};

struct TrainingCorpus {
  PvsVersion version = PvsVersion::v2;
  std::vector<TrainingRecord> records;  // corpus order
  std::vector<std::string> errors;      // "<id>: <reason>" per skipped example
};

/// Optional per-example PVS override (e.g. read from an `extract` file).
using PvsSource = std::function<std::optional<BugFeatureSet>(const SourceFunction&)>;

TrainingCorpus emit_training_corpus(const std::vector<SourceFunction>& corpus,
                                    AnnotationMode mode, const PvsRuleSet& rules,
                                    const AnnotationOptions& options,
                                    const TokenSource& tokens,
                                    const PvsSource& pvs_override = {});

/// One JSON object per line: id, label, mode, pvs_version, tokens,
/// b_extension.
void write_training_corpus(std::ostream& out, const TrainingCorpus& corpus);

}  // namespace bugsem
