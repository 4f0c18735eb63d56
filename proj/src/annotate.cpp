#include "bugsem/annotate.hpp"

#include <omp.h>

#include <algorithm>

#include <json.hpp>

#include "bugsem/errors.hpp"

namespace bugsem {

namespace {

// [0, lead) special prefix, [lead, trail) code, [trail, n) special suffix.
struct Layout {
  std::size_t lead = 0;
  std::size_t trail = 0;
};

Layout layout_of(std::span<const InputToken> tokens) {
  Layout l;
  while (l.lead < tokens.size() && tokens[l.lead].special()) ++l.lead;
  l.trail = tokens.size();
  while (l.trail > l.lead && tokens[l.trail - 1].special()) --l.trail;
  return l;
}

void push(AnnotatedExample& ex, const std::string& text,
          std::optional<std::size_t> source) {
  ex.tokens.push_back(text);
  ex.source.push_back(source);
}

void push_range(AnnotatedExample& ex, std::span<const InputToken> tokens,
                std::size_t begin, std::size_t end) {
  for (std::size_t i = begin; i < end; ++i) push(ex, tokens[i].text, i);
}

std::size_t saturating_sub(std::size_t a, std::size_t b) { return a > b ? a - b : 0; }

std::vector<char> pvs_mask(std::span<const InputToken> tokens,
                           const TokenAlignment& align, const BugFeatureSet& pvs) {
  if (align.input_size() != tokens.size()) {
    throw LengthMismatch("alignment does not match the input tokens");
  }
  std::vector<char> mask(tokens.size(), 0);
  for (std::size_t i : input_tokens_in(align, pvs.tokens)) mask[i] = 1;
  return mask;
}

}  // namespace

std::string_view to_string(AnnotationMode m) {
  switch (m) {
    case AnnotationMode::baseline: return "baseline";
    case AnnotationMode::mark: return "mark";
    case AnnotationMode::prepend: return "prepend";
  }
  return "baseline";
}

AnnotationMode parse_annotation_mode(std::string_view s) {
  if (s == "baseline") return AnnotationMode::baseline;
  if (s == "mark") return AnnotationMode::mark;
  if (s == "prepend") return AnnotationMode::prepend;
  throw ArgumentError("unknown annotation mode '" + std::string(s) + "'");
}

std::vector<std::size_t> input_tokens_in(const TokenAlignment& align,
                                         std::span<const std::size_t> bug) {
  std::vector<char> in_bug(align.ast_size, 0);
  for (std::size_t t : bug) {
    if (t < align.ast_size) in_bug[t] = 1;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < align.map.size(); ++i) {
    if (align.map[i] && in_bug[*align.map[i]]) out.push_back(i);
  }
  return out;
}

AnnotatedExample baseline_annotate(std::span<const InputToken> tokens,
                                   const AnnotationOptions& options) {
  AnnotatedExample ex;
  ex.mode = AnnotationMode::baseline;
  const Layout l = layout_of(tokens);
  const std::size_t fixed = l.lead + (tokens.size() - l.trail);
  const std::size_t budget = saturating_sub(options.context_limit, fixed);
  push_range(ex, tokens, 0, l.lead);
  push_range(ex, tokens, l.lead, l.lead + std::min(budget, l.trail - l.lead));
  push_range(ex, tokens, l.trail, tokens.size());
  return ex;
}

AnnotatedExample mark_annotate(std::span<const InputToken> tokens,
                               const TokenAlignment& align, const BugFeatureSet& pvs,
                               const AnnotationOptions& options) {
  const auto mask = pvs_mask(tokens, align, pvs);
  AnnotatedExample ex;
  ex.mode = AnnotationMode::mark;
  const Layout l = layout_of(tokens);
  const std::size_t fixed = l.lead + (tokens.size() - l.trail);
  std::size_t budget = saturating_sub(options.context_limit, fixed);

  push_range(ex, tokens, 0, l.lead);
  for (std::size_t i = l.lead; i < l.trail; ++i) {
    // A marked token travels with both of its markers or not at all.
    const std::size_t width = mask[i] ? 3 : 1;
    if (width > budget) break;
    budget -= width;
    if (mask[i]) {
      push(ex, options.begin_marker, std::nullopt);
      push(ex, tokens[i].text, i);
      push(ex, options.end_marker, std::nullopt);
      ++ex.marked;
    } else {
      push(ex, tokens[i].text, i);
    }
  }
  push_range(ex, tokens, l.trail, tokens.size());
  return ex;
}

AnnotatedExample prepend_annotate(std::span<const InputToken> tokens,
                                  const TokenAlignment& align, const BugFeatureSet& pvs,
                                  const AnnotationOptions& options) {
  const auto mask = pvs_mask(tokens, align, pvs);
  AnnotatedExample ex;
  ex.mode = AnnotationMode::prepend;
  const Layout l = layout_of(tokens);

  std::vector<std::size_t> block;
  for (std::size_t i = l.lead; i < l.trail && block.size() < options.prepend_limit; ++i) {
    if (mask[i]) block.push_back(i);
  }
  const std::size_t fixed = l.lead + (tokens.size() - l.trail) + 1;  // + separator
  const std::size_t room = saturating_sub(options.context_limit, fixed);
  if (block.size() > room) block.resize(room);
  const std::size_t budget = room - block.size();

  push_range(ex, tokens, 0, l.lead);
  for (std::size_t i : block) {
    ex.b_extension.push_back(ex.tokens.size());
    push(ex, tokens[i].text, i);
  }
  push(ex, options.separator, std::nullopt);
  push_range(ex, tokens, l.lead, l.lead + std::min(budget, l.trail - l.lead));
  push_range(ex, tokens, l.trail, tokens.size());
  ex.degenerate = block.empty();
  return ex;
}

std::vector<std::size_t> extend_bug_set_for_prepend(std::span<const std::size_t> bug,
                                                    const AnnotatedExample& annotated) {
  if (annotated.mode != AnnotationMode::prepend) {
    throw ModeMismatch("bug-set extension applies to prepend-annotated examples only");
  }
  std::vector<char> in_bug;
  for (std::size_t b : bug) {
    if (b >= in_bug.size()) in_bug.resize(b + 1, 0);
    in_bug[b] = 1;
  }
  std::vector<char> prepended(annotated.tokens.size(), 0);
  for (std::size_t p : annotated.b_extension) prepended[p] = 1;

  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < annotated.tokens.size(); ++p) {
    if (prepended[p]) {
      out.push_back(p);
      continue;
    }
    const auto& src = annotated.source[p];
    if (src && *src < in_bug.size() && in_bug[*src]) out.push_back(p);
  }
  return out;
}

TokenSource ast_token_source() {
  return [](const SourceFunction&, const Ast& ast) -> std::optional<std::vector<InputToken>> {
    return pretokenize(ast);
  };
}

TrainingCorpus emit_training_corpus(const std::vector<SourceFunction>& corpus,
                                    AnnotationMode mode, const PvsRuleSet& rules,
                                    const AnnotationOptions& options,
                                    const TokenSource& tokens,
                                    const PvsSource& pvs_override) {
  TrainingCorpus out;
  out.version = rules.version;
  std::vector<std::optional<TrainingRecord>> slots(corpus.size());
  std::vector<std::string> errors(corpus.size());
  const auto n = static_cast<std::ptrdiff_t>(corpus.size());

#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const SourceFunction& fn = corpus[idx];
    try {
      const Ast ast = parse(fn.code);
      auto input = tokens(fn, ast);
      if (!input) throw MissingFile("no tokenization available");
      const TokenAlignment align = build_alignment(ast, *input);
      std::optional<BugFeatureSet> pvs;
      if (pvs_override) pvs = pvs_override(fn);
      if (!pvs) pvs = extract_pvs(ast, rules);

      TrainingRecord rec;
      rec.label = fn.label;
      switch (mode) {
        case AnnotationMode::baseline:
          rec.example = baseline_annotate(*input, options);
          break;
        case AnnotationMode::mark:
          rec.example = mark_annotate(*input, align, *pvs, options);
          break;
        case AnnotationMode::prepend:
          rec.example = prepend_annotate(*input, align, *pvs, options);
          break;
      }
      rec.example.id = fn.id;
      slots[idx] = std::move(rec);
    } catch (const std::exception& e) {
      errors[idx] = fn.id + ": " + e.what();
    }
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (slots[i]) {
      out.records.push_back(std::move(*slots[i]));
    } else {
      out.errors.push_back(std::move(errors[i]));
    }
  }
  return out;
}

void write_training_corpus(std::ostream& out, const TrainingCorpus& corpus) {
  for (const auto& rec : corpus.records) {
    nlohmann::ordered_json j;
    j["id"] = rec.example.id;
    j["label"] = static_cast<int>(rec.label);
    j["mode"] = std::string(to_string(rec.example.mode));
    j["pvs_version"] = std::string(to_string(corpus.version));
    j["tokens"] = rec.example.tokens;
    j["b_extension"] = rec.example.b_extension;
    out << j.dump() << '\n';
  }
}

}  // namespace bugsem
