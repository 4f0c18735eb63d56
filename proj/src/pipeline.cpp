#include "bugsem/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <map>

#include "bugsem/errors.hpp"
#include "bugsem/interaction.hpp"
#include "bugsem/token_align.hpp"

namespace bugsem {

namespace fs = std::filesystem;

namespace {

bool needs_interaction(const std::set<Metric>& metrics) {
  for (Metric m : {Metric::interaction, Metric::joint_prob, Metric::chain,
                   Metric::chain_coverage, Metric::components}) {
    if (metrics.contains(m)) return true;
  }
  return false;
}

bool needs_attention(const std::set<Metric>& metrics) {
  return needs_interaction(metrics) || metrics.contains(Metric::attention) ||
         metrics.contains(Metric::pair_proportion);
}

bool has_path_metric(const std::set<Metric>& metrics) {
  for (Metric m : {Metric::joint_prob, Metric::chain, Metric::chain_coverage,
                   Metric::components}) {
    if (metrics.contains(m)) return true;
  }
  return false;
}

AlignmentRecord base_record(const std::string& id, Metric metric,
                            const BugFeatureSet& set, std::size_t k) {
  AlignmentRecord r;
  r.example_id = id;
  r.metric = metric;
  r.path_id = set.path_id;
  r.k = k;
  return r;
}

struct ExampleOutput {
  std::vector<AlignmentRecord> records;
  std::vector<std::string> errors;
  std::size_t empty_sets = 0;
  bool missing_dump = false;
  std::size_t nonstochastic_rows = 0;
};

void path_records(const std::string& id, const BugFeatureSet& set,
                  const InteractionMatrix& im, const AlignOptions& options,
                  std::vector<AlignmentRecord>& out) {
  const auto pos = path_positions(im, set.tokens);
  if (pos.size() < 2) return;
  const std::size_t t = options.top_t.value_or(default_top_t(im.size(), pos.size()));
  auto make = [&](Metric metric, std::size_t k, double score) {
    AlignmentRecord r = base_record(id, metric, set, k);
    r.path_length = pos.size();
    r.score = score;
    out.push_back(std::move(r));
  };
  if (options.metrics.contains(Metric::joint_prob)) {
    make(Metric::joint_prob, pos.size(), path_joint_probability(im.probs, pos));
  }
  if (options.metrics.contains(Metric::chain) ||
      options.metrics.contains(Metric::chain_coverage)) {
    const ChainResult c = longest_chain(im.probs, pos, t);
    if (options.metrics.contains(Metric::chain)) {
      make(Metric::chain, t, static_cast<double>(c.chain_length));
    }
    if (options.metrics.contains(Metric::chain_coverage)) {
      make(Metric::chain_coverage, t, c.edge_coverage);
    }
  }
  if (options.metrics.contains(Metric::components)) {
    make(Metric::components, t, static_cast<double>(induced_components(im.probs, pos, t)));
  }
}

ExampleOutput align_example(const SourceFunction& fn,
                            const std::vector<const FeatureRecord*>& feats,
                            const fs::path& dump_dir, const AlignOptions& options) {
  ExampleOutput out;
  std::vector<const BugFeatureSet*> sets;
  for (const FeatureRecord* f : feats) {
    if (f->set.empty()) {
      ++out.empty_sets;
    } else {
      sets.push_back(&f->set);
    }
  }
  if (sets.empty()) return out;
  if (!dump_exists(dump_dir, fn.id)) {
    out.missing_dump = true;
    out.errors.push_back(fn.id + ": no model dump");
    return out;
  }

  const Ast ast = parse(fn.code);
  for (const BugFeatureSet* s : sets) {
    const std::size_t top = *std::max_element(s->tokens.begin(), s->tokens.end());
    if (top >= ast.size()) {
      throw SchemaError("feature token index " + std::to_string(top) +
                        " beyond the " + std::to_string(ast.size()) + " AST tokens");
    }
  }
  const ModelDump dump = load_dump(dump_dir, fn.id);
  out.nonstochastic_rows = dump.nonstochastic_rows;
  const TokenAlignment align = build_alignment(ast, dump.tokens);

  const auto& metrics = options.metrics;
  if (needs_attention(metrics) && dump.attention.empty()) {
    throw MissingFile("dump has no attention tensor");
  }

  std::map<std::string, AstScores> attributions;
  if (metrics.contains(Metric::interpret)) {
    if (dump.attributions.empty()) {
      out.errors.push_back(fn.id + ": no attributions, interpret skipped");
    }
    for (const auto& [tool, values] : dump.attributions) {
      attributions.emplace(tool, aggregate_attribution(values, align));
    }
  }

  std::vector<AstMatrix> head_matrices;
  if (metrics.contains(Metric::pair_proportion)) {
    const auto& att = dump.attention;
    for (std::size_t l = 0; l < att.layers; ++l) {
      for (std::size_t h = 0; h < att.heads; ++h) {
        head_matrices.push_back(aggregate_attention(att.head(l, h), att.n, align,
                                                    options.pooling,
                                                    kernels::Backend::serial));
      }
    }
  }

  std::optional<InteractionMatrix> im;
  if (needs_interaction(metrics)) {
    InteractionOptions io;
    io.pooling = options.pooling;
    io.backend = options.backend;
    im = build_interaction_matrix(dump.attention, align, io);
  }

  const auto covered = align.covered();
  for (const BugFeatureSet* set : sets) {
    if (restrict_to(set->tokens, covered).empty()) {
      ++out.empty_sets;
      continue;
    }
    if (!attributions.empty()) {
      if (auto res = alignment_interpret(attributions, set->tokens, options.fixed_k)) {
        for (const auto& [tool, score] : res->per_tool) {
          AlignmentRecord r = base_record(fn.id, Metric::interpret, *set, res->k);
          r.tool = tool;
          r.score = score;
          out.records.push_back(std::move(r));
        }
        AlignmentRecord r = base_record(fn.id, Metric::interpret, *set, res->k);
        r.tool = "mean";
        r.score = res->mean;
        out.records.push_back(std::move(r));
      }
    }
    if (metrics.contains(Metric::attention)) {
      AttentionOptions ao;
      ao.pooling = options.pooling;
      ao.backend = kernels::Backend::serial;
      ao.fixed_k = options.fixed_k;
      auto recs = alignment_attention(dump.attention, align, *set, fn.id, ao);
      std::move(recs.begin(), recs.end(), std::back_inserter(out.records));
    }
    if (metrics.contains(Metric::pair_proportion)) {
      const auto b = restrict_to(set->tokens, covered);
      for (std::size_t idx = 0; idx < head_matrices.size(); ++idx) {
        try {
          AlignmentRecord r = base_record(fn.id, Metric::pair_proportion, *set, 0);
          r.layer = static_cast<int>(idx / dump.attention.heads);
          r.head = static_cast<int>(idx % dump.attention.heads);
          r.score = pair_proportion(head_matrices[idx], b, options.theta);
          out.records.push_back(std::move(r));
        } catch (const NoHighAttention&) {
        }
      }
    }
    if (im && metrics.contains(Metric::interaction)) {
      if (auto score = alignment_im(*im, set->tokens, options.fixed_k)) {
        const auto b = restrict_to(set->tokens, im->tokens);
        AlignmentRecord r = base_record(
            fn.id, Metric::interaction, *set,
            std::min(options.fixed_k.value_or(b.size()), im->size()));
        r.score = *score;
        out.records.push_back(std::move(r));
      }
    }
    if (im && set->kind == FeatureKind::buggy_path && has_path_metric(metrics)) {
      path_records(fn.id, *set, *im, options, out.records);
    }
  }
  return out;
}

}  // namespace

ExtractResult extract_features(const std::vector<SourceFunction>& corpus,
                               const ExtractOptions& options) {
  std::vector<std::vector<FeatureRecord>> slots(corpus.size());
  std::vector<std::string> errors(corpus.size());
  const auto n = static_cast<std::ptrdiff_t>(corpus.size());

#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const SourceFunction& fn = corpus[idx];
    try {
      const Ast ast = parse(fn.code);
      std::vector<BugFeatureSet> sets;
      if (options.kind == FeatureKind::pvs) {
        sets.push_back(extract_pvs(ast, options.rules));
      } else {
        sets = extract_buggy_paths(ast, ast.line_table(), fn);
      }
      for (auto& set : sets) {
        FeatureRecord r;
        r.id = fn.id;
        r.version = options.rules.version;
        for (std::size_t t : set.tokens) r.texts.push_back(ast.terminal(t).text);
        r.set = std::move(set);
        slots[idx].push_back(std::move(r));
      }
    } catch (const std::exception& e) {
      errors[idx] = fn.id + ": " + e.what();
    }
  }

  ExtractResult out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!errors[i].empty()) out.errors.push_back(std::move(errors[i]));
    std::move(slots[i].begin(), slots[i].end(), std::back_inserter(out.records));
  }
  return out;
}

AlignResult align_corpus(const std::vector<SourceFunction>& corpus,
                         const std::vector<FeatureRecord>& features,
                         const fs::path& dump_dir, const AlignOptions& options) {
  std::map<std::string, std::vector<const FeatureRecord*>> by_id;
  for (const auto& f : features) by_id[f.id].push_back(&f);

  std::vector<ExampleOutput> slots(corpus.size());
  const auto n = static_cast<std::ptrdiff_t>(corpus.size());

#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const SourceFunction& fn = corpus[idx];
    auto it = by_id.find(fn.id);
    if (it == by_id.end()) continue;
    try {
      slots[idx] = align_example(fn, it->second, dump_dir, options);
    } catch (const std::exception& e) {
      slots[idx] = ExampleOutput{};
      slots[idx].errors.push_back(fn.id + ": " + e.what());
    }
  }

  AlignResult out;
  for (auto& s : slots) {
    if (!s.records.empty()) ++out.examples;
    if (s.missing_dump) ++out.missing_dumps;
    out.empty_bug_sets += s.empty_sets;
    out.nonstochastic_rows += s.nonstochastic_rows;
    std::move(s.records.begin(), s.records.end(), std::back_inserter(out.records));
    std::move(s.errors.begin(), s.errors.end(), std::back_inserter(out.errors));
  }
  std::stable_sort(out.records.begin(), out.records.end(), record_less);
  return out;
}

TokenSource dump_token_source(const fs::path& dir) {
  return [dir](const SourceFunction& fn,
               const Ast&) -> std::optional<std::vector<InputToken>> {
    const fs::path p = dir / (fn.id + ".tokens.json");
    std::ifstream in(p);
    if (!in) return std::nullopt;
    return read_input_tokens(in);
  };
}

CorpusStats corpus_statistics(const std::vector<SourceFunction>& corpus,
                              const PvsRuleSet& rules) {
  CorpusStats out;
  out.examples = corpus.size();
  std::vector<std::optional<std::size_t>> sizes(corpus.size());
  std::vector<std::exception_ptr> failures(corpus.size());
  const auto n = static_cast<std::ptrdiff_t>(corpus.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      sizes[idx] = extract_pvs(parse(corpus[idx].code), rules).size();
    } catch (const UnparseableSource&) {
    } catch (...) {
      failures[idx] = std::current_exception();
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  std::vector<Label> labels;
  std::vector<std::size_t> kept;
  double sum_vul = 0.0;
  double sum_non = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!sizes[i]) {
      ++out.skipped;
      continue;
    }
    if (corpus[i].label == Label::vulnerable) {
      ++out.vulnerable;
      sum_vul += static_cast<double>(*sizes[i]);
    } else {
      ++out.non_vulnerable;
      sum_non += static_cast<double>(*sizes[i]);
    }
    labels.push_back(corpus[i].label);
    kept.push_back(*sizes[i]);
  }
  if (out.vulnerable > 0) {
    out.mean_pvs_vulnerable = sum_vul / static_cast<double>(out.vulnerable);
  }
  if (out.non_vulnerable > 0) {
    out.mean_pvs_non_vulnerable = sum_non / static_cast<double>(out.non_vulnerable);
  }
  if (out.vulnerable > 0 && out.non_vulnerable > 0) {
    out.ratio = pvs_statistics_from_sizes(labels, kept).ratio;
  }
  for (const auto& fn : corpus) {
    if (fn.bug_line_traces.empty()) continue;
    ++out.programs_with_traces;
    out.traces += fn.bug_line_traces.size();
  }
  if (out.programs_with_traces > 0) {
    out.mean_traces = static_cast<double>(out.traces) /
                      static_cast<double>(out.programs_with_traces);
  }
  return out;
}

}  // namespace bugsem
