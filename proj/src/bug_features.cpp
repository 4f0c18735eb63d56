#include "bugsem/bug_features.hpp"

#include <omp.h>

#include <algorithm>
#include <exception>
#include <fstream>

#include "bugsem/errors.hpp"

namespace bugsem {

namespace {

const std::set<std::string, std::less<>> kV1Calls = {
    "malloc", "calloc", "realloc", "aligned_alloc", "free",
    "gets",   "scanf",  "strcpy",  "strcat"};

const std::set<std::string, std::less<>> kV2Calls = {
    "malloc",  "calloc",  "realloc", "aligned_alloc", "kalloc",
    "kcalloc", "krealloc", "valloc", "vcalloc",       "vrealloc",
    "free",    "kfree",    "free_sized", "free_aligned_sized",
    "gets",    "puts",     "scanf",  "sprintf",       "strcpy",
    "strncpy", "strlen",   "strcat", "strncat"};

const std::set<std::string, std::less<>> kV1Operators = {"+", "-", "/", "*",
                                                         "%"};

const std::set<std::string, std::less<>> kV2Operators = {
    "+", "+=", "++", "-", "-=", "--", "*", "*=", "/", "/=", "%", "%="};

bool is_statement(std::string_view kind) {
  return kind.ends_with("_statement") || kind == "declaration" ||
         kind == "field_declaration";
}

// Direct child of `node` that is a terminal (the whole subtree is one token)
// under the given field.
std::optional<std::size_t> field_token(const Ast& ast, std::size_t node,
                                       std::string_view field) {
  for (std::size_t c : ast.node(node).children) {
    const AstNode& child = ast.node(c);
    if (child.field == field && child.is_terminal()) return child.first_terminal;
  }
  return std::nullopt;
}

std::string_view field_text(const Ast& ast, std::size_t node,
                            std::string_view field) {
  auto tok = field_token(ast, node, field);
  return tok ? std::string_view(ast.terminal(*tok).text) : std::string_view{};
}

void collect_brackets(const Ast& ast, std::size_t node,
                      std::vector<std::size_t>& out) {
  for (std::size_t c : ast.node(node).children) {
    const AstNode& child = ast.node(c);
    if (child.is_terminal()) {
      const auto& text = ast.terminal(child.first_terminal).text;
      if (text == "[" || text == "]") out.push_back(child.first_terminal);
    } else if (child.kind == "subscript_argument_list") {
      collect_brackets(ast, c, out);
    }
  }
}

void abstract_one(const Ast& ast, std::size_t node, TriggerKind kind,
                  std::vector<std::size_t>& out) {
  switch (kind) {
    case TriggerKind::none:
      return;
    case TriggerKind::call:
      if (auto t = field_token(ast, node, "function")) out.push_back(*t);
      return;
    case TriggerKind::subscript:
      collect_brackets(ast, node, out);
      return;
    default:
      if (auto t = field_token(ast, node, "operator")) out.push_back(*t);
      return;
  }
}

// `;` closing the smallest statement that encloses `node`, if that
// statement ends in one.
std::optional<std::size_t> statement_terminator(const Ast& ast, std::size_t node) {
  for (std::size_t p = ast.node(node).parent; p != kNoNode; p = ast.node(p).parent) {
    const AstNode& stmt = ast.node(p);
    if (!is_statement(stmt.kind)) continue;
    if (stmt.children.empty()) return std::nullopt;
    const AstNode& last = ast.node(stmt.children.back());
    if (last.is_terminal() && ast.terminal(last.first_terminal).text == ";") {
      return last.first_terminal;
    }
    return std::nullopt;
  }
  return std::nullopt;
}

void sort_unique(std::vector<std::size_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

std::set<std::string, std::less<>> string_set(const nlohmann::json& j,
                                              const char* key) {
  std::set<std::string, std::less<>> out;
  if (!j.contains(key)) return out;
  const auto& arr = j.at(key);
  if (!arr.is_array()) throw SchemaError(std::string("'") + key + "' must be an array");
  for (const auto& s : arr) out.insert(s.get<std::string>());
  return out;
}

}  // namespace

std::string_view to_string(PvsVersion v) {
  switch (v) {
    case PvsVersion::v1: return "v1";
    case PvsVersion::v2: return "v2";
    case PvsVersion::v3: return "v3";
  }
  return "v2";
}

PvsVersion parse_pvs_version(std::string_view s) {
  if (s == "v1" || s == "V1") return PvsVersion::v1;
  if (s == "v2" || s == "V2") return PvsVersion::v2;
  if (s == "v3" || s == "V3") return PvsVersion::v3;
  throw ArgumentError("unknown PVS version '" + std::string(s) + "'");
}

std::string_view to_string(FeatureKind k) {
  return k == FeatureKind::pvs ? "pvs" : "buggy-path";
}

FeatureKind parse_feature_kind(std::string_view s) {
  if (s == "pvs") return FeatureKind::pvs;
  if (s == "buggy-path" || s == "buggy_path") return FeatureKind::buggy_path;
  throw ArgumentError("unknown feature kind '" + std::string(s) + "'");
}

PvsRuleSet PvsRuleSet::preset(PvsVersion version) {
  PvsRuleSet r;
  r.version = version;
  if (version == PvsVersion::v1) {
    r.call_names = kV1Calls;
    r.operators = kV1Operators;
  } else {
    r.call_names = kV2Calls;
    r.operators = kV2Operators;
  }
  return r;
}

PvsRuleSet PvsRuleSet::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("rule set must be a JSON object");
  PvsRuleSet r;
  try {
    r.version = parse_pvs_version(j.value("version", std::string("v2")));
  } catch (const ArgumentError& e) {
    throw SchemaError(e.what());
  }
  r.call_names = string_set(j, "call_names");
  r.operators = string_set(j, "operators");
  if (j.contains("structural")) {
    const auto& s = j.at("structural");
    r.structural.subscript = s.value("subscript", true);
    r.structural.pointer_deref = s.value("pointer_deref", true);
    r.structural.field_arrow = s.value("field_arrow", true);
  }
  r.include_statement_terminator = j.value("include_statement_terminator", true);
  return r;
}

nlohmann::json PvsRuleSet::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = std::string(to_string(version));
  j["call_names"] = std::vector<std::string>(call_names.begin(), call_names.end());
  j["operators"] = std::vector<std::string>(operators.begin(), operators.end());
  j["structural"] = {{"subscript", structural.subscript},
                     {"pointer_deref", structural.pointer_deref},
                     {"field_arrow", structural.field_arrow}};
  j["include_statement_terminator"] = include_statement_terminator;
  return j;
}

PvsRuleSet load_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open rule file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return PvsRuleSet::from_json(j);
}

TriggerKind trigger_of(const Ast& ast, std::size_t node, const PvsRuleSet& rules) {
  const AstNode& n = ast.node(node);
  const std::string_view kind = n.kind;
  if (kind == "call_expression") {
    // Only a plain identifier callee matches; obj.free() does not.
    for (std::size_t c : n.children) {
      const AstNode& child = ast.node(c);
      if (child.field != "function") continue;
      if (child.kind == "identifier" && child.is_terminal() &&
          rules.call_names.contains(ast.terminal(child.first_terminal).text)) {
        return TriggerKind::call;
      }
    }
    return TriggerKind::none;
  }
  if (kind == "binary_expression") {
    return rules.operators.contains(field_text(ast, node, "operator"))
               ? TriggerKind::binary
               : TriggerKind::none;
  }
  if (kind == "update_expression") {
    return rules.operators.contains(field_text(ast, node, "operator"))
               ? TriggerKind::update
               : TriggerKind::none;
  }
  if (kind == "assignment_expression") {
    return rules.operators.contains(field_text(ast, node, "operator"))
               ? TriggerKind::compound_assign
               : TriggerKind::none;
  }
  if (kind == "subscript_expression") {
    return rules.structural.subscript ? TriggerKind::subscript : TriggerKind::none;
  }
  if (kind == "pointer_expression") {
    return rules.structural.pointer_deref &&
                   field_text(ast, node, "operator") == "*"
               ? TriggerKind::pointer_deref
               : TriggerKind::none;
  }
  if (kind == "field_expression") {
    return rules.structural.field_arrow && field_text(ast, node, "operator") == "->"
               ? TriggerKind::field_arrow
               : TriggerKind::none;
  }
  return TriggerKind::none;
}

std::vector<std::size_t> abstract_expression(const Ast& ast, std::size_t node,
                                             const PvsRuleSet& rules) {
  std::vector<std::size_t> out;
  std::vector<std::size_t> stack{node};
  while (!stack.empty()) {
    const std::size_t cur = stack.back();
    stack.pop_back();
    abstract_one(ast, cur, trigger_of(ast, cur, rules), out);
    for (std::size_t c : ast.node(cur).children) stack.push_back(c);
  }
  sort_unique(out);
  return out;
}

BugFeatureSet extract_pvs(const Ast& ast, const PvsRuleSet& rules) {
  BugFeatureSet set;
  set.kind = FeatureKind::pvs;
  if (rules.abstracted()) {
    set.tokens = abstract_expression(ast, 0, rules);
    return set;
  }
  std::vector<std::size_t>& out = set.tokens;
  for (std::size_t i = 0; i < ast.nodes().size(); ++i) {
    if (trigger_of(ast, i, rules) == TriggerKind::none) continue;
    const AstNode& n = ast.node(i);
    for (std::size_t t = n.first_terminal; t < n.end_terminal; ++t) out.push_back(t);
    if (rules.include_statement_terminator) {
      if (auto semi = statement_terminator(ast, i)) out.push_back(*semi);
    }
  }
  sort_unique(out);
  return set;
}

std::vector<BugFeatureSet> extract_buggy_paths(const Ast& ast,
                                               const LineTable& table,
                                               const SourceFunction& fn) {
  std::vector<BugFeatureSet> out;
  out.reserve(fn.bug_line_traces.size());
  for (std::size_t i = 0; i < fn.bug_line_traces.size(); ++i) {
    std::set<std::size_t> lines;
    for (int line : fn.bug_line_traces[i]) {
      if (line >= 1) lines.insert(static_cast<std::size_t>(line));
    }
    BugFeatureSet set;
    set.kind = FeatureKind::buggy_path;
    set.path_id = static_cast<int>(i);
    set.tokens = tokens_on_lines(ast, table, lines);
    out.push_back(std::move(set));
  }
  return out;
}

PvsStatistics pvs_statistics_from_sizes(const std::vector<Label>& labels,
                                        const std::vector<std::size_t>& sizes) {
  if (labels.size() != sizes.size()) {
    throw LengthMismatch("labels and sizes differ in length");
  }
  PvsStatistics st;
  double sum_vul = 0.0;
  double sum_non = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == Label::vulnerable) {
      sum_vul += static_cast<double>(sizes[i]);
      ++st.vulnerable_count;
    } else {
      sum_non += static_cast<double>(sizes[i]);
      ++st.non_vulnerable_count;
    }
  }
  if (st.vulnerable_count == 0) throw EmptyLabelClass("no vulnerable examples");
  if (st.non_vulnerable_count == 0) throw EmptyLabelClass("no non-vulnerable examples");
  st.mean_vulnerable = sum_vul / static_cast<double>(st.vulnerable_count);
  st.mean_non_vulnerable = sum_non / static_cast<double>(st.non_vulnerable_count);
  st.ratio = st.mean_non_vulnerable > 0.0 ? st.mean_vulnerable / st.mean_non_vulnerable
                                          : 0.0;
  return st;
}

PvsStatistics pvs_statistics(const std::vector<SourceFunction>& corpus,
                             const PvsRuleSet& rules) {
  if (corpus.empty()) throw EmptyLabelClass("empty corpus");
  const auto n = static_cast<std::ptrdiff_t>(corpus.size());
  std::vector<std::size_t> sizes(corpus.size(), 0);
  std::vector<char> ok(corpus.size(), 0);
  std::vector<std::exception_ptr> failures(corpus.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      Ast ast = parse(corpus[idx].code);
      sizes[idx] = extract_pvs(ast, rules).size();
      ok[idx] = 1;
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
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!ok[i]) {
      ++skipped;
      continue;
    }
    labels.push_back(corpus[i].label);
    kept.push_back(sizes[i]);
  }
  PvsStatistics st = pvs_statistics_from_sizes(labels, kept);
  st.skipped = skipped;
  return st;
}

}  // namespace bugsem
