#pragma once

// Ground-truth bug-semantic token sets: Potentially Vulnerable Statements
// (PVS) and buggy paths taken from static-analyzer trace lines.

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bugsem/ast.hpp"

namespace bugsem {

enum class PvsVersion { v1, v2, v3 };

std::string_view to_string(PvsVersion v);
PvsVersion parse_pvs_version(std::string_view s);

struct StructuralTriggers {
  bool subscript = true;      // buf[i]
  bool pointer_deref = true;  // *ptr (unary only)
  bool field_arrow = true;    // ptr->field
};

/// Which expressions count as PVS. V3 uses V2's triggers but keeps only
/// the abstracted tokens (callee name, operator, brackets).
struct PvsRuleSet {
  PvsVersion version = PvsVersion::v2;
  std::set<std::string, std::less<>> call_names;
  std::set<std::string, std::less<>> operators;
  StructuralTriggers structural;
  // Full-set mode adds the `;` closing the smallest enclosing statement.
  bool include_statement_terminator = true;

  bool abstracted() const noexcept { return version == PvsVersion::v3; }

  static PvsRuleSet preset(PvsVersion version);

  static PvsRuleSet from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

PvsRuleSet load_rules(const std::string& path);

enum class FeatureKind { pvs, buggy_path };

std::string_view to_string(FeatureKind k);
FeatureKind parse_feature_kind(std::string_view s);

/// The bug set B. Tokens are terminal indices of the owning Ast, sorted
/// ascending (for buggy paths this is also the path order).
struct BugFeatureSet {
  FeatureKind kind = FeatureKind::pvs;
  std::vector<std::size_t> tokens;
  std::optional<int> path_id;

  bool empty() const noexcept { return tokens.empty(); }
  std::size_t size() const noexcept { return tokens.size(); }
};

enum class TriggerKind {
  none,
  call,
  binary,
  update,
  compound_assign,
  subscript,
  pointer_deref,
  field_arrow
};

/// Classifies `node` against the rules.
TriggerKind trigger_of(const Ast& ast, std::size_t node, const PvsRuleSet& rules);

/// Abstracted tokens of every triggered expression in the subtree rooted at
/// `node`: callee names, operators, subscript brackets.
std::vector<std::size_t> abstract_expression(
    const Ast& ast, std::size_t node,
    const PvsRuleSet& rules = PvsRuleSet::preset(PvsVersion::v3));

BugFeatureSet extract_pvs(const Ast& ast, const PvsRuleSet& rules);

/// One buggy-path set per trace, path_id = trace ordinal. Traces whose lines
/// hold no tokens come back empty.
std::vector<BugFeatureSet> extract_buggy_paths(const Ast& ast,
                                               const LineTable& table,
                                               const SourceFunction& fn);

struct PvsStatistics {
  double mean_vulnerable = 0.0;
  double mean_non_vulnerable = 0.0;
  double ratio = 0.0;
  std::size_t vulnerable_count = 0;
  std::size_t non_vulnerable_count = 0;
  std::size_t skipped = 0;  // unparseable functions
};

/// Mean |PVS| (tokens) per label and the vulnerable:non-vulnerable ratio.
PvsStatistics pvs_statistics(const std::vector<SourceFunction>& corpus,
                             const PvsRuleSet& rules);

/// Same computation from precomputed per-function sizes.
PvsStatistics pvs_statistics_from_sizes(const std::vector<Label>& labels,
                                        const std::vector<std::size_t>& sizes);

}  // namespace bugsem
