#pragma once

// Terminal-token view of a C/C++ function parsed with an error-tolerant
// grammar. All spans index the whitespace-normalized code, in which the
// terminal texts are joined by single spaces.

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bugsem {

enum class Label { non_vulnerable = 0, vulnerable = 1 };

/// One function of a corpus. Each trace is an ordered list of 1-based lines
/// from the original (unnormalized) layout of `code`.
struct SourceFunction {
  std::string id;
  std::string code;
  Label label = Label::non_vulnerable;
  std::string dataset;
  std::vector<std::vector<int>> bug_line_traces;
};

/// Half-open byte range.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool operator==(const Span&) const = default;
};

struct AstToken {
  std::size_t index = 0;
  std::string text;
  Span span;            // into the normalized code
  std::size_t line = 0;    // 1-based line in the original code
  std::size_t column = 0;  // 1-based byte column in the original code
};

inline constexpr std::size_t kNoNode = static_cast<std::size_t>(-1);

struct AstNode {
  std::string kind;
  std::string field;  // field name under the parent, empty if none
  Span span;
  std::size_t parent = kNoNode;
  std::vector<std::size_t> children;
  // Terminals of this subtree are [first_terminal, end_terminal).
  std::size_t first_terminal = 0;
  std::size_t end_terminal = 0;
  bool error = false;  // ERROR node produced by recovery

  bool is_terminal() const noexcept {
    return children.empty() && end_terminal == first_terminal + 1;
  }
};

/// Original 1-based line of every terminal, indexed by terminal index.
using LineTable = std::vector<std::size_t>;

struct NormalizedCode {
  std::string text;
  LineTable lines;
};

/// Immutable parse result. Node 0 is the root.
class Ast {
 public:
  Ast(std::string normalized, std::vector<AstNode> nodes,
      std::vector<AstToken> terminals);

  const std::string& normalized() const noexcept { return normalized_; }
  std::span<const AstNode> nodes() const noexcept { return nodes_; }
  const AstNode& node(std::size_t i) const { return nodes_.at(i); }
  const AstNode& root() const { return nodes_.front(); }
  std::span<const AstToken> terminals() const noexcept { return terminals_; }
  const AstToken& terminal(std::size_t i) const { return terminals_.at(i); }
  std::size_t size() const noexcept { return terminals_.size(); }

  LineTable line_table() const;

  /// Node index of the terminal leaf for token `i`.
  std::size_t leaf_of(std::size_t token) const { return leaves_.at(token); }

  /// First node (pre-order) whose kind equals `kind`, or kNoNode.
  std::size_t find_first(std::string_view kind) const;

  /// True when error recovery produced at least one ERROR node.
  bool has_errors() const noexcept;

 private:
  std::string normalized_;
  std::vector<AstNode> nodes_;
  std::vector<AstToken> terminals_;
  std::vector<std::size_t> leaves_;
};

/// Parses one function (or fragment). Throws UnparseableSource when the
/// grammar yields no terminals.
Ast parse(std::string_view code);

/// Terminal texts joined with single spaces, plus each terminal's original
/// line. Comments are not terminals and disappear.
NormalizedCode normalize_whitespace(std::string_view code);

/// Indices of the terminals whose original line is in `lines`, in source
/// order.
std::vector<std::size_t> tokens_on_lines(const Ast& ast, const LineTable& table,
                                         const std::set<std::size_t>& lines);

}  // namespace bugsem
