#include "bugsem/ast.hpp"

#include <tree_sitter/api.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <memory>

#include "bugsem/errors.hpp"

extern "C" const TSLanguage* tree_sitter_cpp(void);

namespace bugsem {

namespace {

// Literal nodes kept whole: their inner pieces (quotes, escape sequences)
// are lexical detail, and splitting them would change the literal's text.
constexpr std::array<std::string_view, 6> kAtomicKinds = {
    "string_literal", "char_literal",   "raw_string_literal",
    "system_lib_string", "user_defined_literal", "preproc_arg"};

bool is_atomic(std::string_view kind) {
  return std::find(kAtomicKinds.begin(), kAtomicKinds.end(), kind) !=
         kAtomicKinds.end();
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

struct ParserDeleter {
  void operator()(TSParser* p) const { ts_parser_delete(p); }
};
struct TreeDeleter {
  void operator()(TSTree* t) const { ts_tree_delete(t); }
};

TSParser* thread_parser() {
  thread_local std::unique_ptr<TSParser, ParserDeleter> parser = [] {
    std::unique_ptr<TSParser, ParserDeleter> p(ts_parser_new());
    ts_parser_set_language(p.get(), tree_sitter_cpp());
    return p;
  }();
  return parser.get();
}

class TreeBuilder {
 public:
  explicit TreeBuilder(std::string_view source) : src_(source) {}

  Ast build(TSNode root) {
    TSTreeCursor cursor = ts_tree_cursor_new(root);
    bool descend = enter(cursor);
    for (;;) {
      if (descend && ts_tree_cursor_goto_first_child(&cursor)) {
        descend = enter(cursor);
        continue;
      }
      leave();
      bool done = false;
      while (!ts_tree_cursor_goto_next_sibling(&cursor)) {
        if (!ts_tree_cursor_goto_parent(&cursor)) {
          done = true;
          break;
        }
        leave();
      }
      if (done) break;
      descend = enter(cursor);
    }
    ts_tree_cursor_delete(&cursor);
    if (terminals_.empty()) {
      throw UnparseableSource("source yields no terminal tokens");
    }
    return Ast(std::move(normalized_), std::move(nodes_), std::move(terminals_));
  }

 private:
  std::size_t current_parent() const {
    for (auto it = open_.rbegin(); it != open_.rend(); ++it) {
      if (*it != kNoNode) return *it;
    }
    return kNoNode;
  }

  bool enter(const TSTreeCursor& cursor) {
    TSNode n = ts_tree_cursor_current_node(&cursor);
    const std::string_view kind = ts_node_type(n);
    const uint32_t begin = ts_node_start_byte(n);
    const uint32_t end = ts_node_end_byte(n);
    const bool leaf = ts_node_child_count(n) == 0 || is_atomic(kind);

    if (kind == "comment" || (leaf && begin == end) || ts_node_is_missing(n)) {
      open_.push_back(kNoNode);
      return false;
    }

    // Trim whitespace that some leaves (preprocessor bodies) carry.
    std::size_t tb = begin;
    std::size_t te = end;
    if (leaf) {
      while (tb < te && is_space(src_[tb])) ++tb;
      while (te > tb && is_space(src_[te - 1])) --te;
      if (tb == te) {
        open_.push_back(kNoNode);
        return false;
      }
    }

    AstNode node;
    node.kind = std::string(kind);
    if (const char* f = ts_tree_cursor_current_field_name(&cursor)) node.field = f;
    node.parent = current_parent();
    node.error = ts_node_is_error(n);
    node.first_terminal = terminals_.size();
    const std::size_t idx = nodes_.size();
    if (node.parent != kNoNode) nodes_[node.parent].children.push_back(idx);
    nodes_.push_back(std::move(node));
    open_.push_back(idx);

    if (!leaf) return true;

    TSPoint start = ts_node_start_point(n);
    std::size_t line = start.row + 1;
    std::size_t column = start.column + 1;
    for (std::size_t i = begin; i < tb; ++i) {
      if (src_[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }

    AstToken tok;
    tok.index = terminals_.size();
    tok.text = std::string(src_.substr(tb, te - tb));
    if (!normalized_.empty()) normalized_.push_back(' ');
    tok.span = {normalized_.size(), normalized_.size() + tok.text.size()};
    normalized_ += tok.text;
    tok.line = line;
    tok.column = column;
    terminals_.push_back(std::move(tok));
    return false;
  }

  void leave() {
    const std::size_t idx = open_.back();
    open_.pop_back();
    if (idx == kNoNode) return;
    AstNode& node = nodes_[idx];
    node.end_terminal = terminals_.size();
    if (node.end_terminal > node.first_terminal) {
      node.span = {terminals_[node.first_terminal].span.begin,
                   terminals_[node.end_terminal - 1].span.end};
    } else {
      node.span = {normalized_.size(), normalized_.size()};
    }
  }

  std::string_view src_;
  std::string normalized_;
  std::vector<AstNode> nodes_;
  std::vector<AstToken> terminals_;
  std::vector<std::size_t> open_;
};

}  // namespace

Ast::Ast(std::string normalized, std::vector<AstNode> nodes,
         std::vector<AstToken> terminals)
    : normalized_(std::move(normalized)),
      nodes_(std::move(nodes)),
      terminals_(std::move(terminals)),
      leaves_(terminals_.size(), kNoNode) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_terminal()) leaves_[nodes_[i].first_terminal] = i;
  }
}

LineTable Ast::line_table() const {
  LineTable t;
  t.reserve(terminals_.size());
  for (const auto& tok : terminals_) t.push_back(tok.line);
  return t;
}

std::size_t Ast::find_first(std::string_view kind) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == kind) return i;
  }
  return kNoNode;
}

bool Ast::has_errors() const noexcept {
  return std::any_of(nodes_.begin(), nodes_.end(),
                     [](const AstNode& n) { return n.error; });
}

Ast parse(std::string_view code) {
  if (code.size() > UINT32_MAX) throw UnparseableSource("source too large");
  std::unique_ptr<TSTree, TreeDeleter> tree(ts_parser_parse_string(
      thread_parser(), nullptr, code.data(), static_cast<uint32_t>(code.size())));
  if (!tree) throw UnparseableSource("parser returned no tree");
  return TreeBuilder(code).build(ts_tree_root_node(tree.get()));
}

NormalizedCode normalize_whitespace(std::string_view code) {
  Ast ast = parse(code);
  return {ast.normalized(), ast.line_table()};
}

std::vector<std::size_t> tokens_on_lines(const Ast& ast, const LineTable& table,
                                         const std::set<std::size_t>& lines) {
  std::vector<std::size_t> out;
  if (lines.empty()) return out;
  const std::size_t n = std::min(ast.size(), table.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (lines.contains(table[i])) out.push_back(i);
  }
  return out;
}

}  // namespace bugsem
