#pragma once

// Mapping from model input tokens (subwords) to AST terminals, and pooling of
// per-input-token scores up to AST granularity.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bugsem/ast.hpp"
#include "bugsem/kernels.hpp"
#include "bugsem/matrix.hpp"

namespace bugsem {

/// A model input token. `char_span` is a half-open range of Unicode code
/// points into the normalized code; absent for special tokens.
struct InputToken {
  std::size_t index = 0;
  std::string text;
  std::optional<Span> char_span;

  bool special() const noexcept { return !char_span.has_value(); }
};

struct TokenAlignment {
  std::vector<std::optional<std::size_t>> map;  // input index -> AST index
  std::size_t ast_size = 0;
  std::size_t unmatched = 0;  // non-special tokens with zero overlap

  std::size_t input_size() const noexcept { return map.size(); }

  /// AST tokens with at least one mapped input token, ascending.
  std::vector<std::size_t> covered() const;

  /// Per input token, the position of its AST token within covered(), or
  /// kernels::kNoGroup.
  std::vector<std::size_t> groups() const;
};

/// Maps every spanned input token to the AST token of maximal overlap
/// (earlier token on ties). Throws MisalignedDump when more than
/// `max_unmatched_fraction` of the non-special tokens overlap nothing.
TokenAlignment build_alignment(const Ast& ast, std::span<const InputToken> tokens,
                               double max_unmatched_fraction = 0.10);

/// Identity tokenization: one input token per AST terminal.
std::vector<InputToken> pretokenize(const Ast& ast);

struct AstScores {
  std::vector<double> values;
  std::vector<char> covered;

  std::size_t covered_count() const;
};

/// Mean of the input-token scores mapped to each AST token; uncovered AST
/// tokens score 0 and are flagged.
AstScores aggregate_attribution(std::span<const double> attr,
                                const TokenAlignment& align);

/// AST-level square matrix over the covered tokens only.
struct AstMatrix {
  std::vector<std::size_t> tokens;  // AST index of each row/column
  Matrix values;

  std::size_t size() const noexcept { return tokens.size(); }
};

AstMatrix aggregate_attention(std::span<const float> att, std::size_t n,
                              const TokenAlignment& align,
                              kernels::Pooling pooling = kernels::Pooling::block_mean,
                              kernels::Backend backend = kernels::Backend::openmp);

AstMatrix aggregate_attention(const Matrix& att, const TokenAlignment& align,
                              kernels::Pooling pooling = kernels::Pooling::block_mean,
                              kernels::Backend backend = kernels::Backend::openmp);

}  // namespace bugsem
