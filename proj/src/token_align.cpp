#include "bugsem/token_align.hpp"

#include <algorithm>

#include "bugsem/errors.hpp"

namespace bugsem {

namespace {

bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

// byte offset of every code point boundary, plus the end.
std::vector<std::size_t> code_point_offsets(const std::string& text) {
  std::vector<std::size_t> out;
  out.reserve(text.size() + 1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!is_continuation(static_cast<unsigned char>(text[i]))) out.push_back(i);
  }
  out.push_back(text.size());
  return out;
}

}  // namespace

std::vector<std::size_t> TokenAlignment::covered() const {
  std::vector<char> seen(ast_size, 0);
  for (const auto& m : map) {
    if (m) seen[*m] = 1;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ast_size; ++i) {
    if (seen[i]) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> TokenAlignment::groups() const {
  std::vector<std::size_t> pos(ast_size, kernels::kNoGroup);
  const auto cov = covered();
  for (std::size_t g = 0; g < cov.size(); ++g) pos[cov[g]] = g;
  std::vector<std::size_t> out(map.size(), kernels::kNoGroup);
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i]) out[i] = pos[*map[i]];
  }
  return out;
}

TokenAlignment build_alignment(const Ast& ast, std::span<const InputToken> tokens,
                               double max_unmatched_fraction) {
  const std::string& code = ast.normalized();
  const auto offsets = code_point_offsets(code);
  const std::size_t chars = offsets.size() - 1;
  const auto terms = ast.terminals();

  TokenAlignment align;
  align.ast_size = ast.size();
  align.map.assign(tokens.size(), std::nullopt);

  std::size_t spanned = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& cs = tokens[i].char_span;
    if (!cs || cs->begin == cs->end) continue;
    if (cs->begin > cs->end || cs->end > chars) {
      throw MisalignedDump("input token " + std::to_string(i) +
                           " span lies outside the normalized code");
    }
    ++spanned;
    const std::size_t b = offsets[cs->begin];
    const std::size_t e = offsets[cs->end];
    auto it = std::upper_bound(terms.begin(), terms.end(), b,
                               [](std::size_t pos, const AstToken& t) {
                                 return pos < t.span.end;
                               });
    std::size_t best_overlap = 0;
    std::optional<std::size_t> best;
    for (; it != terms.end() && it->span.begin < e; ++it) {
      const std::size_t lo = std::max(b, it->span.begin);
      const std::size_t hi = std::min(e, it->span.end);
      const std::size_t overlap = hi > lo ? hi - lo : 0;
      if (overlap > best_overlap) {
        best_overlap = overlap;
        best = it->index;
      }
    }
    if (best) {
      align.map[i] = best;
    } else {
      ++align.unmatched;
    }
  }
  if (spanned > 0 && static_cast<double>(align.unmatched) >
                         max_unmatched_fraction * static_cast<double>(spanned)) {
    throw MisalignedDump(std::to_string(align.unmatched) + " of " +
                         std::to_string(spanned) +
                         " input tokens overlap no AST token");
  }
  return align;
}

std::vector<InputToken> pretokenize(const Ast& ast) {
  const auto offsets = code_point_offsets(ast.normalized());
  auto char_of = [&](std::size_t byte) {
    return static_cast<std::size_t>(
        std::lower_bound(offsets.begin(), offsets.end(), byte) - offsets.begin());
  };
  std::vector<InputToken> out;
  out.reserve(ast.size());
  for (const auto& t : ast.terminals()) {
    out.push_back({t.index, t.text, Span{char_of(t.span.begin), char_of(t.span.end)}});
  }
  return out;
}

std::size_t AstScores::covered_count() const {
  return static_cast<std::size_t>(std::count(covered.begin(), covered.end(), 1));
}

AstScores aggregate_attribution(std::span<const double> attr,
                                const TokenAlignment& align) {
  if (attr.size() != align.input_size()) {
    throw LengthMismatch("attribution length " + std::to_string(attr.size()) +
                         " != input token count " +
                         std::to_string(align.input_size()));
  }
  AstScores out;
  out.values.assign(align.ast_size, 0.0);
  out.covered.assign(align.ast_size, 0);
  std::vector<std::size_t> count(align.ast_size, 0);
  for (std::size_t i = 0; i < attr.size(); ++i) {
    if (!align.map[i]) continue;
    out.values[*align.map[i]] += attr[i];
    ++count[*align.map[i]];
  }
  for (std::size_t t = 0; t < align.ast_size; ++t) {
    if (count[t] == 0) continue;
    out.values[t] /= static_cast<double>(count[t]);
    out.covered[t] = 1;
  }
  return out;
}

AstMatrix aggregate_attention(std::span<const float> att, std::size_t n,
                              const TokenAlignment& align, kernels::Pooling pooling,
                              kernels::Backend backend) {
  if (att.size() != n * n) throw LengthMismatch("attention matrix is not square");
  if (n != align.input_size()) {
    throw LengthMismatch("attention size " + std::to_string(n) +
                         " != input token count " +
                         std::to_string(align.input_size()));
  }
  AstMatrix out;
  out.tokens = align.covered();
  const auto groups = align.groups();
  out.values = kernels::pool<float>(att, n, groups, out.tokens.size(), pooling, backend);
  return out;
}

AstMatrix aggregate_attention(const Matrix& att, const TokenAlignment& align,
                              kernels::Pooling pooling, kernels::Backend backend) {
  if (att.rows() != att.cols()) throw LengthMismatch("attention matrix is not square");
  if (att.rows() != align.input_size()) {
    throw LengthMismatch("attention size != input token count");
  }
  AstMatrix out;
  out.tokens = align.covered();
  const auto groups = align.groups();
  out.values = kernels::pool<double>(att.data(), att.rows(), groups, out.tokens.size(),
                                     pooling, backend);
  return out;
}

}  // namespace bugsem
