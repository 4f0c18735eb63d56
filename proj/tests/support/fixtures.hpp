#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bugsem/matrix.hpp"
#include "bugsem/tensor.hpp"
#include "bugsem/token_align.hpp"

namespace fixtures {

inline constexpr const char* kFigureCode = "int main() { malloc(10); }";

// Subword split of the figure program: "()" and ");" are single model
// tokens spanning two AST tokens each, and malloc splits into mall/oc.
inline std::vector<bugsem::InputToken> figure_tokens() {
  struct Piece {
    const char* text;
    int begin;
    int end;
  };
  const Piece pieces[] = {{"[BOS]", -1, -1}, {"int", 0, 3},   {"main", 4, 8},
                          {"()", 9, 12},     {"{", 13, 14},   {"mall", 15, 19},
                          {"oc", 19, 21},    {"(", 22, 23},   {"10", 24, 26},
                          {");", 27, 30},    {"}", 31, 32},   {"[EOS]", -1, -1}};
  std::vector<bugsem::InputToken> out;
  for (const auto& p : pieces) {
    bugsem::InputToken t;
    t.index = out.size();
    t.text = p.text;
    if (p.begin >= 0) {
      t.char_span = bugsem::Span{static_cast<std::size_t>(p.begin),
                                 static_cast<std::size_t>(p.end)};
    }
    out.push_back(t);
  }
  return out;
}

inline std::vector<std::string> texts(const std::vector<bugsem::InputToken>& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens) out.push_back(t.text);
  return out;
}

/// Random row-stochastic tensor with strictly positive entries.
inline bugsem::AttentionTensor random_attention(std::mt19937_64& rng, std::size_t layers,
                                                std::size_t heads, std::size_t n) {
  bugsem::AttentionTensor t(layers, heads, n);
  std::uniform_real_distribution<float> u(0.01f, 1.0f);
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        float sum = 0.0f;
        for (std::size_t j = 0; j < n; ++j) sum += t.at(l, h, i, j) = u(rng);
        for (std::size_t j = 0; j < n; ++j) t.at(l, h, i, j) /= sum;
      }
    }
  }
  return t;
}

inline bugsem::AttentionTensor uniform_attention(std::size_t layers, std::size_t heads,
                                                 std::size_t n) {
  bugsem::AttentionTensor t(layers, heads, n);
  for (float& v : t.data) v = 1.0f / static_cast<float>(n);
  return t;
}

/// Matrix with values drawn from a small set so that ties are common.
inline bugsem::Matrix random_tied_matrix(std::mt19937_64& rng, std::size_t n) {
  bugsem::Matrix m(n, n);
  std::uniform_int_distribution<int> level(0, 4);
  for (double& v : m.data()) v = level(rng) / 4.0;
  return m;
}

inline std::vector<std::size_t> random_subset(std::mt19937_64& rng, std::size_t n,
                                              double p = 0.4) {
  std::bernoulli_distribution coin(p);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (coin(rng)) out.push_back(i);
  }
  return out;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("bugsem-test-" + name + "-" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
