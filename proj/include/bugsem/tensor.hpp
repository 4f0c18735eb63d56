#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bugsem {

/// Attention weights of one example: layers x heads x n x n, row-major.
struct AttentionTensor {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t n = 0;
  std::vector<float> data;

  AttentionTensor() = default;
  AttentionTensor(std::size_t l, std::size_t h, std::size_t tokens)
      : layers(l), heads(h), n(tokens), data(l * h * tokens * tokens, 0.0f) {}

  bool empty() const noexcept { return data.empty(); }

  std::span<const float> layer(std::size_t l) const {
    return {data.data() + l * heads * n * n, heads * n * n};
  }
  std::span<const float> head(std::size_t l, std::size_t h) const {
    return {data.data() + (l * heads + h) * n * n, n * n};
  }
  std::span<float> head(std::size_t l, std::size_t h) {
    return {data.data() + (l * heads + h) * n * n, n * n};
  }
  float& at(std::size_t l, std::size_t h, std::size_t i, std::size_t j) {
    return data[((l * heads + h) * n + i) * n + j];
  }
  float at(std::size_t l, std::size_t h, std::size_t i, std::size_t j) const {
    return data[((l * heads + h) * n + i) * n + j];
  }

  bool operator==(const AttentionTensor&) const = default;
};

/// Rows (over all layers and heads) whose sum deviates from 1 by more than
/// `tolerance`.
std::size_t count_nonstochastic_rows(const AttentionTensor& t, double tolerance = 1e-3);

}  // namespace bugsem
