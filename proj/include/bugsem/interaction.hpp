#pragma once

// Interaction matrix: a row-stochastic estimate of where the model's
// attention moves next, at AST-token granularity, and the path-oriented
// alignment measures built on it.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "bugsem/bug_features.hpp"
#include "bugsem/kernels.hpp"
#include "bugsem/matrix.hpp"
#include "bugsem/metrics.hpp"
#include "bugsem/tensor.hpp"
#include "bugsem/token_align.hpp"

namespace bugsem {

struct InteractionMatrix {
  std::vector<std::size_t> tokens;  // AST index of each row/column
  Matrix probs;
  std::size_t nonstochastic_rows = 0;  // input rows off by more than 1e-3

  std::size_t size() const noexcept { return tokens.size(); }

  /// Row of AST token `ast_index`, if covered.
  std::optional<std::size_t> position(std::size_t ast_index) const;
};

struct InteractionOptions {
  kernels::Pooling pooling = kernels::Pooling::block_mean;
  kernels::Backend backend = kernels::Backend::openmp;
  double stochastic_tolerance = 1e-3;
};

/// Head-averages each layer, sums the consecutive-layer products
/// A(l) * A(l+1), pools the result to AST tokens and row-normalizes.
/// Throws TooFewLayers for fewer than two layers.
InteractionMatrix build_interaction_matrix(const AttentionTensor& attention,
                                           const TokenAlignment& align,
                                           const InteractionOptions& options = {});

/// Same construction from already head-averaged n x n layers.
InteractionMatrix build_interaction_matrix(std::span<const Matrix> layers,
                                           const TokenAlignment& align,
                                           const InteractionOptions& options = {});

/// IoU of the tokens incident to the top IM cells (k = |B| by default).
/// nullopt when no token of B is covered.
std::optional<double> alignment_im(const InteractionMatrix& im,
                                   std::span<const std::size_t> bug,
                                   std::optional<std::size_t> fixed_k = {});

/// Maps an AST-index path to matrix positions: drops uncovered tokens and
/// collapses consecutive repeats.
std::vector<std::size_t> path_positions(const InteractionMatrix& im,
                                        std::span<const std::size_t> path);

/// Product of IM(b_i, b_i+1) over consecutive path positions.
double path_joint_probability(const Matrix& im, std::span<const std::size_t> path);

struct ChainResult {
  std::size_t chain_length = 0;  // edges
  double edge_coverage = 0.0;

  bool operator==(const ChainResult&) const = default;
};

/// Longest run of consecutive path edges inside the top-t cells, and the
/// share of path edges inside them.
ChainResult longest_chain(const Matrix& im, std::span<const std::size_t> path,
                          std::size_t t);

/// Connected components of the path's nodes under the top-t cells (taken
/// as undirected edges).
std::size_t induced_components(const Matrix& im, std::span<const std::size_t> path,
                               std::size_t t);

std::size_t default_top_t(std::size_t matrix_size, std::size_t path_nodes);

struct LengthBucket {
  std::size_t path_length = 0;
  BoxStats stats;
};

/// Groups records of `metric` by path node count.
std::vector<LengthBucket> bucket_by_path_length(
    std::span<const AlignmentRecord> records, Metric metric = Metric::joint_prob);

}  // namespace bugsem
