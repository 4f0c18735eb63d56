#include "bugsem/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "bugsem/errors.hpp"

namespace bugsem {

namespace {

void require_path(const Matrix& im, std::span<const std::size_t> path) {
  if (path.size() < 2) {
    throw PathTooShort("path has " + std::to_string(path.size()) +
                       " node(s); at least 2 are needed");
  }
  for (std::size_t p : path) {
    if (p >= im.rows()) throw ArgumentError("path position outside the matrix");
  }
}

std::vector<char> top_cell_mask(const Matrix& im, std::size_t t) {
  std::vector<char> mask(im.rows() * im.cols(), 0);
  for (const Cell& c : ranked_cells(im, t)) mask[c.row * im.cols() + c.col] = 1;
  return mask;
}

InteractionMatrix finish(Matrix composed, const TokenAlignment& align,
                         const InteractionOptions& options) {
  InteractionMatrix im;
  im.tokens = align.covered();
  const auto groups = align.groups();
  im.probs = kernels::pool<double>(composed.data(), composed.rows(), groups,
                                   im.tokens.size(), options.pooling, options.backend);
  kernels::row_normalize(im.probs, options.backend);
  return im;
}

}  // namespace

std::optional<std::size_t> InteractionMatrix::position(std::size_t ast_index) const {
  auto it = std::lower_bound(tokens.begin(), tokens.end(), ast_index);
  if (it == tokens.end() || *it != ast_index) return std::nullopt;
  return static_cast<std::size_t>(it - tokens.begin());
}

InteractionMatrix build_interaction_matrix(const AttentionTensor& attention,
                                           const TokenAlignment& align,
                                           const InteractionOptions& options) {
  if (attention.layers < 2) {
    throw TooFewLayers("interaction matrix needs at least 2 layers, got " +
                       std::to_string(attention.layers));
  }
  if (attention.n != align.input_size()) {
    throw LengthMismatch("attention size " + std::to_string(attention.n) +
                         " != input token count " +
                         std::to_string(align.input_size()));
  }
  const std::size_t n = attention.n;
  Matrix composed(n, n);
  Matrix prev = kernels::head_average(attention.layer(0), attention.heads, n,
                                      options.backend);
  for (std::size_t l = 1; l < attention.layers; ++l) {
    Matrix cur = kernels::head_average(attention.layer(l), attention.heads, n,
                                       options.backend);
    kernels::add_product(prev, cur, composed, options.backend);
    prev = std::move(cur);
  }
  InteractionMatrix im = finish(std::move(composed), align, options);
  im.nonstochastic_rows =
      count_nonstochastic_rows(attention, options.stochastic_tolerance);
  return im;
}

InteractionMatrix build_interaction_matrix(std::span<const Matrix> layers,
                                           const TokenAlignment& align,
                                           const InteractionOptions& options) {
  if (layers.size() < 2) {
    throw TooFewLayers("interaction matrix needs at least 2 layers, got " +
                       std::to_string(layers.size()));
  }
  const std::size_t n = layers.front().rows();
  if (n != align.input_size()) {
    throw LengthMismatch("layer size != input token count");
  }
  Matrix composed(n, n);
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    kernels::add_product(layers[l], layers[l + 1], composed, options.backend);
  }
  std::size_t off = 0;
  for (const Matrix& layer : layers) {
    for (std::size_t i = 0; i < layer.rows(); ++i) {
      double s = 0.0;
      for (double v : layer.row(i)) s += v;
      if (std::abs(s - 1.0) > options.stochastic_tolerance) ++off;
    }
  }
  InteractionMatrix im = finish(std::move(composed), align, options);
  im.nonstochastic_rows = off;
  return im;
}

std::optional<double> alignment_im(const InteractionMatrix& im,
                                   std::span<const std::size_t> bug,
                                   std::optional<std::size_t> fixed_k) {
  const auto b = restrict_to(bug, im.tokens);
  if (b.empty()) return std::nullopt;
  const std::size_t k = std::min(fixed_k.value_or(b.size()), im.size());
  AstMatrix m{im.tokens, im.probs};
  return iou(top_k_incident_tokens(m, k), b);
}

std::vector<std::size_t> path_positions(const InteractionMatrix& im,
                                        std::span<const std::size_t> path) {
  std::vector<std::size_t> out;
  for (std::size_t t : path) {
    auto p = im.position(t);
    if (!p) continue;
    if (!out.empty() && out.back() == *p) continue;
    out.push_back(*p);
  }
  return out;
}

double path_joint_probability(const Matrix& im, std::span<const std::size_t> path) {
  require_path(im, path);
  double p = 1.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) p *= im(path[i], path[i + 1]);
  return p;
}

ChainResult longest_chain(const Matrix& im, std::span<const std::size_t> path,
                          std::size_t t) {
  require_path(im, path);
  if (t < 1) throw ArgumentError("t must be at least 1");
  const auto mask = top_cell_mask(im, t);
  const std::size_t edges = path.size() - 1;
  std::size_t run = 0;
  std::size_t covered = 0;
  ChainResult r;
  for (std::size_t i = 0; i < edges; ++i) {
    if (mask[path[i] * im.cols() + path[i + 1]]) {
      ++covered;
      r.chain_length = std::max(r.chain_length, ++run);
    } else {
      run = 0;
    }
  }
  r.edge_coverage = static_cast<double>(covered) / static_cast<double>(edges);
  return r;
}

std::size_t induced_components(const Matrix& im, std::span<const std::size_t> path,
                               std::size_t t) {
  require_path(im, path);
  if (t < 1) throw ArgumentError("t must be at least 1");
  std::vector<std::size_t> nodes(path.begin(), path.end());
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

  std::vector<std::size_t> local(im.rows(), kernels::kNoGroup);
  for (std::size_t i = 0; i < nodes.size(); ++i) local[nodes[i]] = i;

  std::vector<std::size_t> parent(nodes.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::size_t components = nodes.size();
  for (const Cell& c : ranked_cells(im, t)) {
    const std::size_t a = local[c.row];
    const std::size_t b = local[c.col];
    if (a == kernels::kNoGroup || b == kernels::kNoGroup) continue;
    const std::size_t ra = find(a);
    const std::size_t rb = find(b);
    if (ra != rb) {
      parent[ra] = rb;
      --components;
    }
  }
  return components;
}

std::size_t default_top_t(std::size_t matrix_size, std::size_t path_nodes) {
  return std::max(matrix_size, 2 * path_nodes);
}

std::vector<LengthBucket> bucket_by_path_length(
    std::span<const AlignmentRecord> records, Metric metric) {
  std::map<std::size_t, std::vector<double>> groups;
  for (const auto& r : records) {
    if (r.metric != metric || !r.path_length) continue;
    groups[*r.path_length].push_back(r.score);
  }
  std::vector<LengthBucket> out;
  for (auto& [len, values] : groups) out.push_back({len, box_stats(std::move(values))});
  return out;
}

}  // namespace bugsem
