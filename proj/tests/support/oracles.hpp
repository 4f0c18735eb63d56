#pragma once

// Brute-force reference implementations used only by tests. They share no
// code with the library: sets are bitmasks, rankings come from counting,
// and selections come from exhaustive enumeration.

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "bugsem/matrix.hpp"

namespace oracle {

using Mask = std::uint32_t;

inline Mask to_mask(const std::vector<std::size_t>& v) {
  Mask m = 0;
  for (std::size_t i : v) m |= Mask{1} << i;
  return m;
}

inline std::vector<std::size_t> from_mask(Mask m) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < 32; ++i) {
    if (m & (Mask{1} << i)) out.push_back(i);
  }
  return out;
}

inline std::optional<double> iou(Mask a, Mask b) {
  const int uni = std::popcount(a | b);
  if (uni == 0) return std::nullopt;
  return static_cast<double>(std::popcount(a & b)) / uni;
}

inline double key(double v) {
  return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
}

// True when token i must be chosen before token j.
inline bool beats(const std::vector<double>& s, std::size_t i, std::size_t j) {
  return key(s[i]) > key(s[j]) || (key(s[i]) == key(s[j]) && i < j);
}

/// The unique k-subset S with every member beating every non-member, found
/// by trying all subsets. Tokens with `eligible` false are never chosen.
inline Mask top_k(const std::vector<double>& s, std::size_t k,
                  const std::vector<char>* eligible = nullptr) {
  const std::size_t n = s.size();
  std::optional<Mask> found;
  for (Mask m = 0; m < (Mask{1} << n); ++m) {
    if (static_cast<std::size_t>(std::popcount(m)) != k) continue;
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      const bool in = m & (Mask{1} << i);
      if (in && eligible && !(*eligible)[i]) ok = false;
      if (!in) continue;
      for (std::size_t j = 0; j < n && ok; ++j) {
        if (m & (Mask{1} << j)) continue;
        if (eligible && !(*eligible)[j]) continue;
        if (!beats(s, i, j)) ok = false;
      }
    }
    if (ok) {
      if (found) return ~Mask{0};  // not unique: signals an oracle bug
      found = m;
    }
  }
  return found.value_or(~Mask{0});
}

/// Rank of cell (r, c): the number of cells strictly ahead of it.
inline std::size_t cell_rank(const bugsem::Matrix& m, std::size_t r, std::size_t c) {
  std::size_t rank = 0;
  const double v = key(m(r, c));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      const double w = key(m(i, j));
      if (w > v || (w == v && (i < r || (i == r && j < c)))) ++rank;
    }
  }
  return rank;
}

/// Cell (row, col) at each rank.
inline std::vector<std::pair<std::size_t, std::size_t>> cells_by_rank(
    const bugsem::Matrix& m) {
  std::vector<std::pair<std::size_t, std::size_t>> out(m.rows() * m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out[cell_rank(m, i, j)] = {i, j};
  }
  return out;
}

inline Mask top_incident(const bugsem::Matrix& m, std::size_t k) {
  std::vector<std::size_t> order;
  auto seen = [&](std::size_t t) {
    for (std::size_t x : order) {
      if (x == t) return true;
    }
    return false;
  };
  for (const auto& [r, c] : cells_by_rank(m)) {
    if (order.size() >= k) break;
    if (!seen(r)) order.push_back(r);
    if (order.size() >= k) break;
    if (!seen(c)) order.push_back(c);
  }
  order.resize(std::min(order.size(), k));
  return to_mask(order);
}

struct Chain {
  std::size_t length = 0;
  double coverage = 0.0;
};

/// Longest window of consecutive in-top-t path edges, by checking every
/// window.
inline Chain longest_chain(const bugsem::Matrix& m, const std::vector<std::size_t>& path,
                           std::size_t t) {
  const std::size_t edges = path.size() - 1;
  std::vector<bool> in(edges);
  std::size_t covered = 0;
  for (std::size_t e = 0; e < edges; ++e) {
    in[e] = cell_rank(m, path[e], path[e + 1]) < t;
    covered += in[e];
  }
  Chain out;
  for (std::size_t a = 0; a < edges; ++a) {
    for (std::size_t b = a; b < edges; ++b) {
      bool all = true;
      for (std::size_t e = a; e <= b; ++e) all = all && in[e];
      if (all) out.length = std::max(out.length, b - a + 1);
    }
  }
  out.coverage = static_cast<double>(covered) / static_cast<double>(edges);
  return out;
}

/// Components of the path's distinct nodes under the top-t cells taken as
/// undirected edges, via Floyd-Warshall reachability.
inline std::size_t components(const bugsem::Matrix& m,
                              const std::vector<std::size_t>& path, std::size_t t) {
  std::vector<std::size_t> nodes;
  for (std::size_t p : path) {
    bool dup = false;
    for (std::size_t q : nodes) dup = dup || q == p;
    if (!dup) nodes.push_back(p);
  }
  const std::size_t n = nodes.size();
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    reach[i][i] = true;
    for (std::size_t j = 0; j < n; ++j) {
      if (cell_rank(m, nodes[i], nodes[j]) < t || cell_rank(m, nodes[j], nodes[i]) < t) {
        reach[i][j] = true;
      }
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (reach[i][k] && reach[k][j]) reach[i][j] = true;
      }
    }
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool first = true;
    for (std::size_t j = 0; j < i; ++j) first = first && !reach[i][j];
    count += first;
  }
  return count;
}

}  // namespace oracle
