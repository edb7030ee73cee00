#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "iball/error.hpp"
#include "iball/kernel.hpp"
#include "iball/linalg.hpp"
#include "iball/parallel.hpp"

namespace iball::domains {

/// Undirected simple graph as sorted adjacency lists.
struct Graph {
  std::vector<std::vector<Index>> adjacency;

  [[nodiscard]] Index size() const noexcept { return static_cast<Index>(adjacency.size()); }

  [[nodiscard]] std::vector<std::pair<Index, Index>> edges() const {
    std::vector<std::pair<Index, Index>> out;
    for (Index v = 0; v < size(); ++v)
      for (Index u : adjacency[static_cast<std::size_t>(v)])
        if (v < u) out.emplace_back(v, u);
    return out;
  }

  [[nodiscard]] bool has_edge(Index a, Index b) const {
    const auto& adj = adjacency[static_cast<std::size_t>(a)];
    return std::binary_search(adj.begin(), adj.end(), b);
  }
};

/// Each row's k nearest other rows by Euclidean distance; ties go to the
/// lower index.
inline std::vector<std::vector<Index>> nearest_neighbors(const Matrix& features, Index k) {
  const Index n = features.rows();
  require(k >= 1, "nearest_neighbors: k must be positive");
  require(n > k, "build_knn_graph: need more than k=" + std::to_string(k) + " samples, got " + std::to_string(n));
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t qi) {
    const Index q = static_cast<Index>(qi);
    std::vector<std::pair<double, Index>> cand;
    cand.reserve(static_cast<std::size_t>(n - 1));
    for (Index j = 0; j < n; ++j) {
      if (j == q) continue;
      cand.emplace_back((features.row(q) - features.row(j)).squaredNorm(), j);
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    auto& nb = out[qi];
    nb.reserve(static_cast<std::size_t>(k));
    for (Index t = 0; t < k; ++t) nb.push_back(cand[static_cast<std::size_t>(t)].second);
  }, 16);
  return out;
}

/// k-nn graph, symmetrized by union, without self loops.
inline Graph build_knn_graph(const Matrix& features, Index k) {
  auto lists = nearest_neighbors(features, k);
  Graph g;
  g.adjacency.resize(lists.size());
  for (std::size_t v = 0; v < lists.size(); ++v) {
    for (Index u : lists[v]) {
      g.adjacency[v].push_back(u);
      g.adjacency[static_cast<std::size_t>(u)].push_back(static_cast<Index>(v));
    }
  }
  for (auto& adj : g.adjacency) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
  return g;
}

struct DomainPartition {
  std::vector<Index> assignments;  ///< per-sample domain in [0, n_d)
  std::vector<Index> sizes;        ///< n_i
  Matrix centroids;                ///< n_d x d, filled by compute_centroids

  [[nodiscard]] Index n_domains() const noexcept { return static_cast<Index>(sizes.size()); }

  /// Sample indices of each domain, in ascending order.
  [[nodiscard]] std::vector<std::vector<Index>> members() const {
    std::vector<std::vector<Index>> out(sizes.size());
    for (std::size_t s = 0; s < assignments.size(); ++s)
      out[static_cast<std::size_t>(assignments[s])].push_back(static_cast<Index>(s));
    return out;
  }

  [[nodiscard]] double balance() const {
    auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    return static_cast<double>(*hi) / static_cast<double>(*lo);
  }
};

inline Index edge_cut(const Graph& g, const std::vector<Index>& assignments) {
  Index cut = 0;
  for (auto [a, b] : g.edges())
    if (assignments[static_cast<std::size_t>(a)] != assignments[static_cast<std::size_t>(b)]) ++cut;
  return cut;
}

namespace detail {

// Multi-source BFS hop distance; unreachable nodes get max().
inline std::vector<Index> hop_distance(const Graph& g, const std::vector<Index>& sources) {
  std::vector<Index> dist(static_cast<std::size_t>(g.size()), std::numeric_limits<Index>::max());
  std::queue<Index> q;
  for (Index s : sources) {
    dist[static_cast<std::size_t>(s)] = 0;
    q.push(s);
  }
  while (!q.empty()) {
    Index v = q.front();
    q.pop();
    for (Index u : g.adjacency[static_cast<std::size_t>(v)]) {
      if (dist[static_cast<std::size_t>(u)] != std::numeric_limits<Index>::max()) continue;
      dist[static_cast<std::size_t>(u)] = dist[static_cast<std::size_t>(v)] + 1;
      q.push(u);
    }
  }
  return dist;
}

}  // namespace detail

/// Balanced partition by greedy region growing from spread-out seeds,
/// followed by boundary refinement that only makes cut-reducing moves
/// inside the size band [floor(n/n_d), max(ceil(n/n_d), floor(1.5 floor(n/n_d)))].
///
/// max/min size <= 1.5 holds whenever n >= 2 n_d or n_d divides n.
inline DomainPartition partition_balanced(const Graph& g, Index n_domains, std::uint64_t seed) {
  const Index n = g.size();
  require(n_domains >= 1, "partition_balanced: n_d must be positive");
  require(n >= n_domains, "partition_balanced: " + std::to_string(n) + " nodes cannot form " +
                              std::to_string(n_domains) + " parts");
  const auto nd = static_cast<std::size_t>(n_domains);
  const Index base = n / n_domains, extra = n % n_domains;
  std::vector<Index> target(nd);
  for (std::size_t p = 0; p < nd; ++p) target[p] = base + (static_cast<Index>(p) < extra ? 1 : 0);

  std::mt19937_64 rng(seed);
  std::vector<Index> seeds{static_cast<Index>(std::uniform_int_distribution<Index>(0, n - 1)(rng))};
  while (static_cast<Index>(seeds.size()) < n_domains) {
    auto dist = detail::hop_distance(g, seeds);
    Index best = -1;
    for (Index v = 0; v < n; ++v) {
      if (dist[static_cast<std::size_t>(v)] == 0) continue;
      if (best < 0 || dist[static_cast<std::size_t>(v)] > dist[static_cast<std::size_t>(best)]) best = v;
    }
    seeds.push_back(best);
  }

  std::vector<Index> assign(static_cast<std::size_t>(n), -1);
  std::vector<Index> size(nd, 0);
  std::vector<std::vector<int>> conn(nd, std::vector<int>(static_cast<std::size_t>(n), 0));
  std::vector<std::set<std::pair<int, Index>>> frontier(nd);  // (-connections, node)
  Index next_free = 0;

  auto place = [&](Index v, std::size_t p) {
    assign[static_cast<std::size_t>(v)] = static_cast<Index>(p);
    ++size[p];
    for (std::size_t q = 0; q < nd; ++q) {
      int c = conn[q][static_cast<std::size_t>(v)];
      if (c > 0) frontier[q].erase({-c, v});
    }
    for (Index u : g.adjacency[static_cast<std::size_t>(v)]) {
      if (assign[static_cast<std::size_t>(u)] >= 0) continue;
      int& c = conn[p][static_cast<std::size_t>(u)];
      if (c > 0) frontier[p].erase({-c, u});
      ++c;
      frontier[p].insert({-c, u});
    }
  };

  for (std::size_t p = 0; p < nd; ++p) place(seeds[p], p);
  Index placed = n_domains;
  while (placed < n) {
    for (std::size_t p = 0; p < nd && placed < n; ++p) {
      if (size[p] >= target[p]) continue;
      Index v;
      if (!frontier[p].empty()) {
        v = frontier[p].begin()->second;
      } else {
        while (assign[static_cast<std::size_t>(next_free)] >= 0) ++next_free;
        v = next_free;
      }
      place(v, p);
      ++placed;
    }
  }

  const Index lo = base;
  const Index hi = std::max(base + (extra > 0 ? 1 : 0), static_cast<Index>(std::floor(1.5 * static_cast<double>(base))));
  std::vector<int> count(nd, 0);
  for (int pass = 0; pass < 50; ++pass) {
    bool moved = false;
    for (Index v = 0; v < n; ++v) {
      const auto own = static_cast<std::size_t>(assign[static_cast<std::size_t>(v)]);
      if (size[own] - 1 < lo) continue;
      std::fill(count.begin(), count.end(), 0);
      for (Index u : g.adjacency[static_cast<std::size_t>(v)]) ++count[static_cast<std::size_t>(assign[static_cast<std::size_t>(u)])];
      std::size_t best = own;
      int best_gain = 0;
      for (std::size_t q = 0; q < nd; ++q) {
        if (q == own || size[q] + 1 > hi) continue;
        int gain = count[q] - count[own];
        if (gain > best_gain) {
          best_gain = gain;
          best = q;
        }
      }
      if (best != own) {
        assign[static_cast<std::size_t>(v)] = static_cast<Index>(best);
        --size[own];
        ++size[best];
        moved = true;
      }
    }
    if (!moved) break;
  }

  DomainPartition out;
  out.assignments = std::move(assign);
  out.sizes = std::move(size);
  return out;
}

/// Fills partition.centroids with the per-domain feature means.
inline void compute_centroids(const Matrix& features, DomainPartition& partition) {
  require(static_cast<Index>(partition.assignments.size()) == features.rows(),
          "compute_centroids: assignment count does not match feature rows");
  const Index nd = partition.n_domains();
  partition.centroids = Matrix::Zero(nd, features.cols());
  std::vector<Index> counts(static_cast<std::size_t>(nd), 0);
  for (Index s = 0; s < features.rows(); ++s) {
    Index dom = partition.assignments[static_cast<std::size_t>(s)];
    require(dom >= 0 && dom < nd, "compute_centroids: assignment out of range");
    partition.centroids.row(dom) += features.row(s);
    ++counts[static_cast<std::size_t>(dom)];
  }
  for (Index i = 0; i < nd; ++i)
    if (counts[static_cast<std::size_t>(i)] > 0) partition.centroids.row(i) /= static_cast<double>(counts[static_cast<std::size_t>(i)]);
}

/// kNN graph, balanced partition and centroids in one call.
inline DomainPartition make_partition(const Matrix& features, Index k, Index n_domains, std::uint64_t seed) {
  DomainPartition p = partition_balanced(build_knn_graph(features, k), n_domains, seed);
  compute_centroids(features, p);
  return p;
}

/// Symmetric domain-relation matrix with zero diagonal and entries in [0, 1].
struct DomainGraph {
  Matrix a;

  [[nodiscard]] Index size() const noexcept { return a.rows(); }
  /// 1 + theta * sum_j A_ij
  [[nodiscard]] double alpha(Index i, double theta) const { return 1.0 + theta * a.row(i).sum(); }
};

inline DomainGraph domain_adjacency(const Matrix& centroids, double sigma) {
  require(centroids.rows() >= 1, "domain_adjacency: need at least one centroid");
  kernel::KernelParams params{kernel::Kind::Gaussian, sigma};
  params.validate();
  DomainGraph g{kernel::gram(centroids, centroids, params).entries};
  g.a.diagonal().setZero();
  return g;
}

/// Index of the nearest centroid; ties go to the lower index.
template <typename Derived>
Index route_to_domain(const Matrix& centroids, const Eigen::MatrixBase<Derived>& x) {
  require(centroids.rows() >= 1, "route_to_domain: no centroids");
  require(centroids.cols() == x.size(), "route_to_domain: feature dimension mismatch");
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < centroids.rows(); ++i) {
    double d = 0.0;
    for (Index k = 0; k < x.size(); ++k) {
      double diff = centroids(i, k) - x(k);
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

/// `sample_id<TAB>domain_index` lines.
inline void write_partition(std::ostream& out, const std::vector<std::string>& ids, const std::vector<Index>& assignments) {
  require(ids.size() == assignments.size(), "write_partition: id count does not match assignments");
  for (std::size_t s = 0; s < ids.size(); ++s) out << ids[s] << '\t' << assignments[s] << '\n';
  if (!out) throw IoError("write_partition: stream write failed");
}

inline std::vector<std::pair<std::string, Index>> read_partition(std::istream& in) {
  std::vector<std::pair<std::string, Index>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    require(tab != std::string::npos, "read_partition: line " + std::to_string(lineno) + " has no tab");
    std::string id = line.substr(0, tab);
    std::istringstream num(line.substr(tab + 1));
    Index dom = -1;
    num >> dom;
    require(!num.fail() && dom >= 0, "read_partition: bad domain index on line " + std::to_string(lineno));
    out.emplace_back(std::move(id), dom);
  }
  if (in.bad()) throw IoError("read_partition: stream read failed");
  return out;
}

}  // namespace iball::domains
