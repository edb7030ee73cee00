#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "iball/domains.hpp"
#include "oracles.hpp"

using namespace iball;
using namespace iball::domains;

namespace {

Graph random_graph(Index n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  Graph g;
  g.adjacency.resize(static_cast<std::size_t>(n));
  for (Index a = 0; a < n; ++a)
    for (Index b = a + 1; b < n; ++b)
      if (coin(rng)) {
        g.adjacency[static_cast<std::size_t>(a)].push_back(b);
        g.adjacency[static_cast<std::size_t>(b)].push_back(a);
      }
  for (auto& adj : g.adjacency) std::sort(adj.begin(), adj.end());
  return g;
}

void expect_valid(const DomainPartition& p, Index n, Index nd) {
  ASSERT_EQ(static_cast<Index>(p.assignments.size()), n);
  ASSERT_EQ(p.n_domains(), nd);
  std::vector<Index> count(static_cast<std::size_t>(nd), 0);
  for (Index a : p.assignments) {
    ASSERT_GE(a, 0);
    ASSERT_LT(a, nd);
    ++count[static_cast<std::size_t>(a)];
  }
  EXPECT_EQ(count, p.sizes);
  EXPECT_GT(*std::min_element(count.begin(), count.end()), 0);
}

}  // namespace

TEST(KnnGraph, CollinearPoints) {
  Matrix x(3, 1);
  x << 0, 1, 10;
  auto g = build_knn_graph(x, 1);
  auto e = g.edges();
  EXPECT_EQ(e, (std::vector<std::pair<Index, Index>>{{0, 1}, {1, 2}}));
}

TEST(KnnGraph, DuplicatePointsBreakTiesTowardLowerIndex) {
  Matrix x(4, 2);
  x << 0, 0, 0, 0, 0, 0, 5, 5;
  auto nn = nearest_neighbors(x, 1);
  EXPECT_EQ(nn[0], std::vector<Index>{1});
  EXPECT_EQ(nn[1], std::vector<Index>{0});
  EXPECT_EQ(nn[2], std::vector<Index>{0});
  EXPECT_EQ(nn[3], std::vector<Index>{0});
  auto g = build_knn_graph(x, 1);
  for (Index v = 0; v < 4; ++v) {
    const auto& adj = g.adjacency[static_cast<std::size_t>(v)];
    EXPECT_TRUE(std::adjacent_find(adj.begin(), adj.end()) == adj.end());
    EXPECT_FALSE(g.has_edge(v, v));
  }
}

TEST(KnnGraph, MatchesBruteForce) {
  std::mt19937_64 rng(3);
  Matrix x = oracle::random_matrix(30, 3, rng);
  auto nn = nearest_neighbors(x, 5);
  auto g = build_knn_graph(x, 5);
  for (Index q = 0; q < 30; ++q) {
    std::vector<std::pair<double, Index>> all;
    for (Index j = 0; j < 30; ++j)
      if (j != q) all.emplace_back((x.row(q) - x.row(j)).squaredNorm(), j);
    std::sort(all.begin(), all.end());
    for (int t = 0; t < 5; ++t) {
      EXPECT_EQ(nn[static_cast<std::size_t>(q)][static_cast<std::size_t>(t)], all[static_cast<std::size_t>(t)].second);
      EXPECT_TRUE(g.has_edge(q, all[static_cast<std::size_t>(t)].second));
      EXPECT_TRUE(g.has_edge(all[static_cast<std::size_t>(t)].second, q));
    }
  }
}

TEST(KnnGraph, RejectsTooFewSamples) {
  EXPECT_THROW(build_knn_graph(Matrix::Zero(5, 2), 5), ValidationError);
  EXPECT_THROW(build_knn_graph(Matrix::Zero(5, 2), 0), ValidationError);
}

TEST(Partition, RecoversSeparatedClusters) {
  std::mt19937_64 rng(4);
  Matrix x = oracle::clustered_points({10, 10}, 3, 0.3, 100.0, rng);
  for (std::uint64_t seed : {0u, 1u, 7u}) {
    auto p = partition_balanced(build_knn_graph(x, 5), 2, seed);
    expect_valid(p, 20, 2);
    for (Index s = 1; s < 10; ++s) EXPECT_EQ(p.assignments[static_cast<std::size_t>(s)], p.assignments[0]);
    for (Index s = 11; s < 20; ++s) EXPECT_EQ(p.assignments[static_cast<std::size_t>(s)], p.assignments[10]);
    EXPECT_NE(p.assignments[0], p.assignments[10]);
  }
}

TEST(Partition, SingletonsWhenPartsEqualNodes) {
  std::mt19937_64 rng(5);
  auto g = random_graph(6, 0.5, rng);
  auto p = partition_balanced(g, 6, 3);
  expect_valid(p, 6, 6);
  for (Index s : p.sizes) EXPECT_EQ(s, 1);
}

TEST(Partition, RandomGraphInvariantsAndCut) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    auto g = random_graph(40, 0.12, rng);
    auto p = partition_balanced(g, 4, static_cast<std::uint64_t>(trial));
    expect_valid(p, 40, 4);
    EXPECT_LE(p.balance(), 1.5);
    std::vector<Index> cuts;
    for (int s = 0; s < 10; ++s) {
      std::vector<Index> perm(40);
      std::iota(perm.begin(), perm.end(), Index{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<Index> assign(40);
      for (Index k = 0; k < 40; ++k) assign[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])] = k % 4;
      cuts.push_back(edge_cut(g, assign));
    }
    std::nth_element(cuts.begin(), cuts.begin() + 5, cuts.end());
    EXPECT_LE(edge_cut(g, p.assignments), cuts[5]);
  }
}

TEST(Partition, DeterministicForSeed) {
  std::mt19937_64 rng(7);
  auto g = random_graph(60, 0.1, rng);
  EXPECT_EQ(partition_balanced(g, 5, 42).assignments, partition_balanced(g, 5, 42).assignments);
}

TEST(Partition, BalanceOnKnnGraphs) {
  std::mt19937_64 rng(8);
  for (Index n : {50, 97, 200}) {
    Matrix x = oracle::random_matrix(n, 3, rng);
    auto p = partition_balanced(build_knn_graph(x, 5), 10, 1);
    expect_valid(p, n, 10);
    EXPECT_LE(p.balance(), 1.5);
  }
}

TEST(Partition, RejectsTooManyParts) {
  std::mt19937_64 rng(9);
  EXPECT_THROW(partition_balanced(random_graph(3, 0.5, rng), 4, 0), ValidationError);
  EXPECT_THROW(partition_balanced(random_graph(3, 0.5, rng), 0, 0), ValidationError);
}

TEST(Centroids, EqualDomainMeans) {
  std::mt19937_64 rng(10);
  Matrix x = oracle::random_matrix(40, 3, rng);
  auto p = make_partition(x, 5, 4, 0);
  auto members = p.members();
  for (Index i = 0; i < 4; ++i) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(3);
    for (Index s : members[static_cast<std::size_t>(i)]) mean += x.row(s);
    mean /= static_cast<double>(members[static_cast<std::size_t>(i)].size());
    EXPECT_LT((p.centroids.row(i) - mean).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(DomainAdjacency, IdenticalCentroids) {
  auto g = domain_adjacency(Matrix::Ones(3, 2), 5.1);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(g.a(i, j), i == j ? 0.0 : 1.0);
}

TEST(DomainAdjacency, SingleDomain) {
  auto g = domain_adjacency(Matrix::Ones(1, 3), 5.1);
  ASSERT_EQ(g.size(), 1);
  EXPECT_EQ(g.a(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(g.alpha(0, 0.5), 1.0);
}

TEST(DomainAdjacency, MatchesScalarKernel) {
  std::mt19937_64 rng(11);
  Matrix c = oracle::random_matrix(3, 3, rng, 4.0);
  auto g = domain_adjacency(c, 5.1);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) {
      double expect = i == j ? 0.0 : oracle::gaussian(c.row(i).transpose(), c.row(j).transpose(), 5.1);
      EXPECT_NEAR(g.a(i, j), expect, 1e-15);
      EXPECT_EQ(g.a(i, j), g.a(j, i));
    }
  EXPECT_THROW(domain_adjacency(c, 0.0), ValidationError);
}

TEST(Routing, NearestCentroid) {
  Matrix c(3, 2);
  c << 0, 0, 10, 0, 0, 10;
  EXPECT_EQ(route_to_domain(c, Eigen::Vector2d(9, 1)), 1);
  EXPECT_EQ(route_to_domain(c, Eigen::Vector2d(1, 8)), 2);
  EXPECT_EQ(route_to_domain(c, Eigen::Vector2d(5, 0)), 0);  // tie goes to the lower index
  EXPECT_THROW(route_to_domain(c, Eigen::Vector3d(1, 1, 1)), ValidationError);
}

TEST(PartitionFile, RoundTrip) {
  std::ostringstream out;
  write_partition(out, {"p1", "p2", "x"}, {0, 2, 1});
  EXPECT_EQ(out.str(), "p1\t0\np2\t2\nx\t1\n");
  std::istringstream in(out.str());
  auto rows = read_partition(in);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1].first, "p2");
  EXPECT_EQ(rows[1].second, 2);
  std::istringstream bad("p1 0\n");
  EXPECT_THROW(read_partition(bad), ValidationError);
}
