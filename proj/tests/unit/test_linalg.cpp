#include <gtest/gtest.h>

#include <random>

#include "iball/linalg.hpp"
#include "oracles.hpp"

using namespace iball;
using namespace iball::linalg;

namespace {

EigenPair full_pair(const Matrix& m) { return sym_eig_topr(SymMatrix(m), m.rows()); }

// Random symmetric border appending m rows/cols to an n x n matrix.
SparsePerturbation bordered(Index n, Index m, std::mt19937_64& rng, Matrix* dense = nullptr) {
  Matrix border = oracle::random_symmetric(n + m, rng);
  std::vector<Index> aff;
  for (Index k = n; k < n + m; ++k) aff.push_back(k);
  Matrix cols = border.rightCols(m);
  if (dense != nullptr) {
    dense->setZero(n + m, n + m);
    dense->rightCols(m) = cols;
    dense->bottomRows(m) = cols.transpose();
  }
  return SparsePerturbation(n + m, aff, cols);
}

Matrix padded(const Matrix& s, Index extra) {
  Matrix out = Matrix::Zero(s.rows() + extra, s.cols() + extra);
  out.topLeftCorner(s.rows(), s.cols()) = s;
  return out;
}

}  // namespace

TEST(SymMatrix, RejectsAsymmetricInput) {
  Matrix m(2, 2);
  m << 1, 2, 3, 4;
  EXPECT_THROW(SymMatrix{m}, ValidationError);
  EXPECT_THROW(SymMatrix{Matrix(2, 3)}, ValidationError);
}

TEST(SymMatrix, RejectsNonFinite) {
  Matrix m = Matrix::Identity(2, 2);
  m(0, 0) = std::nan("");
  EXPECT_THROW(SymMatrix{m}, ValidationError);
}

TEST(SymEigTopr, Identity) {
  auto e = sym_eig_topr(SymMatrix::identity(3), 3);
  EXPECT_TRUE(e.values.isApprox(Vector::Ones(3)));
  EXPECT_LT(orthonormality_error(e.vectors), 1e-12);
}

TEST(SymEigTopr, DiagonalKeepsLargestMagnitude) {
  Matrix m = Vector(Eigen::Vector3d(5, 2, -3)).asDiagonal();
  auto e = sym_eig_topr(SymMatrix(m), 2);
  ASSERT_EQ(e.rank(), 2);
  EXPECT_DOUBLE_EQ(e.values(0), 5.0);
  EXPECT_DOUBLE_EQ(e.values(1), -3.0);
  EXPECT_NEAR(e.vectors(0, 0), 1.0, 1e-14);
  EXPECT_NEAR(e.vectors(2, 1), 1.0, 1e-14);
}

TEST(SymEigTopr, RandomFullReconstruction) {
  std::mt19937_64 rng(11);
  Matrix m = oracle::random_symmetric(8, rng);
  auto e = sym_eig_topr(SymMatrix(m), 8);
  EXPECT_LT((e.reconstruct() - m).norm(), 1e-10);
  auto [ref, vecs] = oracle::jacobi_eig(m);
  std::vector<double> a(e.values.data(), e.values.data() + 8), b(ref.data(), ref.data() + 8);
  std::sort(a.begin(), a.end());
  for (int k = 0; k < 8; ++k) EXPECT_NEAR(a[static_cast<std::size_t>(k)], b[static_cast<std::size_t>(k)], 1e-10);
}

TEST(SymEigTopr, TruncationIsBestRankR) {
  std::mt19937_64 rng(12);
  Matrix m = oracle::random_symmetric(10, rng);
  auto [vals, vecs] = oracle::jacobi_eig(m);
  std::vector<double> mags;
  for (Index k = 0; k < vals.size(); ++k) mags.push_back(vals(k) * vals(k));
  std::sort(mags.begin(), mags.end());
  for (Index r = 1; r <= 10; ++r) {
    auto e = sym_eig_topr(SymMatrix(m), r);
    double tail = 0.0;
    for (Index k = 0; k < 10 - r; ++k) tail += mags[static_cast<std::size_t>(k)];
    EXPECT_NEAR((e.reconstruct() - m).squaredNorm(), tail, 1e-9);
  }
}

TEST(SymEigTopr, RejectsBadRank) {
  EXPECT_THROW(sym_eig_topr(SymMatrix::identity(3), 0), ValidationError);
  EXPECT_THROW(sym_eig_topr(SymMatrix::identity(3), 4), ValidationError);
}

TEST(SymEigTopr, SignAndOrderConvention) {
  std::mt19937_64 rng(13);
  auto e = sym_eig_topr(SymMatrix(oracle::random_symmetric(6, rng)), 6);
  for (Index k = 1; k < e.rank(); ++k) EXPECT_GE(std::abs(e.values(k - 1)), std::abs(e.values(k)));
  for (Index k = 0; k < e.rank(); ++k) {
    Index first = 0;
    while (std::abs(e.vectors(first, k)) <= 1e-10 * e.vectors.col(k).cwiseAbs().maxCoeff()) ++first;
    EXPECT_GT(e.vectors(first, k), 0.0);
  }
}

TEST(PartialQr, DependentColumnDropped) {
  Matrix u = Matrix::Zero(3, 1);
  u(0, 0) = 1;
  auto qr = partial_qr(u, u);
  EXPECT_EQ(qr.delta_q.cols(), 0);
  ASSERT_EQ(qr.r.rows(), 1);
  ASSERT_EQ(qr.r.cols(), 2);
  EXPECT_NEAR(qr.r(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(qr.r(0, 1), 1.0, 1e-15);
}

TEST(PartialQr, OrthogonalColumnKept) {
  Matrix u = Matrix::Zero(3, 1), p = Matrix::Zero(3, 1);
  u(0, 0) = 1;
  p(1, 0) = 1;
  auto qr = partial_qr(u, p);
  ASSERT_EQ(qr.delta_q.cols(), 1);
  EXPECT_TRUE(qr.delta_q.isApprox(p));
  EXPECT_TRUE(qr.r.isApprox(Matrix::Identity(2, 2)));
}

TEST(PartialQr, RandomReconstruction) {
  std::mt19937_64 rng(21);
  Matrix u = oracle::random_orthonormal(6, 2, rng);
  Matrix p = oracle::random_matrix(6, 3, rng);
  auto qr = partial_qr(u, p);
  ASSERT_EQ(qr.delta_q.cols(), 3);
  Matrix basis(6, 5), target(6, 5);
  basis << u, qr.delta_q;
  target << u, p;
  EXPECT_LT((basis * qr.r - target).norm(), 1e-10);
  EXPECT_LT(orthonormality_error(basis), 1e-10);
  EXPECT_TRUE(qr.r.bottomLeftCorner(3, 2).isZero(0.0));
}

TEST(PartialQr, RejectsNonOrthonormalBasis) {
  std::mt19937_64 rng(22);
  EXPECT_THROW(partial_qr(oracle::random_matrix(5, 2, rng), oracle::random_matrix(5, 1, rng)), ValidationError);
  EXPECT_THROW(partial_qr(Matrix::Identity(4, 2), Matrix::Zero(5, 1)), ValidationError);
}

TEST(SparsePerturbation, TripletRoundTrip) {
  std::mt19937_64 rng(31);
  Matrix dense;
  auto d = bordered(5, 2, rng, &dense);
  EXPECT_TRUE(d.dense().isApprox(dense));
  auto again = SparsePerturbation::from_triplets(7, d.triplets(), {5, 6});
  EXPECT_TRUE(again.dense().isApprox(dense));
}

TEST(SparsePerturbation, RejectsAsymmetricTriplets) {
  std::vector<Eigen::Triplet<double>> t{{0, 2, 1.0}, {2, 0, 2.0}};
  EXPECT_THROW(SparsePerturbation::from_triplets(3, t, {2}), ValidationError);
}

TEST(SparsePerturbation, RejectsTripletsOutsideAffectedSet) {
  std::vector<Eigen::Triplet<double>> t{{0, 1, 1.0}, {1, 0, 1.0}};
  EXPECT_THROW(SparsePerturbation::from_triplets(3, t, {2}), ValidationError);
  EXPECT_THROW(SparsePerturbation(3, {3}, Matrix::Zero(3, 1)), ValidationError);
}

TEST(PerturbationEig, ExactOnCompressedSubspace) {
  std::mt19937_64 rng(32);
  for (Index m : {1, 2, 5}) {
    Matrix dense;
    auto d = bordered(12, m, rng, &dense);
    auto e = perturbation_eig(d);
    EXPECT_LE(e.rank(), 2 * m);
    EXPECT_LT(orthonormality_error(e.vectors), 1e-8);
    EXPECT_LT((e.reconstruct() - dense).norm(), 1e-8);
  }
}

TEST(PerturbationEig, InteriorAffectedRows) {
  std::mt19937_64 rng(33);
  Matrix full = oracle::random_symmetric(9, rng);
  std::vector<Index> aff{1, 4, 7};
  Matrix cols(9, 3);
  for (int k = 0; k < 3; ++k) cols.col(k) = full.col(aff[static_cast<std::size_t>(k)]);
  SparsePerturbation d(9, aff, cols);
  auto e = perturbation_eig(d);
  EXPECT_LT((e.reconstruct() - d.dense()).norm(), 1e-8);
}

TEST(PadRows, InsertsZeroRowsAtPositions) {
  Matrix u(3, 1);
  u << 1, 2, 3;
  std::vector<Insertion> ins{{1, 2}, {3, 1}};
  Matrix out = pad_rows(u, ins);
  Vector expect(6);
  expect << 1, 0, 0, 2, 3, 0;
  EXPECT_TRUE(out.col(0).isApprox(expect));
  EXPECT_EQ(inserted_indices(ins), (std::vector<Index>{1, 2, 5}));
}

TEST(EigenUpdate, FullRankAppendIsExact) {
  std::mt19937_64 rng(41);
  Matrix st = oracle::random_symmetric(4, rng);
  Matrix dense;
  auto delta = bordered(4, 1, rng, &dense);
  std::vector<Insertion> ins{{4, 1}};
  auto e = eigen_update(full_pair(st), ins, delta);
  Matrix st1 = padded(st, 1) + dense;
  EXPECT_EQ(e.rank(), 5);
  EXPECT_LT((e.reconstruct() - st1).norm(), 1e-8 * st1.norm());
  auto [vals, vecs] = oracle::jacobi_eig(st1);
  std::vector<double> got(e.values.data(), e.values.data() + 5);
  std::sort(got.begin(), got.end());
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(got[static_cast<std::size_t>(k)], vals(k), 1e-9);
}

TEST(EigenUpdate, InteriorInsertions) {
  std::mt19937_64 rng(42);
  Matrix st = oracle::random_symmetric(6, rng);
  std::vector<Insertion> ins{{2, 1}, {6, 2}, {0, 1}};
  auto idx = inserted_indices(ins);
  // Embed S_t into the new coordinates.
  std::vector<Index> old_rows;
  for (Index k = 0; k < 10; ++k)
    if (std::find(idx.begin(), idx.end(), k) == idx.end()) old_rows.push_back(k);
  Matrix st1 = oracle::random_symmetric(10, rng);
  Matrix embedded = Matrix::Zero(10, 10);
  for (Index a = 0; a < 6; ++a)
    for (Index b = 0; b < 6; ++b) {
      embedded(old_rows[static_cast<std::size_t>(a)], old_rows[static_cast<std::size_t>(b)]) = st(a, b);
      st1(old_rows[static_cast<std::size_t>(a)], old_rows[static_cast<std::size_t>(b)]) = st(a, b);
    }
  Matrix cols(10, static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) cols.col(static_cast<Index>(k)) = st1.col(idx[k]) - embedded.col(idx[k]);
  auto e = eigen_update(full_pair(st), ins, SparsePerturbation(10, idx, cols));
  EXPECT_LT((e.reconstruct() - st1).norm(), 1e-8 * st1.norm());
}

TEST(EigenUpdate, ZeroPerturbationIsNoOp) {
  std::mt19937_64 rng(43);
  Matrix st = oracle::random_symmetric(5, rng);
  auto before = full_pair(st);
  auto after = eigen_update(before, {}, SparsePerturbation(5));
  EXPECT_LT((after.reconstruct() - before.reconstruct()).norm(), 1e-10);
  EXPECT_TRUE(after.values.isApprox(before.values, 1e-12));
  EXPECT_LT((after.vectors - before.vectors).norm(), 1e-10);
}

TEST(EigenUpdate, PerturbationOfExistingRows) {
  std::mt19937_64 rng(44);
  Matrix st = oracle::random_symmetric(7, rng);
  Matrix full = oracle::random_symmetric(7, rng);
  std::vector<Index> aff{2, 5};
  Matrix cols(7, 2);
  cols << full.col(2), full.col(5);
  SparsePerturbation d(7, aff, cols);
  auto e = eigen_update(full_pair(st), {}, d);
  EXPECT_LT((e.reconstruct() - (st + d.dense())).norm(), 1e-8 * st.norm());
}

TEST(EigenUpdate, TruncatesToInputRank) {
  std::mt19937_64 rng(45);
  Matrix st = oracle::random_symmetric(6, rng);
  auto e = sym_eig_topr(SymMatrix(st), 2);
  Matrix dense;
  std::vector<Insertion> ins{{6, 1}};
  auto out = eigen_update(e, ins, bordered(6, 1, rng, &dense));
  EXPECT_EQ(out.rank(), 2);
  EXPECT_EQ(out.dim(), 7);
  EXPECT_LT(orthonormality_error(out.vectors), 1e-10);
  auto wider = eigen_update(e, ins, bordered(6, 1, rng), Index{4});
  EXPECT_EQ(wider.rank(), 4);
}

TEST(EigenUpdate, RejectsDimensionMismatch) {
  auto e = full_pair(Matrix::Identity(3, 3));
  std::vector<Insertion> ins{{3, 1}};
  EXPECT_THROW(eigen_update(e, ins, SparsePerturbation(5)), ValidationError);
  EXPECT_THROW(eigen_update(e, ins, SparsePerturbation(4)), ValidationError);  // inserted row not affected
}

TEST(EigenUpdate, ChainedUpdatesStayOrthonormal) {
  std::mt19937_64 rng(46);
  Index n = 20;
  Matrix s = oracle::random_symmetric(n, rng);
  auto e = full_pair(s);
  for (int step = 0; step < 10; ++step) {
    Matrix dense;
    auto d = bordered(n, 2, rng, &dense);
    std::vector<Insertion> ins{{n, 2}};
    e = eigen_update(e, ins, d);
    s = padded(s, 2) + dense;
    n += 2;
    EXPECT_LT(orthonormality_error(e.vectors), 1e-7);
    EXPECT_LT((e.reconstruct() - s).norm(), 1e-8 * s.norm());
  }
}

TEST(ApplyInverse, Identity) {
  Vector y(3);
  y << 1, 2, 3;
  EXPECT_TRUE(apply_inverse(full_pair(Matrix::Identity(3, 3)), y).isApprox(y));
}

TEST(ApplyInverse, Diagonal) {
  Matrix m = Vector(Eigen::Vector2d(2, 4)).asDiagonal();
  Vector y(2);
  y << 2, 4;
  EXPECT_TRUE(apply_inverse(full_pair(m), y).isApprox(Vector::Ones(2)));
}

TEST(ApplyInverse, MatchesDenseSolve) {
  std::mt19937_64 rng(51);
  Matrix b = oracle::random_matrix(5, 5, rng);
  Matrix m = b * b.transpose() + Matrix::Identity(5, 5);
  Vector y = oracle::random_vector(5, rng);
  Vector ref = oracle::gauss_solve(m, y);
  Vector got = apply_inverse(full_pair(m), y);
  EXPECT_LT((got - ref).norm(), 1e-9 * ref.norm());
}

TEST(ApplyInverse, FloorDropsSmallEigenvalues) {
  Matrix m = Vector(Eigen::Vector2d(1.0, 1e-14)).asDiagonal();
  Vector y = Vector::Ones(2);
  Vector got = apply_inverse(full_pair(m), y);
  EXPECT_DOUBLE_EQ(got(0), 1.0);
  EXPECT_DOUBLE_EQ(got(1), 0.0);
  EXPECT_NEAR(apply_inverse(full_pair(m), y, 0.0)(1), 1e14, 1e2);
}

TEST(ApplyInverse, RejectsLengthMismatch) {
  EXPECT_THROW(apply_inverse(full_pair(Matrix::Identity(3, 3)), Vector::Ones(2)), ValidationError);
}
