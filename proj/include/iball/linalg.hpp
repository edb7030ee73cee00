#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iball/error.hpp"

namespace iball {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

/// Dense symmetric matrix. Construction checks symmetry and finiteness, then
/// stores the exactly symmetrized value.
class SymMatrix {
 public:
  SymMatrix() = default;

  explicit SymMatrix(Matrix m, double rel_tol = 1e-12) : m_(std::move(m)) {
    require(m_.rows() == m_.cols(), "SymMatrix: matrix is " + std::to_string(m_.rows()) + "x" +
                                        std::to_string(m_.cols()) + ", expected square");
    require(m_.allFinite(), "SymMatrix: non-finite entry");
    double scale = m_.size() == 0 ? 0.0 : m_.cwiseAbs().maxCoeff();
    double asym = m_.size() == 0 ? 0.0 : (m_ - m_.transpose()).cwiseAbs().maxCoeff();
    require(asym <= rel_tol * std::max(scale, 1e-300),
            "SymMatrix: asymmetry " + std::to_string(asym) + " exceeds tolerance");
    m_ = 0.5 * (m_ + m_.transpose());
  }

  static SymMatrix identity(Index n) { return SymMatrix(Matrix::Identity(n, n)); }

  [[nodiscard]] const Matrix& matrix() const noexcept { return m_; }
  [[nodiscard]] Index dim() const noexcept { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }

 private:
  Matrix m_;
};

/// Orthonormal vectors (n x r) and eigenvalues (length r), sorted by
/// descending absolute value.
struct EigenPair {
  Matrix vectors;
  Vector values;

  [[nodiscard]] Index dim() const noexcept { return vectors.rows(); }
  [[nodiscard]] Index rank() const noexcept { return values.size(); }

  /// U diag(values) U'
  [[nodiscard]] Matrix reconstruct() const {
    return vectors * values.asDiagonal() * vectors.transpose();
  }
};

/// ||U'U - I||_F
inline double orthonormality_error(const Matrix& u) {
  if (u.cols() == 0) return 0.0;
  return (u.transpose() * u - Matrix::Identity(u.cols(), u.cols())).norm();
}

/// Symmetric perturbation whose nonzeros all lie in the rows or columns of a
/// small affected index set J. Stored as the column block D = dS(:, J); the
/// full matrix is D E_J' + E_J D' - E_J D(J,:) E_J'.
class SparsePerturbation {
 public:
  SparsePerturbation() = default;

  /// Zero perturbation of dimension n.
  explicit SparsePerturbation(Index n) : n_(n), columns_(n, 0) {}

  /// From the affected column block. D(J,:) must be symmetric.
  SparsePerturbation(Index n, std::vector<Index> affected, Matrix columns)
      : n_(n), affected_(std::move(affected)), columns_(std::move(columns)) {
    require(std::is_sorted(affected_.begin(), affected_.end()) &&
                std::adjacent_find(affected_.begin(), affected_.end()) == affected_.end(),
            "SparsePerturbation: affected indices must be sorted and unique");
    require(affected_.empty() || (affected_.front() >= 0 && affected_.back() < n_),
            "SparsePerturbation: affected index out of range");
    require(columns_.rows() == n_ && columns_.cols() == static_cast<Index>(affected_.size()),
            "SparsePerturbation: column block has wrong shape");
    require(columns_.allFinite(), "SparsePerturbation: non-finite entry");
    Matrix core = affected_block();
    double scale = std::max(core.size() ? core.cwiseAbs().maxCoeff() : 0.0, 1e-300);
    require(core.size() == 0 || (core - core.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
            "SparsePerturbation: affected block is not symmetric");
  }

  /// From a symmetric triplet set. Every triplet must touch an affected row or column.
  static SparsePerturbation from_triplets(Index n, const std::vector<Eigen::Triplet<double>>& triplets,
                                          std::vector<Index> affected) {
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());
    std::vector<Index> slot(static_cast<std::size_t>(n), -1);
    for (std::size_t k = 0; k < affected.size(); ++k) {
      require(affected[k] >= 0 && affected[k] < n, "SparsePerturbation: affected index out of range");
      slot[static_cast<std::size_t>(affected[k])] = static_cast<Index>(k);
    }
    Eigen::SparseMatrix<double> m(n, n);
    for (const auto& t : triplets) {
      require(t.row() >= 0 && t.row() < n && t.col() >= 0 && t.col() < n,
              "SparsePerturbation: triplet index out of range");
      require(slot[static_cast<std::size_t>(t.row())] >= 0 || slot[static_cast<std::size_t>(t.col())] >= 0,
              "SparsePerturbation: triplet (" + std::to_string(t.row()) + "," + std::to_string(t.col()) +
                  ") touches no affected index");
    }
    m.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SparseMatrix<double> mt = m.transpose();
    double asym = (m - mt).norm();
    require(asym <= 1e-12 * std::max(m.norm(), 1e-300), "SparsePerturbation: triplet set is not symmetric");
    Matrix cols = Matrix::Zero(n, static_cast<Index>(affected.size()));
    for (Index c = 0; c < m.outerSize(); ++c) {
      Index s = slot[static_cast<std::size_t>(c)];
      if (s < 0) continue;
      for (Eigen::SparseMatrix<double>::InnerIterator it(m, c); it; ++it) cols(it.row(), s) = it.value();
    }
    return SparsePerturbation(n, std::move(affected), std::move(cols));
  }

  [[nodiscard]] Index dim() const noexcept { return n_; }
  [[nodiscard]] const std::vector<Index>& affected() const noexcept { return affected_; }
  [[nodiscard]] const Matrix& columns() const noexcept { return columns_; }

  /// dS(J, J)
  [[nodiscard]] Matrix affected_block() const {
    Index m = static_cast<Index>(affected_.size());
    Matrix core(m, m);
    for (Index a = 0; a < m; ++a) core.row(a) = columns_.row(affected_[static_cast<std::size_t>(a)]);
    return core;
  }

  /// Nonzero entries, each off-block entry listed once per orientation.
  [[nodiscard]] std::vector<Eigen::Triplet<double>> triplets() const {
    std::vector<bool> in_j(static_cast<std::size_t>(n_), false);
    for (Index j : affected_) in_j[static_cast<std::size_t>(j)] = true;
    std::vector<Eigen::Triplet<double>> out;
    for (std::size_t s = 0; s < affected_.size(); ++s) {
      Index col = affected_[s];
      for (Index row = 0; row < n_; ++row) {
        double v = columns_(row, static_cast<Index>(s));
        if (v == 0.0) continue;
        out.emplace_back(row, col, v);
        if (!in_j[static_cast<std::size_t>(row)]) out.emplace_back(col, row, v);
      }
    }
    return out;
  }

  [[nodiscard]] Matrix dense() const {
    Matrix out = Matrix::Zero(n_, n_);
    for (std::size_t s = 0; s < affected_.size(); ++s) {
      out.col(affected_[s]) = columns_.col(static_cast<Index>(s));
      out.row(affected_[s]) = columns_.col(static_cast<Index>(s)).transpose();
    }
    return out;
  }

 private:
  Index n_ = 0;
  std::vector<Index> affected_;
  Matrix columns_;
};

/// Row/column insertion: `count` zero rows placed before old row `position`
/// (position == old dimension appends).
struct Insertion {
  Index position = 0;
  Index count = 0;
};

namespace detail {

/// Sort by descending |value| (ties: larger value first) and make the first
/// non-negligible component of each vector positive.
inline EigenPair canonicalize(const Matrix& vectors, const Vector& values, Index keep) {
  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    double fa = std::abs(values(a)), fb = std::abs(values(b));
    if (fa != fb) return fa > fb;
    return values(a) > values(b);
  });
  keep = std::min<Index>(keep, values.size());
  EigenPair out{Matrix(vectors.rows(), keep), Vector(keep)};
  for (Index k = 0; k < keep; ++k) {
    Index src = order[static_cast<std::size_t>(k)];
    out.values(k) = values(src);
    auto col = vectors.col(src);
    double inf = col.size() ? col.cwiseAbs().maxCoeff() : 0.0;
    double sign = 1.0;
    for (Index i = 0; i < col.size(); ++i) {
      if (std::abs(col(i)) > 1e-10 * inf) {
        sign = col(i) < 0 ? -1.0 : 1.0;
        break;
      }
    }
    out.vectors.col(k) = sign * col;
  }
  return out;
}

/// Full dense eigendecomposition of a symmetric matrix.
inline EigenPair full_eig(const Matrix& m) {
  if (m.rows() == 0) return EigenPair{Matrix(0, 0), Vector(0)};
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) {
    // Eigen allows 30 sweeps per eigenvalue before giving up.
    std::size_t iters = 30 * static_cast<std::size_t>(m.rows());
    throw NumericError("symmetric eigensolver did not converge after " + std::to_string(iters) + " iterations",
                       iters);
  }
  return canonicalize(solver.eigenvectors(), solver.eigenvalues(), m.rows());
}

}  // namespace detail

/// Top-r eigenpairs by |eigenvalue|. The truncated reconstruction is the best
/// rank-r symmetric approximation in Frobenius norm.
inline EigenPair sym_eig_topr(const SymMatrix& m, Index r) {
  require(r >= 1 && r <= m.dim(), "sym_eig_topr: rank " + std::to_string(r) + " outside [1, " +
                                      std::to_string(m.dim()) + "]");
  EigenPair full = detail::full_eig(m.matrix());
  return EigenPair{full.vectors.leftCols(r), full.values.head(r)};
}

struct PartialQr {
  Matrix delta_q;  ///< n x p', orthonormal and orthogonal to U
  Matrix r;        ///< (r+p') x (r+p), [U, delta_q] * r == [U, P]
};

/// Extends the orthonormal basis U by the columns of P using classical
/// Gram-Schmidt with one re-orthogonalization pass. Columns whose residual
/// norm drops below 1e-10 of their original norm are dependent and dropped.
inline PartialQr partial_qr(const Matrix& u, const Matrix& p, double orth_tol = 1e-6) {
  require(u.rows() == p.rows(), "partial_qr: U has " + std::to_string(u.rows()) + " rows, P has " +
                                    std::to_string(p.rows()));
  require(orthonormality_error(u) <= orth_tol, "partial_qr: U is not orthonormal");
  const Index n = u.rows(), r = u.cols(), np = p.cols();
  Matrix q(n, np);
  Matrix coef = Matrix::Zero(r + np, np);  // rows: [U part; accepted Q part]
  Index kept = 0;
  for (Index j = 0; j < np; ++j) {
    Vector v = p.col(j);
    const double before = v.norm();
    for (int pass = 0; pass < 2; ++pass) {
      Vector cu = u.transpose() * v;
      v.noalias() -= u * cu;
      coef.col(j).head(r) += cu;
      if (kept > 0) {
        Vector cq = q.leftCols(kept).transpose() * v;
        v.noalias() -= q.leftCols(kept) * cq;
        coef.col(j).segment(r, kept) += cq;
      }
    }
    const double after = v.norm();
    if (before > 0.0 && after >= 1e-10 * before) {
      q.col(kept) = v / after;
      coef(r + kept, j) = after;
      ++kept;
    }
  }
  PartialQr out;
  out.delta_q = q.leftCols(kept);
  out.r = Matrix::Zero(r + kept, r + np);
  out.r.topLeftCorner(r, r).setIdentity();
  out.r.rightCols(np) = coef.topRows(r + kept);
  return out;
}

/// Exact eigendecomposition of a perturbation supported on the affected
/// rows/columns. Its range lies in span{E_J, D with rows J zeroed}, so the
/// eigenproblem is solved on that subspace (dimension <= 2|J|). Zero
/// eigenvalues are dropped.
inline EigenPair perturbation_eig(const SparsePerturbation& delta) {
  const Index n = delta.dim();
  const auto& aff = delta.affected();
  const Index m = static_cast<Index>(aff.size());
  if (m == 0) return EigenPair{Matrix(n, 0), Vector(0)};

  Matrix outside = delta.columns();
  for (Index j : aff) outside.row(j).setZero();
  PartialQr qr = partial_qr(Matrix(n, 0), outside);
  const Index q = qr.delta_q.cols();

  // Block form in the basis [E_J, Q2]: [[dS(J,J), R2'], [R2, 0]].
  Matrix core = Matrix::Zero(m + q, m + q);
  core.topLeftCorner(m, m) = delta.affected_block();
  core.bottomLeftCorner(q, m) = qr.r;
  core.topRightCorner(m, q) = qr.r.transpose();
  EigenPair small = detail::full_eig(0.5 * (core + core.transpose()));

  const double top = small.rank() ? small.values.cwiseAbs().maxCoeff() : 0.0;
  Index keep = 0;
  while (keep < small.rank() && std::abs(small.values(keep)) > 1e-12 * top) ++keep;

  Matrix basis_w = small.vectors.leftCols(keep);
  Matrix p = qr.delta_q * basis_w.bottomRows(q);
  for (Index a = 0; a < m; ++a) p.row(aff[static_cast<std::size_t>(a)]) += basis_w.row(a);
  return detail::canonicalize(p, small.values.head(keep), keep);
}

/// Zero rows inserted into U at the given positions (old coordinates).
inline Matrix pad_rows(const Matrix& u, std::span<const Insertion> insertions) {
  Index added = 0;
  for (const auto& ins : insertions) {
    require(ins.position >= 0 && ins.position <= u.rows() && ins.count >= 0, "pad_rows: bad insertion");
    added += ins.count;
  }
  std::vector<Insertion> sorted(insertions.begin(), insertions.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Insertion& a, const Insertion& b) { return a.position < b.position; });
  Matrix out = Matrix::Zero(u.rows() + added, u.cols());
  Index src = 0, dst = 0;
  for (const auto& ins : sorted) {
    Index len = ins.position - src;
    out.middleRows(dst, len) = u.middleRows(src, len);
    src += len;
    dst += len + ins.count;
  }
  out.middleRows(dst, u.rows() - src) = u.middleRows(src, u.rows() - src);
  return out;
}

/// Indices (new coordinates) occupied by inserted rows.
inline std::vector<Index> inserted_indices(std::span<const Insertion> insertions) {
  std::vector<Insertion> sorted(insertions.begin(), insertions.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Insertion& a, const Insertion& b) { return a.position < b.position; });
  std::vector<Index> out;
  Index shift = 0;
  for (const auto& ins : sorted) {
    for (Index c = 0; c < ins.count; ++c) out.push_back(ins.position + shift + c);
    shift += ins.count;
  }
  return out;
}

/// Updates the eigenpair of S_t to one of S_{t+1} = S~_t + dS, where S~_t is
/// S_t with zero rows/columns inserted.
///
/// The result is truncated to `max_rank` largest-|lambda| pairs. By default
/// the input rank is kept, except that a full-rank input stays full rank.
inline EigenPair eigen_update(const EigenPair& eig, std::span<const Insertion> insertions,
                              const SparsePerturbation& delta, std::optional<Index> max_rank = std::nullopt) {
  require(eig.vectors.cols() == eig.values.size(), "eigen_update: eigenpair shape mismatch");
  Index added = 0;
  for (const auto& ins : insertions) added += ins.count;
  const Index n_old = eig.dim();
  const Index n_new = n_old + added;
  require(delta.dim() == n_new, "eigen_update: perturbation dimension " + std::to_string(delta.dim()) +
                                    " != " + std::to_string(n_old) + " + " + std::to_string(added));
  for (Index idx : inserted_indices(insertions)) {
    require(std::binary_search(delta.affected().begin(), delta.affected().end(), idx),
            "eigen_update: inserted row " + std::to_string(idx) + " is not in the affected set");
  }

  Matrix u_pad = pad_rows(eig.vectors, insertions);
  EigenPair dp = perturbation_eig(delta);
  PartialQr qr = partial_qr(u_pad, dp.vectors);

  const Index r = eig.rank();
  Vector mid(r + dp.rank());
  mid << eig.values, dp.values;
  Matrix z = qr.r * mid.asDiagonal() * qr.r.transpose();
  EigenPair zeig = detail::full_eig(0.5 * (z + z.transpose()));

  Index keep = max_rank.value_or(r == n_old ? n_new : r);
  keep = std::clamp<Index>(keep, 0, zeig.rank());
  Matrix basis(n_new, r + qr.delta_q.cols());
  basis << u_pad, qr.delta_q;
  Matrix vectors = basis * zeig.vectors.leftCols(keep);
  return detail::canonicalize(vectors, zeig.values.head(keep), keep);
}

/// Default pseudo-inverse floor: 1e-10 of the largest |eigenvalue|.
inline double default_floor(const EigenPair& eig) {
  return eig.rank() ? 1e-10 * eig.values.cwiseAbs().maxCoeff() : 0.0;
}

/// U diag(1/lambda) U' y, with |lambda| < floor treated as zero.
inline Vector apply_inverse(const EigenPair& eig, const Vector& y, std::optional<double> floor = std::nullopt) {
  require(eig.dim() == y.size(), "apply_inverse: eigenvector rows " + std::to_string(eig.dim()) +
                                     " != length " + std::to_string(y.size()));
  const double fl = floor.value_or(default_floor(eig));
  Vector inv(eig.rank());
  for (Index k = 0; k < eig.rank(); ++k) {
    double v = eig.values(k);
    inv(k) = (std::abs(v) < fl || v == 0.0) ? 0.0 : 1.0 / v;
  }
  Vector proj = eig.vectors.transpose() * y;
  return eig.vectors * inv.cwiseProduct(proj);
}

}  // namespace linalg
}  // namespace iball
