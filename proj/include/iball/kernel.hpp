#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "iball/error.hpp"
#include "iball/linalg.hpp"
#include "iball/parallel.hpp"

namespace iball::kernel {

enum class Kind { Gaussian };

struct KernelParams {
  Kind kind = Kind::Gaussian;
  double sigma = 5.1;

  void validate() const {
    require(std::isfinite(sigma) && sigma > 0.0, "KernelParams: sigma must be positive, got " + std::to_string(sigma));
  }
};

/// exp(-||x - z||^2 / (2 sigma^2))
template <typename A, typename B>
double kernel_fn(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& z, const KernelParams& params) {
  require(x.size() == z.size(), "kernel_fn: dimension mismatch " + std::to_string(x.size()) + " vs " +
                                    std::to_string(z.size()));
  double sq = 0.0;
  for (Index k = 0; k < x.size(); ++k) {
    double diff = x(k) - z(k);
    sq += diff * diff;
  }
  return std::exp(-sq / (2.0 * params.sigma * params.sigma));
}

enum class Role { Within, Cross, NewVsOld, NewVsNew };

struct GramBlock {
  Matrix entries;
  Role role = Role::Cross;

  [[nodiscard]] Index rows() const noexcept { return entries.rows(); }
  [[nodiscard]] Index cols() const noexcept { return entries.cols(); }
};

/// Entry (a, b) = k(X(a,:), Z(b,:)). Rows are computed independently.
inline GramBlock gram(const Matrix& x, const Matrix& z, const KernelParams& params, Role role = Role::Cross) {
  params.validate();
  require(x.cols() == z.cols() || x.rows() == 0 || z.rows() == 0,
          "gram: feature dimensions differ (" + std::to_string(x.cols()) + " vs " + std::to_string(z.cols()) + ")");
  GramBlock out{Matrix(x.rows(), z.rows()), role};
  const double scale = -1.0 / (2.0 * params.sigma * params.sigma);
  const Index d = x.cols();
  parallel_for(static_cast<std::size_t>(x.rows()), [&](std::size_t ai) {
    const Index a = static_cast<Index>(ai);
    for (Index b = 0; b < z.rows(); ++b) {
      double sq = 0.0;
      for (Index k = 0; k < d; ++k) {
        double diff = x(a, k) - z(b, k);
        sq += diff * diff;
      }
      out.entries(a, b) = std::exp(scale * sq);
    }
  });
  return out;
}

/// The kernel blocks touching a batch of new samples, for a domain pair (i, j).
struct IncrementalBlocks {
  GramBlock k_new_old;      ///< new_i vs old_i
  GramBlock h_new_new;      ///< new_i vs new_i
  GramBlock k_istar_j;      ///< new_i vs old_j
  GramBlock k_i_jstar;      ///< old_i vs new_j
  GramBlock h_istar_jstar;  ///< new_i vs new_j
};

inline IncrementalBlocks incremental_blocks(const Matrix& old_i, const Matrix& new_i, const Matrix& old_j,
                                            const Matrix& new_j, const KernelParams& params) {
  auto dim_of = [](const Matrix& m) { return m.rows() == 0 ? Index{-1} : m.cols(); };
  Index d = -1;
  for (const Matrix* m : {&old_i, &new_i, &old_j, &new_j}) {
    Index md = dim_of(*m);
    if (md < 0) continue;
    require(d < 0 || md == d, "incremental_blocks: inconsistent feature dimension");
    d = md;
  }
  return IncrementalBlocks{
      gram(new_i, old_i, params, Role::NewVsOld),
      gram(new_i, new_i, params, Role::NewVsNew),
      gram(new_i, old_j, params, Role::NewVsOld),
      gram(old_i, new_j, params, Role::NewVsOld),
      gram(new_i, new_j, params, Role::NewVsNew),
  };
}

/// [[K_t^(i), k'], [k, h]]
inline Matrix assemble_within(const Matrix& k_old, const IncrementalBlocks& b) {
  const Index n = k_old.rows(), m = b.h_new_new.rows();
  Matrix out(n + m, n + m);
  out.topLeftCorner(n, n) = k_old;
  out.topRightCorner(n, m) = b.k_new_old.entries.transpose();
  out.bottomLeftCorner(m, n) = b.k_new_old.entries;
  out.bottomRightCorner(m, m) = b.h_new_new.entries;
  return out;
}

/// [[K_t^(ij), k_(ij*)], [k_(i*j), h_(i*j*)]]
inline Matrix assemble_cross(const Matrix& k_old, const IncrementalBlocks& b) {
  const Index ni = k_old.rows(), nj = k_old.cols();
  const Index mi = b.h_istar_jstar.rows(), mj = b.h_istar_jstar.cols();
  Matrix out(ni + mi, nj + mj);
  out.topLeftCorner(ni, nj) = k_old;
  out.topRightCorner(ni, mj) = b.k_i_jstar.entries;
  out.bottomLeftCorner(mi, nj) = b.k_istar_j.entries;
  out.bottomRightCorner(mi, mj) = b.h_istar_jstar.entries;
  return out;
}

}  // namespace iball::kernel
