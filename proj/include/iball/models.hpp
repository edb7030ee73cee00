#pragma once

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "iball/domains.hpp"
#include "iball/error.hpp"
#include "iball/kernel.hpp"
#include "iball/linalg.hpp"
#include "iball/normalize.hpp"
#include "iball/parallel.hpp"

namespace iball::models {

using domains::DomainGraph;
using linalg::EigenPair;
using linalg::SymMatrix;

struct Hyperparams {
  double theta = 0.01;
  double lambda = 0.01;
  Index rank = 50;  ///< fast model only; an upper bound, clamped to dim(S)
  kernel::KernelParams kernel;

  void validate() const {
    require(std::isfinite(theta) && theta >= 0.0, "Hyperparams: theta must be nonnegative");
    require(std::isfinite(lambda) && lambda > 0.0, "Hyperparams: lambda must be positive");
    require(rank >= 1, "Hyperparams: rank must be at least 1");
    kernel.validate();
  }
};

/// Per-domain training features (n_i x d) and targets (n_i).
struct DomainData {
  std::vector<Matrix> x;
  std::vector<Vector> y;

  DomainData() = default;
  DomainData(Index n_domains, Index d)
      : x(static_cast<std::size_t>(n_domains), Matrix(0, d)), y(static_cast<std::size_t>(n_domains), Vector(0)) {}
  DomainData(std::vector<Matrix> xs, std::vector<Vector> ys) : x(std::move(xs)), y(std::move(ys)) {}

  [[nodiscard]] Index n_domains() const noexcept { return static_cast<Index>(x.size()); }
  [[nodiscard]] Index size(Index i) const { return x[static_cast<std::size_t>(i)].rows(); }

  [[nodiscard]] Index total() const {
    Index n = 0;
    for (const auto& m : x) n += m.rows();
    return n;
  }

  /// Feature dimension; 0 when every domain is empty and dimensionless.
  [[nodiscard]] Index dim() const {
    Index d = 0;
    for (const auto& m : x) d = std::max(d, m.cols());
    return d;
  }

  void validate() const {
    require(x.size() == y.size(), "DomainData: " + std::to_string(x.size()) + " feature blocks but " +
                                      std::to_string(y.size()) + " target blocks");
    const Index d = dim();
    for (std::size_t i = 0; i < x.size(); ++i) {
      require(x[i].rows() == y[i].size(), "DomainData: domain " + std::to_string(i) + " has " +
                                              std::to_string(x[i].rows()) + " rows but " +
                                              std::to_string(y[i].size()) + " targets");
      require(x[i].rows() == 0 || x[i].cols() == d, "DomainData: domain " + std::to_string(i) +
                                                        " feature dimension differs");
      require(x[i].allFinite() && y[i].allFinite(), "DomainData: non-finite value in domain " + std::to_string(i));
    }
  }

  /// All domains stacked in domain order.
  [[nodiscard]] std::pair<Matrix, Vector> pooled() const {
    Matrix px(total(), dim());
    Vector py(total());
    Index at = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].rows() == 0) continue;
      px.middleRows(at, x[i].rows()) = x[i];
      py.segment(at, y[i].size()) = y[i];
      at += x[i].rows();
    }
    return {px, py};
  }
};

using StreamBatch = DomainData;

enum class Formulation { Linear, Kernel };

struct JointSystem {
  SymMatrix s;
  Vector y;
  Formulation formulation = Formulation::Kernel;
  std::vector<Index> offsets;  ///< n_d + 1 block boundaries

  [[nodiscard]] Index n_domains() const noexcept { return static_cast<Index>(offsets.size()) - 1; }
  [[nodiscard]] Index block_size(Index i) const {
    return offsets[static_cast<std::size_t>(i) + 1] - offsets[static_cast<std::size_t>(i)];
  }
};

namespace detail {

inline void check_graph(const DomainData& data, const DomainGraph& a) {
  data.validate();
  require(a.size() == data.n_domains(), "domain graph has " + std::to_string(a.size()) + " nodes but data has " +
                                            std::to_string(data.n_domains()) + " domains");
  require(data.n_domains() >= 1, "at least one domain is required");
}

inline std::vector<Index> offsets_from_sizes(const std::vector<Index>& sizes) {
  std::vector<Index> out(sizes.size() + 1, 0);
  std::partial_sum(sizes.begin(), sizes.end(), out.begin() + 1);
  return out;
}

inline std::vector<Vector> unstack(const Vector& w, const std::vector<Index>& offsets) {
  std::vector<Vector> out;
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i) out.emplace_back(w.segment(offsets[i], offsets[i + 1] - offsets[i]));
  return out;
}

inline double coupling(const DomainGraph& a, const Hyperparams& hp, Index i, Index j) {
  return i == j ? a.alpha(i, hp.theta) : -hp.theta * a.a(i, j);
}

}  // namespace detail

/// Block (i,i) = X_i'X_i + (theta sum_j A_ij + lambda) I, block (i,j) = -theta A_ij I,
/// Y_i = X_i'y_i.
inline JointSystem assemble_linear_system(const DomainData& data, const DomainGraph& a, const Hyperparams& hp) {
  hp.validate();
  detail::check_graph(data, a);
  const Index nd = data.n_domains(), d = data.dim();
  require(d >= 1, "assemble_linear_system: feature dimension is zero");
  Matrix s = Matrix::Zero(nd * d, nd * d);
  Vector y(nd * d);
  for (Index i = 0; i < nd; ++i) {
    const Matrix& xi = data.x[static_cast<std::size_t>(i)];
    auto block = s.block(i * d, i * d, d, d);
    if (xi.rows() > 0) {
      block.noalias() = xi.transpose() * xi;
      y.segment(i * d, d) = xi.transpose() * data.y[static_cast<std::size_t>(i)];
    } else {
      y.segment(i * d, d).setZero();
    }
    block.diagonal().array() += hp.theta * a.a.row(i).sum() + hp.lambda;
    for (Index j = 0; j < nd; ++j)
      if (j != i) s.block(i * d, j * d, d, d).diagonal().setConstant(-hp.theta * a.a(i, j));
  }
  std::vector<Index> offsets(static_cast<std::size_t>(nd) + 1);
  for (Index i = 0; i <= nd; ++i) offsets[static_cast<std::size_t>(i)] = i * d;
  return JointSystem{SymMatrix(std::move(s)), std::move(y), Formulation::Linear, std::move(offsets)};
}

/// Block (i,i) = alpha_i K_i + lambda I, block (i,j) = -theta A_ij K_ij, Y stacked.
inline JointSystem assemble_kernel_system(const DomainData& data, const DomainGraph& a, const Hyperparams& hp) {
  hp.validate();
  detail::check_graph(data, a);
  const Index nd = data.n_domains();
  std::vector<Index> sizes;
  for (Index i = 0; i < nd; ++i) sizes.push_back(data.size(i));
  auto offsets = detail::offsets_from_sizes(sizes);
  const Index n = offsets.back();
  Matrix s(n, n);
  Vector y(n);
  for (Index i = 0; i < nd; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (sizes[ui] == 0) continue;
    y.segment(offsets[ui], sizes[ui]) = data.y[ui];
    for (Index j = i; j < nd; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      if (sizes[uj] == 0) continue;
      const double c = detail::coupling(a, hp, i, j);
      auto block = s.block(offsets[ui], offsets[uj], sizes[ui], sizes[uj]);
      if (c == 0.0) {
        block.setZero();
      } else {
        block = c * kernel::gram(data.x[ui], data.x[uj], hp.kernel, i == j ? kernel::Role::Within : kernel::Role::Cross).entries;
      }
      if (i == j) {
        block.diagonal().array() += hp.lambda;
      } else {
        s.block(offsets[uj], offsets[ui], sizes[uj], sizes[ui]) = block.transpose();
      }
    }
  }
  return JointSystem{SymMatrix(std::move(s)), std::move(y), Formulation::Kernel, std::move(offsets)};
}

/// Reciprocal condition estimate below which a system is rejected.
inline constexpr double kMinRcond = 1e-12;

/// Solves S w = Y by Cholesky, falling back to LDL' when S is not positive
/// definite in floating point.
inline Vector fit_closed_form(const JointSystem& system) {
  const Matrix& s = system.s.matrix();
  require(s.rows() == system.y.size(), "fit_closed_form: S is " + std::to_string(s.rows()) + "x" +
                                           std::to_string(s.rows()) + " but Y has length " +
                                           std::to_string(system.y.size()));
  if (s.rows() == 0) return Vector(0);
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() == Eigen::Success) {
    double rc = llt.rcond();
    if (rc < kMinRcond)
      throw NumericError("fit_closed_form: condition estimate " + std::to_string(1.0 / rc) + " exceeds 1e12");
    return llt.solve(system.y);
  }
  Eigen::LDLT<Matrix> ldlt(s);
  double rc = 0.0;
  if (ldlt.info() == Eigen::Success) {
    // rcond() ignores zero pivots, so the pivot spread is checked as well.
    Vector piv = ldlt.vectorD().cwiseAbs();
    rc = std::min(ldlt.rcond(), piv.maxCoeff() > 0.0 ? piv.minCoeff() / piv.maxCoeff() : 0.0);
  }
  if (!(rc >= kMinRcond))
    throw NumericError("fit_closed_form: system is singular or condition estimate exceeds 1e12");
  return ldlt.solve(system.y);
}

struct ZeroModel {};

/// Sum of the three feature counts, passed through the label normalizer.
struct Sum3Model {
  Normalizer normalizer;
};

struct LinearModel {
  std::vector<Vector> weights;  ///< one per domain, or a single pooled vector
  bool pooled = false;

  [[nodiscard]] Index n_domains() const noexcept { return static_cast<Index>(weights.size()); }
};

struct KernelModel {
  std::vector<Vector> coefficients;
  std::vector<Matrix> features;
  kernel::KernelParams kernel;
  bool pooled = false;

  [[nodiscard]] Index n_domains() const noexcept { return static_cast<Index>(coefficients.size()); }
};

/// Rank-r eigenpair of the kernel system plus the state needed to extend it.
struct FastModel {
  EigenPair eig;
  Vector y;
  std::vector<Matrix> features;
  Hyperparams hp;
  std::vector<Index> offsets;
  Vector weights;  ///< U diag(1/L) U' y, cached

  [[nodiscard]] Index n_domains() const noexcept { return static_cast<Index>(features.size()); }
  [[nodiscard]] Index dim() const noexcept { return y.size(); }
  [[nodiscard]] Index feature_dim() const {
    Index d = 0;
    for (const auto& m : features) d = std::max(d, m.cols());
    return d;
  }
  [[nodiscard]] Vector coefficients(Index i) const {
    return weights.segment(offsets[static_cast<std::size_t>(i)], features[static_cast<std::size_t>(i)].rows());
  }
};

using Model = std::variant<ZeroModel, Sum3Model, LinearModel, KernelModel, FastModel>;

inline LinearModel fit_linear(const DomainData& data, const DomainGraph& a, const Hyperparams& hp) {
  JointSystem sys = assemble_linear_system(data, a, hp);
  return LinearModel{detail::unstack(fit_closed_form(sys), sys.offsets), false};
}

inline KernelModel fit_kernel(const DomainData& data, const DomainGraph& a, const Hyperparams& hp) {
  JointSystem sys = assemble_kernel_system(data, a, hp);
  return KernelModel{detail::unstack(fit_closed_form(sys), sys.offsets), data.x, hp.kernel, false};
}

/// Top-r eigenpair of the kernel system S_0. A rank above dim(S) is clamped
/// with a warning.
inline FastModel fit_fast_initial(const DomainData& data, const DomainGraph& a, const Hyperparams& hp,
                                  Diagnostics* diag = nullptr) {
  JointSystem sys = assemble_kernel_system(data, a, hp);
  const Index n = sys.s.dim();
  require(n >= 1, "fit_fast_initial: no training samples");
  Index r = hp.rank;
  if (r > n) {
    warn(diag, "fit_fast_initial: rank " + std::to_string(r) + " exceeds dim(S) = " + std::to_string(n) +
                   ", clamped");
    r = n;
  }
  FastModel m;
  m.eig = linalg::sym_eig_topr(sys.s, r);
  m.y = std::move(sys.y);
  m.features = data.x;
  for (auto& f : m.features)
    if (f.rows() == 0) f.resize(0, data.dim());
  m.hp = hp;
  m.offsets = std::move(sys.offsets);
  m.weights = linalg::apply_inverse(m.eig, m.y);
  return m;
}

/// Column block S_{t+1}(:, J) over the new rows J, in the updated layout.
/// Built from the incremental kernel blocks of every domain pair.
inline linalg::SparsePerturbation batch_perturbation(const FastModel& model, const StreamBatch& batch,
                                                     const DomainGraph& a, const Hyperparams& hp) {
  const Index nd = model.n_domains();
  std::vector<Index> new_off(static_cast<std::size_t>(nd) + 1, 0);
  std::vector<Index> affected;
  for (Index i = 0; i < nd; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Index ni = model.features[ui].rows(), mi = batch.size(i);
    new_off[ui + 1] = new_off[ui] + ni + mi;
    for (Index s = 0; s < mi; ++s) affected.push_back(new_off[ui] + ni + s);
  }
  const Index n_new = new_off.back();
  Matrix cols = Matrix::Zero(n_new, static_cast<Index>(affected.size()));
  Index col = 0;
  for (Index i = 0; i < nd; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Index mi = batch.size(i);
    if (mi == 0) continue;
    for (Index j = 0; j < nd; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      const double c = detail::coupling(a, hp, i, j);
      if (c == 0.0) continue;
      const Index nj = model.features[uj].rows(), mj = batch.size(j);
      if (nj + mj == 0) continue;
      auto blocks = kernel::incremental_blocks(model.features[ui], batch.x[ui], model.features[uj], batch.x[uj], hp.kernel);
      const Matrix& to_old = i == j ? blocks.k_new_old.entries : blocks.k_istar_j.entries;
      const Matrix& to_new = i == j ? blocks.h_new_new.entries : blocks.h_istar_jstar.entries;
      if (nj > 0) cols.block(new_off[uj], col, nj, mi) = c * to_old.transpose();
      if (mj > 0) cols.block(new_off[uj] + nj, col, mj, mi) = c * to_new.transpose();
    }
    for (Index s = 0; s < mi; ++s) cols(new_off[ui] + model.features[ui].rows() + s, col + s) += hp.lambda;
    col += mi;
  }
  // Exact symmetry of the new-new block; entries agree up to kernel roundoff.
  const Index m = static_cast<Index>(affected.size());
  for (Index p = 0; p < m; ++p)
    for (Index q = p + 1; q < m; ++q) {
      double v = 0.5 * (cols(affected[static_cast<std::size_t>(p)], q) + cols(affected[static_cast<std::size_t>(q)], p));
      cols(affected[static_cast<std::size_t>(p)], q) = v;
      cols(affected[static_cast<std::size_t>(q)], p) = v;
    }
  return linalg::SparsePerturbation(n_new, std::move(affected), std::move(cols));
}

/// Inserts the batch rows at the end of each domain block and updates the
/// eigenpair, keeping at most hp.rank pairs.
inline FastModel update_fast(const FastModel& model, const StreamBatch& batch, const DomainGraph& a,
                             const Hyperparams& hp) {
  hp.validate();
  batch.validate();
  const Index nd = model.n_domains();
  require(batch.n_domains() == nd, "update_fast: batch has " + std::to_string(batch.n_domains()) +
                                       " domains, model has " + std::to_string(nd));
  require(a.size() == nd, "update_fast: domain graph size mismatch");
  const Index d = model.feature_dim();
  for (Index i = 0; i < nd; ++i)
    require(batch.size(i) == 0 || batch.x[static_cast<std::size_t>(i)].cols() == d,
            "update_fast: batch feature dimension differs from the model");
  if (batch.total() == 0) return model;

  std::vector<linalg::Insertion> insertions;
  for (Index i = 0; i < nd; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (batch.size(i) > 0) insertions.push_back({model.offsets[ui] + model.features[ui].rows(), batch.size(i)});
  }
  auto delta = batch_perturbation(model, batch, a, hp);
  const Index n_new = delta.dim();

  FastModel out;
  out.eig = linalg::eigen_update(model.eig, insertions, delta, std::min(hp.rank, n_new));
  out.hp = hp;
  out.features.resize(static_cast<std::size_t>(nd));
  out.offsets.assign(static_cast<std::size_t>(nd) + 1, 0);
  out.y.resize(n_new);
  for (Index i = 0; i < nd; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Index ni = model.features[ui].rows(), mi = batch.size(i);
    Matrix f(ni + mi, d);
    if (ni > 0) f.topRows(ni) = model.features[ui];
    if (mi > 0) f.bottomRows(mi) = batch.x[ui];
    out.features[ui] = std::move(f);
    const Index at = out.offsets[ui];
    if (ni > 0) out.y.segment(at, ni) = model.y.segment(model.offsets[ui], ni);
    if (mi > 0) out.y.segment(at + ni, mi) = batch.y[ui];
    out.offsets[ui + 1] = at + ni + mi;
  }
  out.weights = linalg::apply_inverse(out.eig, out.y);
  return out;
}

enum class Method {
  Predict0,
  Sum3,
  LinearCombine,
  LinearSeparate,
  KernelCombine,
  KernelSeparate,
  IballLinear,
  IballKernel,
  IballFast,
};

inline constexpr std::string_view method_name(Method m) {
  switch (m) {
    case Method::Predict0: return "predict0";
    case Method::Sum3: return "sum3";
    case Method::LinearCombine: return "linear-combine";
    case Method::LinearSeparate: return "linear-separate";
    case Method::KernelCombine: return "kernel-combine";
    case Method::KernelSeparate: return "kernel-separate";
    case Method::IballLinear: return "iball-linear";
    case Method::IballKernel: return "iball-kernel";
    case Method::IballFast: return "iball-fast";
  }
  return "?";
}

inline constexpr Method kAllMethods[] = {Method::Predict0,      Method::Sum3,           Method::LinearCombine,
                                         Method::LinearSeparate, Method::KernelCombine, Method::KernelSeparate,
                                         Method::IballLinear,    Method::IballKernel,   Method::IballFast};

inline Method parse_method(std::string_view name) {
  for (Method m : kAllMethods)
    if (method_name(m) == name) return m;
  throw ValidationError("unknown method '" + std::string(name) + "'");
}

namespace detail {

inline Vector ridge(const Matrix& x, const Vector& y, double lambda) {
  Matrix g = x.transpose() * x;
  g.diagonal().array() += lambda;
  return fit_closed_form(JointSystem{SymMatrix(std::move(g)), x.transpose() * y, Formulation::Linear, {0, x.cols()}});
}

inline Vector kernel_ridge(const Matrix& x, const Vector& y, const Hyperparams& hp) {
  if (x.rows() == 0) return Vector(0);
  Matrix k = kernel::gram(x, x, hp.kernel, kernel::Role::Within).entries;
  k.diagonal().array() += hp.lambda;
  return fit_closed_form(JointSystem{SymMatrix(std::move(k)), y, Formulation::Kernel, {0, x.rows()}});
}

}  // namespace detail

/// The six non-joint methods, each fitted by its own direct solve.
inline Model fit_baseline(Method method, const DomainData& data, const Hyperparams& hp,
                          const Normalizer& normalizer = {}) {
  hp.validate();
  data.validate();
  switch (method) {
    case Method::Predict0: return ZeroModel{};
    case Method::Sum3: return Sum3Model{normalizer};
    case Method::LinearCombine: {
      require(data.total() > 0, "linear-combine: no training samples");
      auto [px, py] = data.pooled();
      return LinearModel{{detail::ridge(px, py, hp.lambda)}, true};
    }
    case Method::LinearSeparate: {
      require(data.total() > 0, "linear-separate: no training samples");
      LinearModel m;
      for (Index i = 0; i < data.n_domains(); ++i) {
        const auto ui = static_cast<std::size_t>(i);
        Matrix xi = data.x[ui].rows() > 0 ? data.x[ui] : Matrix(0, data.dim());
        m.weights.push_back(detail::ridge(xi, data.y[ui], hp.lambda));
      }
      return m;
    }
    case Method::KernelCombine: {
      require(data.total() > 0, "kernel-combine: no training samples");
      auto [px, py] = data.pooled();
      Vector w = detail::kernel_ridge(px, py, hp);
      return KernelModel{{std::move(w)}, {std::move(px)}, hp.kernel, true};
    }
    case Method::KernelSeparate: {
      require(data.total() > 0, "kernel-separate: no training samples");
      KernelModel m;
      m.kernel = hp.kernel;
      for (Index i = 0; i < data.n_domains(); ++i) {
        const auto ui = static_cast<std::size_t>(i);
        m.coefficients.push_back(detail::kernel_ridge(data.x[ui], data.y[ui], hp));
        m.features.push_back(data.x[ui].rows() > 0 ? data.x[ui] : Matrix(0, data.dim()));
      }
      return m;
    }
    default: break;
  }
  throw ValidationError("fit_baseline: '" + std::string(method_name(method)) + "' is a joint method");
}

/// Any of the nine methods fitted from scratch.
inline Model fit_method(Method method, const DomainData& data, const DomainGraph& a, const Hyperparams& hp,
                        const Normalizer& normalizer = {}, Diagnostics* diag = nullptr) {
  switch (method) {
    case Method::IballLinear: return fit_linear(data, a, hp);
    case Method::IballKernel: return fit_kernel(data, a, hp);
    case Method::IballFast: return fit_fast_initial(data, a, hp, diag);
    default: return fit_baseline(method, data, hp, normalizer);
  }
}

namespace detail {

template <typename Derived>
double kernel_sum(const Matrix& train, const Vector& coef, const Eigen::MatrixBase<Derived>& x,
                  const kernel::KernelParams& params) {
  double out = 0.0;
  for (Index a = 0; a < train.rows(); ++a) out += kernel::kernel_fn(x, train.row(a).transpose(), params) * coef(a);
  return out;
}

inline void check_domain(Index domain, Index n_domains) {
  require(domain >= 0 && domain < n_domains, "predict: domain " + std::to_string(domain) + " outside [0, " +
                                                 std::to_string(n_domains) + ")");
}

}  // namespace detail

template <typename Derived>
double predict(const ZeroModel&, const Eigen::MatrixBase<Derived>&, Index) {
  return 0.0;
}

template <typename Derived>
double predict(const Sum3Model& m, const Eigen::MatrixBase<Derived>& x, Index) {
  return m.normalizer(std::max(0.0, static_cast<double>(x.sum())));
}

template <typename Derived>
double predict(const LinearModel& m, const Eigen::MatrixBase<Derived>& x, Index domain) {
  if (!m.pooled) detail::check_domain(domain, m.n_domains());
  const Vector& w = m.weights[m.pooled ? 0 : static_cast<std::size_t>(domain)];
  require(w.size() == x.size(), "predict: feature dimension mismatch");
  return x.dot(w);
}

template <typename Derived>
double predict(const KernelModel& m, const Eigen::MatrixBase<Derived>& x, Index domain) {
  if (!m.pooled) detail::check_domain(domain, m.n_domains());
  const auto u = m.pooled ? std::size_t{0} : static_cast<std::size_t>(domain);
  return detail::kernel_sum(m.features[u], m.coefficients[u], x, m.kernel);
}

template <typename Derived>
double predict(const FastModel& m, const Eigen::MatrixBase<Derived>& x, Index domain) {
  detail::check_domain(domain, m.n_domains());
  return detail::kernel_sum(m.features[static_cast<std::size_t>(domain)], m.coefficients(domain), x, m.hp.kernel);
}

template <typename Derived>
double predict(const Model& m, const Eigen::MatrixBase<Derived>& x, Index domain) {
  return std::visit([&](const auto& inner) { return predict(inner, x, domain); }, m);
}

/// Row-wise predictions; domains[s] selects the parameters for row s.
template <typename M>
Vector predict_all(const M& model, const Matrix& x, const std::vector<Index>& domains) {
  require(static_cast<Index>(domains.size()) == x.rows(), "predict_all: one domain per row is required");
  Vector out(x.rows());
  parallel_for(static_cast<std::size_t>(x.rows()), [&](std::size_t s) {
    out(static_cast<Index>(s)) = predict(model, x.row(static_cast<Index>(s)).transpose(), domains[s]);
  }, 16);
  return out;
}

/// Parameter-deviation bound for the rank-r update. Returns nullopt when a
/// precondition fails: tail/sum >= 1, delta >= 1, or non-positive spectrum sum.
inline std::optional<double> theorem1_bound(Vector spectrum_t, Vector spectrum_t1, Index r, double delta,
                                            double y_norm) {
  require(r >= 0, "theorem1_bound: negative rank");
  std::sort(spectrum_t.data(), spectrum_t.data() + spectrum_t.size(), std::greater<>());
  double tail = 0.0;
  for (Index i = r; i < spectrum_t.size(); ++i) tail += spectrum_t(i);
  const double total = spectrum_t1.sum();
  if (!(total > 0.0) || !(tail / total < 1.0) || !(delta < 1.0) || !std::isfinite(delta)) return std::nullopt;
  return tail / (total * total * (1.0 - delta)) * y_norm;
}

}  // namespace iball::models
