#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "iball/domains.hpp"
#include "iball/error.hpp"
#include "iball/ingest.hpp"
#include "iball/linalg.hpp"
#include "iball/models.hpp"

namespace iball::eval {

inline double rmse(const Vector& predictions, const Vector& actuals) {
  require(predictions.size() == actuals.size(), "rmse: " + std::to_string(predictions.size()) + " predictions vs " +
                                                    std::to_string(actuals.size()) + " actuals");
  require(predictions.size() > 0, "rmse: empty input");
  return std::sqrt((predictions - actuals).squaredNorm() / static_cast<double>(predictions.size()));
}

/// -0.5, 0.5, ..., 7.5: unit bins centred on the integer labels.
inline std::vector<double> default_bin_edges() {
  std::vector<double> e;
  for (int k = 0; k <= 8; ++k) e.push_back(k - 0.5);
  return e;
}

inline std::size_t bin_of(double v, const std::vector<double>& edges) {
  const std::size_t bins = edges.size() - 1;
  auto it = std::upper_bound(edges.begin(), edges.end(), v);
  std::size_t k = it == edges.begin() ? 0 : static_cast<std::size_t>(it - edges.begin()) - 1;
  return std::min(k, bins - 1);
}

/// Entry (y, x): percentage of samples whose actual value falls in bin y and
/// prediction in bin x. Values beyond the outer edges land in the end bins.
inline Matrix heatmap_bins(const Vector& predictions, const Vector& actuals, const std::vector<double>& edges) {
  require(predictions.size() == actuals.size(), "heatmap_bins: length mismatch");
  require(edges.size() >= 2, "heatmap_bins: need at least two bin edges");
  for (std::size_t k = 1; k < edges.size(); ++k) require(edges[k] > edges[k - 1], "heatmap_bins: edges must increase");
  require(edges.front() <= 0.0 && edges.back() >= 7.0, "heatmap_bins: edges must cover [0, 7]");
  const auto bins = static_cast<Index>(edges.size() - 1);
  Matrix counts = Matrix::Zero(bins, bins);
  for (Index s = 0; s < actuals.size(); ++s)
    counts(static_cast<Index>(bin_of(actuals(s), edges)), static_cast<Index>(bin_of(predictions(s), edges))) += 1.0;
  for (Index y = 0; y < bins; ++y) {
    double total = counts.row(y).sum();
    if (total > 0.0) counts.row(y) *= 100.0 / total;
  }
  return counts;
}

inline void write_heatmap(std::ostream& out, const Matrix& h, const std::vector<double>& edges) {
  char buf[64];
  out << "actual\\predicted";
  for (Index x = 0; x < h.cols(); ++x) {
    std::snprintf(buf, sizeof buf, ",[%g;%g)", edges[static_cast<std::size_t>(x)], edges[static_cast<std::size_t>(x) + 1]);
    out << buf;
  }
  out << '\n';
  for (Index y = 0; y < h.rows(); ++y) {
    std::snprintf(buf, sizeof buf, "[%g;%g)", edges[static_cast<std::size_t>(y)], edges[static_cast<std::size_t>(y) + 1]);
    out << buf;
    for (Index x = 0; x < h.cols(); ++x) {
      std::snprintf(buf, sizeof buf, ",%.6f", h(y, x));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write_heatmap: stream write failed");
}

struct BoundCheck {
  double measured = 0.0;   ///< ||w - w_hat||_2
  double bound = std::numeric_limits<double>::infinity();
  bool applicable = false;
  double delta = std::numeric_limits<double>::infinity();
  double ratio = std::numeric_limits<double>::infinity();  ///< tail(S_t) / sum(S_{t+1})
  double w_norm = 0.0;

  /// measured <= bound, allowing roundoff of 1e-9 ||w||.
  [[nodiscard]] bool holds() const { return applicable && measured <= bound + 1e-9 * w_norm; }
};

/// Exact w = S_{t+1}^-1 Y against the rank-r path: the top-r eigenpair of S_t
/// updated by the batch perturbation and inverted. Dense, for small systems.
inline BoundCheck verify_bound(const linalg::SymMatrix& s_t, const linalg::SymMatrix& s_t1, Index r, const Vector& y,
                               std::span<const linalg::Insertion> insertions = {}) {
  const Index n = s_t.dim(), n1 = s_t1.dim();
  require(n1 <= 500, "verify_bound: dimension " + std::to_string(n1) + " exceeds 500");
  require(y.size() == n1, "verify_bound: Y length does not match S_{t+1}");
  std::vector<linalg::Insertion> ins(insertions.begin(), insertions.end());
  if (ins.empty() && n1 > n) ins.push_back({n, n1 - n});
  Index added = 0;
  for (const auto& i : ins) added += i.count;
  require(n + added == n1, "verify_bound: insertions do not account for the size change");

  // Embed S_t into the new coordinates; the difference must live on the new rows.
  Matrix basis = linalg::pad_rows(Matrix::Identity(n, n), ins);
  Matrix embedded = basis * s_t.matrix() * basis.transpose();
  Matrix diff = s_t1.matrix() - embedded;
  std::vector<Index> aff = linalg::inserted_indices(ins);
  std::vector<bool> is_new(static_cast<std::size_t>(n1), false);
  for (Index k : aff) is_new[static_cast<std::size_t>(k)] = true;
  for (Index a = 0; a < n1; ++a)
    for (Index b = 0; b < n1; ++b)
      if (!is_new[static_cast<std::size_t>(a)] && !is_new[static_cast<std::size_t>(b)])
        require(std::abs(diff(a, b)) <= 1e-10 * std::max(1.0, s_t1.matrix().cwiseAbs().maxCoeff()),
                "verify_bound: S_{t+1} differs from S_t outside the inserted rows");
  Matrix cols(n1, static_cast<Index>(aff.size()));
  for (std::size_t k = 0; k < aff.size(); ++k) cols.col(static_cast<Index>(k)) = diff.col(aff[k]);
  linalg::SparsePerturbation delta(n1, aff, cols);

  BoundCheck out;
  Eigen::LDLT<Matrix> exact(s_t1.matrix());
  Vector w = exact.solve(y);
  out.w_norm = w.norm();

  auto top = linalg::sym_eig_topr(s_t, std::clamp<Index>(r, 1, n));
  auto updated = linalg::eigen_update(top, ins, delta, n1);
  Vector w_hat = linalg::apply_inverse(updated, y);
  out.measured = (w - w_hat).norm();

  Matrix c = linalg::pad_rows(top.vectors, ins) * top.values.asDiagonal() * linalg::pad_rows(top.vectors, ins).transpose() +
             delta.dense();
  Eigen::FullPivLU<Matrix> lu(c);
  if (lu.isInvertible() && lu.rcond() >= 1e-14) out.delta = (lu.inverse() * (s_t1.matrix() - c)).norm();

  Vector spec_t = linalg::detail::full_eig(s_t.matrix()).values;
  Vector spec_t1 = linalg::detail::full_eig(s_t1.matrix()).values;
  std::sort(spec_t.data(), spec_t.data() + spec_t.size(), std::greater<>());
  double tail = spec_t.tail(std::max<Index>(0, n - r)).sum();
  out.ratio = tail / spec_t1.sum();
  auto b = models::theorem1_bound(spec_t, spec_t1, r, out.delta, y.norm());
  out.applicable = b.has_value();
  if (b) out.bound = *b;
  return out;
}

struct MethodResult {
  std::string method;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
  std::string error;  ///< empty on success
};

struct StepRecord {
  std::size_t step = 0;
  Index n = 0;  ///< training samples seen
  std::vector<MethodResult> results;
};

struct BenchmarkReport {
  std::vector<StepRecord> steps;
  nlohmann::ordered_json config;
};

struct BenchmarkInput {
  const std::vector<ingest::Example>* examples = nullptr;
  const ingest::StreamSchedule* schedule = nullptr;
  const Matrix* centroids = nullptr;  ///< routes test samples
  const domains::DomainGraph* graph = nullptr;
  models::Hyperparams hp;
  Normalizer normalizer;
  std::vector<models::Method> methods;
  std::optional<std::size_t> max_steps;  ///< batches to replay; all by default
};

/// Test features, labels and routed domains.
struct TestSet {
  Matrix x;
  Vector y;
  std::vector<Index> domains;
};

inline TestSet make_test_set(const std::vector<ingest::Example>& examples, const std::vector<std::size_t>& indices,
                             const Matrix& centroids) {
  TestSet t;
  Index d = examples.empty() ? 0 : examples.front().features.size();
  t.x.resize(static_cast<Index>(indices.size()), d);
  t.y.resize(static_cast<Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    t.x.row(static_cast<Index>(k)) = examples[indices[k]].features.transpose();
    t.y(static_cast<Index>(k)) = examples[indices[k]].label;
    t.domains.push_back(domains::route_to_domain(centroids, examples[indices[k]].features));
  }
  return t;
}

/// Replays the schedule: step 0 trains on the initial set, step k adds batch
/// k. Every method except iball-fast refits from scratch; iball-fast applies
/// the batch to its eigenpair. A failing method is recorded and the run goes on.
inline BenchmarkReport run_streaming_benchmark(const BenchmarkInput& in, Diagnostics* diag = nullptr) {
  require(in.examples && in.schedule && in.centroids && in.graph, "run_streaming_benchmark: missing input");
  require(!in.methods.empty(), "run_streaming_benchmark: no methods");
  require(!in.schedule->test.empty(), "run_streaming_benchmark: empty test set");
  const auto& ex = *in.examples;
  const auto& sched = *in.schedule;
  const Index nd = sched.n_domains;
  require(!sched.initial.empty(), "run_streaming_benchmark: empty initial training set");
  require(in.graph->size() == nd && in.centroids->rows() == nd, "run_streaming_benchmark: domain count mismatch");

  TestSet test = make_test_set(ex, sched.test, *in.centroids);
  const std::size_t steps = std::min(sched.batches.size(), in.max_steps.value_or(sched.batches.size()));
  using clock = std::chrono::steady_clock;

  BenchmarkReport report;
  std::vector<std::size_t> seen = sched.initial;
  std::optional<models::FastModel> fast;
  for (std::size_t step = 0; step <= steps; ++step) {
    if (step > 0) seen.insert(seen.end(), sched.batches[step - 1].begin(), sched.batches[step - 1].end());
    StepRecord rec{step, static_cast<Index>(seen.size()), {}};
    models::DomainData data = ingest::gather(ex, seen, nd);
    for (models::Method m : in.methods) {
      MethodResult res{std::string(models::method_name(m))};
      auto t0 = clock::now();
      try {
        Vector pred;
        if (m == models::Method::IballFast) {
          if (fast && step > 0) {
            fast = models::update_fast(*fast, ingest::gather(ex, sched.batches[step - 1], nd), *in.graph, in.hp);
          } else {
            fast = models::fit_fast_initial(data, *in.graph, in.hp, step == 0 ? diag : nullptr);
          }
          pred = models::predict_all(*fast, test.x, test.domains);
        } else {
          models::Model model = models::fit_method(m, data, *in.graph, in.hp, in.normalizer, diag);
          pred = models::predict_all(model, test.x, test.domains);
        }
        res.rmse = rmse(pred, test.y);
      } catch (const Error& e) {
        res.error = e.what();
        if (m == models::Method::IballFast) fast.reset();
        warn(diag, "step " + std::to_string(step) + " " + res.method + ": " + e.what());
      }
      res.seconds = std::chrono::duration<double>(clock::now() - t0).count();
      rec.results.push_back(std::move(res));
    }
    report.steps.push_back(std::move(rec));
  }
  return report;
}

namespace detail {

inline std::string num(double v, const char* fmt = "%.9g") {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace detail

/// `step,n,method,rmse,seconds`
inline void write_report_csv(std::ostream& out, const BenchmarkReport& r) {
  out << "step,n,method,rmse,seconds\n";
  for (const auto& s : r.steps)
    for (const auto& m : s.results)
      out << s.step << ',' << s.n << ',' << m.method << ',' << detail::num(m.rmse) << ',' << detail::num(m.seconds, "%.6f")
          << '\n';
  if (!out) throw IoError("write_report_csv: stream write failed");
}

inline nlohmann::ordered_json report_json(const BenchmarkReport& r) {
  nlohmann::ordered_json j;
  j["config"] = r.config;
  j["steps"] = nlohmann::ordered_json::array();
  for (const auto& s : r.steps) {
    nlohmann::ordered_json step{{"step", s.step}, {"n", s.n}, {"results", nlohmann::ordered_json::array()}};
    for (const auto& m : s.results) {
      nlohmann::ordered_json res{{"method", m.method}};
      res["rmse"] = std::isnan(m.rmse) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(m.rmse);
      res["seconds"] = m.seconds;
      if (!m.error.empty()) res["error"] = m.error;
      step["results"].push_back(std::move(res));
    }
    j["steps"].push_back(std::move(step));
  }
  return j;
}

}  // namespace iball::eval
