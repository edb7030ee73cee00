#pragma once

#include <toml.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "iball/error.hpp"
#include "iball/ingest.hpp"
#include "iball/models.hpp"
#include "iball/normalize.hpp"

namespace iball {

/// Every knob of the pipeline. Zero in year_first/year_last/n_domains/
/// adjacency_sigma means "use the default for the entity kind or model".
struct Config {
  std::string corpus;
  std::string workdir = ".";

  ingest::Kind kind = ingest::Kind::Paper;
  int year_first = 0;
  int year_last = 0;
  int feature_horizon = 3;
  int label_horizon = 10;
  std::string normalization = "log2";
  double max_count = 0.0;  ///< minmax scale; 0 fits it at ingest

  Index n_domains = 0;
  Index knn = 5;
  std::uint64_t seed = 0;
  double adjacency_sigma = 0.0;

  double theta = 0.01;
  double lambda = 0.01;
  double sigma = 5.1;
  Index rank = 50;
  std::string method = "iball-fast";

  double initial_fraction = 0.001;
  double step_fraction = 0.001;
  double test_fraction = 0.10;

  std::vector<std::string> methods;  ///< bench; empty means all nine
  Index max_steps = -1;              ///< batches replayed by bench and fit; -1 means all
  Index update_batches = 1;

  [[nodiscard]] Index resolved_domains() const {
    if (n_domains > 0) return n_domains;
    return kind == ingest::Kind::Venue ? 5 : 10;
  }
  [[nodiscard]] ingest::YearWindow window() const {
    auto w = ingest::YearWindow::defaults(kind);
    if (year_first != 0) w.first = year_first;
    if (year_last != 0) w.last = year_last;
    return w;
  }
  [[nodiscard]] double resolved_adjacency_sigma() const { return adjacency_sigma > 0.0 ? adjacency_sigma : sigma; }

  [[nodiscard]] models::Hyperparams hyperparams() const {
    models::Hyperparams hp;
    hp.theta = theta;
    hp.lambda = lambda;
    hp.rank = rank;
    hp.kernel.sigma = sigma;
    return hp;
  }
  [[nodiscard]] Normalizer normalizer() const { return {Normalizer::parse(normalization), max_count}; }
  [[nodiscard]] ingest::SplitOptions split() const { return {initial_fraction, step_fraction, test_fraction}; }

  [[nodiscard]] std::vector<models::Method> method_list() const {
    if (methods.empty()) return {std::begin(models::kAllMethods), std::end(models::kAllMethods)};
    std::vector<models::Method> out;
    for (const auto& m : methods) out.push_back(models::parse_method(m));
    return out;
  }

  void validate() const {
    hyperparams().validate();
    split().validate();
    (void)normalizer();
    models::parse_method(method);
    (void)method_list();
    require(max_count >= 0.0, "normalization.max_count must be nonnegative");
    require(feature_horizon >= 1 && label_horizon >= feature_horizon,
            "data.feature_horizon must be in [1, label_horizon]");
    require(n_domains >= 0, "domains.n_d must be nonnegative");
    require(knn >= 1, "domains.k must be positive");
    require(adjacency_sigma >= 0.0, "domains.sigma must be nonnegative");
    require(max_steps >= -1, "bench.max_steps must be -1 or a count");
    require(update_batches >= 1, "run.update_batches must be positive");
    auto w = window();
    require(w.first <= w.last, "data year window is empty");
  }
};

namespace detail {

template <typename T>
void read(const toml::table& t, std::string_view section, std::string_view key, T& out) {
  const toml::node* node = t.at_path(std::string(section) + "." + std::string(key)).node();
  if (node == nullptr) return;
  const std::string where = std::string(section) + "." + std::string(key);
  if constexpr (std::is_same_v<T, std::string>) {
    auto v = node->value<std::string>();
    require(v.has_value(), where + " must be a string");
    out = *v;
  } else if constexpr (std::is_same_v<T, double>) {
    auto v = node->value<double>();
    require(v.has_value(), where + " must be a number");
    out = *v;
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    const toml::array* arr = node->as_array();
    require(arr != nullptr, where + " must be an array of strings");
    out.clear();
    for (const auto& el : *arr) {
      auto v = el.value<std::string>();
      require(v.has_value(), where + " must be an array of strings");
      out.push_back(*v);
    }
  } else {
    auto v = node->value<std::int64_t>();
    require(v.has_value(), where + " must be an integer");
    out = static_cast<T>(*v);
  }
}

}  // namespace detail

inline Config parse_config(std::string_view text, const std::string& source = "config") {
  toml::table t;
  try {
    t = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ": " << e.description() << " at line " << e.source().begin.line;
    throw ValidationError(msg.str());
  }
  Config c;
  std::string kind = ingest::kind_name(c.kind);
  detail::read(t, "paths", "corpus", c.corpus);
  detail::read(t, "paths", "workdir", c.workdir);
  detail::read(t, "data", "kind", kind);
  c.kind = ingest::parse_kind(kind);
  detail::read(t, "data", "year_first", c.year_first);
  detail::read(t, "data", "year_last", c.year_last);
  detail::read(t, "data", "feature_horizon", c.feature_horizon);
  detail::read(t, "data", "label_horizon", c.label_horizon);
  detail::read(t, "normalization", "strategy", c.normalization);
  detail::read(t, "normalization", "max_count", c.max_count);
  detail::read(t, "domains", "n_d", c.n_domains);
  detail::read(t, "domains", "k", c.knn);
  detail::read(t, "domains", "seed", c.seed);
  detail::read(t, "domains", "sigma", c.adjacency_sigma);
  detail::read(t, "model", "theta", c.theta);
  detail::read(t, "model", "lambda", c.lambda);
  detail::read(t, "model", "sigma", c.sigma);
  detail::read(t, "model", "rank", c.rank);
  detail::read(t, "model", "method", c.method);
  detail::read(t, "split", "initial", c.initial_fraction);
  detail::read(t, "split", "step", c.step_fraction);
  detail::read(t, "split", "test", c.test_fraction);
  detail::read(t, "bench", "methods", c.methods);
  detail::read(t, "bench", "max_steps", c.max_steps);
  detail::read(t, "run", "update_batches", c.update_batches);
  c.validate();
  return c;
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  Config c = parse_config(buf.str(), path.string());
  // Relative paths in the file are relative to the file.
  auto base = path.parent_path();
  if (!c.corpus.empty() && std::filesystem::path(c.corpus).is_relative()) c.corpus = (base / c.corpus).string();
  if (std::filesystem::path(c.workdir).is_relative()) c.workdir = (base / c.workdir).lexically_normal().string();
  return c;
}

/// The resolved configuration, defaults filled in.
inline toml::table config_table(const Config& c) {
  auto w = c.window();
  toml::array methods;
  for (auto m : c.method_list()) methods.push_back(std::string(models::method_name(m)));
  return toml::table{
      {"paths", toml::table{{"corpus", c.corpus}, {"workdir", c.workdir}}},
      {"data", toml::table{{"kind", ingest::kind_name(c.kind)},
                           {"year_first", w.first},
                           {"year_last", w.last},
                           {"feature_horizon", c.feature_horizon},
                           {"label_horizon", c.label_horizon}}},
      {"normalization", toml::table{{"strategy", c.normalization}, {"max_count", c.max_count}}},
      {"domains", toml::table{{"n_d", static_cast<std::int64_t>(c.resolved_domains())},
                              {"k", static_cast<std::int64_t>(c.knn)},
                              {"seed", static_cast<std::int64_t>(c.seed)},
                              {"sigma", c.resolved_adjacency_sigma()}}},
      {"model", toml::table{{"theta", c.theta},
                            {"lambda", c.lambda},
                            {"sigma", c.sigma},
                            {"rank", static_cast<std::int64_t>(c.rank)},
                            {"method", c.method}}},
      {"split", toml::table{{"initial", c.initial_fraction}, {"step", c.step_fraction}, {"test", c.test_fraction}}},
      {"bench", toml::table{{"methods", methods}, {"max_steps", static_cast<std::int64_t>(c.max_steps)}}},
      {"run", toml::table{{"update_batches", static_cast<std::int64_t>(c.update_batches)}}},
  };
}

inline std::string config_toml(const Config& c) {
  std::ostringstream out;
  out << config_table(c) << '\n';
  return out.str();
}

inline nlohmann::ordered_json config_json(const Config& c) {
  std::ostringstream out;
  out << toml::json_formatter{config_table(c)};
  return nlohmann::ordered_json::parse(out.str());
}

}  // namespace iball
