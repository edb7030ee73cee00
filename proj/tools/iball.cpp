// iball command-line driver: ingest, partition, fit, update, predict, bench, heatmap.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "iball/iball.hpp"

namespace fs = std::filesystem;
using namespace iball;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> workdir, corpus, method, normalization;
  std::optional<double> theta, lambda, sigma;
  std::optional<Index> rank, n_domains, max_steps, update_batches;
  std::optional<std::uint64_t> seed;
};

Config resolve(const Overrides& o) {
  Config c = load_config(o.config);
  if (o.workdir) c.workdir = *o.workdir;
  if (o.corpus) c.corpus = *o.corpus;
  if (o.method) c.method = *o.method;
  if (o.normalization) c.normalization = *o.normalization;
  if (o.theta) c.theta = *o.theta;
  if (o.lambda) c.lambda = *o.lambda;
  if (o.sigma) c.sigma = *o.sigma;
  if (o.rank) c.rank = *o.rank;
  if (o.n_domains) c.n_domains = *o.n_domains;
  if (o.max_steps) c.max_steps = *o.max_steps;
  if (o.update_batches) c.update_batches = *o.update_batches;
  if (o.seed) c.seed = *o.seed;
  c.validate();
  return c;
}

fs::path in_workdir(const Config& c, const char* name) { return fs::path(c.workdir) / name; }

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  return in;
}

std::ofstream open_out(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

void report(const Diagnostics& diag) {
  for (const auto& m : diag.messages) std::cerr << "warning: " << m << '\n';
}

// A minmax scale fitted at ingest is recorded in the workdir's resolved config.
void restore_scale(Config& c) {
  if (c.normalization != "minmax" || c.max_count > 0.0) return;
  fs::path p = in_workdir(c, "config.resolved.toml");
  if (!fs::exists(p)) return;
  std::ifstream in(p);
  std::stringstream buf;
  buf << in.rdbuf();
  c.max_count = parse_config(buf.str(), p.string()).max_count;
}

void write_resolved(const Config& c) {
  auto out = open_out(in_workdir(c, "config.resolved.toml"));
  out << config_toml(c);
}

std::vector<ingest::Example> load_examples(const Config& c) {
  auto in = open_in(in_workdir(c, "examples.csv"));
  return ingest::read_examples(in);
}

struct Workspace {
  std::vector<ingest::Example> examples;
  domains::DomainPartition partition;
  domains::DomainGraph graph;
  ingest::StreamSchedule schedule;
};

Workspace load_workspace(const Config& c, Diagnostics* diag) {
  Workspace w;
  w.examples = load_examples(c);
  require(!w.examples.empty(), "examples.csv has no rows");
  const Index nd = c.resolved_domains();
  for (const auto& e : w.examples)
    require(e.domain >= 0 && e.domain < nd, "example '" + e.id + "' has domain " + std::to_string(e.domain) +
                                                "; run `iball partition` with n_d = " + std::to_string(nd));
  w.partition.assignments.reserve(w.examples.size());
  w.partition.sizes.assign(static_cast<std::size_t>(nd), 0);
  for (const auto& e : w.examples) {
    w.partition.assignments.push_back(e.domain);
    ++w.partition.sizes[static_cast<std::size_t>(e.domain)];
  }
  domains::compute_centroids(ingest::feature_matrix(w.examples), w.partition);
  w.graph = domains::domain_adjacency(w.partition.centroids, c.resolved_adjacency_sigma());
  w.schedule = ingest::split_stream(w.examples, nd, c.split(), diag);
  return w;
}

std::size_t batch_count(const Config& c, const ingest::StreamSchedule& s) {
  return c.max_steps < 0 ? s.batches.size() : std::min(s.batches.size(), static_cast<std::size_t>(c.max_steps));
}

void save_model(const Config& c, const models::Model& m) {
  auto out = open_out(in_workdir(c, "model.bin"));
  serialize::write_model(out, {m, c.hyperparams(), config_toml(c)});
}

int cmd_ingest(Config c) {
  require(!c.corpus.empty(), "paths.corpus is not set");
  Diagnostics diag;
  auto in = open_in(c.corpus);
  auto parsed = ingest::parse_corpus(in, {}, &diag);
  auto records = ingest::build_series(parsed.entries, c.kind, &diag);
  ingest::ExampleOptions opts{c.window(), c.feature_horizon, c.label_horizon, c.normalizer()};
  auto examples = ingest::make_examples(records, opts);
  c.max_count = opts.normalizer.max_count;
  auto out = open_out(in_workdir(c, "examples.csv"));
  ingest::write_examples(out, examples);
  write_resolved(c);
  report(diag);
  std::cout << "parsed " << parsed.entries.size() << " entries (" << parsed.malformed << " malformed), "
            << records.size() << ' ' << ingest::kind_name(c.kind) << " records, " << examples.size() << " examples\n";
  return 0;
}

int cmd_partition(const Config& c) {
  auto examples = load_examples(c);
  const Index nd = c.resolved_domains();
  auto p = domains::make_partition(ingest::feature_matrix(examples), c.knn, nd, c.seed);
  std::vector<std::string> ids;
  for (std::size_t s = 0; s < examples.size(); ++s) {
    examples[s].domain = p.assignments[s];
    ids.push_back(examples[s].id);
  }
  {
    auto out = open_out(in_workdir(c, "partition.tsv"));
    domains::write_partition(out, ids, p.assignments);
  }
  auto out = open_out(in_workdir(c, "examples.csv"));
  ingest::write_examples(out, examples);
  write_resolved(c);
  std::cout << "partitioned " << examples.size() << " samples into " << nd << " domains, sizes";
  for (Index s : p.sizes) std::cout << ' ' << s;
  std::cout << '\n';
  return 0;
}

int cmd_fit(const Config& c) {
  Diagnostics diag;
  auto w = load_workspace(c, &diag);
  const Index nd = c.resolved_domains();
  const auto method = models::parse_method(c.method);
  const std::size_t batches = batch_count(c, w.schedule);
  auto hp = c.hyperparams();
  models::Model model;
  std::vector<std::size_t> seen = w.schedule.initial;
  for (std::size_t k = 0; k < batches; ++k)
    seen.insert(seen.end(), w.schedule.batches[k].begin(), w.schedule.batches[k].end());
  if (method == models::Method::IballFast) {
    auto fast = models::fit_fast_initial(ingest::gather(w.examples, w.schedule.initial, nd), w.graph, hp, &diag);
    for (std::size_t k = 0; k < batches; ++k)
      fast = models::update_fast(fast, ingest::gather(w.examples, w.schedule.batches[k], nd), w.graph, hp);
    model = std::move(fast);
  } else {
    model = models::fit_method(method, ingest::gather(w.examples, seen, nd), w.graph, hp, c.normalizer(), &diag);
  }
  save_model(c, model);
  report(diag);
  std::cout << "fitted " << c.method << " on " << seen.size() << " samples (" << batches << " of "
            << w.schedule.batches.size() << " batches)\n";
  return 0;
}

int cmd_update(const Config& c) {
  Diagnostics diag;
  auto w = load_workspace(c, &diag);
  const Index nd = c.resolved_domains();
  auto in = open_in(in_workdir(c, "model.bin"));
  auto snap = serialize::read_model(in);
  auto* fast = std::get_if<models::FastModel>(&snap.model);
  require(fast != nullptr, "update applies to iball-fast models only");
  require(fast->n_domains() == nd, "model has " + std::to_string(fast->n_domains()) + " domains, config has " +
                                       std::to_string(nd));

  // The batches already applied are those whose cumulative per-domain counts match the model.
  std::vector<Index> counts(static_cast<std::size_t>(nd), 0);
  auto add = [&](const std::vector<std::size_t>& idx) {
    for (std::size_t s : idx) ++counts[static_cast<std::size_t>(w.examples[s].domain)];
  };
  auto matches = [&] {
    for (Index i = 0; i < nd; ++i)
      if (counts[static_cast<std::size_t>(i)] != fast->features[static_cast<std::size_t>(i)].rows()) return false;
    return true;
  };
  add(w.schedule.initial);
  std::size_t applied = 0;
  while (!matches() && applied < w.schedule.batches.size()) add(w.schedule.batches[applied++]);
  require(matches(), "model.bin does not correspond to a prefix of the configured stream");

  auto hp = c.hyperparams();
  std::size_t done = 0;
  for (; done < static_cast<std::size_t>(c.update_batches) && applied + done < w.schedule.batches.size(); ++done)
    *fast = models::update_fast(*fast, ingest::gather(w.examples, w.schedule.batches[applied + done], nd), w.graph, hp);
  if (done == 0) diag.warn("no batches left to apply; model unchanged");
  save_model(c, snap.model);
  report(diag);
  std::cout << "applied " << done << " batch(es); " << applied + done << " of " << w.schedule.batches.size()
            << " batches incorporated, " << fast->dim() << " samples\n";
  return 0;
}

int cmd_predict(const Config& c) {
  Diagnostics diag;
  auto w = load_workspace(c, &diag);
  auto in = open_in(in_workdir(c, "model.bin"));
  auto snap = serialize::read_model(in);
  auto test = eval::make_test_set(w.examples, w.schedule.test, w.partition.centroids);
  require(test.y.size() > 0, "test set is empty");
  Vector pred = models::predict_all(snap.model, test.x, test.domains);
  auto out = open_out(in_workdir(c, "predictions.csv"));
  out << "id,domain,actual,predicted\n";
  char buf[96];
  for (std::size_t k = 0; k < w.schedule.test.size(); ++k) {
    std::snprintf(buf, sizeof buf, ",%lld,%.6f,%.6f\n", static_cast<long long>(test.domains[k]),
                  test.y(static_cast<Index>(k)), pred(static_cast<Index>(k)));
    out << w.examples[w.schedule.test[k]].id << buf;
  }
  if (!out) throw IoError("cannot write predictions.csv");
  report(diag);
  std::printf("rmse %.6f over %lld test samples\n", eval::rmse(pred, test.y), static_cast<long long>(test.y.size()));
  return 0;
}

int cmd_bench(const Config& c) {
  Diagnostics diag;
  auto w = load_workspace(c, &diag);
  eval::BenchmarkInput in;
  in.examples = &w.examples;
  in.schedule = &w.schedule;
  in.centroids = &w.partition.centroids;
  in.graph = &w.graph;
  in.hp = c.hyperparams();
  in.normalizer = c.normalizer();
  in.methods = c.method_list();
  if (c.max_steps >= 0) in.max_steps = static_cast<std::size_t>(c.max_steps);
  auto rep = eval::run_streaming_benchmark(in, &diag);
  rep.config = config_json(c);
  {
    auto out = open_out(in_workdir(c, "report.csv"));
    eval::write_report_csv(out, rep);
  }
  auto out = open_out(in_workdir(c, "report.json"));
  out << eval::report_json(rep).dump(2) << '\n';
  report(diag);
  const auto& last = rep.steps.back();
  std::cout << "step " << last.step << ", n = " << last.n << '\n';
  for (const auto& r : last.results) {
    std::printf("  %-16s rmse %s  %.4fs\n", r.method.c_str(), std::isnan(r.rmse) ? "failed" : std::to_string(r.rmse).c_str(),
                r.seconds);
  }
  return 0;
}

int cmd_heatmap(const Config& c) {
  auto in = open_in(in_workdir(c, "predictions.csv"));
  std::string line;
  std::getline(in, line);
  require(line.rfind("id,domain,actual,predicted", 0) == 0, "predictions.csv has an unexpected header");
  std::vector<double> actual, predicted;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto c3 = line.rfind(','), c2 = line.rfind(',', c3 - 1);
    require(c3 != std::string::npos && c2 != std::string::npos, "predictions.csv: bad row '" + line + "'");
    try {
      actual.push_back(std::stod(line.substr(c2 + 1, c3 - c2 - 1)));
      predicted.push_back(std::stod(line.substr(c3 + 1)));
    } catch (const std::exception&) {
      throw ValidationError("predictions.csv: bad number in '" + line + "'");
    }
  }
  auto edges = eval::default_bin_edges();
  Matrix h = eval::heatmap_bins(Eigen::Map<Vector>(predicted.data(), static_cast<Index>(predicted.size())),
                                Eigen::Map<Vector>(actual.data(), static_cast<Index>(actual.size())), edges);
  auto out = open_out(in_workdir(c, "heatmap.csv"));
  eval::write_heatmap(out, h, edges);
  std::cout << "heatmap over " << actual.size() << " predictions\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint multi-domain citation impact prediction"};
  app.require_subcommand(1);
  Overrides o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "configuration file (TOML)")->required();
    sub->add_option("--workdir", o.workdir, "working directory for all artifacts");
    sub->add_option("--corpus", o.corpus, "v-format corpus file");
    sub->add_option("--method", o.method, "method for fit");
    sub->add_option("--normalization", o.normalization, "label normalization: log2 or minmax");
    sub->add_option("--theta", o.theta, "domain coupling weight");
    sub->add_option("--lambda", o.lambda, "ridge weight");
    sub->add_option("--sigma", o.sigma, "Gaussian kernel bandwidth");
    sub->add_option("--rank", o.rank, "eigenpair rank of the fast model");
    sub->add_option("--n-d", o.n_domains, "number of domains");
    sub->add_option("--seed", o.seed, "partition seed");
    sub->add_option("--max-steps", o.max_steps, "stream batches used by fit and bench (-1: all)");
    sub->add_option("--batches", o.update_batches, "batches applied by update");
  };
  struct Command {
    const char* name;
    const char* help;
    int (*run)(Config);
  };
  const Command commands[] = {
      {"ingest", "parse the corpus and write examples.csv", [](Config c) { return cmd_ingest(std::move(c)); }},
      {"partition", "split examples into domains (partition.tsv)", [](Config c) { return cmd_partition(c); }},
      {"fit", "fit the configured method and write model.bin", [](Config c) { return cmd_fit(c); }},
      {"update", "apply the next stream batches to a fast model", [](Config c) { return cmd_update(c); }},
      {"predict", "predict the test set (predictions.csv)", [](Config c) { return cmd_predict(c); }},
      {"bench", "replay the stream over all methods (report.csv, report.json)", [](Config c) { return cmd_bench(c); }},
      {"heatmap", "actual vs predicted bins from predictions.csv (heatmap.csv)", [](Config c) { return cmd_heatmap(c); }},
  };
  for (const auto& cmd : commands) add_common(app.add_subcommand(cmd.name, cmd.help));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    Config c = resolve(o);
    restore_scale(c);
    for (const auto& cmd : commands)
      if (app.got_subcommand(cmd.name)) return cmd.run(c);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
