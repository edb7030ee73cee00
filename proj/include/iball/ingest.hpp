#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "iball/error.hpp"
#include "iball/linalg.hpp"
#include "iball/models.hpp"
#include "iball/normalize.hpp"

namespace iball::ingest {

/// One block of the v-format corpus.
struct RawEntry {
  std::string id;
  std::string title;
  std::vector<std::string> authors;
  std::string venue;
  int year = 0;
  std::vector<std::string> references;

  bool operator==(const RawEntry&) const = default;
};

struct ParseOptions {
  /// More malformed blocks than this fraction is a hard error...
  double max_malformed_fraction = 0.10;
  /// ...once the corpus has at least this many blocks.
  std::size_t min_blocks_for_ratio = 20;
};

struct ParseResult {
  std::vector<RawEntry> entries;
  std::size_t blocks = 0;
  std::size_t malformed = 0;
};

namespace detail {

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline bool parse_int(const std::string& s, int& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  long v = std::strtol(s.c_str(), &end, 10);
  if (*end != '\0') return false;
  out = static_cast<int>(v);
  return true;
}

// Parses one block; returns an empty string on success or the reason it is malformed.
inline std::string parse_block(const std::vector<std::string>& lines, RawEntry& out) {
  bool has_id = false, has_year = false;
  for (const auto& line : lines) {
    auto field = [&](std::size_t tag) { return trim(line.substr(tag)); };
    if (line.rfind("#index", 0) == 0) {
      if (has_id) return "duplicate #index";
      out.id = field(6);
      if (out.id.empty()) return "empty #index";
      has_id = true;
    } else if (line.rfind("#*", 0) == 0) {
      out.title = field(2);
    } else if (line.rfind("#@", 0) == 0) {
      std::istringstream names(field(2));
      for (std::string name; std::getline(names, name, ';');)
        if (auto t = trim(name); !t.empty()) out.authors.push_back(t);
    } else if (line.rfind("#t", 0) == 0) {
      if (!parse_int(field(2), out.year)) return "non-integer #t '" + field(2) + "'";
      if (out.year < 1900 || out.year > 2100) return "year " + std::to_string(out.year) + " outside 1900-2100";
      has_year = true;
    } else if (line.rfind("#c", 0) == 0) {
      out.venue = field(2);
    } else if (line.rfind("#%", 0) == 0) {
      if (auto ref = field(2); !ref.empty()) out.references.push_back(ref);
    } else if (line.rfind('#', 0) == 0) {
      // other tags (#!, ...) carry nothing we use
    } else {
      return "unrecognized line '" + line + "'";
    }
  }
  if (!has_id) return "missing #index";
  if (!has_year) return "missing #t";
  return {};
}

}  // namespace detail

/// Reads v-format blocks separated by blank lines. Malformed blocks are
/// skipped and reported through diag.
inline ParseResult parse_corpus(std::istream& in, const ParseOptions& opts = {}, Diagnostics* diag = nullptr) {
  if (!in) throw IoError("parse_corpus: stream is not readable");
  ParseResult res;
  std::unordered_set<std::string> seen;
  std::vector<std::string> block;
  std::size_t lineno = 0, block_start = 0;
  auto flush = [&] {
    if (block.empty()) return;
    ++res.blocks;
    RawEntry e;
    std::string why = detail::parse_block(block, e);
    if (why.empty() && !seen.insert(e.id).second) why = "id '" + e.id + "' already seen";
    if (why.empty()) {
      res.entries.push_back(std::move(e));
    } else {
      ++res.malformed;
      warn(diag, "block at line " + std::to_string(block_start) + " skipped: " + why);
    }
    block.clear();
  };
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) {
      flush();
      continue;
    }
    if (block.empty()) block_start = lineno;
    block.push_back(line);
  }
  if (in.bad()) throw IoError("parse_corpus: read failed at line " + std::to_string(lineno));
  flush();
  if (res.blocks >= opts.min_blocks_for_ratio &&
      static_cast<double>(res.malformed) > opts.max_malformed_fraction * static_cast<double>(res.blocks)) {
    throw ValidationError("parse_corpus: " + std::to_string(res.malformed) + " of " + std::to_string(res.blocks) +
                          " blocks are malformed");
  }
  return res;
}

/// Writes entries back in v-format.
inline void write_corpus(std::ostream& out, const std::vector<RawEntry>& entries) {
  for (const auto& e : entries) {
    out << "#index " << e.id << '\n';
    if (!e.title.empty()) out << "#* " << e.title << '\n';
    if (!e.authors.empty()) {
      out << "#@ ";
      for (std::size_t k = 0; k < e.authors.size(); ++k) out << (k ? ";" : "") << e.authors[k];
      out << '\n';
    }
    out << "#t " << e.year << '\n';
    if (!e.venue.empty()) out << "#c " << e.venue << '\n';
    for (const auto& r : e.references) out << "#% " << r << '\n';
    out << '\n';
  }
  if (!out) throw IoError("write_corpus: stream write failed");
}

enum class Kind { Paper, Author, Venue };

inline Kind parse_kind(const std::string& s) {
  if (s == "paper") return Kind::Paper;
  if (s == "author") return Kind::Author;
  if (s == "venue") return Kind::Venue;
  throw ValidationError("unknown entity kind '" + s + "' (expected paper, author or venue)");
}

inline std::string kind_name(Kind k) {
  switch (k) {
    case Kind::Paper: return "paper";
    case Kind::Author: return "author";
    case Kind::Venue: return "venue";
  }
  return "?";
}

struct CitationRecord {
  std::string id;
  Kind kind = Kind::Paper;
  int start_year = 0;
  std::vector<long> yearly_citations;  ///< index 0 is the start year
};

/// Yearly inbound citation series. The series of every entity runs from its
/// start year to the last year in the corpus.
inline std::vector<CitationRecord> build_series(const std::vector<RawEntry>& entries, Kind kind,
                                                Diagnostics* diag = nullptr) {
  if (entries.empty()) return {};
  int end_year = 0;
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    end_year = std::max(end_year, entries[k].year);
    by_id.emplace(entries[k].id, k);
  }
  std::vector<std::vector<long>> papers(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k)
    papers[k].assign(static_cast<std::size_t>(end_year - entries[k].year + 1), 0);
  for (const auto& citing : entries) {
    std::vector<std::string> refs = citing.references;
    std::sort(refs.begin(), refs.end());
    refs.erase(std::unique(refs.begin(), refs.end()), refs.end());
    for (const auto& ref : refs) {
      auto it = by_id.find(ref);
      if (it == by_id.end()) continue;
      const RawEntry& cited = entries[it->second];
      int offset = citing.year - cited.year;
      if (offset < 0) {
        warn(diag, "paper " + citing.id + " (" + std::to_string(citing.year) + ") cites later paper " + cited.id +
                       " (" + std::to_string(cited.year) + "); counted in year 0");
        offset = 0;
      }
      ++papers[it->second][static_cast<std::size_t>(offset)];
    }
  }

  std::vector<CitationRecord> out;
  if (kind == Kind::Paper) {
    for (std::size_t k = 0; k < entries.size(); ++k)
      out.push_back({entries[k].id, kind, entries[k].year, std::move(papers[k])});
    return out;
  }

  // Group papers by author or venue, in order of first appearance.
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    std::vector<std::string> keys;
    if (kind == Kind::Author) {
      keys = entries[k].authors;
      std::sort(keys.begin(), keys.end());
      keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    } else if (!entries[k].venue.empty()) {
      keys.push_back(entries[k].venue);
    }
    for (const auto& key : keys) {
      auto [it, fresh] = groups.try_emplace(key);
      if (fresh) order.push_back(key);
      it->second.push_back(k);
    }
  }
  for (const auto& key : order) {
    const auto& members = groups[key];
    int start = end_year;
    for (std::size_t k : members) start = std::min(start, entries[k].year);
    std::vector<long> series(static_cast<std::size_t>(end_year - start + 1), 0);
    for (std::size_t k : members) {
      auto shift = static_cast<std::size_t>(entries[k].year - start);
      for (std::size_t y = 0; y < papers[k].size(); ++y) series[shift + y] += papers[k][y];
    }
    out.push_back({key, kind, start, std::move(series)});
  }
  return out;
}

struct YearWindow {
  int first = 1936;
  int last = 2000;

  static YearWindow defaults(Kind k) {
    switch (k) {
      case Kind::Paper: return {1936, 2000};
      case Kind::Author: return {1960, 2000};
      case Kind::Venue: return {1900, 2001};
    }
    return {};
  }
};

struct Example {
  std::string id;
  Vector features;  ///< raw counts of years 1..feature_horizon
  double label = 0.0;
  int start_year = 0;
  Index domain = -1;
};

struct ExampleOptions {
  YearWindow window;
  int feature_horizon = 3;
  int label_horizon = 10;
  Normalizer normalizer;
};

/// Features are the first feature_horizon yearly counts; the label is the
/// normalized total over the first label_horizon years. Records outside the
/// window or with fewer than label_horizon observed years are dropped. A
/// MinMax normalizer without a scale is fitted to the kept records.
inline std::vector<Example> make_examples(const std::vector<CitationRecord>& records, ExampleOptions& opts) {
  require(opts.feature_horizon >= 1 && opts.label_horizon >= opts.feature_horizon,
          "make_examples: need 1 <= feature_horizon <= label_horizon");
  std::vector<const CitationRecord*> kept;
  std::vector<double> totals;
  for (const auto& r : records) {
    if (r.start_year < opts.window.first || r.start_year > opts.window.last) continue;
    if (static_cast<int>(r.yearly_citations.size()) < opts.label_horizon) continue;
    double total = 0.0;
    for (int y = 0; y < opts.label_horizon; ++y) total += static_cast<double>(r.yearly_citations[static_cast<std::size_t>(y)]);
    kept.push_back(&r);
    totals.push_back(total);
  }
  if (opts.normalizer.kind == Normalizer::Kind::MinMax && opts.normalizer.max_count <= 0.0)
    opts.normalizer.max_count = totals.empty() ? 0.0 : *std::max_element(totals.begin(), totals.end());
  std::vector<Example> out;
  out.reserve(kept.size());
  for (std::size_t k = 0; k < kept.size(); ++k) {
    Example e;
    e.id = kept[k]->id;
    e.start_year = kept[k]->start_year;
    e.features.resize(opts.feature_horizon);
    for (int y = 0; y < opts.feature_horizon; ++y)
      e.features(y) = static_cast<double>(kept[k]->yearly_citations[static_cast<std::size_t>(y)]);
    e.label = opts.normalizer(totals[k]);
    out.push_back(std::move(e));
  }
  return out;
}

inline Matrix feature_matrix(const std::vector<Example>& examples) {
  Index d = examples.empty() ? 0 : examples.front().features.size();
  Matrix x(static_cast<Index>(examples.size()), d);
  for (std::size_t s = 0; s < examples.size(); ++s) {
    require(examples[s].features.size() == d, "feature_matrix: examples have different feature lengths");
    x.row(static_cast<Index>(s)) = examples[s].features.transpose();
  }
  return x;
}

namespace detail {

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace detail

/// `id,f1,f2,f3,label,year,domain` with reals at six decimals.
inline void write_examples(std::ostream& out, const std::vector<Example>& examples) {
  Index d = examples.empty() ? 3 : examples.front().features.size();
  out << "id";
  for (Index k = 1; k <= d; ++k) out << ",f" << k;
  out << ",label,year,domain\n";
  for (const auto& e : examples) {
    require(e.id.find(',') == std::string::npos, "write_examples: id '" + e.id + "' contains a comma");
    out << e.id;
    for (Index k = 0; k < e.features.size(); ++k) out << ',' << detail::fixed6(e.features(k));
    out << ',' << detail::fixed6(e.label) << ',' << e.start_year << ',' << e.domain << '\n';
  }
  if (!out) throw IoError("write_examples: stream write failed");
}

inline std::vector<Example> read_examples(std::istream& in) {
  if (!in) throw IoError("read_examples: stream is not readable");
  std::string line;
  if (!std::getline(in, line)) return {};
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  {
    std::istringstream h(line);
    for (std::string col; std::getline(h, col, ',');) header.push_back(col);
  }
  require(header.size() >= 5 && header.front() == "id" && header[header.size() - 3] == "label" &&
              header[header.size() - 2] == "year" && header.back() == "domain",
          "read_examples: unexpected header '" + line + "'");
  const auto d = static_cast<Index>(header.size() - 4);
  std::vector<Example> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream row(line);
    for (std::string col; std::getline(row, col, ',');) cols.push_back(col);
    require(cols.size() == header.size(), "read_examples: line " + std::to_string(lineno) + " has " +
                                              std::to_string(cols.size()) + " columns");
    Example e;
    e.id = cols[0];
    e.features.resize(d);
    try {
      for (Index k = 0; k < d; ++k) e.features(k) = std::stod(cols[static_cast<std::size_t>(k) + 1]);
      e.label = std::stod(cols[cols.size() - 3]);
      e.start_year = std::stoi(cols[cols.size() - 2]);
      e.domain = std::stol(cols.back());
    } catch (const std::exception&) {
      throw ValidationError("read_examples: bad number on line " + std::to_string(lineno));
    }
    out.push_back(std::move(e));
  }
  if (in.bad()) throw IoError("read_examples: read failed");
  return out;
}

struct SplitOptions {
  double initial_fraction = 0.001;
  double step_fraction = 0.001;
  double test_fraction = 0.10;

  void validate() const {
    auto in_unit = [](double f) { return f > 0.0 && f < 1.0; };
    require(in_unit(initial_fraction) && in_unit(step_fraction) && in_unit(test_fraction),
            "split fractions must lie in (0, 1)");
    require(initial_fraction + test_fraction < 1.0, "initial + test fractions must be below 1");
  }
};

/// Indices into the example list, grouped by domain and chronological
/// within each domain.
struct StreamSchedule {
  Index n_domains = 0;
  std::vector<std::size_t> initial;
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> test;
};

/// Per domain: sorts by (start year, id), holds out the latest test fraction,
/// takes the initial fraction, and cuts the rest into steps. Boundaries are
/// rounded per domain; steps with no samples in any domain are dropped.
inline StreamSchedule split_stream(const std::vector<Example>& examples, Index n_domains, const SplitOptions& opts,
                                   Diagnostics* diag = nullptr) {
  opts.validate();
  require(n_domains >= 1, "split_stream: n_domains must be positive");
  std::vector<std::vector<std::size_t>> by_domain(static_cast<std::size_t>(n_domains));
  for (std::size_t s = 0; s < examples.size(); ++s) {
    Index d = examples[s].domain;
    require(d >= 0 && d < n_domains, "split_stream: example '" + examples[s].id + "' has domain " + std::to_string(d));
    by_domain[static_cast<std::size_t>(d)].push_back(s);
  }
  auto round_count = [](std::size_t n, double f) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(n) * f * (1.0 + 1e-12)));
  };
  const auto steps = static_cast<std::size_t>(
      std::floor((1.0 - opts.test_fraction - opts.initial_fraction) / opts.step_fraction + 1e-9));

  StreamSchedule out;
  out.n_domains = n_domains;
  std::vector<std::vector<std::size_t>> batches(steps);
  for (Index i = 0; i < n_domains; ++i) {
    auto& members = by_domain[static_cast<std::size_t>(i)];
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      if (examples[a].start_year != examples[b].start_year) return examples[a].start_year < examples[b].start_year;
      return examples[a].id < examples[b].id;
    });
    const std::size_t n = members.size();
    const std::size_t train = round_count(n, 1.0 - opts.test_fraction);
    if (train == 0) {
      warn(diag, "split_stream: domain " + std::to_string(i) + " has no training samples and is left out of the stream");
    }
    std::size_t prev = std::min(train, round_count(n, opts.initial_fraction));
    out.initial.insert(out.initial.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(prev));
    for (std::size_t k = 1; k <= steps; ++k) {
      std::size_t next = k == steps ? train : std::min(train, round_count(n, opts.initial_fraction + static_cast<double>(k) * opts.step_fraction));
      next = std::max(next, prev);
      batches[k - 1].insert(batches[k - 1].end(), members.begin() + static_cast<std::ptrdiff_t>(prev),
                            members.begin() + static_cast<std::ptrdiff_t>(next));
      prev = next;
    }
    if (steps == 0) {
      out.initial.insert(out.initial.end(), members.begin() + static_cast<std::ptrdiff_t>(prev),
                         members.begin() + static_cast<std::ptrdiff_t>(train));
    }
    out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(train), members.end());
  }
  for (auto& b : batches)
    if (!b.empty()) out.batches.push_back(std::move(b));
  return out;
}

/// Training data for the given examples, grouped by their domain.
inline models::DomainData gather(const std::vector<Example>& examples, const std::vector<std::size_t>& indices,
                                 Index n_domains) {
  Index d = examples.empty() ? 0 : examples.front().features.size();
  std::vector<std::vector<std::size_t>> parts(static_cast<std::size_t>(n_domains));
  for (std::size_t s : indices) {
    Index dom = examples[s].domain;
    require(dom >= 0 && dom < n_domains, "gather: example '" + examples[s].id + "' has no valid domain");
    parts[static_cast<std::size_t>(dom)].push_back(s);
  }
  models::DomainData out(n_domains, d);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    out.x[i].resize(static_cast<Index>(parts[i].size()), d);
    out.y[i].resize(static_cast<Index>(parts[i].size()));
    for (std::size_t r = 0; r < parts[i].size(); ++r) {
      out.x[i].row(static_cast<Index>(r)) = examples[parts[i][r]].features.transpose();
      out.y[i](static_cast<Index>(r)) = examples[parts[i][r]].label;
    }
  }
  return out;
}

}  // namespace iball::ingest
