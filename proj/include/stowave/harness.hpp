#pragma once

// Experiment plumbing: INI configuration, result tables in CSV, pooled
// aggregation, the replica worker pool and output placement.
//
// Seeding: experiment stream E = stream_seed(master, fnv1a64(name)); replica r
// draws its noise path from stream_seed(E, replica_offset + r); slice s of a
// path uses mt19937_64(stream_seed(path seed, s)).

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "stowave/error.hpp"
#include "stowave/noise.hpp"
#include "stowave/stats.hpp"

namespace stowave {

struct ExperimentInfo {
  std::string name;
  std::string summary;
};

inline const std::vector<ExperimentInfo>& experiment_catalog() {
  static const std::vector<ExperimentInfo> catalog = {
      {"admissibility", "finiteness of int mu(d xi) (1+|xi|^2)^{-k} against analytic thresholds"},
      {"isometry", "Monte Carlo second moment of the stochastic convolution against the isometry functional"},
      {"mollifier-ladder", "distances under Green mollification and integrand truncation"},
      {"picard", "Picard fixed point, sweep agreement, uniqueness and the moment envelope"},
      {"energy", "spectral energy of the unforced wave over 256 steps"},
      {"support", "finite propagation speed of the nonlinear solution"},
      {"weighted", "weight sandwich, annulus equivalence, weighted isometry bound and solver envelope"},
      {"refinement", "mean-square increments under time-step halving"},
  };
  return catalog;
}

inline bool experiment_exists(const std::string& name) {
  const auto& c = experiment_catalog();
  return std::any_of(c.begin(), c.end(), [&](const ExperimentInfo& e) { return e.name == name; });
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t experiment_stream(std::uint64_t master, const std::string& name) {
  return stream_seed(master, fnv1a64(name));
}

// ---------------------------------------------------------------------------
// Number formatting without locale: shortest round-trip representation.

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_number(std::uint64_t v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<std::uint64_t> parse_unsigned(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

// ---------------------------------------------------------------------------
// Configuration.

struct ExperimentConfig {
  // [experiment]
  std::string name = "picard";
  std::uint64_t seed = 1;
  std::uint64_t replicas = 100;
  std::uint64_t replica_offset = 0;
  std::string output;  // empty: $STOWAVE_OUTPUT_DIR, else "results"
  bool snapshots = false;
  // [grid]
  std::uint64_t dim = 1;
  std::uint64_t points = 128;
  double length = 16.0;
  // [solve]
  std::uint64_t k = 1;
  double horizon = 1.0;
  double dt = 1.0 / 128;
  std::string measure = "white";  // white | riesz
  double riesz_alpha = 0.5;
  std::string nonlinearity = "sine";  // zero | identity | sine | one_minus_exp | constant
  std::string scheme = "spectral";    // spectral | cell_averaged
  double picard_tolerance = 1e-13;
  // [weight]
  double weight_exponent = 2.0;
  double weight_radius = 1.0;

  bool operator==(const ExperimentConfig&) const = default;

  std::string output_directory() const {
    if (!output.empty()) return output;
    if (const char* env = std::getenv("STOWAVE_OUTPUT_DIR"); env && *env) return env;
    return "results";
  }

  void validate() const {
    if (!experiment_exists(name)) throw Error("config key experiment.name: unknown experiment '" + name + "'");
    if (replicas == 0) throw Error("config key experiment.replicas: must be positive");
    if (dim < 1 || dim > 3) throw Error("config key grid.dim: must be 1, 2 or 3");
    if (points < 8 || (points & (points - 1)) != 0) throw Error("config key grid.points: must be a power of two >= 8");
    if (!(length > 0.0)) throw Error("config key grid.length: must be positive");
    if (k < 1) throw Error("config key solve.k: must be at least 1");
    if (!(horizon > 0.0)) throw Error("config key solve.horizon: must be positive");
    if (!(dt > 0.0)) throw Error("config key solve.dt: must be positive");
    if (measure != "white" && measure != "riesz") throw Error("config key solve.measure: expected white or riesz");
    static const std::vector<std::string> alphas = {"zero", "identity", "sine", "one_minus_exp", "constant"};
    if (std::find(alphas.begin(), alphas.end(), nonlinearity) == alphas.end())
      throw Error("config key solve.nonlinearity: unknown '" + nonlinearity + "'");
    if (scheme != "spectral" && scheme != "cell_averaged")
      throw Error("config key solve.scheme: expected spectral or cell_averaged");
    if (!(picard_tolerance > 0.0)) throw Error("config key solve.picard_tolerance: must be positive");
    if (!(weight_exponent > static_cast<double>(dim))) throw Error("config key weight.K: must exceed grid.dim");
    if (!(weight_radius > 0.0)) throw Error("config key weight.R: must be positive");
  }
};

namespace detail {

struct ConfigField {
  const char* section;
  const char* key;
  enum { text, unsigned_int, real, flag } type;
};

inline const std::vector<ConfigField>& config_schema() {
  static const std::vector<ConfigField> schema = {
      {"experiment", "name", ConfigField::text},        {"experiment", "seed", ConfigField::unsigned_int},
      {"experiment", "replicas", ConfigField::unsigned_int}, {"experiment", "replica_offset", ConfigField::unsigned_int},
      {"experiment", "output", ConfigField::text},      {"experiment", "snapshots", ConfigField::flag},
      {"grid", "dim", ConfigField::unsigned_int},       {"grid", "points", ConfigField::unsigned_int},
      {"grid", "length", ConfigField::real},            {"solve", "k", ConfigField::unsigned_int},
      {"solve", "horizon", ConfigField::real},          {"solve", "dt", ConfigField::real},
      {"solve", "measure", ConfigField::text},          {"solve", "riesz_alpha", ConfigField::real},
      {"solve", "nonlinearity", ConfigField::text},     {"solve", "scheme", ConfigField::text},
      {"solve", "picard_tolerance", ConfigField::real}, {"weight", "K", ConfigField::real},
      {"weight", "R", ConfigField::real},
  };
  return schema;
}

template <class F>
void for_each_field(ExperimentConfig& c, F&& f) {
  f("experiment", "name", c.name);
  f("experiment", "seed", c.seed);
  f("experiment", "replicas", c.replicas);
  f("experiment", "replica_offset", c.replica_offset);
  f("experiment", "output", c.output);
  f("experiment", "snapshots", c.snapshots);
  f("grid", "dim", c.dim);
  f("grid", "points", c.points);
  f("grid", "length", c.length);
  f("solve", "k", c.k);
  f("solve", "horizon", c.horizon);
  f("solve", "dt", c.dt);
  f("solve", "measure", c.measure);
  f("solve", "riesz_alpha", c.riesz_alpha);
  f("solve", "nonlinearity", c.nonlinearity);
  f("solve", "scheme", c.scheme);
  f("solve", "picard_tolerance", c.picard_tolerance);
  f("weight", "K", c.weight_exponent);
  f("weight", "R", c.weight_radius);
}

inline std::string to_text(const std::string& v) { return v; }
inline std::string to_text(std::uint64_t v) { return format_number(v); }
inline std::string to_text(double v) { return format_number(v); }
inline std::string to_text(bool v) { return v ? "true" : "false"; }

inline void from_text(const std::string& key, const std::string& s, std::string& v) { v = s; }
inline void from_text(const std::string& key, const std::string& s, std::uint64_t& v) {
  const auto p = parse_unsigned(s);
  if (!p) throw Error("config key " + key + ": expected a non-negative integer, got '" + s + "'");
  v = *p;
}
inline void from_text(const std::string& key, const std::string& s, double& v) {
  const auto p = parse_double(s);
  if (!p || !std::isfinite(*p)) throw Error("config key " + key + ": expected a finite number, got '" + s + "'");
  v = *p;
}
inline void from_text(const std::string& key, const std::string& s, bool& v) {
  if (s == "true" || s == "1") v = true;
  else if (s == "false" || s == "0") v = false;
  else throw Error("config key " + key + ": expected true or false, got '" + s + "'");
}

}  // namespace detail

// Keys absent from the file keep the values of `defaults`.
inline ExperimentConfig parse_config(std::istream& in, const ExperimentConfig& defaults = {}) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error("config parse error at line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw Error("config key " + section + ": keys must sit inside a section");
    for (const auto& [key, value] : body) {
      const auto& schema = detail::config_schema();
      const bool known = std::any_of(schema.begin(), schema.end(),
                                     [&](const detail::ConfigField& f) { return section == f.section && key == f.key; });
      if (!known) throw Error("config key " + section + "." + key + ": unknown key");
    }
  }
  ExperimentConfig cfg = defaults;
  detail::for_each_field(cfg, [&](const char* section, const char* key, auto& field) {
    const auto node = tree.get_child_optional(boost::property_tree::ptree::path_type(std::string(section) + "." + key, '.'));
    if (node) detail::from_text(std::string(section) + "." + key, node->data(), field);
  });
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path, const ExperimentConfig& defaults = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  return parse_config(in, defaults);
}

inline std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream os;
  std::string current;
  auto copy = c;
  detail::for_each_field(copy, [&](const char* section, const char* key, auto& field) {
    if (current != section) {
      if (!current.empty()) os << '\n';
      os << '[' << section << "]\n";
      current = section;
    }
    os << key << " = " << detail::to_text(field) << '\n';
  });
  return os.str();
}

// ---------------------------------------------------------------------------
// Result tables.
//
// Row kinds, told apart by the row itself:
//   verdict rows    verdict "pass" or "fail"; quantity starts with "check.";
//   Monte Carlo     std_error present, replicas >= 2: pooled on merge;
//   extremes        quantity starts with "max." or "min.": max/min on merge;
//   deterministic   everything else: must agree exactly on merge.

struct ResultRow {
  std::string experiment;
  std::string case_id;
  std::string quantity;
  double value = 0.0;
  std::optional<double> std_error;
  std::uint64_t replicas = 0;
  std::string verdict;  // "", "pass" or "fail"

  bool operator==(const ResultRow&) const = default;
  bool is_verdict() const { return !verdict.empty(); }
  std::tuple<std::string, std::string, std::string> key() const { return {experiment, case_id, quantity}; }
};

inline constexpr const char* result_header = "experiment,case_id,quantity,value,std_error,replicas,verdict";

class ResultTable {
 public:
  std::vector<ResultRow> rows;

  void add(const std::string& experiment, const std::string& case_id, const std::string& quantity, double value) {
    push({experiment, case_id, quantity, value, std::nullopt, 0, ""});
  }
  void add_stats(const std::string& experiment, const std::string& case_id, const std::string& quantity,
                 const RunningStats& s) {
    if (s.count() < 2) throw Error("Monte Carlo row " + quantity + " needs at least two replicas");
    push({experiment, case_id, quantity, s.mean(), s.std_error(), s.count(), ""});
  }
  void add_extreme(const std::string& experiment, const std::string& case_id, const std::string& quantity, double value,
                   std::uint64_t replicas) {
    if (quantity.rfind("max.", 0) != 0 && quantity.rfind("min.", 0) != 0)
      throw Error("extreme row " + quantity + " must start with max. or min.");
    push({experiment, case_id, quantity, value, std::nullopt, replicas, ""});
  }
  // Pass iff `ok`; the value records the observed statistic.
  void add_check(const std::string& experiment, const std::string& case_id, const std::string& quantity, double value,
                 bool ok) {
    if (quantity.rfind("check.", 0) != 0) throw Error("verdict row " + quantity + " must start with check.");
    push({experiment, case_id, quantity, value, std::nullopt, 0, ok ? "pass" : "fail"});
  }

  const ResultRow* find(const std::string& case_id, const std::string& quantity) const {
    for (const auto& r : rows)
      if (r.case_id == case_id && r.quantity == quantity) return &r;
    return nullptr;
  }
  const ResultRow& at(const std::string& case_id, const std::string& quantity) const {
    const auto* r = find(case_id, quantity);
    if (!r) throw Error("result row missing: " + case_id + " " + quantity);
    return *r;
  }

  std::vector<std::string> case_ids() const {
    std::vector<std::string> out;
    for (const auto& r : rows)
      if (std::find(out.begin(), out.end(), r.case_id) == out.end()) out.push_back(r.case_id);
    return out;
  }

  std::vector<ResultRow> failures() const {
    std::vector<ResultRow> out;
    for (const auto& r : rows)
      if (r.verdict == "fail") out.push_back(r);
    return out;
  }
  bool all_pass() const { return failures().empty(); }

  void drop_verdicts() {
    rows.erase(std::remove_if(rows.begin(), rows.end(), [](const ResultRow& r) { return r.is_verdict(); }), rows.end());
  }

 private:
  void push(ResultRow r) {
    for (const auto* field : {&r.experiment, &r.case_id, &r.quantity})
      if (field->find_first_of(",\n\r\"") != std::string::npos) throw Error("result field contains a separator: " + *field);
    rows.push_back(std::move(r));
  }
};

inline void write_csv(std::ostream& os, const ResultTable& t) {
  os << result_header << '\n';
  for (const auto& r : t.rows) {
    os << r.experiment << ',' << r.case_id << ',' << r.quantity << ',' << format_number(r.value) << ','
       << (r.std_error ? format_number(*r.std_error) : std::string()) << ',' << format_number(r.replicas) << ','
       << r.verdict << '\n';
  }
}

inline std::string to_csv(const ResultTable& t) {
  std::ostringstream os;
  write_csv(os, t);
  return os.str();
}

inline ResultTable read_csv(std::istream& in, const std::string& source = "input") {
  std::string line;
  if (!std::getline(in, line) || line != result_header) throw Error(source + ": schema mismatch in header");
  ResultTable t;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      const auto pos = line.find(',', start);
      f.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    const std::string where = source + " line " + std::to_string(line_no);
    if (f.size() != 7) throw Error(where + ": schema mismatch, expected 7 fields");
    ResultRow r;
    r.experiment = f[0];
    r.case_id = f[1];
    r.quantity = f[2];
    const auto v = parse_double(f[3]);
    if (!v) throw Error(where + ": bad value '" + f[3] + "'");
    r.value = *v;
    if (!f[4].empty()) {
      const auto se = parse_double(f[4]);
      if (!se) throw Error(where + ": bad std_error '" + f[4] + "'");
      r.std_error = *se;
    }
    const auto n = parse_unsigned(f[5]);
    if (!n) throw Error(where + ": bad replicas '" + f[5] + "'");
    r.replicas = *n;
    if (f[6] != "" && f[6] != "pass" && f[6] != "fail") throw Error(where + ": bad verdict '" + f[6] + "'");
    r.verdict = f[6];
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline ResultTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open results " + path);
  return read_csv(in, path);
}

// Pools the data rows of several tables. Verdict rows are dropped; callers
// re-derive them from the merged data. A row seen in one table only is kept
// verbatim.
inline ResultTable merge_tables(const std::vector<ResultTable>& tables) {
  struct Slot {
    ResultRow row;
    RunningStats stats;
    std::size_t contributors = 0;
  };
  std::vector<Slot> slots;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> index;
  for (const auto& t : tables) {
    for (const auto& r : t.rows) {
      if (r.is_verdict()) continue;
      const auto [it, fresh] = index.try_emplace(r.key(), slots.size());
      if (fresh) {
        slots.push_back({r, r.std_error ? RunningStats::from_summary(r.value, *r.std_error, r.replicas) : RunningStats{}, 1});
        continue;
      }
      Slot& s = slots[it->second];
      const bool is_mc = s.row.std_error.has_value();
      if (is_mc != r.std_error.has_value())
        throw Error("schema mismatch: row kinds differ for " + r.case_id + " " + r.quantity);
      ++s.contributors;
      if (is_mc) {
        s.stats.merge(RunningStats::from_summary(r.value, *r.std_error, r.replicas));
      } else if (r.quantity.rfind("max.", 0) == 0) {
        s.row.value = std::max(s.row.value, r.value);
        s.row.replicas += r.replicas;
      } else if (r.quantity.rfind("min.", 0) == 0) {
        s.row.value = std::min(s.row.value, r.value);
        s.row.replicas += r.replicas;
      } else if (!(s.row.value == r.value || (std::isnan(s.row.value) && std::isnan(r.value)))) {
        throw Error("deterministic row differs between tables: " + r.case_id + " " + r.quantity);
      }
    }
  }
  ResultTable out;
  for (auto& s : slots) {
    if (s.contributors > 1 && s.row.std_error) {
      s.row.value = s.stats.mean();
      s.row.std_error = s.stats.std_error();
      s.row.replicas = s.stats.count();
    }
    out.rows.push_back(std::move(s.row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Replica worker pool: results land by replica index, so any reduction run
// over the returned vector in index order is independent of the pool width.

template <class F>
auto parallel_replicas(std::size_t count, std::size_t threads, F&& work) -> std::vector<decltype(work(std::size_t{}))> {
  using T = decltype(work(std::size_t{}));
  std::vector<std::optional<T>> slots(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        slots[i].emplace(work(i));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  const std::size_t width = std::max<std::size_t>(1, std::min(threads, count));
  if (width == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < width; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<T> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

inline std::size_t default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------
// Output placement: every file an experiment writes goes through here.

class OutputDirectory {
 public:
  explicit OutputDirectory(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path file(const std::string& name) const {
    if (name.empty() || name.find('/') != std::string::npos || name.find('\\') != std::string::npos || name == "." ||
        name == "..")
      throw Error("output file name must be a plain file name: '" + name + "'");
    std::filesystem::create_directories(root_);
    return root_ / name;
  }

  void write_text(const std::string& name, const std::string& text) const {
    std::ofstream out(file(name), std::ios::binary);
    out << text;
    if (!out) throw Error("cannot write " + (root_ / name).string());
  }

 private:
  std::filesystem::path root_;
};

}  // namespace stowave
