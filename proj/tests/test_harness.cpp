#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "stowave/stowave.hpp"

using namespace stowave;

namespace {

ExperimentConfig parse_text(const std::string& text) {
  std::istringstream in(text);
  return load_config(in);
}

std::string error_of(const std::string& text) {
  try {
    parse_text(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

// Cheap settings for every experiment.
ExperimentConfig quick(const std::string& name) {
  auto c = default_config(name);
  if (name == "isometry") {
    c.points = 16;
    c.length = 6.0;
    c.dt = 1.0 / 8;
    c.replicas = 400;
  } else if (name == "picard") {
    c.points = 64;
    c.horizon = 0.5;
    c.dt = 1.0 / 64;
    c.replicas = 30;
  } else if (name == "weighted") {
    c.replicas = 60;
  } else if (name == "refinement") {
    c.replicas = 30;
  } else if (name == "support") {
    c.replicas = 2;
  }
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("stowave_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, RoundTripsThroughText) {
  for (const auto& e : experiment_catalog()) {
    auto c = default_config(e.name);
    EXPECT_EQ(parse_text(serialize_config(c)), c) << e.name;
  }
  auto c = default_config("weighted");
  c.seed = 0xfedcba9876543210ULL;
  c.dt = 0.1;
  c.length = 1.0 / 3;
  c.output = "out dir";
  c.snapshots = true;
  c.weight_exponent = 2.75;
  const auto text = serialize_config(c);
  EXPECT_EQ(parse_text(text), c);
  EXPECT_EQ(serialize_config(parse_text(text)), text);
}

TEST(Config, AbsentKeysTakeExperimentDefaults) {
  const auto c = parse_text("[experiment]\nname = isometry\nseed = 5\n");
  EXPECT_EQ(c.points, 64u);
  EXPECT_EQ(c.replicas, 1000u);
  EXPECT_EQ(c.seed, 5u);
}

TEST(Config, ErrorsNameLineOrKey) {
  EXPECT_NE(error_of("[experiment]\nname = picard\nreplicas = 0\n").find("experiment.replicas"), std::string::npos);
  EXPECT_NE(error_of("[experiment]\nname = nothing\n").find("experiment.name"), std::string::npos);
  EXPECT_NE(error_of("[grid]\npoints = many\n").find("grid.points"), std::string::npos);
  EXPECT_NE(error_of("[grid]\npoints = 100\n").find("grid.points"), std::string::npos);
  EXPECT_NE(error_of("[solve]\ncolour = blue\n").find("solve.colour"), std::string::npos);
  EXPECT_NE(error_of("[solve]\ndt = -1\n").find("solve.dt"), std::string::npos);
  EXPECT_NE(error_of("[experiment]\nname = picard\n[grid\n").find("line 3"), std::string::npos);
  EXPECT_NE(error_of("[grid]\ndim = 2\n[weight]\nK = 1.5\n").find("weight.K"), std::string::npos);
}

TEST(Config, OutputDirectoryFromEnvironment) {
  ExperimentConfig c;
  ::setenv("STOWAVE_OUTPUT_DIR", "/tmp/from_env", 1);
  EXPECT_EQ(c.output_directory(), "/tmp/from_env");
  c.output = "explicit";
  EXPECT_EQ(c.output_directory(), "explicit");
  ::unsetenv("STOWAVE_OUTPUT_DIR");
  c.output.clear();
  EXPECT_EQ(c.output_directory(), "results");
}

TEST(Stats, MergeMatchesSequential) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(3.0, 2.0);
  RunningStats all, a, b;
  for (int i = 0; i < 1000; ++i) {
    const double x = n(rng);
    all.add(x);
    (i < 400 ? a : b).add(x);
  }
  auto ab = a;
  ab.merge(b);
  auto ba = b;
  ba.merge(a);
  EXPECT_EQ(ab.count(), 1000u);
  EXPECT_NEAR(ab.mean(), all.mean(), 1e-13 * std::abs(all.mean()));
  EXPECT_NEAR(ab.std_error(), all.std_error(), 1e-12 * all.std_error());
  EXPECT_NEAR(ab.mean(), ba.mean(), 1e-14 * std::abs(all.mean()));
  const auto r = RunningStats::from_summary(a.mean(), a.std_error(), a.count());
  EXPECT_NEAR(r.std_error(), a.std_error(), 1e-14 * a.std_error());
  RunningStats empty;
  auto copy = a;
  copy.merge(empty);
  EXPECT_EQ(copy.mean(), a.mean());
  EXPECT_EQ(copy.std_error(), a.std_error());
}

TEST(Pool, ResultsIndependentOfWidth) {
  auto work = [](std::size_t i) {
    std::mt19937_64 rng(stream_seed(9, i));
    return std::normal_distribution<double>(0.0, 1.0)(rng);
  };
  const auto one = parallel_replicas(50, 1, work);
  const auto four = parallel_replicas(50, 4, work);
  EXPECT_EQ(one, four);
  EXPECT_THROW(parallel_replicas(10, 3, [](std::size_t i) -> int {
                 if (i == 7) throw Error("replica failed");
                 return 0;
               }),
               Error);
}

TEST(Table, CsvRoundTrip) {
  ResultTable t;
  t.add("isometry", "a", "functional", 0.1);
  RunningStats s;
  for (double x : {1.0, 2.0, 4.0}) s.add(x);
  t.add_stats("isometry", "a", "mc", s);
  t.add_extreme("picard", "b", "max.gap", 1e-300, 3);
  t.add_check("picard", "b", "check.c6.gap", 1e-300, true);
  const auto csv = to_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), result_header);
  std::istringstream in(csv);
  const auto back = read_csv(in);
  EXPECT_EQ(back.rows, t.rows);
  std::istringstream bad("experiment,case,quantity\n");
  EXPECT_THROW(read_csv(bad), Error);
  std::istringstream short_row(std::string(result_header) + "\na,b,c\n");
  EXPECT_THROW(read_csv(short_row), Error);
  EXPECT_THROW(t.add("x", "a,b", "q", 1.0), Error);
  EXPECT_THROW(t.add_stats("x", "a", "q", RunningStats{}), Error);
}

TEST(Aggregate, MergeWithEmptyIsIdentity) {
  auto t = run_experiment(quick("weighted"), 1);
  auto merged = merge_tables({t, ResultTable{}});
  evaluate(merged);
  EXPECT_EQ(to_csv(merged), to_csv(t));
}

TEST(Aggregate, SplitRunsPoolToSingleRun) {
  auto whole = quick("weighted");
  whole.replicas = 200;
  auto first = whole, second = whole;
  first.replicas = second.replicas = 100;
  second.replica_offset = 100;
  const auto t_whole = run_experiment(whole, 1);
  const auto t1 = run_experiment(first, 1);
  const auto t2 = run_experiment(second, 1);
  auto m12 = merge_tables({t1, t2});
  auto m21 = merge_tables({t2, t1});
  evaluate(m12);
  evaluate(m21);
  ASSERT_EQ(m12.rows.size(), t_whole.rows.size());
  for (const auto& r : t_whole.rows) {
    const auto* a = m12.find(r.case_id, r.quantity);
    const auto* b = m21.find(r.case_id, r.quantity);
    ASSERT_TRUE(a && b) << r.quantity;
    EXPECT_NEAR(a->value, r.value, 1e-12 * std::max(1.0, std::abs(r.value))) << r.case_id << " " << r.quantity;
    EXPECT_NEAR(a->value, b->value, 1e-12 * std::max(1.0, std::abs(r.value)));
    EXPECT_EQ(a->replicas, r.replicas);
    EXPECT_EQ(a->verdict, r.verdict);
    if (r.std_error) EXPECT_NEAR(*a->std_error, *r.std_error, 1e-12 * *r.std_error);
  }
}

TEST(Aggregate, RejectsMismatchedTables) {
  ResultTable a, b;
  a.add("energy", "k1", "steps", 256);
  b.add("energy", "k1", "steps", 128);
  EXPECT_THROW(merge_tables({a, b}), Error);
  ResultTable c;
  RunningStats s;
  s.add(1.0);
  s.add(2.0);
  c.add_stats("energy", "k1", "steps", s);
  EXPECT_THROW(merge_tables({a, c}), Error);
}

TEST(Evaluate, VerdictsFollowData) {
  auto t = run_experiment(default_config("energy"), 1);
  EXPECT_TRUE(t.all_pass());
  for (auto& r : t.rows)
    if (r.quantity == "relative_drift" && r.case_id == "k2") r.value = 1e-9;
  evaluate(t);
  ASSERT_EQ(t.failures().size(), 1u);
  EXPECT_EQ(t.failures().front().quantity, "check.c8.relative_drift_1e-10");
}

TEST(Run, SameSeedGivesIdenticalCsv) {
  for (const std::string name : {"picard", "refinement", "weighted"}) {
    const auto c = quick(name);
    const auto a = to_csv(run_experiment(c, 1));
    const auto b = to_csv(run_experiment(c, 3));
    EXPECT_EQ(a, b) << name;
    auto other = c;
    other.seed = c.seed + 1;
    EXPECT_NE(to_csv(run_experiment(other, 1)), a) << name;
  }
}

TEST(Run, AdmissibilityReproducesAnalyticTable) {
  const auto t = run_experiment(default_config("admissibility"), 1);
  std::size_t checks = 0;
  for (const auto& r : t.rows) {
    if (!r.is_verdict()) continue;
    ++checks;
    EXPECT_EQ(r.verdict, "pass") << r.case_id;
  }
  // 8 white cases and riesz alpha < d over d = 1..4 (1 + 3 + 5 + 7) for each k
  EXPECT_EQ(checks, 8u + 2u * 16u);
  EXPECT_EQ(t.at("white.d3.k2", "integral_finite").value, 1.0);
  EXPECT_EQ(t.at("white.d4.k2", "integral_finite").value, 0.0);
  EXPECT_EQ(t.at("riesz2.d3.k1", "integral_finite").value, 0.0);
  EXPECT_EQ(t.at("riesz1.5.d2.k1", "integral_finite").value, 1.0);
}

TEST(Run, EveryCriterionHasOneExperiment) {
  std::set<int> seen;
  for (const auto& c : acceptance_criteria()) {
    EXPECT_TRUE(experiment_exists(c.experiment));
    EXPECT_TRUE(seen.insert(c.number).second);
  }
  EXPECT_EQ(seen.size(), 11u);
  for (const auto& e : experiment_catalog()) {
    const auto t = run_experiment(quick(e.name), 1);
    EXPECT_TRUE(t.all_pass()) << e.name;
    for (const auto& r : t.rows) {
      if (!r.is_verdict()) continue;
      bool owned = false;
      for (const auto& c : acceptance_criteria())
        if (r.quantity.rfind(criterion_prefix(c.number), 0) == 0) owned = c.experiment == e.name;
      EXPECT_TRUE(owned) << e.name << " " << r.quantity;
    }
  }
}

TEST(Output, WritesOnlyInsideItsDirectory) {
  const auto dir = scratch("out");
  auto c = quick("picard");
  c.output = dir.string();
  c.snapshots = true;
  run_and_write(c, 1);
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    ++files;
    EXPECT_EQ(entry.path().parent_path(), dir);
  }
  EXPECT_GT(files, 1u);
  EXPECT_TRUE(std::filesystem::exists(dir / "picard.csv"));
  std::ifstream snap(dir / "picard_replica0_step0.bin", std::ios::binary);
  const auto f = read_snapshot(snap);
  EXPECT_EQ(f.grid.points_per_axis(), 64);
  const OutputDirectory out(dir);
  EXPECT_THROW(out.file("../escape.csv"), Error);
  EXPECT_THROW(out.file("sub/x.csv"), Error);
  EXPECT_THROW(out.file(".."), Error);
  std::filesystem::remove_all(dir);
}
