#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "sampleval/harness.hpp"
#include "sampleval/io.hpp"
#include "toy.hpp"

using namespace sampleval;
using sampleval::testing::TempDir;

namespace {

const std::filesystem::path kSource = SAMPLEVAL_SOURCE_DIR;

RunConfig tiny() { return load_run_config(kSource / "configs" / "tiny.json"); }

std::vector<std::string> lines_of(const std::filesystem::path& p) {
  std::istringstream in(io::read_file(p));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  return out;
}

// (scenario, question, metric, k) -> mean
std::map<std::string, double> means(const std::filesystem::path& results) {
  std::map<std::string, double> out;
  auto lines = lines_of(results);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = split(lines[i]);
    out[f[0] + "," + f[1] + "," + f[2] + "," + f[3]] = std::stod(f[4]);
  }
  return out;
}

RunSummary run_into(const RunConfig& c, const std::filesystem::path& out, std::size_t workers) {
  RunOptions o;
  o.workers = workers;
  o.out_dir = out;
  return run_grid(c, o);
}

}  // namespace

TEST(Grid, DefaultsHave1512Scenarios) {
  auto c = RunConfig::defaults();
  auto grid = enumerate_grid(c);
  EXPECT_EQ(grid.size(), 1512u);
  std::set<std::string> keys;
  std::set<std::uint64_t> hashes;
  for (const auto& id : grid) {
    keys.insert(id.key());
    hashes.insert(id.hash());
  }
  EXPECT_EQ(keys.size(), 1512u);
  EXPECT_EQ(hashes.size(), 1512u);
  // 63 samplers per logger cell.
  EXPECT_EQ(grid.size() / (c.policies.size() * c.sparsities.size()), 63u);
}

TEST(Grid, SmallConfigCount) {
  auto c = tiny();
  c.policies = {LoggerPolicy::uniform};
  c.sparsities = {0.5};
  c.fixed_samplers = {Strategy::full, Strategy::exposed};
  c.parametric_samplers = {Strategy::random, Strategy::skew, Strategy::wtdh};
  c.sample_sizes = {2, 10};
  EXPECT_EQ(enumerate_grid(c).size(), 8u);
}

TEST(Grid, OrderAndKeys) {
  auto grid = enumerate_grid(tiny());
  ASSERT_EQ(grid.size(), 28u);
  EXPECT_EQ(grid[0].key(), "uniform|0.0000|full|-");
  EXPECT_EQ(grid[3].key(), "uniform|0.0000|random|2");
  EXPECT_EQ(grid[7].key(), "uniform|0.5000|full|-");
  for (const auto& id : grid) {
    auto back = parse_scenario_key(id.key());
    ASSERT_TRUE(back.has_value());
    EXPECT_EQ(back->key(), id.key());
    EXPECT_EQ(back->hash(), id.hash());
  }
  EXPECT_FALSE(parse_scenario_key("nope|0.1|full|-").has_value());
}

TEST(Grid, HashIsStable) {
  // Pinned so a changed hash (and with it every derived seed) is noticed.
  ScenarioId id{LoggerPolicy::popularity, 0.5, Strategy::random, 20};
  EXPECT_EQ(id.key(), "popularity|0.5000|random|20");
  EXPECT_EQ(id.hash(), hash_string("popularity|0.5000|random|20"));
}

TEST(Config, JsonRoundTrip) {
  auto c = tiny();
  auto back = run_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
}

TEST(Config, RejectsUnknownKeysAndEmptyAxes) {
  auto j = to_json(tiny());
  j["colour"] = "blue";
  EXPECT_THROW(run_config_from_json(j), std::exception);
  auto c = tiny();
  c.sparsities.clear();
  EXPECT_THROW(c.validate(), Error);
  c = tiny();
  c.models.clear();
  EXPECT_THROW(c.validate(), Error);
  c = tiny();
  c.sparsities = {0.5, 0.5};
  EXPECT_THROW(c.validate(), Error);
}

TEST(Config, DefaultModelsAreSeven) {
  auto m = default_models();
  EXPECT_EQ(m.size(), 7u);
  std::set<std::string> names;
  for (const auto& s : m) names.insert(s.name);
  EXPECT_EQ(names.size(), 7u);
}

TEST(Run, WritesEveryQuestionAndScenario) {
  TempDir dir;
  auto c = tiny();
  auto s = run_into(c, dir.path(), 2);
  EXPECT_EQ(s.scenarios, 28u);
  EXPECT_EQ(s.failed, 0u);
  auto m = means(dir / "results.csv");
  // 28 scenarios x 4 questions x 2 metrics.
  EXPECT_EQ(m.size(), 28u * 4u * 2u);
  EXPECT_EQ(lines_of(dir / "scenarios.csv").size(), 29u);
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "models" / "popularity.model"));
  auto manifest = nlohmann::json::parse(io::read_file(dir / "manifest.json"));
  EXPECT_EQ(manifest.at("master_seed").get<std::uint64_t>(), 11u);
}

TEST(Run, FullAtZeroSparsityAgreesPerfectly) {
  TempDir dir;
  run_into(tiny(), dir.path(), 2);
  auto m = means(dir / "results.csv");
  for (const char* q : {"Q2", "Q3", "Q4"})
    EXPECT_DOUBLE_EQ(m.at(std::string("uniform|0.0000|full|-,") + q + ",ndcg,100"), 1.0) << q;
}

TEST(Run, LoggedReferenceEqualsGroundTruthAtZeroSparsity) {
  // With nothing dropped, the Full-on-L reference is the Full-on-G reference.
  TempDir dir;
  run_into(tiny(), dir.path(), 2);
  auto m = means(dir / "results.csv");
  for (const auto& id : enumerate_grid(tiny())) {
    if (id.sparsity != 0.0) continue;
    EXPECT_DOUBLE_EQ(m.at(id.key() + ",Q2,ndcg,100"), m.at(id.key() + ",Q4,ndcg,100")) << id.key();
  }
}

TEST(Run, WorkerCountDoesNotChangeOutput) {
  TempDir a, b;
  run_into(tiny(), a.path(), 1);
  run_into(tiny(), b.path(), 8);
  for (const char* f : {"results.csv", "scenarios.csv", "failures.csv", "manifest.json"})
    EXPECT_EQ(io::read_file(a / f), io::read_file(b / f)) << f;
}

TEST(Run, ReferenceCacheDoesNotChangeOutput) {
  TempDir a, b;
  auto c = tiny();
  run_into(c, a.path(), 3);
  c.cache_references = false;
  run_into(c, b.path(), 3);
  EXPECT_EQ(io::read_file(a / "results.csv"), io::read_file(b / "results.csv"));
}

TEST(Run, FailureIsIsolated) {
  TempDir a, b;
  auto c = tiny();
  run_into(c, a.path(), 2);
  const std::string bad = "positivity|0.5000|wtd|10";
  c.inject_failures = {bad};
  auto s = run_into(c, b.path(), 2);
  EXPECT_EQ(s.failed, 1u);
  auto good = lines_of(a / "results.csv");
  auto partial = lines_of(b / "results.csv");
  std::vector<std::string> expected;
  for (const auto& l : good)
    if (l.rfind(bad + ",", 0) != 0) expected.push_back(l);
  EXPECT_EQ(partial, expected);
  auto failures = lines_of(b / "failures.csv");
  ASSERT_EQ(failures.size(), 2u);
  EXPECT_EQ(failures[1].rfind(bad + ",", 0), 0u);
}

TEST(Run, SeedOverrideChangesResults) {
  TempDir a, b;
  auto c = tiny();
  run_into(c, a.path(), 2);
  RunOptions o;
  o.workers = 2;
  o.out_dir = b.path();
  o.seed = 12;
  run_grid(c, o);
  EXPECT_NE(io::read_file(a / "results.csv"), io::read_file(b / "results.csv"));
}

TEST(Run, ReusedModelsReproduceResults) {
  TempDir a;
  auto c = tiny();
  run_into(c, a.path(), 2);
  const auto first = io::read_file(a / "results.csv");
  RunOptions o;
  o.workers = 2;
  o.out_dir = a.path();
  o.reuse_models = true;
  run_grid(c, o);
  EXPECT_EQ(io::read_file(a / "results.csv"), first);
}

TEST(Run, SearchIterationOverrideIsRecorded) {
  TempDir dir;
  auto c = tiny();
  ModelSpec als{"als", "als", {{"iterations", 2}}, default_als_space()};
  als.search->folds = 2;
  c.models.push_back(als);
  RunOptions o;
  o.workers = 2;
  o.out_dir = dir.path();
  o.search_iterations = 1;
  run_grid(c, o);
  auto manifest = nlohmann::json::parse(io::read_file(dir / "manifest.json"));
  bool found = false;
  for (const auto& m : manifest.at("config").at("models"))
    if (m.at("name") == "als") {
      EXPECT_EQ(m.at("search").at("iterations").get<std::size_t>(), 1u);
      found = true;
    }
  EXPECT_TRUE(found);
  auto meta = nlohmann::json::parse(io::read_file(dir / "models" / "als.json"));
  EXPECT_EQ(meta.at("search").at("trials").size(), 1u);
}
