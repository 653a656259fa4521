#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "ttsnap/error.hpp"
#include "ttsnap/harness.hpp"

using namespace ttsnap;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(const std::string& name) {
  auto c = ExperimentConfig::defaults();
  c.out_dir = (fs::temp_directory_path() / ("ttsnap_harness_" + name)).string();
  fs::remove_all(c.out_dir);
  c.repeats = 4;
  c.train_instances = 3;
  c.eval_instances = 3;
  c.schedule.steps = 10;
  c.schedule.sigma_max = 40.0;
  c.train_samples_per_instance = 6;
  c.eval_pool_size = 40;
  c.narf.hidden = {8};
  c.narf.start_step = 6;
  c.narf.pretrain_samples_per_instance = 20;
  c.narf.pretrain_epochs = 5;
  c.narf.scale_factors = {1, 2};
  c.ttsnap_schedule = {{4}, {0.5}};
  c.ttsp_schedule = {{4}, {0.5}};
  c.sweep = {SweepGroup{{{4}}, {{0.5}}}};
  c.budget_min = 200;
  c.budget_max = 1000;
  c.budget_step = 100;
  return c;
}

void run_all(const ExperimentConfig& c) {
  cmd_gen_pool(c, PoolRole::Train);
  cmd_gen_pool(c, PoolRole::Eval);
  cmd_train_narf(c);
  for (Algorithm a : {Algorithm::BestOfN, Algorithm::PruneWithoutNarf, Algorithm::Ttsnap})
    for (RewardSet r : {RewardSet::Primary, RewardSet::All}) cmd_search(c, a, r);
  cmd_evaluate(c);
  cmd_sweep(c);
}

std::map<std::string, std::string> snapshot(const std::string& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return out;
}

template <class F>
ErrorKind kind_of(F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("config json round trip, hashing and overrides") {
  const auto c = ExperimentConfig::defaults();
  const auto text = config_to_json_text(c);
  const auto back = config_from_json_text(text);
  CHECK(config_to_json_text(back) == text);
  CHECK(config_hash(back) == config_hash(c));

  auto moved = c;
  moved.out_dir = "elsewhere";
  CHECK(config_hash(moved) == config_hash(c));
  moved.seed += 1;
  CHECK(config_hash(moved) != config_hash(c));

  std::string j = text;
  apply_override(j, "narf.start_step=9");
  apply_override(j, "out_dir=runs/a");
  const auto o = config_from_json_text(j);
  CHECK(o.narf.start_step == 9);
  CHECK(o.out_dir == "runs/a");

  CHECK(kind_of([] { config_from_json_text(R"({"sede": 3})"); }) == ErrorKind::Config);
  CHECK(kind_of([] { config_from_json_text(R"({"narf": {"start_step": 40}})"); }) == ErrorKind::Config);
  CHECK(kind_of([] { config_from_json_text("{not json"); }) == ErrorKind::Config);
  CHECK(kind_of([] { load_config("/nonexistent/ttsnap.json"); }) == ErrorKind::Io);
}

TEST_CASE("budget grid and candidate pool sizes") {
  const auto c = ExperimentConfig::defaults();
  const auto grid = c.budget_grid();
  CHECK(grid.size() == 21);
  CHECK(c.train_pool_size() == 16 * 8);
  CHECK(noisy_third_count(15) == 5);
  CHECK(noisy_third_count(0) == 1);
  CHECK(expand_sweep(c.sweep).size() == 5 * 4 + 3 * 3);
}

TEST_CASE("instances are seeded and distinct") {
  const auto c = ExperimentConfig::defaults();
  const auto a = make_instances(c, PoolRole::Train);
  CHECK(a.size() == 20);
  CHECK(a == make_instances(c, PoolRole::Train));
  CHECK(a.front().id == "train-000");
  const auto e = make_instances(c, PoolRole::Eval);
  CHECK(e.front().mixture.means != a.front().mixture.means);
  for (const auto& inst : a) {
    CHECK(inst.mixture.components() == 8);
    double w = 0;
    for (double x : inst.mixture.weights) w += x;
    CHECK(w == doctest::Approx(1.0));
  }
}

TEST_CASE("commands fail clearly when inputs are missing") {
  const auto c = small_config("missing");
  CHECK(kind_of([&] { cmd_train_narf(c); }) == ErrorKind::Io);
  CHECK(kind_of([&] { cmd_search(c, Algorithm::BestOfN, RewardSet::Primary); }) == ErrorKind::Io);
  CHECK(kind_of([&] { cmd_evaluate(c); }) == ErrorKind::Io);
  cmd_gen_pool(c, PoolRole::Eval);
  CHECK(kind_of([&] { cmd_search(c, Algorithm::Ttsnap, RewardSet::Primary); }) ==
        ErrorKind::MissingCheckpoint);
  auto bad = c;
  bad.schedule.steps = 12;  // pools on disk were built for 10 steps
  CHECK(kind_of([&] { cmd_search(bad, Algorithm::BestOfN, RewardSet::Primary); }) ==
        ErrorKind::ScheduleHashMismatch);
  fs::remove_all(c.out_dir);
}

TEST_CASE("end-to-end pipeline on a small configuration") {
  const auto c = small_config("a");
  run_all(c);
  const auto files = snapshot(c.out_dir);

  CHECK(files.count("pools/train/stats.csv") == 1);
  CHECK(files.count("pools/eval/eval-002.pool") == 1);
  CHECK(files.count("narf/primary/curriculum.json") == 1);
  CHECK(files.count("narf/kendall.csv") == 1);
  CHECK(files.count("narf/data_scaling.csv") == 1);
  CHECK(files.count("curves/ttsnap_all.csv") == 1);
  CHECK(files.count("sweep/ttsnap_ranked.csv") == 1);
  CHECK(files.count("summary.json") == 1);
  CHECK(files.count("report.txt") == 1);

  std::size_t pools = 0;
  for (const auto& [name, _] : files)
    if (name.ends_with(".pool")) ++pools;
  CHECK(pools == 6);

  // The same configuration written elsewhere is byte-identical.
  auto c2 = c;
  c2.out_dir = small_config("b").out_dir;
  run_all(c2);
  CHECK(snapshot(c2.out_dir) == files);

  const auto summary = nlohmann::json::parse(files.at("summary.json"));
  std::ostringstream h;
  h << "0x" << std::hex << std::setw(16) << std::setfill('0') << config_hash(c);
  CHECK(summary.at("config_hash").get<std::string>() == h.str());
  CHECK(files.at("report.txt").find(h.str()) != std::string::npos);
  CHECK(files.at("curves/bon_primary.csv").find(h.str()) != std::string::npos);

  const auto rep = cmd_evaluate(c);
  REQUIRE(!rep.entries.empty());
  for (const auto& e : rep.entries) {
    CHECK(e.omega.at("bon") == 0.0);
    const auto set = e.reward_set;
    const auto ref = read_curves(c.out_dir + "/curves/bon_" + set + ".csv").at(e.eval_reward);
    for (const char* alg : {"ttsp", "ttsnap"}) {
      const auto cur = read_curves(c.out_dir + "/curves/" + alg + "_" + set + ".csv").at(e.eval_reward);
      CHECK(e.omega.at(alg) == doctest::Approx(relative_performance(cur, ref)).epsilon(1e-9));
      CHECK(e.integrated_gain.at(alg) == doctest::Approx(integrated_gain(cur)).epsilon(1e-9));
    }
  }

  // A one-entry sweep matching the search schedule reproduces its omega.
  const auto sweep = cmd_sweep(c);
  const auto& primary = rep.entries.front();
  REQUIRE(primary.reward_set == "primary");
  REQUIRE(sweep.ranked.at("ttsnap").size() == 1);
  CHECK(sweep.ranked.at("ttsnap")[0].omega ==
        doctest::Approx(primary.omega.at("ttsnap")).epsilon(1e-9));
  CHECK(sweep.ranked.at("ttsp")[0].omega == doctest::Approx(primary.omega.at("ttsp")).epsilon(1e-9));

  const auto narf = cmd_train_narf(c);
  CHECK(narf.kendall.size() == static_cast<std::size_t>(c.narf.start_step + 1));
  for (const auto& row : narf.kendall) {
    CHECK(row.by_strategy.count("baseline") == 1);
    CHECK(row.by_strategy.count("curriculum") == 1);
    CHECK(row.by_strategy.count("separate") == 1);
    CHECK(row.by_strategy.count("uniform") == 1);
  }
  CHECK(narf.data_scaling.size() == 2);

  fs::remove_all(c.out_dir);
  fs::remove_all(c2.out_dir);
}
