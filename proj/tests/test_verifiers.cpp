#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "ttsnap/error.hpp"
#include "ttsnap/metrics.hpp"
#include "ttsnap/pool.hpp"
#include "ttsnap/verifiers.hpp"

using namespace ttsnap;

namespace {

std::vector<Example> random_examples(std::mt19937_64& rng, int n, int dim, int groups) {
  std::normal_distribution<double> z;
  std::vector<Example> out(n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < dim; ++k) out[i].input.push_back(z(rng));
    out[i].target = z(rng);
    out[i].group = i % groups;
  }
  return out;
}

std::vector<double> random_params(const Mlp& net, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 0.7);
  std::vector<double> p(net.param_count());
  for (double& v : p) v = z(rng);
  return p;
}

ProblemInstance small_instance() {
  ProblemInstance inst;
  inst.id = "unit";
  inst.mixture = {{0.5, 0.3, 0.2}, {{-2.0, 0.0}, {2.0, 1.0}, {0.0, -2.5}}, {0.4, 0.5, 0.3}};
  inst.reward = {"r", RewardKind::HighFrequencyComposite, 0, 1.0, 2.0, 1.5};
  return inst;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ttsnap_test_" + name)).string();
}

}  // namespace

TEST_CASE("MSE gradient matches central differences") {
  std::mt19937_64 rng(1);
  const Mlp net({3, 8, 6, 1});
  const auto ex = random_examples(rng, 12, 3, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_params(net, rng);
    std::vector<double> g(p.size(), 0.0);
    mse_loss(net, p, ex, g);
    const auto fd = oracle::central_difference(
        [&](const std::vector<double>& q) { return mse_loss(net, q, ex, {}); }, p);
    CHECK(oracle::relative_error(g, fd) < 1e-4);
  }
}

TEST_CASE("Bradley-Terry gradients match central differences") {
  std::mt19937_64 rng(2);
  const Mlp net({2, 8, 1});
  const auto ex = random_examples(rng, 16, 2, 2);
  Rng pair_rng(3);
  const auto pairs = sample_pairs(ex, pair_rng);
  REQUIRE(!pairs.empty());
  for (bool log_variant : {false, true}) {
    for (int trial = 0; trial < 100; ++trial) {
      const auto p = random_params(net, rng);
      const double temperature = 0.5 + (trial % 3);
      std::vector<double> g(p.size(), 0.0);
      bradley_terry_loss(net, p, ex, pairs, temperature, log_variant, g);
      const auto fd = oracle::central_difference(
          [&](const std::vector<double>& q) {
            return bradley_terry_loss(net, q, ex, pairs, temperature, log_variant, {});
          },
          p);
      CHECK(oracle::relative_error(g, fd) < 1e-4);
    }
  }
}

TEST_CASE("Bradley-Terry loss values") {
  const Mlp net({1, 1});  // linear: w * x + b
  const std::vector<double> p{1.0, 0.0};
  const std::vector<Example> ex{{{2.0}, 1.0, 0}, {{0.5}, 0.0, 0}};
  const std::vector<PreferencePair> pairs{{0, 1}};
  const double prob = 1.0 / (1.0 + std::exp(-2.0 * 1.5));
  CHECK(bradley_terry_loss(net, p, ex, pairs, 2.0, false, {}) == doctest::Approx(-prob));
  CHECK(bradley_terry_loss(net, p, ex, pairs, 2.0, true, {}) == doctest::Approx(-std::log(prob)));
  CHECK_THROWS_AS(bradley_terry_loss(net, p, ex, {}, 1.0, true, {}), Error);
}

TEST_CASE("pairs stay within groups and skip ties") {
  std::vector<Example> ex;
  for (int i = 0; i < 20; ++i) ex.push_back({{0.0}, static_cast<double>(i % 3 == 0 ? 7 : i), i % 4});
  Rng rng(5);
  for (const auto& pr : sample_pairs(ex, rng)) {
    CHECK(ex[pr.better].group == ex[pr.worse].group);
    CHECK(ex[pr.better].target > ex[pr.worse].target);
  }
}

TEST_CASE("training fits a constant and a linear target") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z;
  const Mlp net({2, 16, 1});
  TrainOptions o;
  o.learning_rate = 0.01;
  o.epochs = 200;
  o.seed = 9;

  std::vector<Example> constant, linear;
  for (int i = 0; i < 128; ++i) {
    const double a = z(rng), b = z(rng);
    constant.push_back({{a, b}, 3.0, 0});
    linear.push_back({{a, b}, 0.8 * a - 0.3 * b + 0.1, 0});
  }
  auto p = net.init_params(1);
  train_mse(net, p, constant, o);
  CHECK(mse_loss(net, p, constant, {}) < 1e-3);

  p = net.init_params(1);
  train_mse(net, p, linear, o);
  double mean = 0, total = 0;
  for (const auto& e : linear) mean += e.target / linear.size();
  for (const auto& e : linear) total += (e.target - mean) * (e.target - mean) / linear.size();
  CHECK(1.0 - mse_loss(net, p, linear, {}) / total > 0.99);
}

TEST_CASE("training edge cases") {
  std::mt19937_64 rng(7);
  const Mlp net({2, 4, 1});
  const auto ex = random_examples(rng, 10, 2, 1);
  TrainOptions o;
  o.epochs = 0;
  auto p = net.init_params(3);
  const auto before = p;
  CHECK(train_mse(net, p, ex, o).batch_losses.empty());
  CHECK(p == before);

  o.epochs = 3;
  auto p1 = before, p2 = before;
  CHECK(train_mse(net, p1, ex, o) == train_mse(net, p2, ex, o));
  CHECK(p1 == p2);

  std::vector<Example> tied(6, Example{{1.0, 2.0}, 0.5, 0});
  o.loss = LossKind::BradleyTerry;
  try {
    train_bradley_terry(net, p1, tied, o);
    FAIL("expected NoValidPairs");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoValidPairs);
  }

  o.loss = LossKind::Mse;
  o.learning_rate = 10.0;
  o.epochs = 50;
  const Mlp linear({2, 1});
  auto q = linear.init_params(3);
  std::vector<Example> big;
  for (int i = 0; i < 32; ++i) big.push_back({{10.0 * i, -10.0 * i}, 1.0 * i, 0});
  try {
    train_mse(linear, q, big, o);
    FAIL("expected TrainingDiverged");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TrainingDiverged);
  }
}

TEST_CASE("distillation dataset targets the final clean reward") {
  const auto inst = small_instance();
  const auto sched = NoiseSchedule::geometric(10, 20.0, 0.002);
  const auto pool = generate_pool(inst, sched, 12, 100, {});
  const auto ds = build_distill_dataset(pool, inst.reward, 6, 3, 40);
  CHECK(ds.records.size() == 12 * 7);
  for (const auto& r : ds.records) {
    const auto& t = pool.trajectories[r.trajectory_id - 40];
    CHECK(r.target == reward_clean(inst.reward, inst.mixture, t.final_sample()));
    CHECK(r.instance_id == 3);
    CHECK((r.step >= 0 && r.step <= 6));
    const auto est = t.estimate(r.step);
    CHECK(std::equal(est.begin(), est.end(), r.estimate.begin()));
  }
  CHECK(ds.hash() == build_distill_dataset(pool, inst.reward, 6, 3, 40).hash());
  CHECK(ds.hash() != build_distill_dataset(pool, inst.reward, 5, 3, 40).hash());
}

TEST_CASE("curriculum, separate and uniform strategies") {
  const auto inst = small_instance();
  const auto sched = NoiseSchedule::geometric(10, 20.0, 0.002);
  const auto pool = generate_pool(inst, sched, 40, 1, {});
  const int start = 5;
  const auto ds = build_distill_dataset(pool, inst.reward, start, 0);
  TrainOptions o;
  o.learning_rate = 0.005;
  o.epochs = 2;
  o.seed = 11;

  auto init = NoiseAwareVerifier::create(2, {8}, false, 10);
  init.weights = init.network().init_params(4);
  const auto cur = train_curriculum(init, ds, start, o);
  CHECK(cur.verifier.per_step_checkpoints.size() == start + 1);
  CHECK(cur.logs.size() == start + 1);
  for (int s = 0; s <= start; ++s) CHECK(cur.verifier.per_step_checkpoints.count(s) == 1);
  CHECK_THROWS_AS(cur.verifier.params_for(start + 1), Error);
  const auto again = train_curriculum(init, ds, start, o);
  CHECK(again.verifier == cur.verifier);

  const auto sep = train_separate(init, ds, start, o);
  CHECK(sep.verifier.per_step_checkpoints.size() == start + 1);
  // Equal epoch budgets: one entry per batch, same batch count per step.
  for (int s = 0; s <= start; ++s)
    CHECK(sep.logs.at(s).batch_losses.size() == cur.logs.at(s).batch_losses.size());

  auto tinit = NoiseAwareVerifier::create(2, {8}, true, 10);
  tinit.weights = tinit.network().init_params(4);
  const auto uni = train_uniform_timecond(tinit, ds, start, o.epochs * (start + 1), o);
  // Same example visits as the curriculum: 40 per step, 2 epochs, 6 steps.
  CHECK(uni.logs.at(-1).batch_losses.size() == (40 * 2 * (start + 1) + 31) / 32);
  CHECK(uni.verifier.params_for(3) == uni.verifier.weights);
  const auto f = uni.verifier.features(pool.trajectories[0].estimate(3), 3);
  CHECK(f.size() == 3);
  CHECK(f.back() == doctest::Approx(3.0 / 9.0));

  CHECK_THROWS_AS(train_curriculum(tinit, ds, start, o), Error);
  CHECK_THROWS_AS(train_curriculum(init, ds, start + 1, o), Error);
}

TEST_CASE("checkpoint round trip") {
  const auto inst = small_instance();
  const auto sched = NoiseSchedule::geometric(10, 20.0, 0.002);
  const auto pool = generate_pool(inst, sched, 20, 1, {});
  const auto ds = build_distill_dataset(pool, inst.reward, 3, 0);
  auto init = NoiseAwareVerifier::create(2, {6}, false, 10);
  init.weights = init.network().init_params(2);
  TrainOptions o;
  o.epochs = 1;
  const auto v = train_curriculum(init, ds, 3, o).verifier;
  CheckpointMeta meta{"curriculum", "mse", 5, 0.01, 1, ds.hash(), 0xabcdefULL, 77};
  const auto path = temp_path("ckpt.json");
  save_verifier(v, meta, path);
  CheckpointMeta back;
  const auto loaded = load_verifier(path, &back);
  CHECK(loaded == v);
  CHECK(back.strategy == "curriculum");
  CHECK(back.dataset_hash == ds.hash());
  CHECK(back.config_hash == 0xabcdefULL);
  CHECK(back.master_seed == 77);
  const auto est = pool.trajectories[4].estimate(2);
  CHECK(reward_on_estimate(loaded, est, 2) == reward_on_estimate(v, est, 2));
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_verifier(path), Error);
}

TEST_CASE("reward definitions") {
  const auto inst = small_instance();
  const std::vector<double> at_mode{-2.0, 0.0};
  RewardSpec smooth{"s", RewardKind::HighFrequencyComposite, 0, 1.0, 0.0, 1.0};
  CHECK(reward_clean(smooth, inst.mixture, at_mode) == 0.0);
  const std::vector<double> off{-1.0, 1.0};
  CHECK(reward_clean(smooth, inst.mixture, off) == doctest::Approx(-2.0));
  RewardSpec rough{"r", RewardKind::HighFrequencyComposite, 0, 0.0, 2.0, 3.0};
  CHECK(reward_clean(rough, inst.mixture, off) == doctest::Approx(2.0 * std::sin(-3.0) * std::sin(3.0)));
  RewardSpec mode{"m", RewardKind::ModePreference, 1, 1.0, 5.0, 3.0};
  const std::vector<double> at_b{2.0, 1.0};
  CHECK(reward_clean(mode, inst.mixture, at_b) == 0.0);
  RewardSpec bad{"b", RewardKind::ModePreference, 9, 1.0, 0.0, 1.0};
  CHECK_THROWS_AS(bad.validate(3), Error);
}
