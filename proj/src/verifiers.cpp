#include "ttsnap/verifiers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "ttsnap/error.hpp"
#include "ttsnap/hash.hpp"
#include "ttsnap/kernels.hpp"
#include "ttsnap/pool.hpp"

namespace ttsnap {

using nlohmann::json;

void RewardSpec::validate(int components) const {
  require(target_mode >= 0 && target_mode < components, "reward target_mode out of range");
  require(smooth_weight >= 0.0 && rough_weight >= 0.0, "reward weights must be nonnegative");
  require(smooth_weight + rough_weight > 0.0, "reward needs a positive weight");
  require(frequency > 0.0, "reward frequency must be positive");
  require(kind != RewardKind::ModePreference || rough_weight == 0.0,
          "mode_preference rewards have no rough term");
}

double reward_clean(const RewardSpec& spec, const MixtureModel& mixture,
                    std::span<const double> x0) {
  for (double v : x0)
    if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "reward_clean: non-finite sample");
  const Point& target = mixture.means.at(spec.target_mode);
  double sq = 0.0;
  double wave = 1.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    sq += (x0[i] - target[i]) * (x0[i] - target[i]);
    wave *= std::sin(spec.frequency * x0[i]);
  }
  double r = -spec.smooth_weight * sq;
  if (spec.kind == RewardKind::HighFrequencyComposite) r += spec.rough_weight * wave;
  return r;
}

// ---------------------------------------------------------------------------
// Verifier

NoiseAwareVerifier NoiseAwareVerifier::create(int dim, const std::vector<int>& hidden,
                                              bool time_conditioned, int total_steps) {
  require(dim >= 1, "verifier input dimension must be positive");
  require(total_steps >= 2, "verifier needs at least two sampler steps");
  NoiseAwareVerifier v;
  v.layer_sizes.push_back(dim + (time_conditioned ? 1 : 0));
  v.layer_sizes.insert(v.layer_sizes.end(), hidden.begin(), hidden.end());
  v.layer_sizes.push_back(1);
  v.time_conditioned = time_conditioned;
  v.total_steps = total_steps;
  v.weights.assign(Mlp(v.layer_sizes).param_count(), 0.0);
  return v;
}

std::vector<double> NoiseAwareVerifier::features(std::span<const double> estimate,
                                                 int step) const {
  require(static_cast<int>(estimate.size()) == dim(), "estimate dimension mismatch");
  std::vector<double> f(estimate.begin(), estimate.end());
  if (auto it = normalizers.find(step); it != normalizers.end()) {
    for (std::size_t i = 0; i < f.size(); ++i)
      f[i] = (f[i] - it->second.mean[i]) / it->second.scale[i];
  }
  if (time_conditioned)
    f.push_back(static_cast<double>(step) / static_cast<double>(total_steps - 1));
  return f;
}

const std::vector<double>& NoiseAwareVerifier::params_for(int step) const {
  if (time_conditioned) return weights;
  auto it = per_step_checkpoints.find(step);
  if (it == per_step_checkpoints.end())
    fail(ErrorKind::MissingCheckpoint, "no verifier checkpoint for step " + std::to_string(step));
  return it->second;
}

double reward_on_estimate(const NoiseAwareVerifier& verifier, std::span<const double> estimate,
                          int step) {
  const auto& params = verifier.params_for(step);
  const auto f = verifier.features(estimate, step);
  return verifier.network().forward(params, f);
}

// ---------------------------------------------------------------------------
// Dataset

std::vector<const DistillRecord*> DistillDataset::slice(int step) const {
  std::vector<const DistillRecord*> out;
  for (const auto& r : records)
    if (r.step == step) out.push_back(&r);
  return out;
}

std::uint64_t DistillDataset::hash() const {
  Fnv1a h;
  h.bytes("DistillDataset/v1");
  h.u64(static_cast<std::uint64_t>(dim));
  h.u64(static_cast<std::uint64_t>(total_steps));
  for (const auto& r : records) {
    h.f64s(r.estimate);
    h.u64(static_cast<std::uint64_t>(r.step));
    h.f64(r.target);
    h.u64(static_cast<std::uint64_t>(r.trajectory_id));
    h.u64(static_cast<std::uint64_t>(r.instance_id));
  }
  return h.digest();
}

void DistillDataset::append(const DistillDataset& other) {
  if (records.empty()) {
    dim = other.dim;
    total_steps = other.total_steps;
  }
  require(dim == other.dim && total_steps == other.total_steps, "datasets differ in shape");
  records.insert(records.end(), other.records.begin(), other.records.end());
}

DistillDataset build_distill_dataset(const TrajectoryPool& pool, const RewardSpec& spec,
                                     int start_step, int instance_id, int trajectory_offset) {
  require(pool.size() > 0, "cannot build a dataset from an empty pool");
  require(start_step >= 0 && start_step < pool.steps(), "start_step out of range");
  DistillDataset ds;
  ds.dim = pool.dim();
  ds.total_steps = pool.steps();
  ds.records.reserve(static_cast<std::size_t>(pool.size()) * (start_step + 1));
  for (int i = 0; i < pool.size(); ++i) {
    const Trajectory& t = pool.trajectories[i];
    const double target = reward_clean(spec, pool.instance.mixture, t.final_sample());
    for (int s = start_step; s >= 0; --s) {
      const auto e = t.estimate(s);
      ds.records.push_back({Point(e.begin(), e.end()), s, target, trajectory_offset + i, instance_id});
    }
  }
  return ds;
}

Normalizer fit_normalizer(std::span<const Point> points) {
  require(!points.empty(), "cannot fit a normalizer to no points");
  const std::size_t d = points.front().size();
  Normalizer n{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (const auto& p : points)
    for (std::size_t i = 0; i < d; ++i) n.mean[i] += p[i];
  for (double& m : n.mean) m /= static_cast<double>(points.size());
  for (const auto& p : points)
    for (std::size_t i = 0; i < d; ++i) n.scale[i] += (p[i] - n.mean[i]) * (p[i] - n.mean[i]);
  for (double& s : n.scale) {
    s = std::sqrt(s / static_cast<double>(points.size()));
    if (!(s > 1e-12)) s = 1.0;
  }
  return n;
}

std::map<int, Normalizer> fit_normalizers(const DistillDataset& dataset) {
  std::map<int, std::vector<Point>> by_step;
  for (const auto& r : dataset.records) by_step[r.step].push_back(r.estimate);
  std::map<int, Normalizer> out;
  for (const auto& [step, pts] : by_step) out[step] = fit_normalizer(pts);
  return out;
}

// ---------------------------------------------------------------------------
// Losses

double mse_loss(const Mlp& net, std::span<const double> params, std::span<const Example> examples,
                std::span<double> grad) {
  require(!examples.empty(), "mse_loss on an empty batch");
  Mlp::Workspace ws;
  const double inv = 1.0 / static_cast<double>(examples.size());
  double loss = 0.0;
  for (const auto& ex : examples) {
    const double residual = net.forward(params, ex.input, ws) - ex.target;
    loss += residual * residual * inv;
    if (!grad.empty()) net.backward(params, ws, 2.0 * residual * inv, grad);
  }
  return loss;
}

namespace {

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

double bradley_terry_loss(const Mlp& net, std::span<const double> params,
                          std::span<const Example> examples, std::span<const PreferencePair> pairs,
                          double temperature, bool log_variant, std::span<double> grad) {
  if (pairs.empty()) fail(ErrorKind::NoValidPairs, "Bradley-Terry loss needs at least one pair");
  Mlp::Workspace ws_plus, ws_minus;
  const double inv = 1.0 / static_cast<double>(pairs.size());
  double loss = 0.0;
  for (const auto& p : pairs) {
    const double r_plus = net.forward(params, examples[p.better].input, ws_plus);
    const double r_minus = net.forward(params, examples[p.worse].input, ws_minus);
    const double z = temperature * (r_plus - r_minus);
    const double prob = logistic(z);
    double dz;  // d(loss)/dz
    if (log_variant) {
      loss += softplus(-z) * inv;
      dz = -(1.0 - prob);
    } else {
      loss += -prob * inv;
      dz = -prob * (1.0 - prob);
    }
    if (!grad.empty()) {
      net.backward(params, ws_plus, dz * temperature * inv, grad);
      net.backward(params, ws_minus, -dz * temperature * inv, grad);
    }
  }
  return loss;
}

std::vector<PreferencePair> sample_pairs(std::span<const Example> examples, Rng& rng) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < examples.size(); ++i) groups[examples[i].group].push_back(i);
  std::vector<PreferencePair> pairs;
  for (auto& [group, members] : groups) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i = 0; i + 1 < members.size(); i += 2) {
      const std::size_t a = members[i], b = members[i + 1];
      if (examples[a].target == examples[b].target) continue;
      pairs.push_back(examples[a].target > examples[b].target ? PreferencePair{a, b}
                                                              : PreferencePair{b, a});
    }
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Optimizer loops

namespace {

double decayed_lr(const TrainOptions& o, double progress) {
  return o.learning_rate * (1.0 - (1.0 - o.final_lr_fraction) * progress);
}

void check_finite_loss(double loss, const TrainLog& log) {
  if (std::isfinite(loss)) return;
  const std::string last =
      log.batch_losses.empty() ? "none" : std::to_string(log.batch_losses.back());
  fail(ErrorKind::TrainingDiverged,
       "non-finite training loss (learning rate too high?); last finite loss: " + last);
}

// Runs `samples` example visits drawn from seeded shuffled passes.
TrainLog run_mse(const Mlp& net, std::vector<double>& params, std::span<const Example> examples,
                 std::size_t samples, const TrainOptions& o) {
  TrainLog log;
  if (samples == 0) return log;
  require(!examples.empty(), "training needs a non-empty dataset");
  require(o.batch_size >= 1, "batch size must be positive");
  require(params.size() == net.param_count(), "parameter vector has the wrong length");
  const auto& k = kernels::active();
  Rng rng(o.seed);
  std::vector<double> velocity(params.size(), 0.0), grad(params.size());
  std::vector<std::size_t> order(examples.size());
  std::size_t cursor = order.size();
  const std::size_t bs = static_cast<std::size_t>(o.batch_size);
  const std::size_t batches = (samples + bs - 1) / bs;
  std::vector<Example> batch;
  std::size_t remaining = samples;
  for (std::size_t b = 0; b < batches; ++b) {
    batch.clear();
    const std::size_t take = std::min(bs, remaining);
    while (batch.size() < take) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(examples[order[cursor++]]);
    }
    remaining -= take;
    std::fill(grad.begin(), grad.end(), 0.0);
    const double loss = mse_loss(net, params, batch, grad);
    check_finite_loss(loss, log);
    log.batch_losses.push_back(loss);
    const double progress = batches > 1 ? static_cast<double>(b) / (batches - 1) : 0.0;
    k.momentum_step(params.data(), velocity.data(), grad.data(), decayed_lr(o, progress),
                    o.momentum, params.size());
  }
  return log;
}

}  // namespace

TrainLog train_mse(const Mlp& net, std::vector<double>& params, std::span<const Example> examples,
                   const TrainOptions& options) {
  require(options.epochs >= 0, "epochs must be nonnegative");
  if (options.epochs == 0) return {};
  require(!examples.empty(), "training needs a non-empty dataset");
  return run_mse(net, params, examples, examples.size() * options.epochs, options);
}

TrainLog train_bradley_terry(const Mlp& net, std::vector<double>& params,
                             std::span<const Example> examples, const TrainOptions& o) {
  TrainLog log;
  if (o.epochs == 0) return log;
  require(!examples.empty(), "training needs a non-empty dataset");
  require(o.batch_size >= 1, "batch size must be positive");
  const auto& k = kernels::active();
  const bool log_variant = o.loss == LossKind::BradleyTerryLog;
  Rng rng(o.seed);
  std::vector<double> velocity(params.size(), 0.0), grad(params.size());
  for (int epoch = 0; epoch < o.epochs; ++epoch) {
    auto pairs = sample_pairs(examples, rng);
    if (pairs.empty())
      fail(ErrorKind::NoValidPairs, "no instance has two examples with distinct targets");
    const std::size_t bs = static_cast<std::size_t>(o.batch_size);
    const std::size_t batches = (pairs.size() + bs - 1) / bs;
    const double total = static_cast<double>(o.epochs) * batches;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * bs, hi = std::min(pairs.size(), lo + bs);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double loss = bradley_terry_loss(
          net, params, examples, std::span<const PreferencePair>(pairs).subspan(lo, hi - lo),
          o.temperature, log_variant, grad);
      check_finite_loss(loss, log);
      log.batch_losses.push_back(loss);
      const double step = static_cast<double>(epoch) * batches + b;
      const double progress = total > 1 ? step / (total - 1) : 0.0;
      k.momentum_step(params.data(), velocity.data(), grad.data(), decayed_lr(o, progress),
                      o.momentum, params.size());
    }
  }
  return log;
}

std::vector<Example> step_examples(const NoiseAwareVerifier& verifier,
                                   const DistillDataset& dataset, int step) {
  std::vector<Example> out;
  for (const DistillRecord* r : dataset.slice(step))
    out.push_back({verifier.features(r->estimate, step), r->target, r->instance_id});
  return out;
}

// ---------------------------------------------------------------------------
// Strategies

namespace {

void check_coverage(const DistillDataset& dataset, int start_step) {
  require(start_step >= 0 && start_step < dataset.total_steps, "start_step out of range");
  std::vector<bool> seen(start_step + 1, false);
  for (const auto& r : dataset.records)
    if (r.step >= 0 && r.step <= start_step) seen[r.step] = true;
  for (int s = 0; s <= start_step; ++s)
    require(seen[s], "dataset has no records for step " + std::to_string(s));
}

NoiseAwareVerifier prepared(const NoiseAwareVerifier& init, const DistillDataset& dataset) {
  require(init.weights.size() == init.network().param_count(),
          "initial verifier weights have the wrong length");
  require(init.dim() == dataset.dim, "verifier and dataset differ in dimension");
  NoiseAwareVerifier v = init;
  v.per_step_checkpoints.clear();
  v.total_steps = dataset.total_steps;
  for (auto& [step, n] : fit_normalizers(dataset)) v.normalizers[step] = std::move(n);
  return v;
}

TrainLog train_step(const Mlp& net, std::vector<double>& params, std::span<const Example> examples,
                    const TrainOptions& o) {
  return o.loss == LossKind::Mse ? train_mse(net, params, examples, o)
                                 : train_bradley_terry(net, params, examples, o);
}

}  // namespace

StrategyResult train_curriculum(const NoiseAwareVerifier& init, const DistillDataset& dataset,
                                int start_step, const TrainOptions& options) {
  require(!init.time_conditioned, "curriculum training uses a per-step verifier");
  check_coverage(dataset, start_step);
  StrategyResult res{prepared(init, dataset), {}};
  const Mlp net = res.verifier.network();
  std::vector<double> params = init.weights;
  for (int s = start_step; s >= 0; --s) {
    TrainOptions o = options;
    o.seed = derive_seed(options.seed, {static_cast<std::uint64_t>(s)});
    const auto examples = step_examples(res.verifier, dataset, s);
    res.logs[s] = train_step(net, params, examples, o);
    res.verifier.per_step_checkpoints[s] = params;
  }
  return res;
}

StrategyResult train_separate(const NoiseAwareVerifier& init, const DistillDataset& dataset,
                              int start_step, const TrainOptions& options) {
  require(!init.time_conditioned, "separate training uses a per-step verifier");
  check_coverage(dataset, start_step);
  StrategyResult res{prepared(init, dataset), {}};
  const Mlp net = res.verifier.network();
  for (int s = start_step; s >= 0; --s) {
    TrainOptions o = options;
    o.seed = derive_seed(options.seed, {static_cast<std::uint64_t>(s)});
    std::vector<double> params = init.weights;
    const auto examples = step_examples(res.verifier, dataset, s);
    res.logs[s] = train_step(net, params, examples, o);
    res.verifier.per_step_checkpoints[s] = std::move(params);
  }
  return res;
}

StrategyResult train_uniform_timecond(const NoiseAwareVerifier& init, const DistillDataset& dataset,
                                      int start_step, int total_epochs,
                                      const TrainOptions& options) {
  require(init.time_conditioned, "uniform training needs a time-conditioned verifier");
  require(total_epochs >= 0, "total_epochs must be nonnegative");
  check_coverage(dataset, start_step);
  StrategyResult res{prepared(init, dataset), {}};
  const Mlp net = res.verifier.network();
  std::vector<Example> examples;
  std::size_t per_step = 0;
  for (int s = 0; s <= start_step; ++s) {
    auto ex = step_examples(res.verifier, dataset, s);
    per_step = std::max(per_step, ex.size());
    // Pairs for Bradley-Terry stay within one instance and one step.
    for (auto& e : ex) e.group = e.group * (dataset.total_steps + 1) + s;
    examples.insert(examples.end(), std::make_move_iterator(ex.begin()),
                    std::make_move_iterator(ex.end()));
  }
  std::vector<double> params = init.weights;
  TrainOptions o = options;
  o.seed = derive_seed(options.seed, {0x756e69ULL});
  if (o.loss == LossKind::Mse) {
    res.logs[-1] = run_mse(net, params, examples, per_step * total_epochs, o);
  } else {
    // Pair-based epochs pass over all steps at once; scale to the same budget.
    o.epochs = total_epochs / (start_step + 1);
    res.logs[-1] = train_bradley_terry(net, params, examples, o);
  }
  res.verifier.weights = std::move(params);
  return res;
}

TrainLog pretrain_clean(NoiseAwareVerifier& verifier, std::span<const Point> samples,
                        std::span<const double> rewards, const TrainOptions& options) {
  require(samples.size() == rewards.size() && !samples.empty(),
          "pretraining needs one reward per sample");
  verifier.normalizers[verifier.total_steps] = fit_normalizer(samples);
  std::vector<Example> examples;
  for (std::size_t i = 0; i < samples.size(); ++i)
    examples.push_back({verifier.features(samples[i], verifier.total_steps), rewards[i], 0});
  TrainOptions o = options;
  o.loss = LossKind::Mse;
  return train_mse(verifier.network(), verifier.weights, examples, o);
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_verifier(const NoiseAwareVerifier& v, const CheckpointMeta& meta,
                   const std::string& path) {
  json j;
  j["format"] = "ttsnap-verifier";
  j["version"] = 1;
  j["layer_sizes"] = v.layer_sizes;
  j["time_conditioned"] = v.time_conditioned;
  j["total_steps"] = v.total_steps;
  j["weights"] = v.weights;
  json cps = json::object();
  for (const auto& [step, p] : v.per_step_checkpoints) cps[std::to_string(step)] = p;
  j["checkpoints"] = cps;
  json norms = json::object();
  for (const auto& [step, n] : v.normalizers)
    norms[std::to_string(step)] = {{"mean", n.mean}, {"scale", n.scale}};
  j["normalizers"] = norms;
  j["metadata"] = {{"strategy", meta.strategy},         {"loss", meta.loss},
                   {"seed", meta.seed},                 {"learning_rate", meta.learning_rate},
                   {"epochs", meta.epochs},             {"dataset_hash", meta.dataset_hash},
                   {"config_hash", meta.config_hash}, {"master_seed", meta.master_seed}};
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp);
    out << j.dump(1) << '\n';
    if (!out) fail(ErrorKind::Io, "write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail(ErrorKind::Io, "cannot rename " + tmp);
}

NoiseAwareVerifier load_verifier(const std::string& path, CheckpointMeta* meta) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open checkpoint " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::TruncatedFile, "malformed checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", "") != "ttsnap-verifier")
    fail(ErrorKind::BadMagic, path + " is not a verifier checkpoint");
  if (j.value("version", 0) != 1)
    fail(ErrorKind::VersionMismatch, "unsupported checkpoint version in " + path);
  NoiseAwareVerifier v;
  v.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  v.time_conditioned = j.at("time_conditioned").get<bool>();
  v.total_steps = j.at("total_steps").get<int>();
  v.weights = j.at("weights").get<std::vector<double>>();
  for (const auto& [key, p] : j.at("checkpoints").items())
    v.per_step_checkpoints[std::stoi(key)] = p.get<std::vector<double>>();
  for (const auto& [key, n] : j.at("normalizers").items())
    v.normalizers[std::stoi(key)] = {n.at("mean").get<std::vector<double>>(),
                                     n.at("scale").get<std::vector<double>>()};
  if (meta) {
    const auto& m = j.at("metadata");
    meta->strategy = m.at("strategy").get<std::string>();
    meta->loss = m.at("loss").get<std::string>();
    meta->seed = m.at("seed").get<std::uint64_t>();
    meta->learning_rate = m.at("learning_rate").get<double>();
    meta->epochs = m.at("epochs").get<int>();
    meta->dataset_hash = m.at("dataset_hash").get<std::uint64_t>();
    meta->config_hash = m.at("config_hash").get<std::uint64_t>();
    meta->master_seed = m.value("master_seed", std::uint64_t{0});
  }
  return v;
}

}  // namespace ttsnap
