#include "ttsnap/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "serialization.hpp"
#include "ttsnap/error.hpp"
#include "ttsnap/hash.hpp"
#include "ttsnap/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ttsnap {

// ---------------------------------------------------------------------------
// Configuration

namespace {

RewardSpec make_reward(std::string name, RewardKind kind, int mode, double smooth, double rough,
                       double freq) {
  RewardSpec r;
  r.name = std::move(name);
  r.kind = kind;
  r.target_mode = mode;
  r.smooth_weight = smooth;
  r.rough_weight = rough;
  r.frequency = freq;
  return r;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) fail(ErrorKind::Config, std::string(where) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) fail(ErrorKind::Config, "unknown key '" + key + "' in " + where);
  }
}

json schedule_json(const PruneSchedule& s) {
  return {{"timesteps", s.timesteps}, {"retentions", s.retentions}};
}

PruneSchedule schedule_from(const json& j) {
  check_keys(j, {"timesteps", "retentions"}, "prune schedule");
  return {j.value("timesteps", std::vector<int>{}), j.value("retentions", std::vector<double>{})};
}

json to_json(const ExperimentConfig& c) {
  json rewards = json::array();
  for (const auto& r : c.rewards) rewards.push_back(ttsnap::to_json(r));
  json sweep = json::array();
  for (const auto& g : c.sweep) sweep.push_back({{"timesteps", g.timesteps}, {"retentions", g.retentions}});
  const auto& f = c.family;
  const auto& n = c.narf;
  return {
      {"seed", c.seed},
      {"out_dir", c.out_dir},
      {"repeats", c.repeats},
      {"family",
       {{"dim", f.dim},
        {"components", f.components},
        {"ring_radius", f.ring_radius},
        {"rotation_jitter", f.rotation_jitter},
        {"mean_jitter", f.mean_jitter},
        {"comp_std", f.comp_std},
        {"comp_std_jitter", f.comp_std_jitter},
        {"weight_concentration", f.weight_concentration}}},
      {"train_instances", c.train_instances},
      {"eval_instances", c.eval_instances},
      {"rewards", rewards},
      {"schedule",
       {{"steps", c.schedule.steps},
        {"sigma_max", c.schedule.sigma_max},
        {"sigma_min", c.schedule.sigma_min},
        {"churn", c.schedule.churn}}},
      {"diversity", ttsnap::to_json(c.diversity)},
      {"train_samples_per_instance", c.train_samples_per_instance},
      {"eval_pool_size", c.eval_pool_size},
      {"narf",
       {{"hidden", n.hidden},
        {"learning_rate", n.learning_rate},
        {"batch_size", n.batch_size},
        {"momentum", n.momentum},
        {"start_step", n.start_step},
        {"strategies", n.strategies},
        {"loss", n.loss},
        {"temperature", n.temperature},
        {"pretrain_samples_per_instance", n.pretrain_samples_per_instance},
        {"pretrain_epochs", n.pretrain_epochs},
        {"pretrain_learning_rate", n.pretrain_learning_rate},
        {"scale_factors", n.scale_factors},
        {"data_scaling", n.data_scaling}}},
      {"ttsnap_schedule", schedule_json(c.ttsnap_schedule)},
      {"ttsp_schedule", schedule_json(c.ttsp_schedule)},
      {"cost",
       {{"denoise", c.cost.denoise},
        {"verify", c.cost.verify},
        {"count_final_verification", c.cost.count_final_verification}}},
      {"sweep", sweep},
      {"budget", {{"min", c.budget_min}, {"max", c.budget_max}, {"step", c.budget_step}}},
  };
}

ExperimentConfig from_json(const json& j) {
  check_keys(j,
             {"seed", "out_dir", "repeats", "family", "train_instances", "eval_instances",
              "rewards", "schedule", "diversity", "train_samples_per_instance", "eval_pool_size",
              "narf", "ttsnap_schedule", "ttsp_schedule", "cost", "sweep", "budget"},
             "config");
  ExperimentConfig c = ExperimentConfig::defaults();
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.repeats = j.value("repeats", c.repeats);
  if (j.contains("family")) {
    const auto& f = j["family"];
    check_keys(f,
               {"dim", "components", "ring_radius", "rotation_jitter", "mean_jitter", "comp_std",
                "comp_std_jitter", "weight_concentration"},
               "family");
    auto& d = c.family;
    d.dim = f.value("dim", d.dim);
    d.components = f.value("components", d.components);
    d.ring_radius = f.value("ring_radius", d.ring_radius);
    d.rotation_jitter = f.value("rotation_jitter", d.rotation_jitter);
    d.mean_jitter = f.value("mean_jitter", d.mean_jitter);
    d.comp_std = f.value("comp_std", d.comp_std);
    d.comp_std_jitter = f.value("comp_std_jitter", d.comp_std_jitter);
    d.weight_concentration = f.value("weight_concentration", d.weight_concentration);
  }
  c.train_instances = j.value("train_instances", c.train_instances);
  c.eval_instances = j.value("eval_instances", c.eval_instances);
  if (j.contains("rewards")) {
    c.rewards.clear();
    for (const auto& r : j["rewards"]) {
      check_keys(r, {"name", "kind", "target_mode", "smooth_weight", "rough_weight", "frequency"},
                 "reward");
      c.rewards.push_back(reward_from_json(r));
    }
  }
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    check_keys(s, {"steps", "sigma_max", "sigma_min", "churn"}, "schedule");
    c.schedule.steps = s.value("steps", c.schedule.steps);
    c.schedule.sigma_max = s.value("sigma_max", c.schedule.sigma_max);
    c.schedule.sigma_min = s.value("sigma_min", c.schedule.sigma_min);
    c.schedule.churn = s.value("churn", c.schedule.churn);
  }
  if (j.contains("diversity")) {
    check_keys(j["diversity"], {"enabled", "alpha", "threshold"}, "diversity");
    c.diversity = diversity_from_json(j["diversity"]);
  }
  c.train_samples_per_instance = j.value("train_samples_per_instance", c.train_samples_per_instance);
  c.eval_pool_size = j.value("eval_pool_size", c.eval_pool_size);
  if (j.contains("narf")) {
    const auto& n = j["narf"];
    check_keys(n,
               {"hidden", "learning_rate", "batch_size", "momentum", "start_step", "strategies",
                "loss", "temperature", "pretrain_samples_per_instance", "pretrain_epochs",
                "pretrain_learning_rate", "scale_factors", "data_scaling"},
               "narf");
    auto& d = c.narf;
    d.hidden = n.value("hidden", d.hidden);
    d.learning_rate = n.value("learning_rate", d.learning_rate);
    d.batch_size = n.value("batch_size", d.batch_size);
    d.momentum = n.value("momentum", d.momentum);
    d.start_step = n.value("start_step", d.start_step);
    d.strategies = n.value("strategies", d.strategies);
    d.loss = n.value("loss", d.loss);
    d.temperature = n.value("temperature", d.temperature);
    d.pretrain_samples_per_instance =
        n.value("pretrain_samples_per_instance", d.pretrain_samples_per_instance);
    d.pretrain_epochs = n.value("pretrain_epochs", d.pretrain_epochs);
    d.pretrain_learning_rate = n.value("pretrain_learning_rate", d.pretrain_learning_rate);
    d.scale_factors = n.value("scale_factors", d.scale_factors);
    d.data_scaling = n.value("data_scaling", d.data_scaling);
  }
  if (j.contains("ttsnap_schedule")) c.ttsnap_schedule = schedule_from(j["ttsnap_schedule"]);
  if (j.contains("ttsp_schedule")) c.ttsp_schedule = schedule_from(j["ttsp_schedule"]);
  if (j.contains("cost")) {
    const auto& k = j["cost"];
    check_keys(k, {"denoise", "verify", "count_final_verification"}, "cost");
    c.cost.denoise = k.value("denoise", c.cost.denoise);
    c.cost.verify = k.value("verify", c.cost.verify);
    c.cost.count_final_verification =
        k.value("count_final_verification", c.cost.count_final_verification);
  }
  if (j.contains("sweep")) {
    c.sweep.clear();
    for (const auto& g : j["sweep"]) {
      check_keys(g, {"timesteps", "retentions"}, "sweep group");
      c.sweep.push_back({g.at("timesteps").get<std::vector<std::vector<int>>>(),
                         g.at("retentions").get<std::vector<std::vector<double>>>()});
    }
  }
  if (j.contains("budget")) {
    const auto& b = j["budget"];
    check_keys(b, {"min", "max", "step"}, "budget");
    c.budget_min = b.value("min", c.budget_min);
    c.budget_max = b.value("max", c.budget_max);
    c.budget_step = b.value("step", c.budget_step);
  }
  return c;
}

LossKind loss_from_string(const std::string& s) {
  if (s == "mse") return LossKind::Mse;
  if (s == "bt") return LossKind::BradleyTerry;
  if (s == "bt_log") return LossKind::BradleyTerryLog;
  fail(ErrorKind::Config, "unknown loss '" + s + "' (expected mse, bt or bt_log)");
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.rewards = {
      make_reward("primary", RewardKind::HighFrequencyComposite, 0, 1.0, 12.0, 4.0),
      make_reward("mode_b", RewardKind::ModePreference, 2, 1.0, 0.0, 1.0),
      make_reward("texture", RewardKind::HighFrequencyComposite, 5, 0.5, 8.0, 2.0),
  };
  c.sweep = {
      {{{2}, {4}, {6}, {8}, {10}}, {{0.1}, {0.2}, {0.3}, {0.5}}},
      {{{2, 6}, {4, 8}, {3, 10}}, {{0.5, 0.5}, {0.3, 0.5}, {0.5, 0.3}}},
  };
  return c;
}

std::vector<double> ExperimentConfig::budget_grid() const {
  return uniform_budget_grid(budget_min, budget_max, budget_step);
}

int ExperimentConfig::train_pool_size() const {
  const int factor = *std::max_element(narf.scale_factors.begin(), narf.scale_factors.end());
  return train_samples_per_instance * factor;
}

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::Config, msg);
  };
  check(repeats >= 1, "repeats must be >= 1");
  check(family.dim >= 1 && family.components >= 1, "family needs dim >= 1 and components >= 1");
  check(family.comp_std > 0 && family.comp_std_jitter >= 0 && family.comp_std_jitter < 1,
        "family comp_std must be positive with jitter in [0, 1)");
  check(family.weight_concentration > 0, "weight_concentration must be positive");
  check(train_instances >= 1 && eval_instances >= 1, "need at least one train and eval instance");
  check(!rewards.empty(), "at least one reward is required");
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    rewards[i].validate(family.components);
    for (std::size_t k = 0; k < i; ++k)
      check(rewards[k].name != rewards[i].name, "duplicate reward name '" + rewards[i].name + "'");
  }
  schedule.build().validate();
  diversity.validate();
  check(train_samples_per_instance >= 2, "train_samples_per_instance must be >= 2");
  check(eval_pool_size >= 1, "eval_pool_size must be >= 1");
  check(!narf.scale_factors.empty(), "narf.scale_factors must not be empty");
  for (int f : narf.scale_factors) check(f >= 1, "scale factors must be >= 1");
  check(narf.start_step >= 0 && narf.start_step < schedule.steps,
        "narf.start_step must lie in [0, steps)");
  check(narf.learning_rate > 0 && narf.pretrain_learning_rate > 0, "learning rates must be positive");
  check(narf.batch_size >= 1, "narf.batch_size must be >= 1");
  check(narf.pretrain_samples_per_instance >= 2, "narf.pretrain_samples_per_instance must be >= 2");
  for (const auto& s : narf.strategies)
    check(s == "curriculum" || s == "separate" || s == "uniform",
          "unknown strategy '" + s + "' (expected curriculum, separate or uniform)");
  check(std::find(narf.strategies.begin(), narf.strategies.end(), "curriculum") !=
            narf.strategies.end(),
        "narf.strategies must include curriculum (search uses it)");
  (void)loss_from_string(narf.loss);
  ttsnap_schedule.validate(schedule.steps);
  ttsp_schedule.validate(schedule.steps);
  if (!ttsnap_schedule.empty())
    check(ttsnap_schedule.timesteps.back() - 1 <= narf.start_step,
          "ttsnap_schedule verifies at a step with no trained checkpoint (last timestep must be <= "
          "start_step + 1)");
  cost.validate();
  for (const auto& s : expand_sweep(sweep)) s.validate(schedule.steps);
  BudgetCurve{budget_grid(), std::vector<double>(budget_grid().size())}.validate();
}

ExperimentConfig config_from_json_text(const std::string& text) {
  ExperimentConfig c;
  try {
    c = from_json(json::parse(text));
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json_text(const ExperimentConfig& config) {
  return to_json(config).dump(2);
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  json j = to_json(config);
  j.erase("out_dir");
  Fnv1a h;
  h.bytes(j.dump());
  return h.digest();
}

void apply_override(std::string& config_json, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    fail(ErrorKind::Config, "override '" + assignment + "' is not of the form key=value");
  json j;
  try {
    j = config_json.empty() ? json::object() : json::parse(config_json);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("malformed config: ") + e.what());
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  // Dotted keys address nested objects: narf.learning_rate=0.01.
  json* node = &j;
  std::size_t start = 0;
  for (std::size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1) {
    json& child = (*node)[key.substr(start, dot - start)];
    if (child.is_null()) child = json::object();
    node = &child;
  }
  (*node)[key.substr(start)] = value;
  config_json = j.dump();
}

// ---------------------------------------------------------------------------
// Files

namespace {

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) fail(ErrorKind::Io, "write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::string hex(std::uint64_t v) {
  std::ostringstream ss;
  ss << "0x" << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(10) << v;
  return ss.str();
}

std::string provenance_line(const ExperimentConfig& c) {
  return "# config_hash=" + hex(config_hash(c)) + " seed=" + std::to_string(c.seed) + "\n";
}

std::uint64_t name_tag(const std::string& name) {
  Fnv1a h;
  h.bytes(name);
  return h.digest();
}

std::uint64_t role_tag(PoolRole role) {
  return role == PoolRole::Train ? seed_tag::kTrainRole : seed_tag::kEvalRole;
}

std::string role_name(PoolRole role) { return role == PoolRole::Train ? "train" : "eval"; }

fs::path pool_path(const ExperimentConfig& c, PoolRole role, const std::string& id) {
  return fs::path(c.out_dir) / "pools" / role_name(role) / (id + ".pool");
}

fs::path checkpoint_path(const ExperimentConfig& c, const std::string& reward,
                         const std::string& strategy) {
  return fs::path(c.out_dir) / "narf" / reward / (strategy + ".json");
}

std::vector<TrajectoryPool> load_pools(const ExperimentConfig& c, PoolRole role) {
  const NoiseSchedule sched = c.schedule.build();
  std::vector<TrajectoryPool> pools;
  for (const auto& inst : make_instances(c, role)) {
    const fs::path p = pool_path(c, role, inst.id);
    if (!fs::exists(p))
      fail(ErrorKind::Io, "missing pool '" + p.string() + "'; run gen-pool --role " +
                              role_name(role) + " first");
    pools.push_back(load_pool(p.string(), sched));
  }
  return pools;
}

std::string schedule_label(const PruneSchedule& s) {
  if (s.empty()) return "none";
  std::string t, a;
  for (std::size_t i = 0; i < s.timesteps.size(); ++i) {
    t += (i ? ";" : "") + std::to_string(s.timesteps[i]);
    a += (i ? ";" : "") + fmt(s.retentions[i]);
  }
  return "T=" + t + " A=" + a;
}

}  // namespace

// ---------------------------------------------------------------------------
// Instances and pools

std::vector<ProblemInstance> make_instances(const ExperimentConfig& c, PoolRole role) {
  const int count = role == PoolRole::Train ? c.train_instances : c.eval_instances;
  const auto& f = c.family;
  std::vector<ProblemInstance> out;
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(c.seed, {seed_tag::kInstance, role_tag(role), static_cast<std::uint64_t>(i)}));
    std::normal_distribution<double> jitter(0.0, f.mean_jitter > 0 ? f.mean_jitter : 1.0);
    auto noise = [&] { return f.mean_jitter > 0 ? jitter(rng) : 0.0; };
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::gamma_distribution<double> gamma(f.weight_concentration, 1.0);

    ProblemInstance p;
    std::ostringstream id;
    id << role_name(role) << "-" << std::setw(3) << std::setfill('0') << i;
    p.id = id.str();
    const double rotation = f.rotation_jitter * unit(rng);
    double total = 0.0;
    for (int k = 0; k < f.components; ++k) {
      Point mean(f.dim, 0.0);
      if (f.dim == 1) {
        const double pos = f.components > 1 ? 2.0 * k / (f.components - 1) - 1.0 : 0.0;
        mean[0] = f.ring_radius * pos + noise();
      } else {
        const double angle = 2.0 * std::numbers::pi * k / f.components + rotation;
        mean[0] = f.ring_radius * std::cos(angle) + noise();
        mean[1] = f.ring_radius * std::sin(angle) + noise();
        for (int d = 2; d < f.dim; ++d) mean[d] = noise();
      }
      p.mixture.means.push_back(std::move(mean));
      p.mixture.comp_std.push_back(f.comp_std * (1.0 + f.comp_std_jitter * unit(rng)));
      p.mixture.weights.push_back(gamma(rng));
      total += p.mixture.weights.back();
    }
    for (double& w : p.mixture.weights) w /= total;
    p.reward = c.rewards.front();
    p.extra_rewards.assign(c.rewards.begin() + 1, c.rewards.end());
    p.validate();
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

double spread(const std::vector<double>& r) { return r.size() > 1 ? summarize(r).stddev : 0.0; }

}  // namespace

GenPoolResult cmd_gen_pool(const ExperimentConfig& c, PoolRole role) {
  c.validate();
  const NoiseSchedule sched = c.schedule.build();
  const int n = role == PoolRole::Train ? c.train_pool_size() : c.eval_pool_size;
  const auto instances = make_instances(c, role);
  const PoolProvenance prov{config_hash(c), c.seed};
  GenPoolResult res;
  std::vector<double> pooled, pooled_plain;
  std::ostringstream csv;
  csv << provenance_line(c) << "instance,size,reward_std,reward_std_without_diversity\n";
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const std::uint64_t base = derive_seed(c.seed, {role_tag(role), i});
    const TrajectoryPool pool = generate_pool(instances[i], sched, n, base, c.diversity);
    const fs::path p = pool_path(c, role, instances[i].id);
    fs::create_directories(p.parent_path());
    save_pool(pool, p.string(), prov);
    res.files.push_back(p.string());

    const auto rewards = final_rewards(pool, instances[i].reward);
    DiversityConfig off = c.diversity;
    off.enabled = false;
    const auto plain = c.diversity.enabled
                           ? final_rewards(generate_pool(instances[i], sched, n, base, off),
                                           instances[i].reward)
                           : rewards;
    pooled.insert(pooled.end(), rewards.begin(), rewards.end());
    pooled_plain.insert(pooled_plain.end(), plain.begin(), plain.end());
    const PoolStats st{instances[i].id, n, spread(rewards), spread(plain)};
    csv << st.instance_id << ',' << st.size << ',' << fmt(st.reward_std) << ','
        << fmt(st.reward_std_without_diversity) << '\n';
    res.stats.push_back(st);
  }
  res.pooled = {"pooled", static_cast<int>(pooled.size()), spread(pooled), spread(pooled_plain)};
  csv << "pooled," << res.pooled.size << ',' << fmt(res.pooled.reward_std) << ','
      << fmt(res.pooled.reward_std_without_diversity) << '\n';
  write_atomic(fs::path(c.out_dir) / "pools" / role_name(role) / "stats.csv", csv.str());
  return res;
}

// ---------------------------------------------------------------------------
// NARF training

int noisy_third_count(int start_step) { return std::max(1, (start_step + 1) / 3); }

double NarfReport::noisy_third_mean(const std::string& strategy) const {
  require(!kendall.empty(), "no Kendall rows");
  const int count = noisy_third_count(kendall.back().step);
  double sum = 0.0;
  for (int s = 0; s < count; ++s) sum += kendall.at(s).by_strategy.at(strategy);
  return sum / count;
}

std::vector<double> kendall_by_step(const std::vector<TrajectoryPool>& pools,
                                    const NoiseAwareVerifier* verifier, const RewardSpec& spec,
                                    int last_step) {
  require(!pools.empty(), "no pools to evaluate");
  std::vector<double> out(last_step + 1, 0.0);
  for (const auto& pool : pools) {
    require(last_step < pool.steps(), "last_step beyond the pool's steps");
    const auto finals = final_rewards(pool, spec);
    std::vector<double> scores(pool.size());
    for (int s = 0; s <= last_step; ++s) {
      for (int i = 0; i < pool.size(); ++i) {
        const auto est = pool.trajectories[i].estimate(s);
        scores[i] = verifier ? reward_on_estimate(*verifier, est, s)
                             : reward_clean(spec, pool.instance.mixture, est);
      }
      out[s] += kendall_tau(scores, finals);
    }
  }
  for (double& v : out) v /= static_cast<double>(pools.size());
  return out;
}

namespace {

TrajectoryPool prefix(const TrajectoryPool& pool, int n) {
  TrajectoryPool p = pool;
  p.trajectories.resize(std::min<std::size_t>(n, p.trajectories.size()));
  return p;
}

DistillDataset distill(const std::vector<TrajectoryPool>& pools, const RewardSpec& spec,
                       int start_step, int per_pool) {
  DistillDataset ds;
  int offset = 0;
  for (std::size_t i = 0; i < pools.size(); ++i) {
    const TrajectoryPool p = prefix(pools[i], per_pool);
    auto part = build_distill_dataset(p, spec, start_step, static_cast<int>(i), offset);
    offset += p.size();
    if (i == 0) ds = std::move(part);
    else ds.append(part);
  }
  return ds;
}

NoiseAwareVerifier pretrained(const ExperimentConfig& c, const std::vector<ProblemInstance>& insts,
                              const RewardSpec& spec, bool time_conditioned, std::uint64_t seed) {
  NoiseAwareVerifier v =
      NoiseAwareVerifier::create(c.family.dim, c.narf.hidden, time_conditioned, c.schedule.steps);
  v.weights = v.network().init_params(derive_seed(seed, {0x696e6974ULL}));
  Rng rng(derive_seed(seed, {0x64617461ULL}));
  std::vector<Point> xs;
  std::vector<double> ys;
  for (const auto& inst : insts) {
    for (int i = 0; i < c.narf.pretrain_samples_per_instance; ++i) {
      xs.push_back(sample_data(inst.mixture, rng));
      ys.push_back(reward_clean(spec, inst.mixture, xs.back()));
    }
  }
  TrainOptions o;
  o.learning_rate = c.narf.pretrain_learning_rate;
  o.momentum = c.narf.momentum;
  o.batch_size = c.narf.batch_size;
  o.epochs = c.narf.pretrain_epochs;
  o.seed = derive_seed(seed, {0x66697421ULL});
  pretrain_clean(v, xs, ys, o);
  return v;
}

TrainOptions train_options(const ExperimentConfig& c, std::uint64_t seed) {
  TrainOptions o;
  o.learning_rate = c.narf.learning_rate;
  o.momentum = c.narf.momentum;
  o.batch_size = c.narf.batch_size;
  o.epochs = 1;
  o.seed = seed;
  o.loss = loss_from_string(c.narf.loss);
  o.temperature = c.narf.temperature;
  return o;
}

double mean_of(const std::vector<double>& v, int count) {
  double s = 0.0;
  for (int i = 0; i < count; ++i) s += v[i];
  return s / count;
}

}  // namespace

NarfReport cmd_train_narf(const ExperimentConfig& c) {
  c.validate();
  const auto train_pools = load_pools(c, PoolRole::Train);
  const auto eval_pools = load_pools(c, PoolRole::Eval);
  const auto train_insts = make_instances(c, PoolRole::Train);
  const int start = c.narf.start_step;
  const int full = c.train_pool_size();
  const std::uint64_t chash = config_hash(c);
  NarfReport report;

  std::map<std::string, std::vector<double>> kendall;
  kendall["baseline"] = kendall_by_step(eval_pools, nullptr, c.rewards.front(), start);

  for (std::size_t r = 0; r < c.rewards.size(); ++r) {
    const RewardSpec& spec = c.rewards[r];
    const bool primary = r == 0;
    const DistillDataset ds = distill(train_pools, spec, start, full);
    const std::uint64_t rseed = derive_seed(c.seed, {seed_tag::kTraining, r});
    const NoiseAwareVerifier init = pretrained(c, train_insts, spec, false, rseed);

    for (const auto& strategy : c.narf.strategies) {
      if (!primary && strategy != "curriculum") continue;
      const std::uint64_t sseed = derive_seed(rseed, {name_tag(strategy)});
      const TrainOptions o = train_options(c, sseed);
      StrategyResult res;
      int epochs = 1;
      if (strategy == "curriculum") {
        res = train_curriculum(init, ds, start, o);
      } else if (strategy == "separate") {
        res = train_separate(init, ds, start, o);
      } else {
        epochs = start + 1;
        res = train_uniform_timecond(pretrained(c, train_insts, spec, true, rseed), ds, start,
                                     epochs, o);
      }
      const fs::path p = checkpoint_path(c, spec.name, strategy);
      fs::create_directories(p.parent_path());
      save_verifier(res.verifier,
                    {strategy, c.narf.loss, sseed, c.narf.learning_rate, epochs, ds.hash(), chash, c.seed},
                    p.string());
      report.checkpoint_files.push_back(p.string());
      if (primary) {
        kendall[strategy] = kendall_by_step(eval_pools, &res.verifier, spec, start);
        report.logs[strategy] = std::move(res.logs);
      }
    }

    if (primary && c.narf.data_scaling) {
      const std::uint64_t sseed = derive_seed(rseed, {name_tag("curriculum")});
      for (int f : c.narf.scale_factors) {
        const int per_pool = c.train_samples_per_instance * f;
        const DistillDataset sub = distill(train_pools, spec, start, per_pool);
        const auto res = train_curriculum(init, sub, start, train_options(c, sseed));
        const auto tau = kendall_by_step(eval_pools, &res.verifier, spec, start);
        report.data_scaling.push_back({f, per_pool * static_cast<int>(train_pools.size()),
                                       mean_of(tau, start + 1),
                                       mean_of(tau, noisy_third_count(start))});
      }
    }
  }

  std::ostringstream csv;
  csv << provenance_line(c) << "step";
  for (const auto& [name, _] : kendall) csv << ',' << name;
  csv << '\n';
  for (int s = 0; s <= start; ++s) {
    KendallRow row{s, {}};
    csv << s;
    for (const auto& [name, taus] : kendall) {
      row.by_strategy[name] = taus[s];
      csv << ',' << fmt(taus[s]);
    }
    csv << '\n';
    report.kendall.push_back(std::move(row));
  }
  write_atomic(fs::path(c.out_dir) / "narf" / "kendall.csv", csv.str());

  if (!report.data_scaling.empty()) {
    std::ostringstream ds;
    ds << provenance_line(c) << "factor,trajectories,mean_kendall,noisy_third_kendall\n";
    for (const auto& row : report.data_scaling)
      ds << row.factor << ',' << row.trajectories << ',' << fmt(row.mean_kendall) << ','
         << fmt(row.noisy_third_kendall) << '\n';
    write_atomic(fs::path(c.out_dir) / "narf" / "data_scaling.csv", ds.str());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Search

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::BestOfN: return "bon";
    case Algorithm::PruneWithoutNarf: return "ttsp";
    case Algorithm::Ttsnap: return "ttsnap";
  }
  return "?";
}

std::string to_string(RewardSet r) { return r == RewardSet::Primary ? "primary" : "all"; }

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "bon") return Algorithm::BestOfN;
  if (s == "ttsp") return Algorithm::PruneWithoutNarf;
  if (s == "ttsnap") return Algorithm::Ttsnap;
  fail(ErrorKind::Config, "unknown algorithm '" + s + "' (expected bon, ttsp or ttsnap)");
}

RewardSet reward_set_from_string(const std::string& s) {
  if (s == "primary") return RewardSet::Primary;
  if (s == "all") return RewardSet::All;
  fail(ErrorKind::Config, "unknown reward set '" + s + "' (expected primary or all)");
}

PruneSchedule schedule_for(const ExperimentConfig& c, Algorithm a) {
  switch (a) {
    case Algorithm::BestOfN: return {};
    case Algorithm::PruneWithoutNarf: return c.ttsp_schedule;
    case Algorithm::Ttsnap: return c.ttsnap_schedule;
  }
  return {};
}

std::vector<SearchInstance> search_instances(const ExperimentConfig& c, Algorithm a,
                                             RewardSet rs) {
  c.validate();
  const auto pools = load_pools(c, PoolRole::Eval);
  const std::size_t nrewards = rs == RewardSet::Primary ? 1 : c.rewards.size();
  std::vector<NoiseAwareVerifier> verifiers;
  if (a == Algorithm::Ttsnap) {
    for (std::size_t r = 0; r < nrewards; ++r) {
      const fs::path p = checkpoint_path(c, c.rewards[r].name, "curriculum");
      if (!fs::exists(p))
        fail(ErrorKind::MissingCheckpoint,
             "no verifier checkpoint at '" + p.string() + "'; run train-narf first");
      verifiers.push_back(load_verifier(p.string()));
    }
  }
  std::vector<SearchInstance> out;
  for (const auto& pool : pools) {
    std::vector<RewardTable> tables;
    SearchInstance si;
    for (std::size_t r = 0; r < nrewards; ++r) {
      const RewardSpec& spec = c.rewards[r];
      tables.push_back(a == Algorithm::Ttsnap
                           ? reward_table(pool, verifiers[r], c.narf.start_step + 1, spec)
                           : reward_table(pool, spec));
      si.eval_rewards.push_back(final_rewards(pool, spec));
    }
    si.table = nrewards == 1 ? std::move(tables.front()) : rank_sum_combine(tables);
    out.push_back(std::move(si));
  }
  return out;
}

SearchOutput cmd_search(const ExperimentConfig& c, Algorithm a, RewardSet rs) {
  const auto instances = search_instances(c, a, rs);
  const PruneSchedule sched = schedule_for(c, a);
  const std::uint64_t seed = derive_seed(c.seed, {seed_tag::kSearch});
  SearchOutput out;
  out.curves = budget_curves(instances, sched, c.budget_grid(), c.repeats, seed, c.search_context());
  const std::size_t nrewards = rs == RewardSet::Primary ? 1 : c.rewards.size();
  for (std::size_t r = 0; r < nrewards; ++r) out.eval_reward_names.push_back(c.rewards[r].name);

  std::ostringstream csv;
  csv << "# config_hash=" << hex(config_hash(c)) << " seed=" << c.seed
      << " algorithm=" << to_string(a) << " rewards=" << to_string(rs)
      << " schedule=" << schedule_label(sched) << " repeats=" << c.repeats << '\n';
  csv << "budget,candidates";
  for (const auto& n : out.eval_reward_names) csv << ",mean_reward:" << n << ",gain:" << n;
  csv << '\n';
  for (std::size_t b = 0; b < out.curves.budgets.size(); ++b) {
    csv << fmt(out.curves.budgets[b]) << ',' << out.curves.candidates[b];
    for (const auto& curve : out.curves.curves)
      csv << ',' << fmt(curve.rewards[b]) << ',' << fmt(gain(curve, curve.budgets[b]));
    csv << '\n';
  }
  const fs::path p =
      fs::path(c.out_dir) / "curves" / (to_string(a) + "_" + to_string(rs) + ".csv");
  write_atomic(p, csv.str());
  out.file = p.string();
  return out;
}

std::map<std::string, BudgetCurve> read_curves(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open curves file '" + path + "'");
  std::string line;
  std::vector<std::string> names;
  std::map<std::string, BudgetCurve> out;
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) parts.push_back(item);
    return parts;
  };
  const std::string prefix = "mean_reward:";
  std::vector<std::size_t> columns;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto parts = split(line);
    if (names.empty()) {
      if (parts.size() < 3 || parts[0] != "budget" || parts[1] != "candidates")
        fail(ErrorKind::Io, "'" + path + "' is not a curves file");
      for (std::size_t i = 2; i < parts.size(); ++i)
        if (parts[i].rfind(prefix, 0) == 0) {
          names.push_back(parts[i].substr(prefix.size()));
          columns.push_back(i);
        }
      if (names.empty()) fail(ErrorKind::Io, "'" + path + "' has no reward columns");
      width = parts.size();
      continue;
    }
    if (parts.size() != width) fail(ErrorKind::Io, "'" + path + "' has a malformed row: " + line);
    const double budget = std::stod(parts[0]);
    for (std::size_t i = 0; i < names.size(); ++i) {
      auto& curve = out[names[i]];
      curve.budgets.push_back(budget);
      curve.rewards.push_back(std::stod(parts[columns[i]]));
    }
  }
  if (names.empty()) fail(ErrorKind::Io, "'" + path + "' has no header");
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

EvaluationReport cmd_evaluate(const ExperimentConfig& c) {
  c.validate();
  EvaluationReport rep;
  rep.config_hash = config_hash(c);
  const fs::path dir = fs::path(c.out_dir) / "curves";
  const Algorithm algs[] = {Algorithm::BestOfN, Algorithm::PruneWithoutNarf, Algorithm::Ttsnap};
  for (RewardSet rs : {RewardSet::Primary, RewardSet::All}) {
    const fs::path ref_path = dir / ("bon_" + to_string(rs) + ".csv");
    if (!fs::exists(ref_path)) continue;
    const auto reference = read_curves(ref_path.string());
    std::map<std::string, std::map<std::string, BudgetCurve>> curves;
    for (Algorithm a : algs) {
      const fs::path p = dir / (to_string(a) + "_" + to_string(rs) + ".csv");
      if (fs::exists(p)) curves[to_string(a)] = read_curves(p.string());
    }
    for (const auto& [reward, ref_curve] : reference) {
      OmegaEntry e{to_string(rs), reward, {}, {}};
      for (const auto& [alg, by_reward] : curves) {
        auto it = by_reward.find(reward);
        if (it == by_reward.end()) continue;
        e.integrated_gain[alg] = integrated_gain(it->second);
        e.omega[alg] = relative_performance(it->second, ref_curve);
      }
      rep.entries.push_back(std::move(e));
    }
  }
  if (rep.entries.empty())
    fail(ErrorKind::Io, "no best-of-N curves under '" + dir.string() + "'; run search first");

  json summary = {{"config_hash", hex(rep.config_hash)}, {"seed", c.seed}, {"entries", json::array()}};
  std::ostringstream txt;
  txt << "config_hash " << hex(rep.config_hash) << "  seed " << c.seed << "\n\n";
  txt << std::left << std::setw(9) << "rewards" << std::setw(12) << "eval" << std::setw(8)
      << "algo" << std::right << std::setw(14) << "h" << std::setw(12) << "omega" << '\n';
  for (const auto& e : rep.entries) {
    summary["entries"].push_back({{"reward_set", e.reward_set},
                                  {"eval_reward", e.eval_reward},
                                  {"integrated_gain", e.integrated_gain},
                                  {"omega", e.omega}});
    for (const auto& [alg, h] : e.integrated_gain)
      txt << std::left << std::setw(9) << e.reward_set << std::setw(12) << e.eval_reward
          << std::setw(8) << alg << std::right << std::setw(14) << std::fixed
          << std::setprecision(3) << h << std::setw(12) << std::setprecision(4)
          << e.omega.at(alg) << '\n';
  }
  const fs::path sp = fs::path(c.out_dir) / "summary.json";
  const fs::path rp = fs::path(c.out_dir) / "report.txt";
  write_atomic(sp, summary.dump(2) + "\n");
  write_atomic(rp, txt.str());
  rep.summary_file = sp.string();
  rep.report_file = rp.string();
  return rep;
}

// ---------------------------------------------------------------------------
// Sweep

std::vector<PruneSchedule> expand_sweep(const std::vector<SweepGroup>& groups) {
  std::vector<PruneSchedule> out;
  for (const auto& g : groups)
    for (const auto& t : g.timesteps)
      for (const auto& a : g.retentions) {
        if (t.size() != a.size())
          fail(ErrorKind::Config, "sweep group mixes timestep and retention lists of different lengths");
        out.push_back({t, a});
      }
  return out;
}

SweepReport cmd_sweep(const ExperimentConfig& c) {
  c.validate();
  const auto grid = expand_sweep(c.sweep);
  require(!grid.empty(), "sweep grid is empty");
  const std::uint64_t seed = derive_seed(c.seed, {seed_tag::kSearch});
  const auto budgets = c.budget_grid();
  SweepReport rep;
  for (Algorithm a : {Algorithm::PruneWithoutNarf, Algorithm::Ttsnap}) {
    const std::string name = to_string(a);
    auto entries = sweep_schedules(search_instances(c, a, RewardSet::Primary), grid, budgets,
                                   c.repeats, seed, c.search_context());

    std::ostringstream csv;
    csv << "# config_hash=" << hex(config_hash(c)) << " seed=" << c.seed << " algorithm=" << name
        << " search_seed=" << seed << '\n';
    csv << "rank,config_id,timesteps,retentions,feasible,omega,seed";
    for (double b : budgets) csv << ",N@" << fmt(b);
    for (double b : budgets) csv << ",reward@" << fmt(b);
    csv << '\n';
    std::map<std::size_t, const SweepEntry*> best;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      const auto label = schedule_label(e.schedule);
      const auto sp = label.find(' ');
      csv << i + 1 << ',' << e.config_id << ',' << label.substr(2, sp - 2) << ','
          << label.substr(sp + 3) << ',' << (e.feasible ? 1 : 0) << ','
          << (e.feasible ? fmt(e.omega) : "") << ',' << seed;
      for (long n : e.candidates) csv << ',' << n;
      for (std::size_t b = 0; b < budgets.size(); ++b)
        csv << ',' << (e.feasible ? fmt(e.mean_rewards[b]) : "");
      csv << '\n';
      auto& slot = best[e.schedule.timesteps.size()];
      if (e.feasible && !slot) slot = &e;
    }
    std::ostringstream best_csv;
    best_csv << provenance_line(c) << "stages,config_id,timesteps,retentions,omega\n";
    for (const auto& [stages, e] : best) {
      if (!e) continue;
      const auto label = schedule_label(e->schedule);
      const auto sp = label.find(' ');
      best_csv << stages << ',' << e->config_id << ',' << label.substr(2, sp - 2) << ','
               << label.substr(sp + 3) << ',' << fmt(e->omega) << '\n';
    }
    const fs::path dir = fs::path(c.out_dir) / "sweep";
    write_atomic(dir / (name + "_ranked.csv"), csv.str());
    write_atomic(dir / (name + "_best.csv"), best_csv.str());
    rep.files.push_back((dir / (name + "_ranked.csv")).string());
    rep.files.push_back((dir / (name + "_best.csv")).string());
    rep.ranked[name] = std::move(entries);
  }
  return rep;
}

}  // namespace ttsnap
