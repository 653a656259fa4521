// Command-line front end for the pipeline in ttsnap/harness.hpp.
//
//   ttsnap gen-pool   --role train|eval|all
//   ttsnap train-narf
//   ttsnap search     --algorithm bon|ttsp|ttsnap|all --rewards primary|all
//   ttsnap evaluate
//   ttsnap sweep
//   ttsnap run        (all of the above, in order)
//   ttsnap config     (print the effective configuration)
//
// Every subcommand accepts --config FILE, --out DIR, --seed N and repeated
// --set key=value. Failures print one JSON line to stderr and exit 1.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ttsnap/error.hpp"
#include "ttsnap/harness.hpp"
#include "ttsnap/kernels.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::string seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config_path, "JSON experiment config");
  app->add_option("--out", o.out_dir, "Output directory (overrides out_dir)");
  app->add_option("--seed", o.seed, "Master seed (overrides seed)");
  app->add_option("--set", o.overrides, "Override a config key: key=value (dotted keys nest)");
}

ttsnap::ExperimentConfig resolve(const CommonOptions& o) {
  std::string text = "{}";
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) ttsnap::fail(ttsnap::ErrorKind::Io, "cannot open config file '" + o.config_path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  for (const auto& kv : o.overrides) ttsnap::apply_override(text, kv);
  if (!o.out_dir.empty()) ttsnap::apply_override(text, "out_dir=\"" + o.out_dir + "\"");
  if (!o.seed.empty()) ttsnap::apply_override(text, "seed=" + o.seed);
  return ttsnap::config_from_json_text(text);
}

void log(const std::string& msg) { std::cout << msg << std::endl; }

void gen_pools(const ttsnap::ExperimentConfig& c, const std::string& role) {
  std::vector<ttsnap::PoolRole> roles;
  if (role == "train" || role == "all") roles.push_back(ttsnap::PoolRole::Train);
  if (role == "eval" || role == "all") roles.push_back(ttsnap::PoolRole::Eval);
  if (roles.empty()) ttsnap::fail(ttsnap::ErrorKind::Config, "unknown role '" + role + "'");
  for (auto r : roles) {
    const auto res = ttsnap::cmd_gen_pool(c, r);
    std::ostringstream ss;
    ss << "wrote " << res.files.size() << " " << (r == ttsnap::PoolRole::Train ? "train" : "eval")
       << " pools; pooled reward std " << res.pooled.reward_std << " (without diversity "
       << res.pooled.reward_std_without_diversity << ")";
    log(ss.str());
  }
}

void train(const ttsnap::ExperimentConfig& c) {
  const auto rep = ttsnap::cmd_train_narf(c);
  std::ostringstream ss;
  ss << "trained " << rep.checkpoint_files.size() << " verifiers; noisy-third Kendall tau:";
  for (const auto& [name, _] : rep.kendall.front().by_strategy)
    ss << " " << name << "=" << rep.noisy_third_mean(name);
  log(ss.str());
}

void search(const ttsnap::ExperimentConfig& c, const std::string& algorithm,
            const std::string& rewards) {
  std::vector<std::string> algs;
  if (algorithm == "all") algs = {"bon", "ttsp", "ttsnap"};
  else algs = {algorithm};
  for (const auto& a : algs) {
    const auto out = ttsnap::cmd_search(c, ttsnap::algorithm_from_string(a),
                                        ttsnap::reward_set_from_string(rewards));
    log("wrote " + out.file);
  }
}

void evaluate(const ttsnap::ExperimentConfig& c) {
  const auto rep = ttsnap::cmd_evaluate(c);
  for (const auto& e : rep.entries) {
    std::ostringstream ss;
    ss << e.reward_set << "/" << e.eval_reward << ":";
    for (const auto& [alg, w] : e.omega) ss << " omega[" << alg << "]=" << w;
    log(ss.str());
  }
  log("wrote " + rep.summary_file + " and " + rep.report_file);
}

void sweep(const ttsnap::ExperimentConfig& c) {
  const auto rep = ttsnap::cmd_sweep(c);
  for (const auto& [alg, entries] : rep.ranked) {
    std::ostringstream ss;
    ss << alg << ": " << entries.size() << " schedules";
    if (!entries.empty() && entries.front().feasible) ss << ", best omega " << entries.front().omega;
    log(ss.str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pruned test-time search with noise-aware verifiers on Gaussian-mixture diffusion"};
  app.require_subcommand(1);
  std::vector<CommonOptions> opts(7);

  auto* gen = app.add_subcommand("gen-pool", "Generate candidate pools");
  add_common(gen, opts[0]);
  std::string role = "all";
  gen->add_option("--role", role, "train, eval or all")->check(CLI::IsMember({"train", "eval", "all"}));

  auto* tr = app.add_subcommand("train-narf", "Train noise-aware verifiers and report Kendall tau");
  add_common(tr, opts[1]);

  auto* se = app.add_subcommand("search", "Run a search algorithm over the eval pools");
  add_common(se, opts[2]);
  std::string algorithm = "all", rewards = "primary";
  se->add_option("--algorithm", algorithm, "bon, ttsp, ttsnap or all")
      ->check(CLI::IsMember({"bon", "ttsp", "ttsnap", "all"}));
  se->add_option("--rewards", rewards, "primary or all (rank-sum)")
      ->check(CLI::IsMember({"primary", "all"}));

  auto* ev = app.add_subcommand("evaluate", "Integrate curves and compute omega");
  add_common(ev, opts[3]);

  auto* sw = app.add_subcommand("sweep", "Sweep pruning schedules");
  add_common(sw, opts[4]);

  auto* run = app.add_subcommand("run", "gen-pool, train-narf, search (both reward sets), evaluate");
  add_common(run, opts[5]);
  bool with_sweep = false;
  run->add_flag("--sweep", with_sweep, "Also run the schedule sweep");

  auto* cfg = app.add_subcommand("config", "Print the effective configuration");
  add_common(cfg, opts[6]);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto start = std::chrono::steady_clock::now();
    if (gen->parsed()) gen_pools(resolve(opts[0]), role);
    if (tr->parsed()) train(resolve(opts[1]));
    if (se->parsed()) search(resolve(opts[2]), algorithm, rewards);
    if (ev->parsed()) evaluate(resolve(opts[3]));
    if (sw->parsed()) sweep(resolve(opts[4]));
    if (run->parsed()) {
      const auto c = resolve(opts[5]);
      gen_pools(c, "all");
      train(c);
      search(c, "all", "primary");
      search(c, "all", "all");
      evaluate(c);
      if (with_sweep) sweep(c);
    }
    if (cfg->parsed()) {
      const auto c = resolve(opts[6]);
      std::cout << ttsnap::config_to_json_text(c) << "\n";
      return 0;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "done in " << secs << " s (kernels: " << ttsnap::kernels::name(ttsnap::kernels::active().backend) << ")\n";
  } catch (const ttsnap::Error& e) {
    std::cerr << nlohmann::json{{"error", ttsnap::to_string(e.kind())}, {"message", e.what()}}.dump()
              << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
