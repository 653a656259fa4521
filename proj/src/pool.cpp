#include "ttsnap/pool.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "serialization.hpp"
#include "ttsnap/error.hpp"

namespace ttsnap {
namespace {

constexpr char kMagic[8] = {'T', 'T', 'S', 'P', 'O', 'O', 'L', '\0'};

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Latent displacement for every candidate, computed from the state after
// step j and applied afterwards so the result does not depend on visiting order.
void repel(std::vector<Point>& latents, const std::vector<Point>& estimates,
           const std::vector<std::uint64_t>& seeds, const DiversityConfig& cfg,
           double fraction) {
  const std::size_t n = latents.size();
  if (n < 2 || fraction <= 0.0) return;
  const std::size_t d = latents.front().size();
  Point est_mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) est_mean[k] += estimates[i][k] / static_cast<double>(n);
  std::vector<Point> unit(n, Point(d, 0.0));
  std::vector<bool> valid(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) unit[i][k] = estimates[i][k] - est_mean[k];
    const double len = norm(unit[i]);
    if (len > 0.0) {
      valid[i] = true;
      for (double& v : unit[i]) v /= len;
    }
  }
  std::vector<Point> shift(n);
  for (std::size_t b = 0; b < n; ++b) {
    if (!valid[b]) continue;
    std::size_t best = n;
    double best_cos = cfg.threshold;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == b || !valid[a] || seeds[a] >= seeds[b]) continue;  // only lower seeds anchor b
      double cos = 0.0;
      for (std::size_t k = 0; k < d; ++k) cos += unit[a][k] * unit[b][k];
      if (cos > best_cos) {
        best_cos = cos;
        best = a;
      }
    }
    if (best == n) continue;
    // Extrapolate away from the best-matching anchor.
    shift[b] = Point(d);
    for (std::size_t k = 0; k < d; ++k)
      shift[b][k] = cfg.alpha * fraction * (latents[b][k] - latents[best][k]);
  }
  for (std::size_t b = 0; b < n; ++b)
    if (!shift[b].empty())
      for (std::size_t k = 0; k < d; ++k) latents[b][k] += shift[b][k];
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<RewardSpec> ProblemInstance::all_rewards() const {
  std::vector<RewardSpec> out{reward};
  out.insert(out.end(), extra_rewards.begin(), extra_rewards.end());
  return out;
}

void ProblemInstance::validate() const {
  mixture.validate();
  for (const auto& r : all_rewards()) r.validate(mixture.components());
}

void DiversityConfig::validate() const {
  require(alpha >= 0.0, "diversity alpha must be nonnegative");
  require(threshold >= -1.0 && threshold <= 1.0, "diversity threshold must lie in [-1, 1]");
}

TrajectoryPool generate_pool(const ProblemInstance& instance, const NoiseSchedule& schedule, int n,
                             std::uint64_t base_seed, const DiversityConfig& diversity) {
  require(n >= 1, "pool size must be at least 1");
  std::vector<std::uint64_t> seeds(n);
  for (int i = 0; i < n; ++i) seeds[i] = base_seed + static_cast<std::uint64_t>(i);
  return generate_pool(instance, schedule, seeds, {}, diversity);
}

TrajectoryPool generate_pool(const ProblemInstance& instance, const NoiseSchedule& schedule,
                             const std::vector<std::uint64_t>& seeds,
                             const std::vector<Point>& initial_latents,
                             const DiversityConfig& diversity) {
  instance.validate();
  schedule.validate();
  diversity.validate();
  const std::size_t n = seeds.size();
  require(n >= 1, "pool size must be at least 1");
  require(initial_latents.empty() || initial_latents.size() == n,
          "need one initial latent per seed");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = i + 1; k < n; ++k)
      require(seeds[i] != seeds[k], "trajectory seeds must be unique within a pool");

  const MixtureModel& mix = instance.mixture;
  const int d = mix.dim();
  const int m = schedule.steps;

  std::vector<Rng> rngs;
  std::vector<Point> x(n, Point(d));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    rngs.emplace_back(seeds[i]);
    for (int k = 0; k < d; ++k) x[i][k] = schedule.sigmas[0] * normal(rngs[i]);
    if (!initial_latents.empty()) {
      require(static_cast<int>(initial_latents[i].size()) == d, "initial latent dimension mismatch");
      x[i] = initial_latents[i];
    }
  }

  TrajectoryPool pool;
  pool.instance = instance;
  pool.schedule_hash = schedule.hash();
  pool.diversity = diversity;
  pool.trajectories.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Trajectory& t = pool.trajectories[i];
    t.seed = seeds[i];
    t.steps = m;
    t.dim = d;
    t.latents.resize(static_cast<std::size_t>(m + 1) * d);
    t.estimates.resize(static_cast<std::size_t>(m) * d);
    std::copy(x[i].begin(), x[i].end(), t.latents.begin());
  }

  std::vector<Point> est(n);
  for (int j = 0; j < m; ++j) {
    const double sigma_next = schedule.sigmas[j + 1];
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = denoise_step(mix, schedule, x[i], j, rngs[i]);
      est[i] = tweedie(mix, x[i], sigma_next);
    }
    if (diversity.enabled) {
      const double fraction = (schedule.sigmas[j] - sigma_next) / schedule.sigmas[0];
      const std::vector<Point> before = x;
      repel(x, est, seeds, diversity, fraction);
      for (std::size_t i = 0; i < n; ++i)
        if (x[i] != before[i]) est[i] = tweedie(mix, x[i], sigma_next);
    }
    for (std::size_t i = 0; i < n; ++i) {
      Trajectory& t = pool.trajectories[i];
      std::copy(x[i].begin(), x[i].end(),
                t.latents.begin() + static_cast<std::ptrdiff_t>(j + 1) * d);
      std::copy(est[i].begin(), est[i].end(), t.estimates.begin() + static_cast<std::ptrdiff_t>(j) * d);
    }
  }
  return pool;
}

std::size_t pool_record_bytes(int steps, int dim) {
  return 8 + 8 * (static_cast<std::size_t>(steps + 1) * dim + static_cast<std::size_t>(steps) * dim);
}

void save_pool(const TrajectoryPool& pool, const std::string& path,
               const PoolProvenance& provenance) {
  nlohmann::json header = {
      {"format", "ttsnap-pool"},
      {"M", pool.steps()},
      {"d", pool.dim()},
      {"n", pool.size()},
      {"record_bytes", pool_record_bytes(pool.steps(), pool.dim())},
      {"schedule_hash", pool.schedule_hash},
      {"instance", to_json(pool.instance)},
      {"diversity", to_json(pool.diversity)},
      {"config_hash", provenance.config_hash},
      {"master_seed", provenance.master_seed},
  };
  const std::string text = header.dump();
  std::string buf(kMagic, kMagic + 8);
  put_u32(buf, kPoolFormatVersion);
  put_u64(buf, text.size());
  buf += text;
  for (const auto& t : pool.trajectories) {
    put_u64(buf, t.seed);
    for (double v : t.latents) put_u64(buf, std::bit_cast<std::uint64_t>(v));
    for (double v : t.estimates) put_u64(buf, std::bit_cast<std::uint64_t>(v));
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(ErrorKind::Io, "write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail(ErrorKind::Io, "cannot rename " + tmp);
}

TrajectoryPool load_pool(const std::string& path, PoolProvenance* provenance) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open pool file " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    fail(ErrorKind::BadMagic, path + " is not a pool file");
  if (bytes.size() < 20) fail(ErrorKind::TruncatedFile, path + ": truncated header");
  const std::uint32_t version = get_u32(p + 8);
  if (version != kPoolFormatVersion)
    fail(ErrorKind::VersionMismatch, path + ": pool format version " + std::to_string(version) +
                                         ", expected " + std::to_string(kPoolFormatVersion));
  const std::uint64_t header_len = get_u64(p + 12);
  if (bytes.size() < 20 + header_len) fail(ErrorKind::TruncatedFile, path + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(20, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::TruncatedFile, path + ": unreadable header: " + e.what());
  }
  const int m = header.at("M").get<int>();
  const int d = header.at("d").get<int>();
  const int n = header.at("n").get<int>();
  const std::size_t record = pool_record_bytes(m, d);
  if (header.at("record_bytes").get<std::size_t>() != record)
    fail(ErrorKind::TruncatedFile, path + ": record size disagrees with header");
  const std::size_t body = 20 + header_len;
  if (bytes.size() != body + record * static_cast<std::size_t>(n))
    fail(ErrorKind::TruncatedFile, path + ": expected " + std::to_string(n) + " records of " +
                                       std::to_string(record) + " bytes");

  TrajectoryPool pool;
  pool.instance = instance_from_json(header.at("instance"));
  pool.diversity = diversity_from_json(header.at("diversity"));
  pool.schedule_hash = header.at("schedule_hash").get<std::uint64_t>();
  pool.trajectories.resize(n);
  const unsigned char* cur = p + body;
  auto next_double = [&cur] {
    const double v = std::bit_cast<double>(get_u64(cur));
    cur += 8;
    return v;
  };
  for (auto& t : pool.trajectories) {
    t.seed = get_u64(cur);
    cur += 8;
    t.steps = m;
    t.dim = d;
    t.latents.resize(static_cast<std::size_t>(m + 1) * d);
    t.estimates.resize(static_cast<std::size_t>(m) * d);
    for (double& v : t.latents) v = next_double();
    for (double& v : t.estimates) v = next_double();
  }
  if (provenance) {
    provenance->config_hash = header.value("config_hash", std::uint64_t{0});
    provenance->master_seed = header.value("master_seed", std::uint64_t{0});
  }
  return pool;
}

TrajectoryPool load_pool(const std::string& path, const NoiseSchedule& schedule,
                         PoolProvenance* provenance) {
  TrajectoryPool pool = load_pool(path, provenance);
  if (pool.schedule_hash != schedule.hash())
    fail(ErrorKind::ScheduleHashMismatch,
         path + ": pool was generated with a different noise schedule");
  return pool;
}

RewardTable reward_table(const TrajectoryPool& pool, const RewardSpec& spec) {
  require(pool.size() > 0, "reward table of an empty pool");
  RewardTable table(pool.size(), pool.steps());
  for (int i = 0; i < pool.size(); ++i) {
    const Trajectory& t = pool.trajectories[i];
    for (int j = 0; j < t.steps; ++j) table.at(i, j) = reward_clean(spec, pool.instance.mixture, t.estimate(j));
    table.at(i, t.steps) = reward_clean(spec, pool.instance.mixture, t.final_sample());
  }
  return table;
}

RewardTable reward_table(const TrajectoryPool& pool, const NoiseAwareVerifier& verifier,
                         int stage_columns, const RewardSpec& final_spec) {
  require(pool.size() > 0, "reward table of an empty pool");
  require(stage_columns >= 0 && stage_columns <= pool.steps(), "stage column count out of range");
  RewardTable table(pool.size(), stage_columns);
  for (int i = 0; i < pool.size(); ++i) {
    const Trajectory& t = pool.trajectories[i];
    for (int j = 0; j < stage_columns; ++j) table.at(i, j) = reward_on_estimate(verifier, t.estimate(j), j);
    table.at(i, stage_columns) = reward_clean(final_spec, pool.instance.mixture, t.final_sample());
  }
  return table;
}

std::vector<double> final_rewards(const TrajectoryPool& pool, const RewardSpec& spec) {
  std::vector<double> out(pool.size());
  for (int i = 0; i < pool.size(); ++i)
    out[i] = reward_clean(spec, pool.instance.mixture, pool.trajectories[i].final_sample());
  return out;
}

}  // namespace ttsnap
