#include "hrt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hrt::harness {

namespace {

namespace fs = std::filesystem;

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument("config: bad boolean value '" + v + "'");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ExperimentConfig::validate() const {
  envs::scenario_from_name(scenario);
  marl::Algo a = marl::algo_from_name(algo);
  if (episode_length < 1) throw std::invalid_argument("config: episode_length must be >= 1");
  if (a == marl::Algo::hrtmaddpg && (marl.depth < 1 || marl.depth > 5))
    throw std::invalid_argument("config: depth must be in 1..5");
  if (marl.window < 1) throw std::invalid_argument("config: window must be >= 1");
  if (marl.batch < 1) throw std::invalid_argument("config: batch must be >= 1");
  if (marl.gamma < 0.0 || marl.gamma > 1.0)
    throw std::invalid_argument("config: gamma must be in [0,1]");
  if (marl.tau < 0.0 || marl.tau > 1.0)
    throw std::invalid_argument("config: tau must be in [0,1]");
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "actor_encoder=" << (c.marl.actor_encoder ? 1 : 0) << "\n";
  o << "algo=" << c.algo << "\n";
  o << "batch=" << c.marl.batch << "\n";
  o << "buffer_capacity=" << c.marl.buffer_capacity << "\n";
  o << "checkpoint_every=" << c.checkpoint_every << "\n";
  o << "coop_nav_literal=" << (c.coop_nav_literal ? 1 : 0) << "\n";
  o << "d_ff=" << c.marl.d_ff << "\n";
  o << "d_model=" << c.marl.d_model << "\n";
  o << "depth=" << c.marl.depth << "\n";
  o << "episode_length=" << c.episode_length << "\n";
  o << "eval_episodes=" << c.eval_episodes << "\n";
  o << "gamma=" << format_double(c.marl.gamma) << "\n";
  o << "gumbel_temperature=" << format_double(c.marl.gumbel_temperature) << "\n";
  o << "heads=" << c.marl.heads << "\n";
  o << "hidden=" << c.marl.hidden << "\n";
  o << "learn_every=" << c.marl.learn_every << "\n";
  o << "lr_actor=" << format_double(c.marl.lr_actor) << "\n";
  o << "lr_critic=" << format_double(c.marl.lr_critic) << "\n";
  o << "noise_sigma_end=" << format_double(c.marl.noise_sigma_end) << "\n";
  o << "noise_sigma_start=" << format_double(c.marl.noise_sigma_start) << "\n";
  o << "scenario=" << c.scenario << "\n";
  o << "seed=" << c.seed << "\n";
  o << "shared_parameters=" << (c.marl.shared_parameters ? 1 : 0) << "\n";
  o << "sinusoidal_pe=" << (c.marl.sinusoidal_pe ? 1 : 0) << "\n";
  o << "tau=" << format_double(c.marl.tau) << "\n";
  o << "train_episodes=" << c.train_episodes << "\n";
  o << "window=" << c.marl.window << "\n";
  return o.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  // out_dir and eval_episodes do not change what a checkpoint contains;
  // everything hashed here does (via network sizes or the training path).
  std::string s = serialize_config(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

void apply_config_kv(ExperimentConfig& c, const std::string& key, const std::string& value) {
  if (key == "scenario") c.scenario = value;
  else if (key == "algo") c.algo = value;
  else if (key == "depth") c.marl.depth = std::stoul(value);
  else if (key == "episode_length") c.episode_length = std::stoi(value);
  else if (key == "train_episodes") c.train_episodes = std::stoul(value);
  else if (key == "eval_episodes") c.eval_episodes = std::stoul(value);
  else if (key == "seed") c.seed = std::stoull(value);
  else if (key == "out_dir") c.out_dir = value;
  else if (key == "checkpoint_every") c.checkpoint_every = std::stoul(value);
  else if (key == "coop_nav_literal") c.coop_nav_literal = parse_bool(value);
  else if (key == "window") c.marl.window = std::stoul(value);
  else if (key == "hidden") c.marl.hidden = std::stoul(value);
  else if (key == "d_model") c.marl.d_model = std::stoul(value);
  else if (key == "heads") c.marl.heads = std::stoul(value);
  else if (key == "d_ff") c.marl.d_ff = std::stoul(value);
  else if (key == "gamma") c.marl.gamma = std::stod(value);
  else if (key == "tau") c.marl.tau = std::stod(value);
  else if (key == "lr_actor") c.marl.lr_actor = std::stod(value);
  else if (key == "lr_critic") c.marl.lr_critic = std::stod(value);
  else if (key == "batch") c.marl.batch = std::stoul(value);
  else if (key == "buffer_capacity") c.marl.buffer_capacity = std::stoul(value);
  else if (key == "learn_every") c.marl.learn_every = std::stoul(value);
  else if (key == "noise_sigma_start") c.marl.noise_sigma_start = std::stod(value);
  else if (key == "noise_sigma_end") c.marl.noise_sigma_end = std::stod(value);
  else if (key == "gumbel_temperature") c.marl.gumbel_temperature = std::stod(value);
  else if (key == "actor_encoder") c.marl.actor_encoder = parse_bool(value);
  else if (key == "sinusoidal_pe") c.marl.sinusoidal_pe = parse_bool(value);
  else if (key == "shared_parameters") c.marl.shared_parameters = parse_bool(value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not key=value");
    apply_config_kv(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

marl::Trainer make_trainer(const ExperimentConfig& cfg, Rng& init_rng) {
  cfg.validate();
  envs::Scenario sc = envs::scenario_from_name(cfg.scenario);
  envs::WorldState probe = envs::scenario_init(sc, 0, cfg.episode_length);
  std::size_t n = probe.num_agents();
  std::vector<std::size_t> obs_dims(n), comm_dims(n);
  for (std::size_t i = 0; i < n; ++i) {
    obs_dims[i] = envs::obs_dim(sc, i);
    comm_dims[i] = envs::comm_dim(sc, i);
  }
  marl::MarlConfig mc = cfg.marl;
  mc.algo = marl::algo_from_name(cfg.algo);
  return marl::Trainer(mc, obs_dims, comm_dims, init_rng);
}

std::vector<std::pair<std::string, num::Tensor*>> named_params(marl::Trainer& trainer) {
  std::vector<std::pair<std::string, num::Tensor*>> out;
  for (std::size_t i = 0; i < trainer.num_learners(); ++i) {
    marl::AgentLearner& l = trainer.agent(i);
    auto emit = [&out, i](const char* group, std::vector<num::Tensor*>& ts) {
      for (std::size_t j = 0; j < ts.size(); ++j) {
        out.emplace_back("agent" + std::to_string(i) + "/" + group + "/" + std::to_string(j),
                         ts[j]);
      }
    };
    std::vector<num::Tensor*> a, at, c, ct;
    marl::collect_params(l.actor, a);
    marl::collect_params(l.actor_target, at);
    marl::collect_params(l.critic, c);
    marl::collect_params(l.critic_target, ct);
    emit("actor", a);
    emit("actor_target", at);
    emit("critic", c);
    emit("critic_target", ct);
  }
  return out;
}

std::vector<CheckpointEntry> snapshot_params(marl::Trainer& trainer) {
  std::vector<CheckpointEntry> out;
  for (auto& [name, t] : named_params(trainer)) out.push_back({name, t->shape, t->values});
  return out;
}

void load_params(marl::Trainer& trainer, const std::vector<CheckpointEntry>& entries) {
  auto named = named_params(trainer);
  if (entries.size() != named.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  std::size_t k = 0;
  for (auto& [name, t] : named) {
    const CheckpointEntry& e = entries[k++];
    if (e.name != name) throw std::runtime_error("checkpoint: unexpected entry " + e.name);
    if (e.shape != t->shape) throw std::runtime_error("checkpoint: shape mismatch for " + e.name);
    t->values = e.values;
  }
}

namespace {

struct EpisodeRoller {
  envs::Scenario sc;
  const ExperimentConfig& cfg;
  std::vector<marl::ObservationWindow> windows;
  envs::WorldState state;
  std::vector<std::vector<double>> obs;

  EpisodeRoller(envs::Scenario s, const ExperimentConfig& c) : sc(s), cfg(c) {
    envs::WorldState probe = envs::scenario_init(s, 0, c.episode_length);
    for (std::size_t i = 0; i < probe.num_agents(); ++i)
      windows.emplace_back(c.marl.window, envs::obs_dim(s, i));
  }

  void reset(std::uint64_t episode_seed) {
    state = envs::scenario_init(sc, episode_seed, cfg.episode_length);
    state.literal_assignment = cfg.coop_nav_literal;
    obs = envs::observe_all(state);
    for (std::size_t i = 0; i < windows.size(); ++i) {
      windows[i].reset();
      windows[i].push(obs[i]);
    }
  }
};

envs::JointAction to_joint(const std::vector<std::vector<double>>& acts) {
  envs::JointAction ja;
  for (const auto& a : acts) {
    envs::AgentAction aa;
    aa.force = {a[0], a[1]};
    aa.comm.assign(a.begin() + 2, a.end());
    ja.push_back(std::move(aa));
  }
  return ja;
}

double team_mean(const std::vector<double>& r) {
  double s = 0.0;
  for (double v : r) s += v;
  return r.empty() ? 0.0 : s / static_cast<double>(r.size());
}

}  // namespace

RunMetrics run_training(const ExperimentConfig& cfg,
                        const std::function<void(std::size_t, double)>& progress) {
  cfg.validate();
  auto t0 = std::chrono::steady_clock::now();
  envs::Scenario sc = envs::scenario_from_name(cfg.scenario);
  fs::create_directories(cfg.out_dir);

  Rng init_rng(cfg.seed, "init");
  Rng env_rng(cfg.seed, "env");
  Rng noise_rng(cfg.seed, "noise");
  Rng sample_rng(cfg.seed, "sample");

  marl::Trainer trainer = make_trainer(cfg, init_rng);
  marl::ReplayBuffer buffer(cfg.marl.buffer_capacity);
  std::size_t n = trainer.num_agents();

  RunMetrics m;
  m.seed = cfg.seed;
  m.config_snapshot = serialize_config(cfg);

  {
    std::ofstream cf(fs::path(cfg.out_dir) / "config.txt");
    cf << m.config_snapshot;
  }

  std::ofstream mf(fs::path(cfg.out_dir) / "metrics.csv");
  if (!mf) throw std::runtime_error("run_training: cannot write metrics.csv");
  mf << "episode";
  for (std::size_t i = 0; i < n; ++i) mf << ",return_agent" << i;
  for (std::size_t i = 0; i < n; ++i) mf << ",ma_agent" << i;
  mf << "\n";
  mf.flush();

  auto write_checkpoint = [&](const std::string& name) {
    save_checkpoint((fs::path(cfg.out_dir) / name).string(), config_hash(cfg),
                    snapshot_params(trainer));
  };

  EpisodeRoller roll(sc, cfg);
  std::size_t global_step = 0;

  for (std::size_t ep = 0; ep < cfg.train_episodes; ++ep) {
    double denom = cfg.train_episodes > 1 ? static_cast<double>(cfg.train_episodes - 1) : 1.0;
    trainer.set_noise_progress(static_cast<double>(ep) / denom);
    roll.reset(env_rng.next_u64());

    std::vector<double> ep_return(n, 0.0);
    bool done = false;
    while (!done) {
      std::vector<std::vector<std::vector<double>>> h_before(n);
      std::vector<std::vector<double>> acts(n);
      for (std::size_t i = 0; i < n; ++i) {
        h_before[i] = roll.windows[i].entries();
        acts[i] = trainer.select_action(i, roll.obs[i], roll.windows[i], true, noise_rng);
      }
      envs::StepResult res = envs::world_step(roll.state, to_joint(acts));

      marl::Transition t;
      t.s = roll.obs;
      t.h = std::move(h_before);
      t.a = acts;
      t.r = res.rewards;
      t.s2 = res.obs;
      for (std::size_t i = 0; i < n; ++i) {
        roll.windows[i].push(res.obs[i]);
        t.h2.push_back(roll.windows[i].entries());
      }
      buffer.store(std::move(t));

      for (std::size_t i = 0; i < n; ++i) ep_return[i] += res.rewards[i];
      roll.state = std::move(res.state);
      roll.obs = std::move(res.obs);
      done = res.done;

      ++global_step;
      if (global_step % cfg.marl.learn_every == 0 && buffer.size() >= cfg.marl.batch) {
        for (std::size_t i = 0; i < n; ++i) {
          marl::Batch batch = buffer.sample(cfg.marl.batch, sample_rng);
          trainer.critic_update(i, batch);
          trainer.actor_update(i, batch);
        }
        trainer.soft_update(cfg.marl.tau);
      }
    }

    m.returns.push_back(ep_return);
    std::vector<double> ma(n, 0.0);
    std::size_t lo = m.returns.size() > 100 ? m.returns.size() - 100 : 0;
    for (std::size_t e = lo; e < m.returns.size(); ++e)
      for (std::size_t i = 0; i < n; ++i) ma[i] += m.returns[e][i];
    for (std::size_t i = 0; i < n; ++i) ma[i] /= static_cast<double>(m.returns.size() - lo);
    m.moving.push_back(ma);

    mf << ep;
    for (std::size_t i = 0; i < n; ++i) mf << "," << format_double(ep_return[i]);
    for (std::size_t i = 0; i < n; ++i) mf << "," << format_double(ma[i]);
    mf << "\n";
    mf.flush();

    if (cfg.checkpoint_every > 0 && (ep + 1) % cfg.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_%06zu.bin", ep + 1);
      write_checkpoint(name);
    }
    if (progress) progress(ep, team_mean(ma));
  }

  write_checkpoint("checkpoint_final.bin");
  m.transitions_stored = buffer.size();
  m.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  {
    std::ofstream rf(fs::path(cfg.out_dir) / "runinfo.txt");
    rf << "wall_clock_sec=" << format_double(m.wall_clock_sec) << "\n";
  }
  return m;
}

EvalReport run_evaluation(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
  cfg.validate();
  envs::Scenario sc = envs::scenario_from_name(cfg.scenario);
  Rng init_rng(cfg.seed, "init");
  Rng env_rng(cfg.seed, "eval-env");
  Rng policy_rng(cfg.seed, "eval-policy");

  marl::Trainer trainer = make_trainer(cfg, init_rng);
  bool random_policy = checkpoint_path.empty();
  if (!random_policy) {
    load_params(trainer, load_checkpoint(checkpoint_path, config_hash(cfg)));
  }
  std::size_t n = trainer.num_agents();

  EvalReport rep;
  EpisodeRoller roll(sc, cfg);
  for (std::size_t ep = 0; ep < cfg.eval_episodes; ++ep) {
    roll.reset(env_rng.next_u64());
    std::vector<double> ep_return(n, 0.0);
    bool done = false;
    while (!done) {
      std::vector<std::vector<double>> acts(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (random_policy) {
          std::size_t comm = envs::comm_dim(sc, i);
          std::vector<double> a(2 + comm);
          a[0] = policy_rng.uniform(-1.0, 1.0);
          a[1] = policy_rng.uniform(-1.0, 1.0);
          if (comm > 0) {
            double tot = 0.0;
            for (std::size_t c = 0; c < comm; ++c) {
              a[2 + c] = policy_rng.uniform();
              tot += a[2 + c];
            }
            for (std::size_t c = 0; c < comm; ++c) a[2 + c] /= tot;
          }
          acts[i] = std::move(a);
        } else {
          acts[i] = trainer.select_action(i, roll.obs[i], roll.windows[i], false, policy_rng);
        }
      }
      envs::StepResult res = envs::world_step(roll.state, to_joint(acts));
      for (std::size_t i = 0; i < n; ++i) {
        ep_return[i] += res.rewards[i];
        roll.windows[i].push(res.obs[i]);
      }
      roll.state = std::move(res.state);
      roll.obs = std::move(res.obs);
      done = res.done;
    }
    rep.returns.push_back(ep_return);
  }

  rep.mean.assign(n, 0.0);
  rep.stddev.assign(n, 0.0);
  for (const auto& r : rep.returns)
    for (std::size_t i = 0; i < n; ++i) rep.mean[i] += r[i];
  for (std::size_t i = 0; i < n; ++i)
    rep.mean[i] /= static_cast<double>(std::max<std::size_t>(1, rep.returns.size()));
  for (const auto& r : rep.returns)
    for (std::size_t i = 0; i < n; ++i)
      rep.stddev[i] += (r[i] - rep.mean[i]) * (r[i] - rep.mean[i]);
  for (std::size_t i = 0; i < n; ++i)
    rep.stddev[i] =
        std::sqrt(rep.stddev[i] / static_cast<double>(std::max<std::size_t>(1, rep.returns.size())));
  return rep;
}

void export_metrics(const RunMetrics& m, const std::string& path, const std::string& format) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_metrics: cannot open " + path);
  std::size_t n = m.returns.empty() ? 0 : m.returns[0].size();
  if (format == "csv") {
    out << "episode";
    for (std::size_t i = 0; i < n; ++i) out << ",return_agent" << i;
    for (std::size_t i = 0; i < n; ++i) out << ",ma_agent" << i;
    out << "\n";
    for (std::size_t e = 0; e < m.returns.size(); ++e) {
      out << e;
      for (std::size_t i = 0; i < n; ++i) out << "," << format_double(m.returns[e][i]);
      for (std::size_t i = 0; i < n; ++i) out << "," << format_double(m.moving[e][i]);
      out << "\n";
    }
  } else if (format == "json") {
    out << "{\n  \"seed\": " << m.seed << ",\n  \"returns\": [";
    for (std::size_t e = 0; e < m.returns.size(); ++e) {
      out << (e ? ", " : "") << "[";
      for (std::size_t i = 0; i < n; ++i)
        out << (i ? ", " : "") << format_double(m.returns[e][i]);
      out << "]";
    }
    out << "],\n  \"moving\": [";
    for (std::size_t e = 0; e < m.moving.size(); ++e) {
      out << (e ? ", " : "") << "[";
      for (std::size_t i = 0; i < n; ++i)
        out << (i ? ", " : "") << format_double(m.moving[e][i]);
      out << "]";
    }
    out << "]\n}\n";
  } else {
    throw std::invalid_argument("export_metrics: unknown format " + format);
  }
}

RunMetrics import_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("import_metrics_csv: cannot open " + path);
  RunMetrics m;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("import_metrics_csv: empty file");
  std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (cols < 3 || (cols - 1) % 2 != 0)
    throw std::runtime_error("import_metrics_csv: unexpected header in " + path);
  std::size_t n = (cols - 1) / 2;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> ret(n), ma(n);
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');  // episode index
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::getline(ss, cell, ',')) throw std::runtime_error("import_metrics_csv: short row");
      ret[i] = std::stod(cell);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::getline(ss, cell, ',')) throw std::runtime_error("import_metrics_csv: short row");
      ma[i] = std::stod(cell);
    }
    m.returns.push_back(std::move(ret));
    m.moving.push_back(std::move(ma));
  }
  return m;
}

}  // namespace hrt::harness
