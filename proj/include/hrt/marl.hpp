#pragma once

#include <string>
#include <vector>

#include "hrt/nets.hpp"
#include "hrt/optimizer.hpp"
#include "hrt/replay.hpp"
#include "hrt/rng.hpp"

namespace hrt::marl {

using num::Tensor;

enum class Algo { maddpg, rmaddpg, hrtmaddpg };

Algo algo_from_name(const std::string& name);
std::string algo_name(Algo a);

struct MarlConfig {
  Algo algo = Algo::hrtmaddpg;
  std::size_t depth = 2;     // transformer blocks (hrtmaddpg only)
  std::size_t window = 8;    // K most recent observations
  std::size_t hidden = 64;   // rnn hidden and mlp hidden width
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t d_ff = 64;
  double gamma = 0.95;
  double tau = 0.01;
  double lr_actor = 1e-2;
  double lr_critic = 1e-2;
  std::size_t batch = 256;
  std::size_t buffer_capacity = 1000000;
  std::size_t learn_every = 100;
  double noise_sigma_start = 0.1;
  double noise_sigma_end = 0.01;
  double gumbel_temperature = 1.0;
  bool actor_encoder = false;      // actor also runs the hierarchical encoder
  bool sinusoidal_pe = false;      // replace recursive codes with sine/cosine
  bool shared_parameters = false;  // one learner shared by all agents
};

struct ActorParams {
  bool has_rnn = false;
  nets::RnnParams rnn;
  bool has_enc = false;
  nets::EncoderStack enc;
  nets::MlpParams mlp;
};

struct CriticParams {
  // History encoders sized per agent, since observation widths differ by
  // role: rmaddpg uses raw final hidden states, hrtmaddpg the full stack.
  bool has_rnn = false;
  std::vector<nets::RnnParams> rnns;
  bool has_enc = false;
  std::vector<nets::EncoderStack> encs;
  nets::MlpParams mlp;
};

void collect_params(ActorParams& p, std::vector<Tensor*>& out);
void collect_params(CriticParams& p, std::vector<Tensor*>& out);
ActorParams track(const ActorParams& p, num::Tape& tape);
CriticParams track(const CriticParams& p, num::Tape& tape);

struct AgentLearner {
  ActorParams actor, actor_target;
  CriticParams critic, critic_target;
  num::OptimizerState actor_opt, critic_opt;
  std::size_t obs_dim = 0;
  std::size_t comm_dim = 0;
  std::size_t act_dim() const { return 2 + comm_dim; }
};

using Batch = std::vector<const Transition*>;

// The learner set for one scenario: per-agent actor/critic/target networks
// plus the update rules. One Trainer is owned by one training job.
class Trainer {
 public:
  Trainer(MarlConfig cfg, const std::vector<std::size_t>& obs_dims,
          const std::vector<std::size_t>& comm_dims, Rng& init_rng);

  std::size_t num_agents() const { return obs_dims_.size(); }
  std::size_t num_learners() const { return learners_.size(); }
  const MarlConfig& config() const { return cfg_; }
  AgentLearner& agent(std::size_t i);
  const AgentLearner& agent(std::size_t i) const;

  // Deterministic policy output, optionally with exploration noise:
  // Gaussian on the movement force, Gumbel-perturbed softmax on the
  // communication head. Clamped to action bounds.
  std::vector<double> select_action(std::size_t i, const std::vector<double>& obs,
                                    const ObservationWindow& h, bool explore,
                                    Rng& noise_rng) const;

  // Critic input x (or x' with target networks and target actions) for
  // agent i over a batch: [joint observations | per-agent history encodings
  // | joint actions], one row per sample.
  Tensor encode_critic_input(std::size_t i, const Batch& batch, bool use_targets) const;

  // y = r + gamma * Q'(x'), target networks, no gradient tracking.
  std::vector<double> compute_target(std::size_t i, const Batch& batch) const;

  // One optimizer step on critic (and its encoder); returns pre-step loss.
  double critic_update(std::size_t i, const Batch& batch);

  // One optimizer step on actor only; returns the batch-mean critic value.
  double actor_update(std::size_t i, const Batch& batch);

  // theta' <- tau*theta + (1-tau)*theta' for every target parameter.
  void soft_update(double tau);

  // Linear noise decay: sigma(frac) from sigma_start at 0 to sigma_end at 1.
  void set_noise_progress(double frac);
  double noise_sigma() const { return sigma_; }

 private:
  Tensor actor_forward(const ActorParams& p, std::size_t comm, const Tensor& obs,
                       const Tensor& windows, std::size_t b) const;
  Tensor history_feature(const CriticParams& p, std::size_t agent, const Tensor& windows,
                         std::size_t b) const;
  Tensor batch_obs(const Batch& batch, std::size_t agent, bool next) const;
  Tensor batch_windows(const Batch& batch, std::size_t agent, bool next) const;
  Tensor batch_action(const Batch& batch, std::size_t agent) const;
  Tensor assemble_x(const Batch& batch, const CriticParams& critic, bool use_targets) const;

  MarlConfig cfg_;
  std::vector<std::size_t> obs_dims_, comm_dims_;
  std::vector<AgentLearner> learners_;
  double sigma_;
};

}  // namespace hrt::marl
