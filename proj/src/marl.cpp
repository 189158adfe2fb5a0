#include "hrt/marl.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hrt::marl {

namespace {

using num::Tape;

// final hidden state of the plain tanh recurrence over a [b*K, obs] window stack
Tensor rnn_chain_final(const nets::RnnParams& p, const Tensor& windows, std::size_t b,
                       std::size_t k) {
  Tensor h = num::zeros({b, p.hidden()});
  for (std::size_t t = 0; t < k; ++t) {
    std::vector<std::size_t> idx(b);
    for (std::size_t s = 0; s < b; ++s) idx[s] = s * k + t;
    h = nets::rnn_step(p, h, num::take_rows(windows, idx));
  }
  return h;
}

}  // namespace

Algo algo_from_name(const std::string& name) {
  if (name == "maddpg") return Algo::maddpg;
  if (name == "rmaddpg") return Algo::rmaddpg;
  if (name == "hrtmaddpg") return Algo::hrtmaddpg;
  throw std::invalid_argument("unknown algorithm: " + name);
}

std::string algo_name(Algo a) {
  switch (a) {
    case Algo::maddpg: return "maddpg";
    case Algo::rmaddpg: return "rmaddpg";
    case Algo::hrtmaddpg: return "hrtmaddpg";
  }
  return "?";
}

void collect_params(ActorParams& p, std::vector<Tensor*>& out) {
  if (p.has_rnn) nets::collect_params(p.rnn, out);
  if (p.has_enc) nets::collect_params(p.enc, out);
  nets::collect_params(p.mlp, out);
}

void collect_params(CriticParams& p, std::vector<Tensor*>& out) {
  if (p.has_rnn)
    for (auto& r : p.rnns) nets::collect_params(r, out);
  if (p.has_enc)
    for (auto& e : p.encs) nets::collect_params(e, out);
  nets::collect_params(p.mlp, out);
}

namespace {

template <typename T>
T track_impl(const T& p, Tape& tape) {
  T copy = p;
  std::vector<Tensor*> ts;
  collect_params(copy, ts);
  for (Tensor* t : ts) *t = tape.leaf(*t);
  return copy;
}

// adam over whichever tracked leaves received gradient (unreached leaves get zero)
void apply_adam(std::vector<Tensor*>& online, std::vector<Tensor*>& tracked,
                const num::GradientMap& gmap, num::OptimizerState& state) {
  std::vector<Tensor> grads;
  grads.reserve(online.size());
  for (std::size_t i = 0; i < online.size(); ++i) {
    auto it = gmap.find(tracked[i]->node);
    if (it != gmap.end()) {
      grads.push_back(it->second);
    } else {
      grads.push_back(num::zeros(online[i]->shape));
    }
  }
  num::adam_step(online, grads, state);
}

}  // namespace

ActorParams track(const ActorParams& p, Tape& tape) { return track_impl(p, tape); }
CriticParams track(const CriticParams& p, Tape& tape) { return track_impl(p, tape); }

Trainer::Trainer(MarlConfig cfg, const std::vector<std::size_t>& obs_dims,
                 const std::vector<std::size_t>& comm_dims, Rng& init_rng)
    : cfg_(std::move(cfg)), obs_dims_(obs_dims), comm_dims_(comm_dims),
      sigma_(cfg_.noise_sigma_start) {
  if (obs_dims_.size() != comm_dims_.size())
    throw std::invalid_argument("Trainer: obs/comm dim count mismatch");
  if (cfg_.shared_parameters) {
    for (std::size_t i = 1; i < obs_dims_.size(); ++i) {
      if (obs_dims_[i] != obs_dims_[0] || comm_dims_[i] != comm_dims_[0])
        throw std::invalid_argument("Trainer: shared parameters require homogeneous agents");
    }
  }

  std::size_t total_obs = 0, total_act = 0;
  for (std::size_t i = 0; i < obs_dims_.size(); ++i) {
    total_obs += obs_dims_[i];
    total_act += 2 + comm_dims_[i];
  }
  std::size_t feat = 0;
  if (cfg_.algo == Algo::rmaddpg) feat = cfg_.hidden;
  if (cfg_.algo == Algo::hrtmaddpg) feat = cfg_.d_model;
  std::size_t critic_in = total_obs + obs_dims_.size() * feat + total_act;

  std::size_t n_learners = cfg_.shared_parameters ? 1 : obs_dims_.size();
  auto mode = cfg_.sinusoidal_pe ? nets::PositionMode::sinusoidal : nets::PositionMode::rnn_code;
  for (std::size_t i = 0; i < n_learners; ++i) {
    AgentLearner l;
    l.obs_dim = obs_dims_[i];
    l.comm_dim = comm_dims_[i];

    std::size_t actor_feat = 0;
    if (cfg_.algo != Algo::maddpg) {
      if (cfg_.actor_encoder) {
        l.actor.has_enc = true;
        l.actor.enc = nets::make_encoder(init_rng, l.obs_dim, cfg_.hidden, cfg_.d_model,
                                         cfg_.heads, cfg_.d_ff,
                                         cfg_.algo == Algo::hrtmaddpg ? cfg_.depth : 1, mode);
        actor_feat = cfg_.d_model;
      } else {
        l.actor.has_rnn = true;
        l.actor.rnn = nets::make_rnn(init_rng, l.obs_dim, cfg_.hidden);
        actor_feat = cfg_.hidden;
      }
    }
    l.actor.mlp = nets::make_mlp(init_rng, {l.obs_dim + actor_feat, cfg_.hidden, cfg_.hidden,
                                            l.act_dim()},
                                 nets::Activation::relu, nets::Activation::none);

    if (cfg_.algo == Algo::rmaddpg) {
      l.critic.has_rnn = true;
      for (std::size_t k = 0; k < obs_dims_.size(); ++k)
        l.critic.rnns.push_back(nets::make_rnn(init_rng, obs_dims_[k], cfg_.hidden));
    } else if (cfg_.algo == Algo::hrtmaddpg) {
      l.critic.has_enc = true;
      for (std::size_t k = 0; k < obs_dims_.size(); ++k)
        l.critic.encs.push_back(nets::make_encoder(init_rng, obs_dims_[k], cfg_.hidden,
                                                   cfg_.d_model, cfg_.heads, cfg_.d_ff,
                                                   cfg_.depth, mode));
    }
    l.critic.mlp = nets::make_mlp(init_rng, {critic_in, cfg_.hidden, cfg_.hidden, 1},
                                  nets::Activation::relu, nets::Activation::none);

    l.actor_target = l.actor;
    l.critic_target = l.critic;
    l.actor_opt.lr = cfg_.lr_actor;
    l.critic_opt.lr = cfg_.lr_critic;
    learners_.push_back(std::move(l));
  }
}

AgentLearner& Trainer::agent(std::size_t i) {
  return learners_[cfg_.shared_parameters ? 0 : i];
}

const AgentLearner& Trainer::agent(std::size_t i) const {
  return learners_[cfg_.shared_parameters ? 0 : i];
}

Tensor Trainer::actor_forward(const ActorParams& p, std::size_t comm, const Tensor& obs,
                              const Tensor& windows, std::size_t b) const {
  Tensor in = obs;
  if (p.has_enc) {
    in = num::hcat({obs, nets::hierarchical_encode(p.enc, windows, b, cfg_.window).pooled});
  } else if (p.has_rnn) {
    in = num::hcat({obs, rnn_chain_final(p.rnn, windows, b, cfg_.window)});
  }
  Tensor raw = nets::mlp_forward(p.mlp, in);
  Tensor move = num::tanh(num::take_cols(raw, {0, 1}));
  if (comm == 0) return move;
  std::vector<std::size_t> cc(comm);
  for (std::size_t i = 0; i < comm; ++i) cc[i] = 2 + i;
  return num::hcat({move, num::softmax(num::take_cols(raw, cc), 1)});
}

Tensor Trainer::history_feature(const CriticParams& p, std::size_t agent,
                                const Tensor& windows, std::size_t b) const {
  if (p.has_enc) return nets::hierarchical_encode(p.encs[agent], windows, b, cfg_.window).pooled;
  if (p.has_rnn) return rnn_chain_final(p.rnns[agent], windows, b, cfg_.window);
  return Tensor{};  // maddpg: no history feature
}

Tensor Trainer::batch_obs(const Batch& batch, std::size_t agent, bool next) const {
  std::size_t b = batch.size(), d = obs_dims_[agent];
  std::vector<double> v;
  v.reserve(b * d);
  for (const Transition* t : batch) {
    const auto& o = next ? t->s2[agent] : t->s[agent];
    v.insert(v.end(), o.begin(), o.end());
  }
  return num::tensor_new({b, d}, std::move(v));
}

Tensor Trainer::batch_windows(const Batch& batch, std::size_t agent, bool next) const {
  std::size_t b = batch.size(), d = obs_dims_[agent], k = cfg_.window;
  std::vector<double> v;
  v.reserve(b * k * d);
  for (const Transition* t : batch) {
    const auto& w = next ? t->h2[agent] : t->h[agent];
    if (w.size() != k) throw std::invalid_argument("Trainer: stored window length != K");
    for (const auto& o : w) v.insert(v.end(), o.begin(), o.end());
  }
  return num::tensor_new({b * k, d}, std::move(v));
}

Tensor Trainer::batch_action(const Batch& batch, std::size_t agent) const {
  std::size_t b = batch.size(), d = 2 + comm_dims_[agent];
  std::vector<double> v;
  v.reserve(b * d);
  for (const Transition* t : batch) v.insert(v.end(), t->a[agent].begin(), t->a[agent].end());
  return num::tensor_new({b, d}, std::move(v));
}

Tensor Trainer::assemble_x(const Batch& batch, const CriticParams& critic,
                           bool use_targets) const {
  if (batch.empty()) throw std::invalid_argument("Trainer: empty batch");
  std::size_t b = batch.size();
  std::vector<Tensor> parts;

  for (std::size_t k = 0; k < num_agents(); ++k) parts.push_back(batch_obs(batch, k, use_targets));

  if (critic.has_enc || critic.has_rnn) {
    for (std::size_t k = 0; k < num_agents(); ++k)
      parts.push_back(history_feature(critic, k, batch_windows(batch, k, use_targets), b));
  }

  for (std::size_t k = 0; k < num_agents(); ++k) {
    if (use_targets) {
      const AgentLearner& lk = agent(k);
      parts.push_back(actor_forward(lk.actor_target, comm_dims_[k], batch_obs(batch, k, true),
                                    batch_windows(batch, k, true), b));
    } else {
      parts.push_back(batch_action(batch, k));
    }
  }
  return num::hcat(parts);
}

Tensor Trainer::encode_critic_input(std::size_t i, const Batch& batch, bool use_targets) const {
  const AgentLearner& l = agent(i);
  return assemble_x(batch, use_targets ? l.critic_target : l.critic, use_targets);
}

std::vector<double> Trainer::compute_target(std::size_t i, const Batch& batch) const {
  const AgentLearner& l = agent(i);
  Tensor x2 = assemble_x(batch, l.critic_target, true);
  Tensor q2 = nets::mlp_forward(l.critic_target.mlp, x2);
  std::vector<double> y(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j)
    y[j] = batch[j]->r[i] + cfg_.gamma * q2.values[j];
  return y;
}

double Trainer::critic_update(std::size_t i, const Batch& batch) {
  AgentLearner& l = agent(i);
  std::vector<double> y = compute_target(i, batch);

  Tape tape;
  CriticParams tracked = track(l.critic, tape);
  Tensor x = assemble_x(batch, tracked, false);
  Tensor q = nets::mlp_forward(tracked.mlp, x);
  Tensor diff = num::sub(num::reshape(q, {batch.size()}), num::tensor_new({batch.size()}, y));
  Tensor loss = num::scale(num::sum(num::mul(diff, diff)), 1.0 / static_cast<double>(batch.size()));
  double loss_value = loss.scalar();

  num::GradientMap gmap = tape.backward(loss);
  std::vector<Tensor*> online, leaves;
  collect_params(l.critic, online);
  collect_params(tracked, leaves);
  apply_adam(online, leaves, gmap, l.critic_opt);
  return loss_value;
}

double Trainer::actor_update(std::size_t i, const Batch& batch) {
  AgentLearner& l = agent(i);
  std::size_t b = batch.size();

  Tape tape;
  ActorParams tracked = track(l.actor, tape);
  Tensor a_i = actor_forward(tracked, comm_dims_[i], batch_obs(batch, i, false),
                             batch_windows(batch, i, false), b);

  std::vector<Tensor> parts;
  for (std::size_t k = 0; k < num_agents(); ++k) parts.push_back(batch_obs(batch, k, false));
  if (l.critic.has_enc || l.critic.has_rnn) {
    for (std::size_t k = 0; k < num_agents(); ++k)
      parts.push_back(history_feature(l.critic, k, batch_windows(batch, k, false), b));
  }
  for (std::size_t k = 0; k < num_agents(); ++k) {
    if (k == i) {
      parts.push_back(a_i);
    } else {
      parts.push_back(batch_action(batch, k));
    }
  }
  Tensor x = num::hcat(parts);
  Tensor q = nets::mlp_forward(l.critic.mlp, x);  // critic untracked: params stay fixed
  double mean_q = 0.0;
  for (double v : q.values) mean_q += v;
  mean_q /= static_cast<double>(b);

  Tensor obj = num::scale(num::sum(q), -1.0 / static_cast<double>(b));
  num::GradientMap gmap = tape.backward(obj);
  std::vector<Tensor*> online, leaves;
  collect_params(l.actor, online);
  collect_params(tracked, leaves);
  apply_adam(online, leaves, gmap, l.actor_opt);
  return mean_q;
}

void Trainer::soft_update(double tau) {
  if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("soft_update: tau out of [0,1]");
  for (AgentLearner& l : learners_) {
    std::vector<Tensor*> on, tg;
    collect_params(l.actor, on);
    collect_params(l.critic, on);
    collect_params(l.actor_target, tg);
    collect_params(l.critic_target, tg);
    for (std::size_t i = 0; i < on.size(); ++i) {
      for (std::size_t j = 0; j < on[i]->size(); ++j)
        tg[i]->values[j] = tau * on[i]->values[j] + (1.0 - tau) * tg[i]->values[j];
    }
  }
}

void Trainer::set_noise_progress(double frac) {
  frac = std::clamp(frac, 0.0, 1.0);
  sigma_ = cfg_.noise_sigma_start + (cfg_.noise_sigma_end - cfg_.noise_sigma_start) * frac;
}

std::vector<double> Trainer::select_action(std::size_t i, const std::vector<double>& obs,
                                           const ObservationWindow& h, bool explore,
                                           Rng& noise_rng) const {
  const AgentLearner& l = agent(i);
  if (obs.size() != obs_dims_[i])
    throw std::invalid_argument("select_action: observation length mismatch");
  Tensor o = num::tensor_new({1, obs.size()}, obs);
  Tensor w = num::tensor_new({cfg_.window, obs.size()}, h.flat());

  std::size_t comm = comm_dims_[i];
  Tensor in = o;
  if (l.actor.has_enc) {
    in = num::hcat({o, nets::hierarchical_encode(l.actor.enc, w, 1, cfg_.window).pooled});
  } else if (l.actor.has_rnn) {
    in = num::hcat({o, rnn_chain_final(l.actor.rnn, w, 1, cfg_.window)});
  }
  Tensor raw = nets::mlp_forward(l.actor.mlp, in);

  std::vector<double> act(2 + comm);
  act[0] = std::tanh(raw.values[0]);
  act[1] = std::tanh(raw.values[1]);
  if (explore) {
    act[0] += sigma_ * noise_rng.gaussian();
    act[1] += sigma_ * noise_rng.gaussian();
  }
  act[0] = std::clamp(act[0], -1.0, 1.0);
  act[1] = std::clamp(act[1], -1.0, 1.0);

  if (comm > 0) {
    std::vector<double> logits(comm);
    for (std::size_t c = 0; c < comm; ++c) logits[c] = raw.values[2 + c];
    if (explore) {
      for (std::size_t c = 0; c < comm; ++c)
        logits[c] = (logits[c] + noise_rng.gumbel()) / cfg_.gumbel_temperature;
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (std::size_t c = 0; c < comm; ++c) {
      logits[c] = std::exp(logits[c] - mx);
      denom += logits[c];
    }
    for (std::size_t c = 0; c < comm; ++c) act[2 + c] = logits[c] / denom;
  }
  return act;
}

}  // namespace hrt::marl
