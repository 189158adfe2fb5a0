#include "hrt/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace hrt::envs {

namespace {

constexpr double kDt = 0.1;
constexpr double kDamping = 0.25;
constexpr double kForceSensitivity = 5.0;
constexpr double kContactStiffness = 50.0;
constexpr double kCollisionPenalty = 1.0;   // coop_nav, per colliding pair
constexpr double kContactBonus = 10.0;       // predator_prey

double dist(const Entity& a, const Entity& b) {
  double dx = a.pos[0] - b.pos[0], dy = a.pos[1] - b.pos[1];
  return std::sqrt(dx * dx + dy * dy);
}

bool in_contact(const Entity& a, const Entity& b) { return dist(a, b) < a.size + b.size; }

bool collidable(const Entity& e) { return e.kind != EntityKind::landmark; }

std::vector<std::size_t> indices_of(const WorldState& s, EntityKind k) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.entities.size(); ++i)
    if (s.entities[i].kind == k) out.push_back(i);
  return out;
}

double clamp1(double v) { return std::clamp(v, -1.0, 1.0); }

void push_rel(std::vector<double>& o, const Entity& self, const Entity& other) {
  o.push_back(other.pos[0] - self.pos[0]);
  o.push_back(other.pos[1] - self.pos[1]);
}

}  // namespace

Scenario scenario_from_name(const std::string& name) {
  if (name == "coop_nav") return Scenario::coop_nav;
  if (name == "phys_deception") return Scenario::phys_deception;
  if (name == "coop_comm") return Scenario::coop_comm;
  if (name == "predator_prey") return Scenario::predator_prey;
  throw std::invalid_argument("unknown scenario: " + name);
}

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::coop_nav: return "coop_nav";
    case Scenario::phys_deception: return "phys_deception";
    case Scenario::coop_comm: return "coop_comm";
    case Scenario::predator_prey: return "predator_prey";
  }
  return "?";
}

std::vector<std::size_t> WorldState::agent_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entities.size(); ++i)
    if (entities[i].kind == EntityKind::agent) out.push_back(i);
  return out;
}

std::size_t comm_dim(Scenario s, std::size_t agent) {
  return (s == Scenario::coop_comm && agent == 0) ? 3 : 0;
}

std::size_t obs_dim(Scenario s, std::size_t agent) {
  switch (s) {
    case Scenario::coop_nav: return 14;
    case Scenario::phys_deception: return agent == 0 ? 12 : 14;
    case Scenario::coop_comm: return agent == 0 ? 7 : 13;
    case Scenario::predator_prey: return agent == 3 ? 14 : 16;
  }
  return 0;
}

WorldState scenario_init(Scenario s, std::uint64_t seed, int episode_length) {
  WorldState w;
  w.scenario = s;
  w.episode_length = episode_length;
  Rng rng(seed, "env-init");

  auto agent = [](Role r, double size, double max_speed = 0.0, bool movable = true) {
    Entity e;
    e.kind = EntityKind::agent;
    e.role = r;
    e.size = size;
    e.max_speed = max_speed;
    e.movable = movable;
    return e;
  };
  auto landmark = [](double size, int color = 0) {
    Entity e;
    e.kind = EntityKind::landmark;
    e.role = Role::none;
    e.size = size;
    e.movable = false;
    e.color = color;
    return e;
  };

  switch (s) {
    case Scenario::coop_nav:
      for (int i = 0; i < 3; ++i) w.entities.push_back(agent(Role::good, 0.15));
      for (int i = 0; i < 3; ++i) w.entities.push_back(landmark(0.05));
      break;
    case Scenario::phys_deception:
      w.entities.push_back(agent(Role::adversary, 0.075));
      for (int i = 0; i < 2; ++i) w.entities.push_back(agent(Role::good, 0.075));
      for (int i = 0; i < 2; ++i) w.entities.push_back(landmark(0.05));
      break;
    case Scenario::coop_comm:
      w.entities.push_back(agent(Role::speaker, 0.075, 0.0, false));
      w.entities.push_back(agent(Role::listener, 0.075));
      for (int i = 0; i < 3; ++i) w.entities.push_back(landmark(0.04, i));
      w.comm.assign(3, 0.0);
      break;
    case Scenario::predator_prey:
      for (int i = 0; i < 3; ++i) w.entities.push_back(agent(Role::predator, 0.075, 1.0));
      w.entities.push_back(agent(Role::prey, 0.05, 1.3));
      for (int i = 0; i < 2; ++i) {
        Entity e;
        e.kind = EntityKind::obstacle;
        e.size = 0.2;
        e.movable = false;
        w.entities.push_back(e);
      }
      break;
  }

  for (Entity& e : w.entities) {
    e.pos[0] = rng.uniform(-1.0, 1.0);
    e.pos[1] = rng.uniform(-1.0, 1.0);
  }

  auto lms = indices_of(w, EntityKind::landmark);
  if (s == Scenario::coop_nav) {
    // assignment permutation, used only in literal-assignment reward mode
    std::vector<int> perm = {0, 1, 2};
    for (std::size_t i = 2; i > 0; --i)
      std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    w.goal_assignment = perm;
  } else if (!lms.empty()) {
    w.goal = static_cast<int>(lms[rng.uniform_int(lms.size())]);
  }

  w.rng_state = rng.state();
  return w;
}

WorldState scenario_init(const std::string& name, std::uint64_t seed, int episode_length) {
  return scenario_init(scenario_from_name(name), seed, episode_length);
}

StepResult world_step(const WorldState& s, const JointAction& a) {
  auto agents = s.agent_indices();
  if (a.size() != agents.size())
    throw std::invalid_argument("world_step: action count does not match agent count");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].comm.size() != comm_dim(s.scenario, i))
      throw std::invalid_argument("world_step: communication width mismatch");
  }

  StepResult res;
  res.state = s;
  WorldState& w = res.state;

  // applied action forces
  std::vector<std::array<double, 2>> force(w.entities.size(), {0.0, 0.0});
  for (std::size_t i = 0; i < agents.size(); ++i) {
    force[agents[i]][0] = clamp1(a[i].force[0]) * kForceSensitivity;
    force[agents[i]][1] = clamp1(a[i].force[1]) * kForceSensitivity;
  }

  // soft spring forces between overlapping collidable entities
  for (std::size_t i = 0; i < w.entities.size(); ++i) {
    for (std::size_t j = i + 1; j < w.entities.size(); ++j) {
      const Entity& ei = w.entities[i];
      const Entity& ej = w.entities[j];
      if (!collidable(ei) || !collidable(ej)) continue;
      double min_dist = ei.size + ej.size;
      double dx = ei.pos[0] - ej.pos[0], dy = ei.pos[1] - ej.pos[1];
      double d = std::sqrt(dx * dx + dy * dy);
      if (d >= min_dist || d <= 1e-12) continue;
      double f = kContactStiffness * (min_dist - d) / d;
      force[i][0] += f * dx;
      force[i][1] += f * dy;
      force[j][0] -= f * dx;
      force[j][1] -= f * dy;
    }
  }

  for (std::size_t i = 0; i < w.entities.size(); ++i) {
    Entity& e = w.entities[i];
    if (!e.movable) continue;
    e.vel[0] = e.vel[0] * (1.0 - kDamping) + force[i][0] * kDt;
    e.vel[1] = e.vel[1] * (1.0 - kDamping) + force[i][1] * kDt;
    if (e.max_speed > 0.0) {
      double sp = std::sqrt(e.vel[0] * e.vel[0] + e.vel[1] * e.vel[1]);
      if (sp > e.max_speed) {
        e.vel[0] *= e.max_speed / sp;
        e.vel[1] *= e.max_speed / sp;
      }
    }
    e.pos[0] += e.vel[0] * kDt;
    e.pos[1] += e.vel[1] * kDt;
  }

  if (s.scenario == Scenario::coop_comm) w.comm = a[0].comm;
  w.step += 1;

  res.rewards = rewards_for(w);
  res.obs = observe_all(w);
  res.done = w.step >= w.episode_length;
  return res;
}

std::vector<double> reward_coop_nav(const WorldState& s) {
  if (s.scenario != Scenario::coop_nav)
    throw std::invalid_argument("reward_coop_nav: wrong scenario");
  auto agents = s.agent_indices();
  auto lms = indices_of(s, EntityKind::landmark);
  double r = 0.0;
  if (s.literal_assignment) {
    for (std::size_t i = 0; i < agents.size(); ++i)
      r -= dist(s.entities[agents[i]], s.entities[lms[static_cast<std::size_t>(s.goal_assignment[i])]]);
  } else {
    for (std::size_t l : lms) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t ai : agents) best = std::min(best, dist(s.entities[ai], s.entities[l]));
      r -= best;
    }
  }
  for (std::size_t i = 0; i < agents.size(); ++i)
    for (std::size_t j = i + 1; j < agents.size(); ++j)
      if (in_contact(s.entities[agents[i]], s.entities[agents[j]])) r -= kCollisionPenalty;
  return std::vector<double>(agents.size(), r);
}

std::vector<double> reward_phys_deception(const WorldState& s) {
  if (s.scenario != Scenario::phys_deception)
    throw std::invalid_argument("reward_phys_deception: wrong scenario");
  auto agents = s.agent_indices();
  const Entity& goal = s.entities[static_cast<std::size_t>(s.goal)];
  const Entity& adv = s.entities[agents[0]];
  double adv_d = dist(adv, goal);
  double best_coop = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < agents.size(); ++i)
    best_coop = std::min(best_coop, dist(s.entities[agents[i]], goal));
  std::vector<double> r(agents.size());
  r[0] = -adv_d;
  for (std::size_t i = 1; i < agents.size(); ++i) r[i] = adv_d - best_coop;
  return r;
}

std::vector<double> reward_coop_comm(const WorldState& s) {
  if (s.scenario != Scenario::coop_comm)
    throw std::invalid_argument("reward_coop_comm: wrong scenario");
  auto agents = s.agent_indices();
  double d = dist(s.entities[agents[1]], s.entities[static_cast<std::size_t>(s.goal)]);
  return std::vector<double>(agents.size(), -d);
}

std::vector<double> reward_predator_prey(const WorldState& s) {
  if (s.scenario != Scenario::predator_prey)
    throw std::invalid_argument("reward_predator_prey: wrong scenario");
  auto agents = s.agent_indices();
  const Entity& prey = s.entities[agents[3]];
  std::vector<double> r(agents.size(), 0.0);
  double nearest = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < 3; ++i) {
    const Entity& pred = s.entities[agents[i]];
    double d = dist(pred, prey);
    nearest = std::min(nearest, d);
    r[i] = -d;
    if (in_contact(pred, prey)) {
      r[i] += kContactBonus;
      r[3] -= kContactBonus;
    }
  }
  r[3] += nearest;
  return r;
}

std::vector<double> rewards_for(const WorldState& s) {
  switch (s.scenario) {
    case Scenario::coop_nav: return reward_coop_nav(s);
    case Scenario::phys_deception: return reward_phys_deception(s);
    case Scenario::coop_comm: return reward_coop_comm(s);
    case Scenario::predator_prey: return reward_predator_prey(s);
  }
  return {};
}

// Observation layouts (all leading with own velocity then own position):
//   coop_nav agent:        [vel 2, pos 2, rel landmark pos 3x2, rel other agents 2x2]
//   phys_deception adv:    [vel 2, pos 2, rel landmark pos 2x2, rel other agents 2x2]
//   phys_deception good:   [vel 2, pos 2, rel goal 2, rel landmarks 2x2, rel others 2x2]
//   coop_comm speaker:     [vel 2, pos 2, goal color one-hot 3]
//   coop_comm listener:    [vel 2, pos 2, rel landmark pos 3x2, received comm 3]
//                          (the goal color is deliberately absent: the listener
//                           only learns it through the speaker's channel)
//   predator_prey pred:    [vel 2, pos 2, rel obstacles 2x2, rel others 3x2, prey vel 2]
//   predator_prey prey:    [vel 2, pos 2, rel obstacles 2x2, rel others 3x2]
std::vector<double> observe(const WorldState& s, std::size_t agent) {
  auto agents = s.agent_indices();
  if (agent >= agents.size()) throw std::invalid_argument("observe: bad agent index");
  const Entity& self = s.entities[agents[agent]];
  auto lms = indices_of(s, EntityKind::landmark);
  auto obstacles = indices_of(s, EntityKind::obstacle);

  std::vector<double> o = {self.vel[0], self.vel[1], self.pos[0], self.pos[1]};
  switch (s.scenario) {
    case Scenario::coop_nav:
      for (std::size_t l : lms) push_rel(o, self, s.entities[l]);
      for (std::size_t j = 0; j < agents.size(); ++j)
        if (j != agent) push_rel(o, self, s.entities[agents[j]]);
      break;
    case Scenario::phys_deception:
      if (agent != 0) push_rel(o, self, s.entities[static_cast<std::size_t>(s.goal)]);
      for (std::size_t l : lms) push_rel(o, self, s.entities[l]);
      for (std::size_t j = 0; j < agents.size(); ++j)
        if (j != agent) push_rel(o, self, s.entities[agents[j]]);
      break;
    case Scenario::coop_comm:
      if (agent == 0) {
        for (std::size_t l : lms)
          o.push_back(static_cast<std::size_t>(s.goal) == l ? 1.0 : 0.0);
      } else {
        for (std::size_t l : lms) push_rel(o, self, s.entities[l]);
        o.insert(o.end(), s.comm.begin(), s.comm.end());
      }
      break;
    case Scenario::predator_prey:
      for (std::size_t ob : obstacles) push_rel(o, self, s.entities[ob]);
      for (std::size_t j = 0; j < agents.size(); ++j)
        if (j != agent) push_rel(o, self, s.entities[agents[j]]);
      if (agent != 3) {
        const Entity& prey = s.entities[agents[3]];
        o.push_back(prey.vel[0]);
        o.push_back(prey.vel[1]);
      }
      break;
  }
  return o;
}

std::vector<std::vector<double>> observe_all(const WorldState& s) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < s.num_agents(); ++i) out.push_back(observe(s, i));
  return out;
}

TrajectoryRecorder::TrajectoryRecorder(const std::string& path) : out_(path) {
  if (!out_) throw std::runtime_error("TrajectoryRecorder: cannot open " + path);
  out_ << header() << "\n";
}

std::string TrajectoryRecorder::header() {
  return "episode,step,entity,kind,role,pos_x,pos_y,vel_x,vel_y,action_fx,action_fy,reward";
}

void TrajectoryRecorder::record(int episode, const WorldState& s, const JointAction& a,
                                const std::vector<double>& rewards) {
  auto agents = s.agent_indices();
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < s.entities.size(); ++i) {
    const Entity& e = s.entities[i];
    double fx = 0.0, fy = 0.0, rw = 0.0;
    for (std::size_t ai = 0; ai < agents.size(); ++ai) {
      if (agents[ai] == i) {
        fx = a[ai].force[0];
        fy = a[ai].force[1];
        rw = rewards[ai];
      }
    }
    out_ << episode << "," << s.step << "," << i << "," << static_cast<int>(e.kind) << ","
         << static_cast<int>(e.role) << "," << num(e.pos[0]) << "," << num(e.pos[1]) << ","
         << num(e.vel[0]) << "," << num(e.vel[1]) << "," << num(fx) << "," << num(fy) << ","
         << num(rw) << "\n";
  }
  out_.flush();
}

}  // namespace hrt::envs
