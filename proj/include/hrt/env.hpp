#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "hrt/rng.hpp"

namespace hrt::envs {

enum class Scenario { coop_nav, phys_deception, coop_comm, predator_prey };

Scenario scenario_from_name(const std::string& name);
std::string scenario_name(Scenario s);

enum class EntityKind { agent, landmark, obstacle };
enum class Role { none, good, adversary, speaker, listener, predator, prey };

struct Entity {
  EntityKind kind = EntityKind::agent;
  Role role = Role::none;
  std::array<double, 2> pos{0.0, 0.0};
  std::array<double, 2> vel{0.0, 0.0};
  double size = 0.05;
  bool movable = true;
  double max_speed = 0.0;  // 0 = uncapped
  int color = 0;
};

// The environment's hidden state. world_step is a pure function of
// (state, action); the rng_state drawn at init is carried along unchanged.
struct WorldState {
  Scenario scenario = Scenario::coop_nav;
  std::vector<Entity> entities;
  int step = 0;
  int episode_length = 25;
  int goal = -1;                        // goal landmark index, where used
  std::vector<int> goal_assignment;    // per-agent landmark, coop_nav literal mode
  std::vector<double> comm;            // last communication emitted (coop_comm)
  bool literal_assignment = false;     // coop_nav: per-agent assigned-goal reward
  std::uint64_t rng_state = 0;

  std::vector<std::size_t> agent_indices() const;
  std::size_t num_agents() const { return agent_indices().size(); }
};

// Per-agent continuous movement force plus optional communication simplex.
struct AgentAction {
  std::array<double, 2> force{0.0, 0.0};
  std::vector<double> comm;
};
using JointAction = std::vector<AgentAction>;

// Communication width of an agent's action (0 for most roles).
std::size_t comm_dim(Scenario s, std::size_t agent);
// Observation length for an agent of the scenario.
std::size_t obs_dim(Scenario s, std::size_t agent);

// Entities placed uniformly in [-1,1]^2 from the seeded stream; velocities
// zero; goal assignments drawn.
WorldState scenario_init(Scenario s, std::uint64_t seed, int episode_length = 25);
WorldState scenario_init(const std::string& name, std::uint64_t seed,
                         int episode_length = 25);

struct StepResult {
  WorldState state;
  std::vector<std::vector<double>> obs;
  std::vector<double> rewards;
  bool done = false;
};

// Double-integrator physics: v' = v*(1-damping) + F*dt with dt=0.1,
// damping 0.25, action force sensitivity 5.0, soft spring collision forces,
// per-entity speed caps. Deterministic.
StepResult world_step(const WorldState& s, const JointAction& a);

std::vector<double> reward_coop_nav(const WorldState& s);
std::vector<double> reward_phys_deception(const WorldState& s);
std::vector<double> reward_coop_comm(const WorldState& s);
std::vector<double> reward_predator_prey(const WorldState& s);
std::vector<double> rewards_for(const WorldState& s);

// Fixed per-(scenario, role) observation layouts; all begin with
// [own velocity (2), own position (2)]. Exact layouts are documented in
// env.cpp next to each builder.
std::vector<double> observe(const WorldState& s, std::size_t agent);
std::vector<std::vector<double>> observe_all(const WorldState& s);

// Newline-delimited trajectory log, one row per entity per step:
// episode,step,entity,kind,role,pos_x,pos_y,vel_x,vel_y,action_fx,action_fy,reward
// Actions and rewards are written for agents and left as 0 otherwise.
class TrajectoryRecorder {
 public:
  explicit TrajectoryRecorder(const std::string& path);
  void record(int episode, const WorldState& s, const JointAction& a,
              const std::vector<double>& rewards);
  static std::string header();

 private:
  std::ofstream out_;
};

}  // namespace hrt::envs
