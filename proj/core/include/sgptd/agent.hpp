#pragma once

#include <cstdint>
#include <random>
#include <variant>
#include <vector>

#include <sgptd/common.hpp>
#include <sgptd/envs.hpp>
#include <sgptd/estimators.hpp>
#include <sgptd/trajectory.hpp>

namespace sgptd {

/// Whether trajectory inputs carry the action alongside the state
/// (action-value estimation) or the state alone (state-value estimation).
enum class ValueMode { ActionValue, StateValue };

/// Discrete-action policy: with probability epsilon a uniformly random
/// grid action, otherwise the action with the highest predicted value.
struct EpsilonGreedy {
  Matrix action_grid;  // one action per row
  double epsilon = 0.1;
};

/// Heading servo for the surface vehicle: turn-rate command proportional
/// to the heading error toward the goal.
struct LinearHeading {
  double heading_gain = 0.0;
  double gain_lo = -2.0;  // line-search bracket
  double gain_hi = 2.0;
  double goal_x = 50.0;
  double goal_y = 50.0;
};

/// Differential-drive navigation policy built from the range and heading
/// errors toward the goal; the two gains are grid-searched.
struct FourierNav {
  double radial_gain = 0.0;
  double heading_gain = 0.0;
  double radial_lo = 0.0;
  double radial_hi = 2.0;
  double heading_lo = 0.0;
  double heading_hi = 5.0;
  double goal_x = 50.0;
  double goal_y = 50.0;
};

using Policy = std::variant<EpsilonGreedy, LinearHeading, FourierNav>;

/// The action a policy takes in `state`; `value` may be null (no posterior
/// yet), in which case greedy selection degenerates to grid index 0.
Vector policy_action(const Policy& policy, const Vector& state,
                     const ValueFunction* value, std::mt19937_64& rng);

/// Index of the grid action with the highest predicted action value;
/// ties break toward the lowest index, and a null posterior yields 0.
Index greedy_action(const ValueFunction* value, const Vector& state,
                    const Matrix& action_grid);

struct EpisodeResult {
  Matrix inputs;   // one row per trajectory input
  Vector rewards;
  double total_reward = 0.0;
  bool reached_terminal = false;
  std::vector<Vector> states;  // visited states incl. the final one
};

/// Rolls out one episode. The seed drives both the environment noise and
/// the policy's action sampling, so a (policy, seed) pair replays exactly.
EpisodeResult run_episode(Task& env, const Policy& policy, ValueMode mode,
                          const ValueFunction* value, std::uint64_t seed);

/// Improves the policy against a fitted action-value posterior, scoring a
/// candidate by its mean predicted value over the evaluation states. The
/// incumbent is kept unless a candidate is strictly better. EpsilonGreedy
/// is returned unchanged (its greediness lives in action selection), as is
/// any policy when the posterior is over states alone.
Policy greedy_update(const ValueFunction& value, const Policy& policy,
                     ValueMode mode, const std::vector<Vector>& eval_states);

struct AgentConfig {
  ValueMode mode = ValueMode::ActionValue;
  int episodes = 100;
  Index window_episodes = 20;  // most recent episodes kept for fitting
  int reoptimize_every = 5;    // evidence maximization cadence, 0 disables
  double convergence_tolerance = 1e-6;
  int max_retries = 3;
  Index eval_state_count = 64;
  std::uint64_t seed = 0;
};

struct LearningCurvePoint {
  int episode = 0;
  double total_reward = 0.0;
  double wall_ms = 0.0;  // fit + policy-update time, not the rollout
};

struct PolicyIterationResult {
  Policy final_policy;
  std::vector<LearningCurvePoint> curve;
};

/// Alternates rollouts, estimator refits and greedy policy updates until
/// the episode budget is spent or a parametric policy stops moving (change
/// below convergence_tolerance). Episodes whose fit fails are dropped and
/// re-rolled up to max_retries times.
PolicyIterationResult policy_iteration(Task& env, Estimator& estimator,
                                       Policy initial_policy,
                                       const AgentConfig& cfg);

}  // namespace sgptd
