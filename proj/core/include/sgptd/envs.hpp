#pragma once

#include <cstdint>
#include <numbers>
#include <random>
#include <variant>

#include <sgptd/common.hpp>

namespace sgptd {

struct StepResult {
  Vector next_state;
  double reward = 0.0;
  bool terminal = false;
};

/// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

/// Distance-shaped goal reward: R_min + (R_goal - R_min) exp(-d / decay)
/// plus Gaussian noise, so the goal is the global maximum and rewards decay
/// to R_min far away. `inverted` selects the variant with the sign of the
/// exponential term flipped, which turns the goal into the minimum; it is
/// kept selectable for side-by-side comparisons.
struct GoalRewardConfig {
  double r_min = -1.0;
  double r_goal = 10.0;
  double decay = 10.0;
  double noise_variance = 1e-3;
  bool inverted = false;
};

double goal_reward(double distance, const GoalRewardConfig& cfg,
                   std::mt19937_64& rng);

/// Classic underpowered-car-on-a-hill task. State (s, s_dot); one action
/// in [-1, 1]. The paper-style reward is noise - s until the crest is
/// reached, which pays 1 and terminates.
struct MountainCarConfig {
  double goal_position = 0.6;
  double reward_noise_variance = 1e-3;
  Index max_transitions = 50;
};

class MountainCar {
 public:
  static constexpr Index kStateDim = 2;
  static constexpr Index kActionDim = 1;

  explicit MountainCar(MountainCarConfig cfg = {}, std::uint64_t seed = 0);

  Vector initial_state() const;  // (-0.5, 0)
  StepResult step(const Vector& state, const Vector& action);
  Index max_transitions() const { return cfg_.max_transitions; }
  void reseed(std::uint64_t seed) { rng_.seed(seed); }

 private:
  MountainCarConfig cfg_;
  std::mt19937_64 rng_;
};

/// Planar surface vehicle at constant speed. State (x, y, heading,
/// heading rate); the turn-rate command is clamped and realized through a
/// first-order lag of `lag` steps.
struct UsvConfig {
  double dt = 1.0;
  double lag = 3.0;
  double speed = 3.0;
  double max_turn_rate = 15.0 * std::numbers::pi / 180.0;
  double goal_x = 50.0;
  double goal_y = 50.0;
  double success_radius = 10.0;
  Index max_transitions = 100;
  GoalRewardConfig reward;
};

class Usv {
 public:
  static constexpr Index kStateDim = 4;
  static constexpr Index kActionDim = 1;

  explicit Usv(UsvConfig cfg = {}, std::uint64_t seed = 0);

  Vector initial_state() const;  // origin, heading east, at rest
  StepResult step(const Vector& state, const Vector& action);
  Index max_transitions() const { return cfg_.max_transitions; }
  void reseed(std::uint64_t seed) { rng_.seed(seed); }
  const UsvConfig& config() const { return cfg_; }

 private:
  UsvConfig cfg_;
  std::mt19937_64 rng_;
};

/// Differential-drive underwater vehicle: port/starboard actions command
/// forward acceleration and turn rate; speed integrates over time. State
/// (x, y, heading, heading rate, speed).
struct UuvConfig {
  double dt = 1.0;
  double lag = 3.0;
  double k_v = 1.0;
  double k_w = 1.0;
  double goal_x = 50.0;
  double goal_y = 50.0;
  double success_radius = 10.0;
  Index max_transitions = 200;
  GoalRewardConfig reward;
};

class Uuv {
 public:
  static constexpr Index kStateDim = 5;
  static constexpr Index kActionDim = 2;

  explicit Uuv(UuvConfig cfg = {}, std::uint64_t seed = 0);

  Vector initial_state() const;  // origin, at rest
  StepResult step(const Vector& state, const Vector& action);
  Index max_transitions() const { return cfg_.max_transitions; }
  void reseed(std::uint64_t seed) { rng_.seed(seed); }
  const UuvConfig& config() const { return cfg_; }

 private:
  UuvConfig cfg_;
  std::mt19937_64 rng_;
};

/// Uniform handle over the three tasks.
class Task {
 public:
  explicit Task(MountainCar env) : env_(std::move(env)) {}
  explicit Task(Usv env) : env_(std::move(env)) {}
  explicit Task(Uuv env) : env_(std::move(env)) {}

  Vector initial_state() const;
  StepResult step(const Vector& state, const Vector& action);
  Index state_dim() const;
  Index action_dim() const;
  Index max_transitions() const;
  void reseed(std::uint64_t seed);

 private:
  std::variant<MountainCar, Usv, Uuv> env_;
};

}  // namespace sgptd
