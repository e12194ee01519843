#include <sgptd/envs.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <type_traits>

namespace sgptd {

double wrap_angle(double theta) {
  const double two_pi = 2.0 * std::numbers::pi;
  double t = std::fmod(theta + std::numbers::pi, two_pi);
  if (t <= 0.0) t += two_pi;
  return t - std::numbers::pi;
}

namespace {

double gaussian_noise(double variance, std::mt19937_64& rng) {
  if (variance <= 0.0) return 0.0;
  std::normal_distribution<double> dist(0.0, std::sqrt(variance));
  return dist(rng);
}

}  // namespace

double goal_reward(double distance, const GoalRewardConfig& cfg,
                   std::mt19937_64& rng) {
  const double shaped = (cfg.r_goal - cfg.r_min) * std::exp(-distance / cfg.decay);
  const double base = cfg.inverted ? cfg.r_min - shaped : cfg.r_min + shaped;
  return base + gaussian_noise(cfg.noise_variance, rng);
}

MountainCar::MountainCar(MountainCarConfig cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(seed) {}

Vector MountainCar::initial_state() const {
  Vector s(2);
  s << -0.5, 0.0;
  return s;
}

StepResult MountainCar::step(const Vector& state, const Vector& action) {
  if (state.size() != 2 || action.size() != 1)
    throw InvalidInput("mountain car expects state (s, s_dot), one action");
  const double s = state[0];
  const double a = std::clamp(action[0], -1.0, 1.0);

  double v = state[1] + 0.001 * a - 0.0025 * std::cos(3.0 * s);
  v = std::clamp(v, -0.07, 0.07);
  double s_next = s + v;
  if (s_next < -1.2) {
    s_next = -1.2;
    v = 0.0;  // inelastic left wall
  }
  s_next = std::min(s_next, cfg_.goal_position);

  StepResult out;
  out.next_state.resize(2);
  out.next_state << s_next, v;
  out.terminal = s_next >= cfg_.goal_position;
  out.reward = out.terminal
                   ? 1.0
                   : gaussian_noise(cfg_.reward_noise_variance, rng_) - s;
  return out;
}

Usv::Usv(UsvConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {}

Vector Usv::initial_state() const { return Vector::Zero(4); }

StepResult Usv::step(const Vector& state, const Vector& action) {
  if (state.size() != 4 || action.size() != 1)
    throw InvalidInput("surface vehicle expects state (x, y, th, th_dot)");
  const double omega =
      std::clamp(action[0], -cfg_.max_turn_rate, cfg_.max_turn_rate);
  const double theta = state[2];
  const double theta_dot = state[3];

  StepResult out;
  out.next_state.resize(4);
  out.next_state[0] = state[0] + cfg_.dt * cfg_.speed * std::cos(theta);
  out.next_state[1] = state[1] + cfg_.dt * cfg_.speed * std::sin(theta);
  out.next_state[2] = wrap_angle(theta + cfg_.dt * theta_dot);
  out.next_state[3] = theta_dot + (cfg_.dt / cfg_.lag) * (omega - theta_dot);

  const double dx = cfg_.goal_x - out.next_state[0];
  const double dy = cfg_.goal_y - out.next_state[1];
  const double d = std::hypot(dx, dy);
  out.terminal = d <= cfg_.success_radius;
  out.reward = goal_reward(d, cfg_.reward, rng_);
  return out;
}

Uuv::Uuv(UuvConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {}

Vector Uuv::initial_state() const { return Vector::Zero(5); }

StepResult Uuv::step(const Vector& state, const Vector& action) {
  if (state.size() != 5 || action.size() != 2)
    throw InvalidInput(
        "underwater vehicle expects state (x, y, th, th_dot, speed) and "
        "port/starboard actions");
  const double v_cmd = cfg_.k_v * (action[0] + action[1]);
  const double omega = cfg_.k_w * (action[0] - action[1]);
  const double theta = state[2];
  const double theta_dot = state[3];
  const double speed = state[4] + cfg_.dt * v_cmd;

  StepResult out;
  out.next_state.resize(5);
  out.next_state[0] = state[0] + cfg_.dt * speed * std::cos(theta);
  out.next_state[1] = state[1] + cfg_.dt * speed * std::sin(theta);
  out.next_state[2] = wrap_angle(theta + cfg_.dt * theta_dot);
  out.next_state[3] = theta_dot + (cfg_.dt / cfg_.lag) * (omega - theta_dot);
  out.next_state[4] = speed;

  const double dx = cfg_.goal_x - out.next_state[0];
  const double dy = cfg_.goal_y - out.next_state[1];
  const double d = std::hypot(dx, dy);
  out.terminal = d <= cfg_.success_radius;
  out.reward = goal_reward(d, cfg_.reward, rng_);
  return out;
}

Vector Task::initial_state() const {
  return std::visit([](const auto& env) { return env.initial_state(); },
                    env_);
}

StepResult Task::step(const Vector& state, const Vector& action) {
  return std::visit(
      [&](auto& env) { return env.step(state, action); }, env_);
}

Index Task::state_dim() const {
  return std::visit([](const auto& env) {
    return std::remove_cvref_t<decltype(env)>::kStateDim;
  }, env_);
}

Index Task::action_dim() const {
  return std::visit([](const auto& env) {
    return std::remove_cvref_t<decltype(env)>::kActionDim;
  }, env_);
}

Index Task::max_transitions() const {
  return std::visit(
      [](const auto& env) { return env.max_transitions(); }, env_);
}

void Task::reseed(std::uint64_t seed) {
  std::visit([&](auto& env) { env.reseed(seed); }, env_);
}

}  // namespace sgptd
