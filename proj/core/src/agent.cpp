#include <sgptd/agent.hpp>

#include <chrono>
#include <cmath>
#include <utility>

namespace sgptd {

namespace {

double heading_error(const Vector& state, double goal_x, double goal_y) {
  return wrap_angle(std::atan2(goal_y - state[1], goal_x - state[0]) -
                    state[2]);
}

Vector deterministic_action(const Policy& policy, const Vector& state) {
  if (const auto* lin = std::get_if<LinearHeading>(&policy)) {
    Vector a(1);
    a[0] = lin->heading_gain * heading_error(state, lin->goal_x, lin->goal_y);
    return a;
  }
  const auto& nav = std::get<FourierNav>(policy);
  const double e_r = std::hypot(nav.goal_x - state[0], nav.goal_y - state[1]);
  const double e_th = heading_error(state, nav.goal_x, nav.goal_y);
  const double v = nav.radial_gain * e_r * std::cos(e_th);
  const double omega = nav.radial_gain * std::cos(e_th) * std::sin(e_th) +
                       nav.heading_gain * e_th;
  Vector a(2);
  a << 0.5 * (v + omega), 0.5 * (v - omega);  // port, starboard
  return a;
}

Vector make_input(const Vector& state, const Vector& action, ValueMode mode) {
  if (mode == ValueMode::StateValue) return state;
  Vector input(state.size() + action.size());
  input << state, action;
  return input;
}

}  // namespace

Index greedy_action(const ValueFunction* value, const Vector& state,
                    const Matrix& action_grid) {
  if (action_grid.rows() == 0)
    throw InvalidInput("action grid must not be empty");
  if (value == nullptr) return 0;
  Index best = 0;
  double best_mean = value->predict_mean(
      make_input(state, action_grid.row(0).transpose(), ValueMode::ActionValue));
  for (Index i = 1; i < action_grid.rows(); ++i) {
    const double mean = value->predict_mean(make_input(
        state, action_grid.row(i).transpose(), ValueMode::ActionValue));
    if (mean > best_mean) {
      best_mean = mean;
      best = i;
    }
  }
  return best;
}

Vector policy_action(const Policy& policy, const Vector& state,
                     const ValueFunction* value, std::mt19937_64& rng) {
  if (const auto* eg = std::get_if<EpsilonGreedy>(&policy)) {
    if (eg->action_grid.rows() == 0)
      throw InvalidInput("action grid must not be empty");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    Index pick;
    if (coin(rng) < eg->epsilon) {
      std::uniform_int_distribution<Index> uniform(0,
                                                   eg->action_grid.rows() - 1);
      pick = uniform(rng);
    } else {
      pick = greedy_action(value, state, eg->action_grid);
    }
    return eg->action_grid.row(pick).transpose();
  }
  return deterministic_action(policy, state);
}

EpisodeResult run_episode(Task& env, const Policy& policy, ValueMode mode,
                          const ValueFunction* value, std::uint64_t seed) {
  env.reseed(mix_seed(seed, 1));
  std::mt19937_64 rng(mix_seed(seed, 2));

  const Index budget = env.max_transitions();
  EpisodeResult out;
  out.states.reserve(static_cast<size_t>(budget) + 1);

  Vector state = env.initial_state();
  Vector action = policy_action(policy, state, value, rng);
  out.states.push_back(state);

  const Index input_dim = state.size() + (mode == ValueMode::ActionValue
                                              ? env.action_dim()
                                              : 0);
  out.inputs.resize(budget + 1, input_dim);
  out.rewards.resize(budget);

  Index t = 0;
  for (; t < budget; ++t) {
    StepResult step = env.step(state, action);
    out.inputs.row(t) = make_input(state, action, mode).transpose();
    out.rewards[t] = step.reward;
    out.total_reward += step.reward;
    out.states.push_back(step.next_state);

    state = std::move(step.next_state);
    action = policy_action(policy, state, value, rng);
    if (step.terminal) {
      out.reached_terminal = true;
      ++t;
      break;
    }
  }
  out.inputs.row(t) = make_input(state, action, mode).transpose();
  out.inputs.conservativeResize(t + 1, input_dim);
  out.rewards.conservativeResize(t);
  return out;
}

namespace {

// Mean predicted value of following the candidate policy for one action
// choice at each evaluation state.
double policy_score(const ValueFunction& value, const Policy& policy,
                    const std::vector<Vector>& eval_states) {
  double total = 0.0;
  for (const Vector& s : eval_states)
    total += value.predict_mean(
        make_input(s, deterministic_action(policy, s), ValueMode::ActionValue));
  return total / static_cast<double>(eval_states.size());
}

LinearHeading update_linear(const ValueFunction& value, LinearHeading policy,
                            const std::vector<Vector>& eval_states) {
  auto score = [&](double gain) {
    LinearHeading candidate = policy;
    candidate.heading_gain = gain;
    return policy_score(value, Policy(candidate), eval_states);
  };

  const int coarse = 41;
  double best_gain = policy.heading_gain;
  double best = score(best_gain);
  const double span = policy.gain_hi - policy.gain_lo;
  double grid_best = policy.gain_lo;
  double grid_val = score(grid_best);
  for (int i = 1; i < coarse; ++i) {
    const double g =
        policy.gain_lo + span * static_cast<double>(i) / (coarse - 1);
    const double v = score(g);
    if (v > grid_val) {
      grid_val = v;
      grid_best = g;
    }
  }

  // Golden-section refinement around the best coarse cell.
  const double h = span / (coarse - 1);
  double lo = std::max(policy.gain_lo, grid_best - h);
  double hi = std::min(policy.gain_hi, grid_best + h);
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - ratio * (hi - lo);
  double x2 = lo + ratio * (hi - lo);
  double f1 = score(x1);
  double f2 = score(x2);
  for (int it = 0; it < 40 && hi - lo > 1e-10; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + ratio * (hi - lo);
      f2 = score(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - ratio * (hi - lo);
      f1 = score(x1);
    }
  }
  const double refined = 0.5 * (lo + hi);
  const double refined_val = score(refined);
  if (refined_val > grid_val) {
    grid_val = refined_val;
    grid_best = refined;
  }
  if (grid_val > best) policy.heading_gain = grid_best;
  return policy;
}

FourierNav update_fourier(const ValueFunction& value, FourierNav policy,
                          const std::vector<Vector>& eval_states) {
  auto score = [&](double kr, double kt) {
    FourierNav candidate = policy;
    candidate.radial_gain = kr;
    candidate.heading_gain = kt;
    return policy_score(value, Policy(candidate), eval_states);
  };

  const int cells = 100;
  double best = score(policy.radial_gain, policy.heading_gain);
  double best_kr = policy.radial_gain;
  double best_kt = policy.heading_gain;
  bool improved = false;
  for (int i = 0; i < cells; ++i) {
    const double kr = policy.radial_lo +
                      (policy.radial_hi - policy.radial_lo) *
                          static_cast<double>(i) / (cells - 1);
    for (int j = 0; j < cells; ++j) {
      const double kt = policy.heading_lo +
                        (policy.heading_hi - policy.heading_lo) *
                            static_cast<double>(j) / (cells - 1);
      const double v = score(kr, kt);
      if (v > best) {
        best = v;
        best_kr = kr;
        best_kt = kt;
        improved = true;
      }
    }
  }
  if (improved) {
    policy.radial_gain = best_kr;
    policy.heading_gain = best_kt;
  }
  return policy;
}

Vector policy_parameters(const Policy& policy) {
  if (const auto* lin = std::get_if<LinearHeading>(&policy)) {
    Vector p(1);
    p[0] = lin->heading_gain;
    return p;
  }
  if (const auto* nav = std::get_if<FourierNav>(&policy)) {
    Vector p(2);
    p << nav->radial_gain, nav->heading_gain;
    return p;
  }
  return Vector();
}

}  // namespace

Policy greedy_update(const ValueFunction& value, const Policy& policy,
                     ValueMode mode, const std::vector<Vector>& eval_states) {
  if (std::holds_alternative<EpsilonGreedy>(policy)) return policy;
  if (mode == ValueMode::StateValue) return policy;
  if (eval_states.empty())
    throw InvalidInput("policy update needs a non-empty evaluation set");
  if (const auto* lin = std::get_if<LinearHeading>(&policy))
    return update_linear(value, *lin, eval_states);
  return update_fourier(value, std::get<FourierNav>(policy), eval_states);
}

PolicyIterationResult policy_iteration(Task& env, Estimator& estimator,
                                       Policy initial_policy,
                                       const AgentConfig& cfg) {
  using Clock = std::chrono::steady_clock;
  if (cfg.episodes < 0) throw InvalidInput("episode budget must be >= 0");
  if (cfg.window_episodes < 1)
    throw InvalidInput("fit window must keep at least one episode");

  PolicyIterationResult result;
  result.final_policy = std::move(initial_policy);
  if (cfg.episodes == 0) return result;

  std::vector<std::pair<Matrix, Vector>> kept;
  std::vector<Vector> state_pool;
  std::vector<Vector> eval_states;
  const bool parametric =
      !std::holds_alternative<EpsilonGreedy>(result.final_policy);

  auto build_window = [&]() {
    Trajectory window;
    const size_t keep = static_cast<size_t>(cfg.window_episodes);
    const size_t first = kept.size() > keep ? kept.size() - keep : 0;
    for (size_t e = first; e < kept.size(); ++e)
      window.append_episode(kept[e].first, kept[e].second);
    return window;
  };

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    bool done = false;
    for (int attempt = 0; attempt <= cfg.max_retries && !done; ++attempt) {
      const std::uint64_t ep_seed = mix_seed(
          cfg.seed, static_cast<std::uint64_t>(ep) * 16 +
                        static_cast<std::uint64_t>(attempt));
      EpisodeResult roll = run_episode(env, result.final_policy, cfg.mode,
                                       estimator.value(), ep_seed);

      kept.emplace_back(roll.inputs, roll.rewards);
      const Trajectory window = build_window();
      const auto t0 = Clock::now();
      try {
        if (cfg.reoptimize_every > 0 &&
            (ep + 1) % cfg.reoptimize_every == 0)
          estimator.reoptimize(window);
        estimator.fit(window);
      } catch (const std::exception&) {
        kept.pop_back();  // drop the episode and re-roll
        if (attempt == cfg.max_retries) throw;
        continue;
      }

      for (const Vector& s : roll.states)
        if (state_pool.size() < 10000) state_pool.push_back(s);

      const Vector before = policy_parameters(result.final_policy);
      if (parametric && cfg.mode == ValueMode::ActionValue &&
          estimator.value() != nullptr) {
        if (eval_states.empty()) {
          std::mt19937_64 rng(mix_seed(cfg.seed, 0xE7A1));
          std::uniform_int_distribution<size_t> pick(0,
                                                     state_pool.size() - 1);
          for (Index i = 0; i < cfg.eval_state_count; ++i)
            eval_states.push_back(state_pool[pick(rng)]);
        }
        result.final_policy = greedy_update(
            *estimator.value(), result.final_policy, cfg.mode, eval_states);
      }
      const double wall_ms =
          std::chrono::duration<double, std::milli>(Clock::now() - t0)
              .count();
      result.curve.push_back({ep, roll.total_reward, wall_ms});

      if (parametric && before.size() > 0) {
        const Vector after = policy_parameters(result.final_policy);
        if ((after - before).norm() < cfg.convergence_tolerance)
          return result;
      }
      done = true;
    }
  }
  return result;
}

}  // namespace sgptd
