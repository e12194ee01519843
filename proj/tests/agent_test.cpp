#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <utility>

#include <sgptd/agent.hpp>

#include "support.hpp"

using namespace sgptd;

namespace {

/// Deterministic stand-in posterior with a caller-chosen mean surface.
class ScriptedValue final : public ValueFunction {
 public:
  explicit ScriptedValue(std::function<double(const Vector&)> fn)
      : fn_(std::move(fn)) {}
  Prediction predict(const Vector& query) const override {
    return {fn_(query), 0.0};
  }

 private:
  std::function<double(const Vector&)> fn_;
};

Matrix bang_bang_grid() {
  Matrix grid(3, 1);
  grid << -1.0, 0.0, 1.0;
  return grid;
}

ModelParams car_params(Index dim) {
  ModelParams params;
  params.kernel.log_signal_variance = std::log(25.0);
  params.kernel.log_length_scales = Vector::Zero(dim);
  params.kernel.log_length_scales[0] = std::log(4.0);
  params.kernel.log_length_scales[1] = std::log(400.0);
  params.noise_variance = 0.1;
  return params;
}

ModelParams boat_params(Index dim) {
  ModelParams params;
  params.kernel.log_signal_variance = std::log(25.0);
  params.kernel.log_length_scales = Vector::Zero(dim);
  params.kernel.log_length_scales[0] = std::log(1.0 / 400.0);
  params.kernel.log_length_scales[1] = std::log(1.0 / 400.0);
  params.noise_variance = 0.1;
  return params;
}

Vector make_state(std::initializer_list<double> values) {
  Vector s(static_cast<Index>(values.size()));
  Index i = 0;
  for (double v : values) s[i++] = v;
  return s;
}

/// ExactEstimator wrapper whose first `failures` fits throw.
class FlakyEstimator final : public Estimator {
 public:
  FlakyEstimator(ModelParams params, int failures)
      : inner_(std::move(params)), failures_(failures) {}

  void fit(const Trajectory& traj) override {
    ++fit_calls_;
    if (failures_ > 0) {
      --failures_;
      throw IllConditionedModel("synthetic fit failure");
    }
    inner_.fit(traj);
  }
  const ValueFunction* value() const override { return inner_.value(); }
  double log_marginal() const override { return inner_.log_marginal(); }
  const ModelParams& params() const override { return inner_.params(); }
  std::string_view name() const override { return "flaky"; }
  int fit_calls() const { return fit_calls_; }

 private:
  ExactEstimator inner_;
  int failures_;
  int fit_calls_ = 0;
};

}  // namespace

TEST_SUITE("agent") {

TEST_CASE("greedy action maximizes the predicted action value") {
  const Matrix grid = bang_bang_grid();
  const Vector state = make_state({0.0, 0.0});

  CHECK(greedy_action(nullptr, state, grid) == 0);

  const ScriptedValue prefer_thrust(
      [](const Vector& q) { return q[q.size() - 1]; });
  CHECK(greedy_action(&prefer_thrust, state, grid) == 2);

  const ScriptedValue prefer_brake(
      [](const Vector& q) { return -q[q.size() - 1]; });
  CHECK(greedy_action(&prefer_brake, state, grid) == 0);

  // Ties break toward the lowest index.
  const ScriptedValue magnitude(
      [](const Vector& q) { return std::abs(q[q.size() - 1]); });
  CHECK(greedy_action(&magnitude, state, grid) == 0);

  CHECK_THROWS_AS(greedy_action(nullptr, state, Matrix(0, 1)), InvalidInput);
}

TEST_CASE("epsilon controls the explore/exploit split") {
  const Vector state = make_state({0.0, 0.0});
  const ScriptedValue prefer_thrust(
      [](const Vector& q) { return q[q.size() - 1]; });
  std::mt19937_64 rng(701);

  const Policy greedy{EpsilonGreedy{bang_bang_grid(), 0.0}};
  for (int t = 0; t < 20; ++t)
    CHECK(policy_action(greedy, state, &prefer_thrust, rng)[0] == 1.0);

  const Policy uniform{EpsilonGreedy{bang_bang_grid(), 1.0}};
  std::set<double> seen;
  for (int t = 0; t < 300; ++t)
    seen.insert(policy_action(uniform, state, nullptr, rng)[0]);
  CHECK(seen == std::set<double>{-1.0, 0.0, 1.0});

  // A null posterior degrades greedy selection to the first grid action.
  CHECK(policy_action(greedy, state, nullptr, rng)[0] == -1.0);
}

TEST_CASE("linear heading policy servos on the heading error") {
  LinearHeading lin;
  lin.heading_gain = 0.8;
  const Vector state = make_state({10.0, 20.0, 0.3, 0.0});
  std::mt19937_64 rng(702);

  const Vector action = policy_action(Policy(lin), state, nullptr, rng);
  REQUIRE(action.size() == 1);
  const double err = wrap_angle(std::atan2(50.0 - 20.0, 50.0 - 10.0) - 0.3);
  CHECK(action[0] == doctest::Approx(0.8 * err).epsilon(1e-12));
}

TEST_CASE("differential nav policy splits thrust across the screws") {
  FourierNav nav;
  nav.radial_gain = 0.3;
  nav.heading_gain = 1.1;
  const Vector state = make_state({0.0, 0.0, 0.0, 0.0, 0.0});
  std::mt19937_64 rng(703);

  const Vector action = policy_action(Policy(nav), state, nullptr, rng);
  REQUIRE(action.size() == 2);
  const double e_r = std::hypot(50.0, 50.0);
  const double e_th = std::atan2(50.0, 50.0);
  const double v = 0.3 * e_r * std::cos(e_th);
  const double omega = 0.3 * std::cos(e_th) * std::sin(e_th) + 1.1 * e_th;
  CHECK(action[0] == doctest::Approx(0.5 * (v + omega)).epsilon(1e-12));
  CHECK(action[1] == doctest::Approx(0.5 * (v - omega)).epsilon(1e-12));
}

TEST_CASE("episodes replay exactly for a fixed seed") {
  Task env{MountainCar({}, 0)};
  const Policy policy{EpsilonGreedy{bang_bang_grid(), 1.0}};

  const EpisodeResult a =
      run_episode(env, policy, ValueMode::ActionValue, nullptr, 99);
  const EpisodeResult b =
      run_episode(env, policy, ValueMode::ActionValue, nullptr, 99);
  CHECK((a.inputs - b.inputs).norm() == 0.0);
  CHECK((a.rewards - b.rewards).norm() == 0.0);
  CHECK(a.total_reward == b.total_reward);
  CHECK(a.reached_terminal == b.reached_terminal);

  const EpisodeResult c =
      run_episode(env, policy, ValueMode::ActionValue, nullptr, 100);
  CHECK(a.rewards.size() + c.rewards.size() > 0);
  CHECK((a.rewards.size() != c.rewards.size() ||
         (a.rewards - c.rewards).norm() > 0.0));
}

TEST_CASE("episode layout pairs each reward with a source input") {
  Task env{MountainCar({}, 0)};
  const Policy policy{EpsilonGreedy{bang_bang_grid(), 1.0}};

  const EpisodeResult av =
      run_episode(env, policy, ValueMode::ActionValue, nullptr, 5);
  CHECK(av.inputs.cols() == 3);  // (s, s_dot, thrust)
  CHECK(av.inputs.rows() == av.rewards.size() + 1);
  CHECK(av.states.size() == static_cast<size_t>(av.rewards.size()) + 1);
  CHECK(av.total_reward == doctest::Approx(av.rewards.sum()).epsilon(1e-12));
  for (Index t = 0; t < av.inputs.rows(); ++t)
    CHECK((av.inputs.row(t).head(2).transpose() -
           av.states[static_cast<size_t>(t)])
              .norm() == 0.0);

  const EpisodeResult sv =
      run_episode(env, policy, ValueMode::StateValue, nullptr, 5);
  CHECK(sv.inputs.cols() == 2);
  CHECK(sv.inputs.rows() == sv.rewards.size() + 1);
}

TEST_CASE("episodes stop at the terminal and respect the budget") {
  MountainCarConfig nearby;
  nearby.goal_position = -0.45;
  nearby.reward_noise_variance = 0.0;
  Task easy{MountainCar(nearby, 0)};
  Matrix thrust_only(1, 1);
  thrust_only << 1.0;
  const Policy policy{EpsilonGreedy{thrust_only, 0.0}};

  const EpisodeResult done =
      run_episode(easy, policy, ValueMode::ActionValue, nullptr, 1);
  CHECK(done.reached_terminal);
  REQUIRE(done.rewards.size() > 0);
  CHECK(done.rewards.size() < MountainCarConfig{}.max_transitions);
  CHECK(done.rewards[done.rewards.size() - 1] == 1.0);

  Task hard{MountainCar({}, 0)};
  const EpisodeResult capped =
      run_episode(hard, policy, ValueMode::ActionValue, nullptr, 1);
  CHECK(!capped.reached_terminal);
  CHECK(capped.rewards.size() == MountainCarConfig{}.max_transitions);
}

TEST_CASE("greedy update leaves discrete and state-value policies alone") {
  const ScriptedValue flat([](const Vector&) { return 0.0; });
  const std::vector<Vector> eval_states{make_state({0.0, 0.0, 0.0, 0.0})};

  const Policy greedy{EpsilonGreedy{bang_bang_grid(), 0.25}};
  const Policy same =
      greedy_update(flat, greedy, ValueMode::ActionValue, eval_states);
  REQUIRE(std::holds_alternative<EpsilonGreedy>(same));
  CHECK(std::get<EpsilonGreedy>(same).epsilon == 0.25);
  CHECK((std::get<EpsilonGreedy>(same).action_grid - bang_bang_grid())
            .norm() == 0.0);

  LinearHeading lin;
  lin.heading_gain = 0.5;
  const Policy frozen =
      greedy_update(flat, Policy(lin), ValueMode::StateValue, eval_states);
  CHECK(std::get<LinearHeading>(frozen).heading_gain == 0.5);

  CHECK_THROWS_AS(
      greedy_update(flat, Policy(lin), ValueMode::ActionValue, {}),
      InvalidInput);
}

TEST_CASE("greedy update finds the best heading gain") {
  // One evaluation state with unit heading error, so the commanded turn
  // rate equals the gain and the surface peaks at gain 0.7.
  LinearHeading lin;
  const double theta = std::atan2(50.0, 50.0) - 1.0;
  const std::vector<Vector> eval_states{make_state({0.0, 0.0, theta, 0.0})};
  const ScriptedValue peaked([](const Vector& q) {
    const double a = q[4];
    return -(a - 0.7) * (a - 0.7);
  });

  const Policy updated =
      greedy_update(peaked, Policy(lin), ValueMode::ActionValue, eval_states);
  const auto& got = std::get<LinearHeading>(updated);
  CHECK(got.heading_gain == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(got.heading_gain >= lin.gain_lo);
  CHECK(got.heading_gain <= lin.gain_hi);

  // A flat surface never displaces the incumbent.
  LinearHeading incumbent;
  incumbent.heading_gain = 0.33;
  const ScriptedValue flat([](const Vector&) { return 1.0; });
  const Policy kept =
      greedy_update(flat, Policy(incumbent), ValueMode::ActionValue,
                    eval_states);
  CHECK(std::get<LinearHeading>(kept).heading_gain == 0.33);
}

TEST_CASE("greedy update grid-searches the two nav gains") {
  FourierNav nav;
  const std::vector<Vector> eval_states{
      make_state({0.0, 0.0, 0.0, 0.0, 0.0})};
  // From the origin the thrust pair is a linear image of the gains; the
  // surface below is maximized near radial gain 0.2 with no turn bias.
  const ScriptedValue target([](const Vector& q) {
    return -(q[5] - 5.0) * (q[5] - 5.0) - (q[6] - 5.0) * (q[6] - 5.0);
  });

  const Policy updated =
      greedy_update(target, Policy(nav), ValueMode::ActionValue, eval_states);
  const auto& got = std::get<FourierNav>(updated);
  CHECK(std::abs(got.radial_gain - 0.2) < 0.02);
  CHECK(got.heading_gain == 0.0);
  CHECK(got.radial_gain >= nav.radial_lo);
  CHECK(got.radial_gain <= nav.radial_hi);
}

TEST_CASE("policy iteration learns through the estimator loop") {
  MountainCarConfig cfg;
  Task env{MountainCar(cfg, 0)};
  ExactEstimator estimator(car_params(3));

  AgentConfig agent;
  agent.episodes = 4;
  agent.window_episodes = 2;
  agent.reoptimize_every = 0;
  agent.seed = 3;
  const Policy policy{EpsilonGreedy{bang_bang_grid(), 0.3}};

  const PolicyIterationResult result =
      policy_iteration(env, estimator, policy, agent);
  REQUIRE(result.curve.size() == 4);
  for (size_t i = 0; i < result.curve.size(); ++i) {
    CHECK(result.curve[i].episode == static_cast<int>(i));
    CHECK(result.curve[i].wall_ms >= 0.0);
  }
  CHECK(std::holds_alternative<EpsilonGreedy>(result.final_policy));
  REQUIRE(estimator.value() != nullptr);
  CHECK(std::isfinite(estimator.log_marginal()));

  // A fresh estimator and the same seed replay the same learning curve.
  ExactEstimator again(car_params(3));
  const PolicyIterationResult replay =
      policy_iteration(env, again, policy, agent);
  REQUIRE(replay.curve.size() == result.curve.size());
  for (size_t i = 0; i < result.curve.size(); ++i)
    CHECK(replay.curve[i].total_reward == result.curve[i].total_reward);
}

TEST_CASE("policy iteration drives the sparse and low-rank estimators") {
  Task env{MountainCar({}, 0)};
  const Policy policy{EpsilonGreedy{bang_bang_grid(), 0.3}};

  OptimConfig optim;
  optim.max_iterations = 3;
  optim.restarts = 1;
  SparseEstimator sparse(car_params(3), 5, optim, 7);
  AgentConfig agent;
  agent.episodes = 2;
  agent.window_episodes = 2;
  agent.reoptimize_every = 2;
  agent.seed = 11;
  const PolicyIterationResult sp =
      policy_iteration(env, sparse, policy, agent);
  CHECK(sp.curve.size() == 2);
  REQUIRE(sparse.pseudo() != nullptr);
  CHECK(sparse.pseudo()->count() == 5);
  CHECK(sparse.value() != nullptr);

  LowRankEstimator lowrank(car_params(3), 0.05);
  agent.episodes = 3;
  agent.reoptimize_every = 0;
  const PolicyIterationResult lr =
      policy_iteration(env, lowrank, policy, agent);
  CHECK(lr.curve.size() == 3);
  CHECK(lowrank.retention_fraction() > 0.0);
  CHECK(lowrank.retention_fraction() <= 1.0);
}

TEST_CASE("a parametric policy converges when its gains stop moving") {
  // With a state-value posterior there is nothing to improve against, so
  // the gain freezes immediately and the tolerance stops the loop.
  Task env{Usv({}, 0)};
  ExactEstimator estimator(boat_params(4));
  AgentConfig agent;
  agent.mode = ValueMode::StateValue;
  agent.episodes = 5;
  agent.window_episodes = 1;
  agent.reoptimize_every = 0;
  agent.seed = 2;

  const PolicyIterationResult stopped =
      policy_iteration(env, estimator, Policy(LinearHeading{}), agent);
  CHECK(stopped.curve.size() == 1);

  ExactEstimator fresh(boat_params(4));
  agent.convergence_tolerance = 0.0;  // disabled
  const PolicyIterationResult full =
      policy_iteration(env, fresh, Policy(LinearHeading{}), agent);
  CHECK(full.curve.size() == 5);
}

TEST_CASE("policy iteration improves a heading policy in place") {
  Task env{Usv({}, 0)};
  ExactEstimator estimator(boat_params(5));
  AgentConfig agent;
  agent.mode = ValueMode::ActionValue;
  agent.episodes = 2;
  agent.window_episodes = 2;
  agent.reoptimize_every = 0;
  agent.convergence_tolerance = 0.0;
  agent.eval_state_count = 16;
  agent.seed = 4;

  const PolicyIterationResult result =
      policy_iteration(env, estimator, Policy(LinearHeading{}), agent);
  CHECK(result.curve.size() == 2);
  const auto& lin = std::get<LinearHeading>(result.final_policy);
  CHECK(lin.heading_gain >= lin.gain_lo);
  CHECK(lin.heading_gain <= lin.gain_hi);
}

TEST_CASE("failed fits are retried with fresh episodes") {
  Task env{MountainCar({}, 0)};
  const Policy policy{EpsilonGreedy{bang_bang_grid(), 0.5}};
  AgentConfig agent;
  agent.episodes = 3;
  agent.window_episodes = 2;
  agent.reoptimize_every = 0;
  agent.max_retries = 3;
  agent.seed = 13;

  FlakyEstimator flaky(car_params(3), 2);
  const PolicyIterationResult result =
      policy_iteration(env, flaky, policy, agent);
  CHECK(result.curve.size() == 3);
  CHECK(flaky.fit_calls() == 3 + 2);

  FlakyEstimator hopeless(car_params(3), 10);
  CHECK_THROWS_AS(policy_iteration(env, hopeless, policy, agent),
                  IllConditionedModel);
}

TEST_CASE("policy iteration validates its budget") {
  Task env{MountainCar({}, 0)};
  ExactEstimator estimator(car_params(3));
  const Policy policy{EpsilonGreedy{bang_bang_grid(), 0.5}};

  AgentConfig agent;
  agent.episodes = 0;
  const PolicyIterationResult empty =
      policy_iteration(env, estimator, policy, agent);
  CHECK(empty.curve.empty());
  CHECK(estimator.value() == nullptr);

  agent.episodes = -1;
  CHECK_THROWS_AS(policy_iteration(env, estimator, policy, agent),
                  InvalidInput);
  agent.episodes = 1;
  agent.window_episodes = 0;
  CHECK_THROWS_AS(policy_iteration(env, estimator, policy, agent),
                  InvalidInput);
}

}  // TEST_SUITE
