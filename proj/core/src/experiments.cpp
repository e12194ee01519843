#include <sgptd/experiments.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include <sgptd/exact_gp.hpp>
#include <sgptd/hyperopt.hpp>
#include <sgptd/lowrank.hpp>
#include <sgptd/spgp.hpp>

namespace sgptd {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0)
      .count();
}

std::string task_name(TaskKind task) {
  switch (task) {
    case TaskKind::MountainCar: return "mountain_car";
    case TaskKind::Usv: return "usv";
    case TaskKind::Uuv: return "uuv";
    case TaskKind::SyntheticPrior: return "synthetic_prior";
  }
  return "?";
}

TaskKind parse_task(const std::string& name) {
  if (name == "mountain_car") return TaskKind::MountainCar;
  if (name == "usv") return TaskKind::Usv;
  if (name == "uuv") return TaskKind::Uuv;
  if (name == "synthetic_prior") return TaskKind::SyntheticPrior;
  throw InvalidInput("unknown task \"" + name + "\"");
}

std::string estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Exact: return "exact";
    case EstimatorKind::Sparse: return "sparse";
    case EstimatorKind::LowRank: return "lowrank";
  }
  return "?";
}

EstimatorKind parse_estimator(const std::string& name) {
  if (name == "exact") return EstimatorKind::Exact;
  if (name == "sparse") return EstimatorKind::Sparse;
  if (name == "lowrank") return EstimatorKind::LowRank;
  throw InvalidInput("unknown estimator \"" + name + "\"");
}

std::string mode_name(ValueMode mode) {
  return mode == ValueMode::ActionValue ? "action_value" : "state_value";
}

ValueMode parse_mode(const std::string& name) {
  if (name == "action_value") return ValueMode::ActionValue;
  if (name == "state_value") return ValueMode::StateValue;
  throw InvalidInput("unknown value mode \"" + name + "\"");
}

void expect_keys(const json& obj, std::initializer_list<const char*> keys,
                 const char* where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool known = false;
    for (const char* k : keys)
      if (key == k) {
        known = true;
        break;
      }
    if (!known)
      throw InvalidInput(std::string("unknown key \"") + key + "\" in " +
                         where);
  }
}

template <typename T>
void read_into(const json& obj, const char* key, T& value) {
  if (obj.contains(key)) value = obj.at(key).get<T>();
}

void read_reward(const json& obj, GoalRewardConfig& reward) {
  expect_keys(obj,
              {"r_min", "r_goal", "decay", "noise_variance",
               "inverted_goal_reward"},
              "env.reward");
  read_into(obj, "r_min", reward.r_min);
  read_into(obj, "r_goal", reward.r_goal);
  read_into(obj, "decay", reward.decay);
  read_into(obj, "noise_variance", reward.noise_variance);
  read_into(obj, "inverted_goal_reward", reward.inverted);
}

json reward_json(const GoalRewardConfig& reward) {
  return {{"r_min", reward.r_min},
          {"r_goal", reward.r_goal},
          {"decay", reward.decay},
          {"noise_variance", reward.noise_variance},
          {"inverted_goal_reward", reward.inverted}};
}

json params_to_json(const ModelParams& params) {
  json ls = json::array();
  for (Index d = 0; d < params.kernel.dim(); ++d)
    ls.push_back(params.kernel.log_length_scales[d]);
  return {{"log_signal_variance", params.kernel.log_signal_variance},
          {"log_length_scales", std::move(ls)},
          {"noise_variance", params.noise_variance},
          {"discount", params.discount},
          {"terminal_value_zero", params.terminal_value_zero}};
}

ModelParams params_from_json(const json& obj) {
  expect_keys(obj,
              {"log_signal_variance", "log_length_scales", "noise_variance",
               "discount", "terminal_value_zero"},
              "model");
  ModelParams params;
  read_into(obj, "log_signal_variance", params.kernel.log_signal_variance);
  if (obj.contains("log_length_scales")) {
    const auto& ls = obj.at("log_length_scales");
    params.kernel.log_length_scales.resize(static_cast<Index>(ls.size()));
    for (Index d = 0; d < params.kernel.log_length_scales.size(); ++d)
      params.kernel.log_length_scales[d] =
          ls.at(static_cast<size_t>(d)).get<double>();
  }
  read_into(obj, "noise_variance", params.noise_variance);
  read_into(obj, "discount", params.discount);
  read_into(obj, "terminal_value_zero", params.terminal_value_zero);
  return params;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

void write_json_file(const json& doc, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw InvalidInput("cannot write " + file.string());
  out << doc.dump(2) << '\n';
}

}  // namespace

void ExperimentConfig::validate() const {
  if (estimator == EstimatorKind::Sparse && support_count < 1)
    throw InvalidInput("sparse estimator needs at least one support point");
  if (estimator == EstimatorKind::LowRank && !(nu > 0.0))
    throw InvalidInput("low-rank estimator needs a positive threshold");
  if (episodes < 0) throw InvalidInput("episode budget must be >= 0");
  if (seeds.empty()) throw InvalidInput("need at least one seed");
  if (synthetic.min_separation < 0.0 ||
      !std::isfinite(synthetic.min_separation))
    throw InvalidInput("separation must be finite and non-negative");
  optimizer.validate();
  if (model) model->validate();
}

Index ExperimentConfig::input_dim() const {
  Index state = 0, action = 0;
  switch (task) {
    case TaskKind::MountainCar:
      state = MountainCar::kStateDim;
      action = MountainCar::kActionDim;
      break;
    case TaskKind::Usv:
      state = Usv::kStateDim;
      action = Usv::kActionDim;
      break;
    case TaskKind::Uuv:
      state = Uuv::kStateDim;
      action = Uuv::kActionDim;
      break;
    case TaskKind::SyntheticPrior:
      return synthetic.dim;
  }
  return mode == ValueMode::ActionValue ? state + action : state;
}

ModelParams ExperimentConfig::resolved_model() const {
  if (model) {
    if (model->kernel.dim() != input_dim())
      throw InvalidInput("model length-scale count does not match the task");
    return *model;
  }
  ModelParams params;
  params.discount = 0.9;
  const Index dim = input_dim();
  params.kernel.log_length_scales = Vector::Zero(dim);
  switch (task) {
    case TaskKind::MountainCar: {
      // position, velocity (narrow range), action
      params.kernel.log_signal_variance = std::log(25.0);
      params.kernel.log_length_scales[0] = std::log(4.0);
      params.kernel.log_length_scales[1] = std::log(400.0);
      params.noise_variance = 0.1;
      break;
    }
    case TaskKind::Usv: {
      // x, y, heading, heading rate, turn command
      params.kernel.log_signal_variance = std::log(25.0);
      params.kernel.log_length_scales[0] = std::log(1.0 / 400.0);
      params.kernel.log_length_scales[1] = std::log(1.0 / 400.0);
      params.kernel.log_length_scales[3] = std::log(25.0);
      if (mode == ValueMode::ActionValue)
        params.kernel.log_length_scales[4] = std::log(16.0);
      params.noise_variance = 0.1;
      break;
    }
    case TaskKind::Uuv: {
      // x, y, heading, heading rate, speed, port, starboard
      params.kernel.log_signal_variance = std::log(25.0);
      params.kernel.log_length_scales[0] = std::log(1.0 / 400.0);
      params.kernel.log_length_scales[1] = std::log(1.0 / 400.0);
      params.kernel.log_length_scales[3] = std::log(25.0);
      params.kernel.log_length_scales[4] = std::log(1.0 / 9.0);
      params.noise_variance = 0.1;
      break;
    }
    case TaskKind::SyntheticPrior: {
      params.noise_variance = 0.01;
      break;
    }
  }
  return params;
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& err) {
    throw InvalidInput(std::string("config parse error: ") + err.what());
  }
  if (!doc.is_object()) throw InvalidInput("config must be a JSON object");
  expect_keys(doc,
              {"task", "estimator", "mode", "M", "nu", "episodes", "seeds",
               "optimize_on_fit", "landscape", "optimizer", "model", "env",
               "agent", "synthetic", "retention", "bench", "out_dir"},
              "config");

  ExperimentConfig cfg;
  try {
    if (doc.contains("task")) cfg.task = parse_task(doc.at("task"));
    if (doc.contains("estimator"))
      cfg.estimator = parse_estimator(doc.at("estimator"));
    if (doc.contains("mode")) cfg.mode = parse_mode(doc.at("mode"));
    read_into(doc, "M", cfg.support_count);
    read_into(doc, "nu", cfg.nu);
    read_into(doc, "episodes", cfg.episodes);
    if (doc.contains("seeds"))
      cfg.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    read_into(doc, "optimize_on_fit", cfg.optimize_on_fit);
    read_into(doc, "landscape", cfg.landscape);
    if (doc.contains("out_dir"))
      cfg.out_dir = doc.at("out_dir").get<std::string>();

    if (doc.contains("optimizer")) {
      const json& opt = doc.at("optimizer");
      expect_keys(opt,
                  {"max_iterations", "gradient_tolerance",
                   "regularization_weight", "restarts", "rng_seed", "scope"},
                  "optimizer");
      read_into(opt, "max_iterations", cfg.optimizer.max_iterations);
      read_into(opt, "gradient_tolerance", cfg.optimizer.gradient_tolerance);
      read_into(opt, "regularization_weight",
                cfg.optimizer.regularization_weight);
      read_into(opt, "restarts", cfg.optimizer.restarts);
      read_into(opt, "rng_seed", cfg.optimizer.rng_seed);
      if (opt.contains("scope")) {
        const std::string scope = opt.at("scope");
        if (scope == "all")
          cfg.optimizer.scope = OptimScope::All;
        else if (scope == "pseudo_only")
          cfg.optimizer.scope = OptimScope::PseudoOnly;
        else
          throw InvalidInput("unknown optimizer scope \"" + scope + "\"");
      }
    }

    if (doc.contains("model") && !doc.at("model").is_null())
      cfg.model = params_from_json(doc.at("model"));

    if (doc.contains("env")) {
      const json& env = doc.at("env");
      expect_keys(env, {"mountain_car", "usv", "uuv", "reward"}, "env");
      if (env.contains("mountain_car")) {
        const json& mc = env.at("mountain_car");
        expect_keys(mc,
                    {"goal_position", "reward_noise_variance",
                     "max_transitions"},
                    "env.mountain_car");
        read_into(mc, "goal_position", cfg.mountain_car.goal_position);
        read_into(mc, "reward_noise_variance",
                  cfg.mountain_car.reward_noise_variance);
        read_into(mc, "max_transitions", cfg.mountain_car.max_transitions);
      }
      if (env.contains("usv")) {
        const json& usv = env.at("usv");
        expect_keys(usv,
                    {"dt", "lag", "speed", "max_turn_rate", "goal",
                     "success_radius", "max_transitions"},
                    "env.usv");
        read_into(usv, "dt", cfg.usv.dt);
        read_into(usv, "lag", cfg.usv.lag);
        read_into(usv, "speed", cfg.usv.speed);
        read_into(usv, "max_turn_rate", cfg.usv.max_turn_rate);
        if (usv.contains("goal")) {
          cfg.usv.goal_x = usv.at("goal").at(0).get<double>();
          cfg.usv.goal_y = usv.at("goal").at(1).get<double>();
        }
        read_into(usv, "success_radius", cfg.usv.success_radius);
        read_into(usv, "max_transitions", cfg.usv.max_transitions);
      }
      if (env.contains("uuv")) {
        const json& uuv = env.at("uuv");
        expect_keys(uuv,
                    {"dt", "lag", "k_v", "k_w", "goal", "success_radius",
                     "max_transitions"},
                    "env.uuv");
        read_into(uuv, "dt", cfg.uuv.dt);
        read_into(uuv, "lag", cfg.uuv.lag);
        read_into(uuv, "k_v", cfg.uuv.k_v);
        read_into(uuv, "k_w", cfg.uuv.k_w);
        if (uuv.contains("goal")) {
          cfg.uuv.goal_x = uuv.at("goal").at(0).get<double>();
          cfg.uuv.goal_y = uuv.at("goal").at(1).get<double>();
        }
        read_into(uuv, "success_radius", cfg.uuv.success_radius);
        read_into(uuv, "max_transitions", cfg.uuv.max_transitions);
      }
      if (env.contains("reward")) {
        read_reward(env.at("reward"), cfg.usv.reward);
        read_reward(env.at("reward"), cfg.uuv.reward);
      }
    }

    if (doc.contains("agent")) {
      const json& agent = doc.at("agent");
      expect_keys(agent,
                  {"epsilon", "window_episodes", "reoptimize_every",
                   "eval_state_count"},
                  "agent");
      read_into(agent, "epsilon", cfg.epsilon);
      read_into(agent, "window_episodes", cfg.window_episodes);
      read_into(agent, "reoptimize_every", cfg.reoptimize_every);
      read_into(agent, "eval_state_count", cfg.eval_state_count);
    }

    if (doc.contains("synthetic")) {
      const json& syn = doc.at("synthetic");
      expect_keys(syn,
                  {"transitions", "dim", "input_lo", "input_hi",
                   "min_separation", "subset_sizes", "subsets_per_cell"},
                  "synthetic");
      read_into(syn, "transitions", cfg.synthetic.transitions);
      read_into(syn, "dim", cfg.synthetic.dim);
      read_into(syn, "input_lo", cfg.synthetic.input_lo);
      read_into(syn, "input_hi", cfg.synthetic.input_hi);
      read_into(syn, "min_separation", cfg.synthetic.min_separation);
      if (syn.contains("subset_sizes"))
        cfg.synthetic.subset_sizes =
            syn.at("subset_sizes").get<std::vector<Index>>();
      read_into(syn, "subsets_per_cell", cfg.synthetic.subsets_per_cell);
    }

    if (doc.contains("retention")) {
      const json& ret = doc.at("retention");
      expect_keys(ret,
                  {"nu_min", "nu_max", "nu_count", "trajectories_per_source"},
                  "retention");
      read_into(ret, "nu_min", cfg.retention.nu_min);
      read_into(ret, "nu_max", cfg.retention.nu_max);
      read_into(ret, "nu_count", cfg.retention.nu_count);
      read_into(ret, "trajectories_per_source",
                cfg.retention.trajectories_per_source);
    }

    if (doc.contains("bench")) {
      const json& bench = doc.at("bench");
      expect_keys(bench,
                  {"transition_counts", "support_counts", "repetitions"},
                  "bench");
      if (bench.contains("transition_counts"))
        cfg.bench.transition_counts =
            bench.at("transition_counts").get<std::vector<Index>>();
      if (bench.contains("support_counts"))
        cfg.bench.support_counts =
            bench.at("support_counts").get<std::vector<Index>>();
      read_into(bench, "repetitions", cfg.bench.repetitions);
    }
  } catch (const json::exception& err) {
    throw InvalidInput(std::string("config field error: ") + err.what());
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw InvalidInput("cannot open config file " + file.string());
  std::ostringstream text;
  text << in.rdbuf();
  return from_json_text(text.str());
}

std::string ExperimentConfig::canonical_json() const {
  json doc;
  doc["task"] = task_name(task);
  doc["estimator"] = estimator_name(estimator);
  doc["mode"] = mode_name(mode);
  doc["M"] = support_count;
  doc["nu"] = nu;
  doc["episodes"] = episodes;
  doc["seeds"] = seeds;
  doc["optimize_on_fit"] = optimize_on_fit;
  doc["landscape"] = landscape;
  doc["out_dir"] = out_dir.string();
  doc["optimizer"] = {
      {"max_iterations", optimizer.max_iterations},
      {"gradient_tolerance", optimizer.gradient_tolerance},
      {"regularization_weight", optimizer.regularization_weight},
      {"restarts", optimizer.restarts},
      {"rng_seed", optimizer.rng_seed},
      {"scope",
       optimizer.scope == OptimScope::All ? "all" : "pseudo_only"}};
  doc["model"] = model ? params_to_json(*model) : json(nullptr);
  doc["env"] = {
      {"mountain_car",
       {{"goal_position", mountain_car.goal_position},
        {"reward_noise_variance", mountain_car.reward_noise_variance},
        {"max_transitions", mountain_car.max_transitions}}},
      {"usv",
       {{"dt", usv.dt},
        {"lag", usv.lag},
        {"speed", usv.speed},
        {"max_turn_rate", usv.max_turn_rate},
        {"goal", {usv.goal_x, usv.goal_y}},
        {"success_radius", usv.success_radius},
        {"max_transitions", usv.max_transitions}}},
      {"uuv",
       {{"dt", uuv.dt},
        {"lag", uuv.lag},
        {"k_v", uuv.k_v},
        {"k_w", uuv.k_w},
        {"goal", {uuv.goal_x, uuv.goal_y}},
        {"success_radius", uuv.success_radius},
        {"max_transitions", uuv.max_transitions}}},
      {"reward", reward_json(usv.reward)}};
  doc["agent"] = {{"epsilon", epsilon},
                  {"window_episodes", window_episodes},
                  {"reoptimize_every", reoptimize_every},
                  {"eval_state_count", eval_state_count}};
  doc["synthetic"] = {{"transitions", synthetic.transitions},
                      {"dim", synthetic.dim},
                      {"input_lo", synthetic.input_lo},
                      {"input_hi", synthetic.input_hi},
                      {"min_separation", synthetic.min_separation},
                      {"subset_sizes", synthetic.subset_sizes},
                      {"subsets_per_cell", synthetic.subsets_per_cell}};
  doc["retention"] = {
      {"nu_min", retention.nu_min},
      {"nu_max", retention.nu_max},
      {"nu_count", retention.nu_count},
      {"trajectories_per_source", retention.trajectories_per_source}};
  doc["bench"] = {{"transition_counts", bench.transition_counts},
                  {"support_counts", bench.support_counts},
                  {"repetitions", bench.repetitions}};
  return doc.dump();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string text = cfg.canonical_json();
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

CsvFile::CsvFile(const std::filesystem::path& path, std::uint64_t hash,
                 std::string_view header) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  out_.open(path);
  if (!out_) throw InvalidInput("cannot write " + path.string());
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(hash));
  out_ << "# config-hash: " << hex << '\n' << header << '\n';
}

void CsvFile::row(const std::vector<std::string>& fields) {
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << fields[i];
  }
  out_ << '\n';
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

int worker_count() {
  if (const char* env = std::getenv("SPARSE_GPTD_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
    return 1;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

Trajectory sample_prior_trajectory(const ModelParams& params, Index n,
                                   Index dim, double lo, double hi,
                                   std::uint64_t seed,
                                   double min_separation) {
  params.validate();
  if (n < 1) throw InvalidInput("need at least one transition");
  if (min_separation < 0.0 || !std::isfinite(min_separation))
    throw InvalidInput("separation must be finite and non-negative");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(lo, hi);
  std::normal_distribution<double> unit;

  Matrix inputs(n + 1, dim);
  for (Index i = 0; i <= n; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 10000)
        throw InvalidInput(
            "input box too small for the requested separation");
      for (Index d = 0; d < dim; ++d) inputs(i, d) = box(rng);
      if (min_separation == 0.0) break;
      bool clear = true;
      for (Index j = 0; j < i && clear; ++j)
        clear = (inputs.row(i) - inputs.row(j)).norm() >= min_separation;
      if (clear) break;
    }
  }

  Matrix kqq = kernel_matrix(inputs, inputs, params.kernel);
  kqq.diagonal().array() +=
      kDiagonalJitter * params.kernel.signal_variance();
  Eigen::LLT<Matrix> chol(kqq);
  if (chol.info() != Eigen::Success)
    throw IllConditionedModel("prior covariance is not positive definite");

  Vector draws(n + 1);
  for (Index i = 0; i <= n; ++i) draws[i] = unit(rng);
  const Vector q = chol.matrixL() * draws;

  Vector rewards(n);
  const double sigma = std::sqrt(params.noise_variance);
  for (Index t = 0; t < n; ++t)
    rewards[t] = q[t] - params.discount * q[t + 1] + sigma * unit(rng);
  return Trajectory::single_episode(std::move(inputs), std::move(rewards));
}

Trajectory random_mountain_car_trajectory(const MountainCarConfig& cfg,
                                          std::uint64_t seed) {
  MountainCar env(cfg, 0);
  Task task(std::move(env));
  Matrix grid(3, 1);
  grid << -1.0, 0.0, 1.0;
  const Policy policy = EpsilonGreedy{std::move(grid), 1.0};
  EpisodeResult roll = run_episode(task, policy, ValueMode::ActionValue,
                                   nullptr, seed);
  return Trajectory::single_episode(std::move(roll.inputs),
                                    std::move(roll.rewards));
}

double pearson(const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw InvalidInput("correlation needs two equal-length samples");
  const double ma = a.mean();
  const double mb = b.mean();
  const Vector da = a.array() - ma;
  const Vector db = b.array() - mb;
  const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
  if (denom == 0.0) return 0.0;
  return da.dot(db) / denom;
}

// ---- fit ----

void save_model(const ExactPosterior& post,
                const std::filesystem::path& file) {
  write_json_file({{"kind", "exact"},
                   {"params", params_to_json(post.params())},
                   {"inputs", matrix_to_json(post.training_inputs())},
                   {"weights", vector_to_json(post.weights())},
                   {"log_marginal", post.log_marginal()}},
                  file);
}

void save_model(const SparsePosterior& post,
                const std::filesystem::path& file) {
  write_json_file({{"kind", "sparse"},
                   {"params", params_to_json(post.params())},
                   {"support_inputs", matrix_to_json(post.pseudo_locations())},
                   {"alpha", vector_to_json(post.alpha())},
                   {"lambda", matrix_to_json(post.lambda())},
                   {"log_marginal", post.log_marginal()}},
                  file);
}

void save_model(const LowRankPosterior& post,
                const std::filesystem::path& file) {
  write_json_file({{"kind", "lowrank"},
                   {"params", params_to_json(post.params())},
                   {"dictionary", matrix_to_json(post.dictionary())},
                   {"weights", vector_to_json(post.weights())},
                   {"retention", post.retention_fraction()},
                   {"log_marginal", post.log_marginal()}},
                  file);
}

namespace {

ModelParams model_for_dim(const ExperimentConfig& cfg, Index dim) {
  if (cfg.model) {
    if (cfg.model->kernel.dim() != dim)
      throw InvalidInput("model length-scale count does not match the data");
    return *cfg.model;
  }
  if (cfg.input_dim() == dim) return cfg.resolved_model();
  ModelParams params;
  params.kernel.log_length_scales = Vector::Zero(dim);
  params.noise_variance = 0.01;
  params.discount = 0.9;
  return params;
}

}  // namespace

FitReport cmd_fit(const ExperimentConfig& cfg,
                  const std::filesystem::path& trajectory_file) {
  cfg.validate();
  const Trajectory traj = load_trajectory(trajectory_file);
  ModelParams params = model_for_dim(cfg, traj.dim());
  std::filesystem::create_directories(cfg.out_dir);

  FitReport report;
  report.model_file = cfg.out_dir / "model.json";
  switch (cfg.estimator) {
    case EstimatorKind::Exact: {
      const auto t0 = Clock::now();
      ExactPosterior post = fit_exact(traj, params);
      report.fit_ms = elapsed_ms(t0);
      report.log_marginal = post.log_marginal();
      save_model(post, report.model_file);
      break;
    }
    case EstimatorKind::Sparse: {
      const Index m = std::min<Index>(cfg.support_count, traj.input_count());
      PseudoInputSet pseudo = init_pseudo(traj, m, PseudoInit::RandomSubset,
                                          mix_seed(cfg.seeds.front(), 11));
      if (cfg.optimize_on_fit) {
        auto opt = optimize(traj, params, pseudo, cfg.optimizer);
        params = opt.params;
        pseudo = std::move(opt.pseudo);
      }
      const auto t0 = Clock::now();
      SparsePosterior post = fit_sparse(traj, params, pseudo);
      report.fit_ms = elapsed_ms(t0);
      report.log_marginal = post.log_marginal();
      save_model(post, report.model_file);
      break;
    }
    case EstimatorKind::LowRank: {
      const auto t0 = Clock::now();
      LowRankPosterior post = fit_lowrank(traj, params, cfg.nu);
      report.fit_ms = elapsed_ms(t0);
      report.log_marginal = post.log_marginal();
      report.retention = post.retention_fraction();
      save_model(post, report.model_file);
      break;
    }
  }
  return report;
}

// ---- compare-approx ----

std::vector<CompareApproxRow> run_compare_approx(
    const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.task != TaskKind::SyntheticPrior)
    throw InvalidInput("approximation study requires the synthetic task");

  const ModelParams params = cfg.resolved_model();
  const std::uint64_t seed0 = cfg.seeds.front();
  const Trajectory traj = sample_prior_trajectory(
      params, cfg.synthetic.transitions, cfg.synthetic.dim,
      cfg.synthetic.input_lo, cfg.synthetic.input_hi, mix_seed(seed0, 101),
      cfg.synthetic.min_separation);
  const double exact = fit_exact(traj, params).log_marginal();

  std::vector<Index> sizes = cfg.synthetic.subset_sizes;
  if (sizes.empty()) sizes = {2, 5, 10, 25, 50, traj.input_count()};
  for (Index& m : sizes) m = std::min(m, traj.input_count());
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());

  const int per_cell = cfg.synthetic.subsets_per_cell;
  struct Job {
    Index m;
    int subset;
  };
  std::vector<Job> jobs;
  for (Index m : sizes) {
    // The full-support cell has a single possible draw.
    const int draws = m == traj.input_count() ? 1 : per_cell;
    for (int k = 0; k < draws; ++k) jobs.push_back({m, k});
  }

  std::vector<CompareApproxRow> rows(jobs.size());
  parallel_for_index(static_cast<Index>(jobs.size()), [&](Index i) {
    const Job& job = jobs[static_cast<size_t>(i)];
    const bool full = job.m == traj.input_count();
    const double jitter = full ? 0.0 : 1e-6;
    const std::uint64_t cell_seed =
        mix_seed(seed0, 7000 + static_cast<std::uint64_t>(job.m) * 1000 +
                            static_cast<std::uint64_t>(job.subset));
    PseudoInputSet pseudo = init_pseudo(traj, job.m,
                                        PseudoInit::RandomSubset, cell_seed,
                                        jitter);
    CompareApproxRow row;
    row.support_count = job.m;
    row.subset = job.subset;
    row.exact = exact;
    row.sparse_before = log_marginal_sparse(traj, params, pseudo);

    OptimConfig oc = cfg.optimizer;
    oc.scope = OptimScope::PseudoOnly;
    oc.rng_seed = mix_seed(cell_seed, 3);
    auto opt = optimize(traj, params, pseudo, oc);
    row.sparse_after = log_marginal_sparse(traj, params, opt.pseudo);
    row.ratio_before = row.sparse_before / exact;
    row.ratio_after = row.sparse_after / exact;
    rows[static_cast<size_t>(i)] = std::move(row);
  });

  // Replicate the single full-support draw to the configured cell width so
  // every cell has the same number of rows.
  std::vector<CompareApproxRow> out;
  out.reserve(static_cast<size_t>(per_cell) * sizes.size());
  for (const CompareApproxRow& row : rows) {
    out.push_back(row);
    if (row.support_count == traj.input_count())
      for (int k = 1; k < per_cell; ++k) {
        CompareApproxRow copy = row;
        copy.subset = k;
        out.push_back(copy);
      }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.support_count, a.subset) <
           std::tie(b.support_count, b.subset);
  });
  return out;
}

void cmd_compare_approx(const ExperimentConfig& cfg) {
  const auto rows = run_compare_approx(cfg);
  CsvFile csv(cfg.out_dir / "compare_approx.csv", config_hash(cfg),
              "M,subset,L_sparse_before,L_sparse_after,L_exact,"
              "ratio_before,ratio_after");
  for (const auto& row : rows)
    csv.row({std::to_string(row.support_count), std::to_string(row.subset),
             format_double(row.sparse_before),
             format_double(row.sparse_after), format_double(row.exact),
             format_double(row.ratio_before),
             format_double(row.ratio_after)});
}

// ---- retention ----

std::vector<RetentionRow> run_retention(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::uint64_t seed0 = cfg.seeds.front();
  const int per_source = cfg.retention.trajectories_per_source;
  if (per_source < 1) throw InvalidInput("need at least one trajectory");
  if (cfg.retention.nu_count < 1 || !(cfg.retention.nu_min > 0.0) ||
      cfg.retention.nu_max < cfg.retention.nu_min)
    throw InvalidInput("bad threshold grid");

  Vector nus(cfg.retention.nu_count);
  if (cfg.retention.nu_count == 1) {
    nus[0] = cfg.retention.nu_min;
  } else {
    const double llo = std::log(cfg.retention.nu_min);
    const double lhi = std::log(cfg.retention.nu_max);
    for (int i = 0; i < cfg.retention.nu_count; ++i)
      nus[i] = std::exp(llo + (lhi - llo) * i /
                                  (cfg.retention.nu_count - 1));
  }

  // Sources: random-action rollouts and draws from the kernel prior.
  ExperimentConfig mc_cfg = cfg;
  mc_cfg.task = TaskKind::MountainCar;
  mc_cfg.mode = ValueMode::ActionValue;
  mc_cfg.model.reset();
  const ModelParams mc_params = mc_cfg.resolved_model();
  ExperimentConfig prior_cfg = cfg;
  prior_cfg.task = TaskKind::SyntheticPrior;
  prior_cfg.model.reset();
  const ModelParams prior_params = prior_cfg.resolved_model();

  std::vector<Trajectory> mc_trajs, prior_trajs;
  for (int i = 0; i < per_source; ++i) {
    mc_trajs.push_back(random_mountain_car_trajectory(
        cfg.mountain_car, mix_seed(seed0, 2000 + i)));
    prior_trajs.push_back(sample_prior_trajectory(
        prior_params, cfg.synthetic.transitions, cfg.synthetic.dim,
        cfg.synthetic.input_lo, cfg.synthetic.input_hi,
        mix_seed(seed0, 3000 + i), cfg.synthetic.min_separation));
  }

  struct Cell {
    const char* source;
    const std::vector<Trajectory>* trajs;
    const ModelParams* params;
    double nu;
  };
  std::vector<Cell> cells;
  for (Index i = 0; i < nus.size(); ++i)
    cells.push_back({"mountain_car", &mc_trajs, &mc_params, nus[i]});
  for (Index i = 0; i < nus.size(); ++i)
    cells.push_back({"prior", &prior_trajs, &prior_params, nus[i]});

  std::vector<RetentionRow> rows(cells.size());
  parallel_for_index(static_cast<Index>(cells.size()), [&](Index i) {
    const Cell& cell = cells[static_cast<size_t>(i)];
    Vector retained(per_source);
    for (int t = 0; t < per_source; ++t)
      retained[t] = fit_lowrank((*cell.trajs)[static_cast<size_t>(t)],
                                *cell.params, cell.nu)
                        .retention_fraction();
    RetentionRow row;
    row.source = cell.source;
    row.nu = cell.nu;
    row.mean = retained.mean();
    row.stddev = per_source > 1
                     ? std::sqrt((retained.array() - row.mean).square().sum() /
                                 (per_source - 1))
                     : 0.0;
    rows[static_cast<size_t>(i)] = std::move(row);
  });
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.source, a.nu) < std::tie(b.source, b.nu);
  });
  return rows;
}

void cmd_retention(const ExperimentConfig& cfg) {
  const auto rows = run_retention(cfg);
  CsvFile csv(cfg.out_dir / "retention.csv", config_hash(cfg),
              "source,nu,retention_mean,retention_std");
  for (const auto& row : rows)
    csv.row({row.source, format_double(row.nu), format_double(row.mean),
             format_double(row.stddev)});
}

// ---- learn ----

namespace {

Task make_task(const ExperimentConfig& cfg) {
  switch (cfg.task) {
    case TaskKind::MountainCar: return Task(MountainCar(cfg.mountain_car));
    case TaskKind::Usv: return Task(Usv(cfg.usv));
    case TaskKind::Uuv: return Task(Uuv(cfg.uuv));
    case TaskKind::SyntheticPrior:
      throw InvalidInput("the synthetic task has no environment to run");
  }
  throw InvalidInput("unknown task");
}

Policy make_policy(const ExperimentConfig& cfg) {
  switch (cfg.task) {
    case TaskKind::MountainCar: {
      Matrix grid(3, 1);
      grid << -1.0, 0.0, 1.0;
      return EpsilonGreedy{std::move(grid), cfg.epsilon};
    }
    case TaskKind::Usv: {
      LinearHeading p;
      p.goal_x = cfg.usv.goal_x;
      p.goal_y = cfg.usv.goal_y;
      return p;
    }
    case TaskKind::Uuv: {
      FourierNav p;
      p.goal_x = cfg.uuv.goal_x;
      p.goal_y = cfg.uuv.goal_y;
      return p;
    }
    case TaskKind::SyntheticPrior: break;
  }
  throw InvalidInput("the synthetic task has no policy");
}

std::unique_ptr<Estimator> make_estimator(const ExperimentConfig& cfg,
                                          const ModelParams& params,
                                          std::uint64_t seed) {
  switch (cfg.estimator) {
    case EstimatorKind::Exact:
      return std::make_unique<ExactEstimator>(params);
    case EstimatorKind::Sparse:
      return std::make_unique<SparseEstimator>(params, cfg.support_count,
                                               cfg.optimizer,
                                               mix_seed(seed, 13));
    case EstimatorKind::LowRank:
      return std::make_unique<LowRankEstimator>(params, cfg.nu);
  }
  throw InvalidInput("unknown estimator");
}

}  // namespace

std::vector<LearnRow> run_learning(const ExperimentConfig& cfg) {
  cfg.validate();
  const ModelParams params = cfg.resolved_model();
  const Index n_seeds = static_cast<Index>(cfg.seeds.size());

  std::vector<std::vector<LearnRow>> per_seed(
      static_cast<size_t>(n_seeds));
  parallel_for_index(n_seeds, [&](Index i) {
    const std::uint64_t seed = cfg.seeds[static_cast<size_t>(i)];
    Task task = make_task(cfg);
    auto estimator = make_estimator(cfg, params, seed);

    AgentConfig agent;
    agent.mode = cfg.mode;
    agent.episodes = cfg.episodes;
    agent.window_episodes = cfg.window_episodes;
    agent.reoptimize_every =
        cfg.estimator == EstimatorKind::Sparse ? cfg.reoptimize_every : 0;
    agent.eval_state_count = cfg.eval_state_count;
    agent.seed = seed;

    auto result =
        policy_iteration(task, *estimator, make_policy(cfg), agent);
    auto& rows = per_seed[static_cast<size_t>(i)];
    rows.reserve(result.curve.size());
    for (const auto& point : result.curve)
      rows.push_back({seed, point.episode, point.total_reward,
                      std::string(estimator->name()), point.wall_ms});
  });

  std::vector<LearnRow> out;
  for (auto& rows : per_seed)
    out.insert(out.end(), rows.begin(), rows.end());
  return out;
}

LandscapeResult run_landscape(const ExperimentConfig& cfg,
                              std::uint64_t seed) {
  ExperimentConfig mc_cfg = cfg;
  mc_cfg.task = TaskKind::MountainCar;
  mc_cfg.mode = ValueMode::ActionValue;
  const ModelParams params = mc_cfg.resolved_model();

  // Random rollouts until roughly three hundred transitions.
  Task task = make_task(mc_cfg);
  Matrix grid(3, 1);
  grid << -1.0, 0.0, 1.0;
  const Policy random_policy = EpsilonGreedy{grid, 1.0};
  Trajectory data;
  int episode = 0;
  while (data.transition_count() < 300) {
    EpisodeResult roll =
        run_episode(task, random_policy, ValueMode::ActionValue, nullptr,
                    mix_seed(seed, 400 + static_cast<std::uint64_t>(episode)));
    data.append_episode(roll.inputs, roll.rewards);
    ++episode;
  }

  PseudoInputSet pseudo = init_pseudo(data, mc_cfg.support_count,
                                      PseudoInit::RandomSubset,
                                      mix_seed(seed, 17));
  auto opt = optimize(data, params, pseudo, mc_cfg.optimizer);

  const SparsePosterior sparse = fit_sparse(data, opt.params, opt.pseudo);
  const ExactPosterior exact = fit_exact(data, opt.params);

  LandscapeResult result;
  result.shared_params = opt.params;
  const int cells = 50;
  result.grid_s.setLinSpaced(cells, -1.2, 0.6);
  result.grid_v.setLinSpaced(cells, -0.07, 0.07);
  result.exact_means.resize(cells, cells);
  result.sparse_means.resize(cells, cells);

  Vector query(3);
  for (int i = 0; i < cells; ++i)
    for (int j = 0; j < cells; ++j) {
      double best_exact = -std::numeric_limits<double>::infinity();
      double best_sparse = best_exact;
      for (Index a = 0; a < grid.rows(); ++a) {
        query << result.grid_s[i], result.grid_v[j], grid(a, 0);
        best_exact = std::max(best_exact, exact.predict_mean(query));
        best_sparse = std::max(best_sparse, sparse.predict_mean(query));
      }
      result.exact_means(i, j) = best_exact;
      result.sparse_means(i, j) = best_sparse;
    }

  const Index total = cells * cells;
  result.correlation =
      pearson(Eigen::Map<const Vector>(result.exact_means.data(), total),
              Eigen::Map<const Vector>(result.sparse_means.data(), total));
  return result;
}

void cmd_learn(const ExperimentConfig& cfg) {
  const auto rows = run_learning(cfg);
  CsvFile csv(cfg.out_dir / "learn.csv", config_hash(cfg),
              "seed,episode,total_reward,estimator,wall_ms");
  for (const auto& row : rows)
    csv.row({std::to_string(row.seed), std::to_string(row.episode),
             format_double(row.total_reward), row.estimator,
             format_double(row.wall_ms)});

  if (cfg.landscape && cfg.task == TaskKind::MountainCar) {
    const LandscapeResult land = run_landscape(cfg, cfg.seeds.front());
    CsvFile grid_csv(cfg.out_dir / "landscape.csv", config_hash(cfg),
                     "position,velocity,exact_mean,sparse_mean");
    for (Index i = 0; i < land.grid_s.size(); ++i)
      for (Index j = 0; j < land.grid_v.size(); ++j)
        grid_csv.row({format_double(land.grid_s[i]),
                      format_double(land.grid_v[j]),
                      format_double(land.exact_means(i, j)),
                      format_double(land.sparse_means(i, j))});
  }
}

// ---- bench ----

std::vector<BenchRow> run_bench(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentConfig syn_cfg = cfg;
  syn_cfg.task = TaskKind::SyntheticPrior;
  syn_cfg.model.reset();
  const ModelParams params = syn_cfg.resolved_model();
  const std::uint64_t seed0 = cfg.seeds.front();
  const int reps = std::max(1, cfg.bench.repetitions);

  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };

  std::vector<BenchRow> rows;
  std::mt19937_64 query_rng(mix_seed(seed0, 55));
  std::uniform_real_distribution<double> box(cfg.synthetic.input_lo,
                                             cfg.synthetic.input_hi);
  const int n_queries = 256;

  for (Index n : cfg.bench.transition_counts) {
    const Trajectory traj = sample_prior_trajectory(
        params, n, cfg.synthetic.dim, cfg.synthetic.input_lo,
        cfg.synthetic.input_hi, mix_seed(seed0, 600 + n),
        cfg.synthetic.min_separation);
    std::vector<Vector> queries;
    for (int q = 0; q < n_queries; ++q) {
      Vector x(cfg.synthetic.dim);
      for (Index d = 0; d < cfg.synthetic.dim; ++d) x[d] = box(query_rng);
      queries.push_back(std::move(x));
    }

    {
      std::vector<double> fit_times;
      double predict_us = 0.0;
      for (int rep = 0; rep < reps; ++rep) {
        const auto t0 = Clock::now();
        const ExactPosterior post = fit_exact(traj, params);
        fit_times.push_back(elapsed_ms(t0));
        const auto t1 = Clock::now();
        double sink = 0.0;
        for (const Vector& q : queries) sink += post.predict_mean(q);
        predict_us = elapsed_ms(t1) * 1000.0 / n_queries;
        (void)sink;
      }
      rows.push_back({"exact", n, 0, median(fit_times), predict_us});
    }

    for (Index m : cfg.bench.support_counts) {
      const PseudoInputSet pseudo =
          init_pseudo(traj, std::min(m, traj.input_count()),
                      PseudoInit::RandomSubset, mix_seed(seed0, 700 + m));
      std::vector<double> fit_times;
      double predict_us = 0.0;
      for (int rep = 0; rep < reps; ++rep) {
        const auto t0 = Clock::now();
        const SparsePosterior post = fit_sparse(traj, params, pseudo);
        fit_times.push_back(elapsed_ms(t0));
        const auto t1 = Clock::now();
        double sink = 0.0;
        for (const Vector& q : queries) sink += post.predict_mean(q);
        predict_us = elapsed_ms(t1) * 1000.0 / n_queries;
        (void)sink;
      }
      rows.push_back({"sparse", n, m, median(fit_times), predict_us});
    }
  }

  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.estimator, a.transitions, a.support_count) <
           std::tie(b.estimator, b.transitions, b.support_count);
  });
  return rows;
}

void cmd_bench(const ExperimentConfig& cfg) {
  const auto rows = run_bench(cfg);
  CsvFile csv(cfg.out_dir / "bench.csv", config_hash(cfg),
              "estimator,N,M,fit_ms,predict_us");
  for (const auto& row : rows)
    csv.row({row.estimator, std::to_string(row.transitions),
             std::to_string(row.support_count), format_double(row.fit_ms),
             format_double(row.predict_us)});
}

}  // namespace sgptd
