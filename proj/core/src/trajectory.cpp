#include <sgptd/trajectory.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sgptd {

void ModelParams::validate() const {
  kernel.validate();
  if (!(noise_variance > 0.0) || !std::isfinite(noise_variance))
    throw InvalidInput("noise_variance must be positive and finite");
  if (!(discount >= 0.0 && discount <= 1.0))
    throw InvalidInput("discount must lie in [0, 1]");
}

Trajectory::Trajectory(Matrix inputs, Vector rewards,
                       std::vector<Index> episode_breaks)
    : inputs_(std::move(inputs)),
      rewards_(std::move(rewards)),
      episode_breaks_(std::move(episode_breaks)) {
  rebuild_episode_index();
  validate();
}

Trajectory Trajectory::single_episode(Matrix inputs, Vector rewards) {
  std::vector<Index> breaks;
  if (rewards.size() > 0) breaks.push_back(rewards.size() - 1);
  return Trajectory(std::move(inputs), std::move(rewards), std::move(breaks));
}

bool Trajectory::is_terminal(Index t) const {
  const Index e = episode_of(t);
  return episode_breaks_[static_cast<size_t>(e)] == t;
}

void Trajectory::append_episode(const Matrix& inputs, const Vector& rewards) {
  if (rewards.size() == 0) throw InvalidInput("episode has no transitions");
  if (inputs.rows() != rewards.size() + 1)
    throw InvalidInput("episode needs one more input than rewards");
  if (inputs_.size() > 0 && inputs.cols() != inputs_.cols())
    throw InvalidInput("episode dimension mismatch");

  const Index old_inputs = inputs_.rows();
  const Index old_rewards = rewards_.size();
  inputs_.conservativeResize(old_inputs + inputs.rows(),
                             inputs.cols());
  inputs_.bottomRows(inputs.rows()) = inputs;
  rewards_.conservativeResize(old_rewards + rewards.size());
  rewards_.tail(rewards.size()) = rewards;
  episode_breaks_.push_back(old_rewards + rewards.size() - 1);
  rebuild_episode_index();
}

Trajectory Trajectory::tail_episodes(Index count) const {
  if (count >= episode_count()) return *this;
  if (count <= 0) return Trajectory();

  const size_t first_kept = static_cast<size_t>(episode_count() - count);
  const Index reward_begin =
      first_kept == 0 ? 0 : episode_breaks_[first_kept - 1] + 1;
  const Index input_begin = reward_begin + static_cast<Index>(first_kept);

  Matrix inputs = inputs_.bottomRows(inputs_.rows() - input_begin);
  Vector rewards = rewards_.tail(rewards_.size() - reward_begin);
  std::vector<Index> breaks;
  breaks.reserve(static_cast<size_t>(count));
  for (size_t e = first_kept; e < episode_breaks_.size(); ++e)
    breaks.push_back(episode_breaks_[e] - reward_begin);
  return Trajectory(std::move(inputs), std::move(rewards), std::move(breaks));
}

void Trajectory::validate() const {
  const Index n = rewards_.size();
  const Index episodes = episode_count();
  if (n == 0) {
    if (inputs_.rows() != 0 || episodes != 0)
      throw InvalidInput("empty trajectory must have no inputs or breaks");
    return;
  }
  if (inputs_.rows() != n + episodes)
    throw InvalidInput("input count must be rewards + episodes");
  if (!rewards_.allFinite() || !inputs_.allFinite())
    throw InvalidInput("trajectory contains non-finite values");

  Index prev = -1;
  for (Index b : episode_breaks_) {
    if (b <= prev) throw InvalidInput("episode breaks must strictly increase");
    prev = b;
  }
  if (episode_breaks_.back() != n - 1)
    throw InvalidInput("last episode break must close the reward sequence");
}

void Trajectory::rebuild_episode_index() {
  episode_of_.assign(static_cast<size_t>(rewards_.size()), 0);
  Index e = 0;
  for (Index t = 0; t < rewards_.size(); ++t) {
    episode_of_[static_cast<size_t>(t)] = e;
    if (e < episode_count() && episode_breaks_[static_cast<size_t>(e)] == t)
      ++e;
  }
}

namespace {

using nlohmann::json;

Trajectory from_json(const json& doc) {
  if (!doc.is_object())
    throw InvalidInput("trajectory file must hold a JSON object");
  for (const char* key : {"inputs", "rewards", "episode_breaks"})
    if (!doc.contains(key))
      throw InvalidInput(std::string("trajectory file missing \"") + key +
                         "\"");

  const auto& jin = doc.at("inputs");
  const auto& jr = doc.at("rewards");
  const auto& jb = doc.at("episode_breaks");
  if (!jin.is_array() || !jr.is_array() || !jb.is_array())
    throw InvalidInput("inputs, rewards and episode_breaks must be arrays");

  const Index n_in = static_cast<Index>(jin.size());
  Index dim = 0;
  if (n_in > 0) {
    if (!jin.at(0).is_array())
      throw InvalidInput("each input must be an array of coordinates");
    dim = static_cast<Index>(jin.at(0).size());
  }
  Matrix inputs(n_in, dim);
  for (Index i = 0; i < n_in; ++i) {
    const auto& row = jin.at(static_cast<size_t>(i));
    if (!row.is_array() || static_cast<Index>(row.size()) != dim)
      throw InvalidInput("inputs rows must share one dimension");
    for (Index d = 0; d < dim; ++d)
      inputs(i, d) = row.at(static_cast<size_t>(d)).get<double>();
  }

  Vector rewards(static_cast<Index>(jr.size()));
  for (Index t = 0; t < rewards.size(); ++t)
    rewards[t] = jr.at(static_cast<size_t>(t)).get<double>();

  std::vector<Index> breaks;
  breaks.reserve(jb.size());
  for (const auto& v : jb) breaks.push_back(v.get<Index>());

  return Trajectory(std::move(inputs), std::move(rewards), std::move(breaks));
}

json to_json(const Trajectory& traj) {
  json jin = json::array();
  for (Index i = 0; i < traj.input_count(); ++i) {
    json row = json::array();
    for (Index d = 0; d < traj.dim(); ++d) row.push_back(traj.inputs()(i, d));
    jin.push_back(std::move(row));
  }
  json jr = json::array();
  for (Index t = 0; t < traj.transition_count(); ++t)
    jr.push_back(traj.rewards()[t]);
  json jb = json::array();
  for (Index b : traj.episode_breaks()) jb.push_back(b);
  return json{{"inputs", std::move(jin)},
              {"rewards", std::move(jr)},
              {"episode_breaks", std::move(jb)}};
}

}  // namespace

Trajectory parse_trajectory_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& err) {
    throw InvalidInput(std::string("trajectory parse error: ") + err.what());
  }
  try {
    return from_json(doc);
  } catch (const json::exception& err) {
    throw InvalidInput(std::string("trajectory field error: ") + err.what());
  }
}

Trajectory load_trajectory(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw InvalidInput("cannot open trajectory file " + file.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_trajectory_json(text.str());
}

std::string trajectory_to_json(const Trajectory& traj) {
  return to_json(traj).dump(2);
}

void save_trajectory(const Trajectory& traj,
                     const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw InvalidInput("cannot write trajectory file " + file.string());
  out << trajectory_to_json(traj) << '\n';
}

}  // namespace sgptd
