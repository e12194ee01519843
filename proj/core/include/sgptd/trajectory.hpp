#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <sgptd/common.hpp>
#include <sgptd/kernel.hpp>

namespace sgptd {

/// Kernel, observation-noise and discount parameters shared by every
/// estimator.
struct ModelParams {
  KernelParams kernel;
  double noise_variance = 1e-2;  // sigma^2
  double discount = 0.9;         // gamma
  /// When set, the last transition of each episode regresses its reward on
  /// the source value alone: the terminal state's value is pinned to zero
  /// instead of being modeled.
  bool terminal_value_zero = false;

  void validate() const;
};

/// Time-ordered transition data over one or more episodes.
///
/// An episode with T transitions contributes T rewards and T + 1 inputs (the
/// trailing input is the state reached by the last transition), so
/// inputs.rows() == rewards.size() + episode_count(). Inputs are stored as
/// rows, episodes back to back. episode_breaks[e] is the index into rewards
/// of the last transition of episode e; the final break always equals
/// rewards.size() - 1.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(Matrix inputs, Vector rewards, std::vector<Index> episode_breaks);

  /// Convenience constructor for a single episode: inputs.rows() must be
  /// rewards.size() + 1.
  static Trajectory single_episode(Matrix inputs, Vector rewards);

  Index transition_count() const { return rewards_.size(); }
  Index input_count() const { return inputs_.rows(); }
  Index dim() const { return inputs_.cols(); }
  Index episode_count() const {
    return static_cast<Index>(episode_breaks_.size());
  }
  bool empty() const { return rewards_.size() == 0; }

  const Matrix& inputs() const { return inputs_; }
  const Vector& rewards() const { return rewards_; }
  const std::vector<Index>& episode_breaks() const { return episode_breaks_; }

  /// Episode that transition t belongs to.
  Index episode_of(Index t) const { return episode_of_[static_cast<size_t>(t)]; }

  /// Global input indices (source, successor) of transition t. Successive
  /// episodes shift the mapping by one because of their trailing inputs.
  std::pair<Index, Index> transition_inputs(Index t) const {
    const Index e = episode_of(t);
    return {t + e, t + e + 1};
  }

  /// Whether transition t is the last of its episode.
  bool is_terminal(Index t) const;

  /// Appends a complete episode (inputs.rows() == rewards.size() + 1).
  void append_episode(const Matrix& inputs, const Vector& rewards);

  /// Copy containing only the most recent `count` episodes.
  Trajectory tail_episodes(Index count) const;

  /// Checks all structural invariants; throws InvalidInput on violation.
  void validate() const;

 private:
  Matrix inputs_;
  Vector rewards_;
  std::vector<Index> episode_breaks_;
  std::vector<Index> episode_of_;  // per transition, rebuilt on mutation

  void rebuild_episode_index();
};

/// JSON on disk: {"inputs": [[...], ...], "rewards": [...],
/// "episode_breaks": [...]}. Parse failures carry the line number.
Trajectory load_trajectory(const std::filesystem::path& file);
void save_trajectory(const Trajectory& traj, const std::filesystem::path& file);
Trajectory parse_trajectory_json(const std::string& text);
std::string trajectory_to_json(const Trajectory& traj);

}  // namespace sgptd
