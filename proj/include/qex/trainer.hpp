#pragma once

#include "qex/envs.hpp"
#include "qex/rcb_schedule.hpp"
#include "qex/rsq_allocation.hpp"
#include "qex/successor_distance.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace qex {

enum class ScheduleMode { rcb, fixed };
enum class IntrinsicSource { successor_distance, uniform_noise };
enum class EnvKind { corridor, tag };

struct SdConfig {
  double gamma_sd{0.99};
  int refresh_interval{10};
  double smoothing{1e-3};
  std::optional<double> unreachable_cap;  // default: -ln(gamma_sd) * n_states
  IntrinsicSource source{IntrinsicSource::successor_distance};
  // uniform_noise source: r_int = offset + scale * eta, eta uniform with unit variance.
  double noise_offset{1.0};
  double noise_scale{0.5};
};

struct EnvConfig {
  EnvKind kind{EnvKind::corridor};
  CorridorConfig corridor;
  TagConfig tag;
};

std::unique_ptr<MultiAgentEnv> make_env(const EnvConfig& config);

struct TrainerConfig {
  RcbParams rcb;
  ScheduleMode schedule{ScheduleMode::rcb};
  double fixed_beta{0.5};

  RsqParams rsq;
  double stats_alpha{0.1};
  AllocationMode allocation{AllocationMode::affine};
  // Compute RSQ statistics on intrinsic_scale * r_int instead of raw r_int.
  bool stats_on_scaled{false};

  SdConfig sd;
  EnvConfig env;

  int n_envs{16};
  int n_steps{64};
  double gamma{0.99};
  double gae_lambda{0.95};
  double clip_ratio{0.2};
  double learning_rate{0.5};
  double value_learning_rate{0.5};
  int update_epochs{4};
  double intrinsic_scale{1.0};
  std::uint64_t seed{0};
  int total_iterations{300};
  // Iterations averaged into a run's final return.
  int final_window{20};

  void validate() const;
};

using Rng = std::mt19937_64;

/// Softmax policy over a (local state, action) logit table.
class TabularPolicy {
 public:
  TabularPolicy(int n_states, int n_actions) : logits_(Eigen::MatrixXd::Zero(n_states, n_actions)) {}

  int n_states() const { return static_cast<int>(logits_.rows()); }
  int n_actions() const { return static_cast<int>(logits_.cols()); }
  Eigen::VectorXd probabilities(int state) const;
  /// Row-wise softmax of the whole table.
  Eigen::MatrixXd probability_table() const;
  int sample(int state, Rng& rng) const;
  int greedy(int state) const;

  Eigen::MatrixXd& logits() { return logits_; }
  const Eigen::MatrixXd& logits() const { return logits_; }

 private:
  Eigen::MatrixXd logits_;
};

struct AgentLearner {
  TabularPolicy policy;
  Eigen::VectorXd values;
};

/// One iteration of experience, indexed (env, step) per agent.
struct RolloutBatch {
  int n_envs{0};
  int n_steps{0};
  int n_agents{0};
  std::vector<Eigen::MatrixXi> states;       // local state before acting
  std::vector<Eigen::MatrixXi> next_states;  // local state reached
  std::vector<Eigen::MatrixXi> actions;
  std::vector<Eigen::MatrixXd> log_probs;    // behaviour log-probabilities
  std::vector<Eigen::MatrixXd> intrinsic;    // filled by compute_intrinsic
  Eigen::MatrixXd extrinsic;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> done;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> episode_start;
  std::vector<double> completed_returns;

  std::optional<double> mean_team_return() const;
};

/// Environments plus the bookkeeping that persists across iterations.
struct RolloutWorkers {
  std::vector<std::unique_ptr<MultiAgentEnv>> envs;
  std::vector<double> running_return;
  std::vector<bool> fresh_episode;
  // [env][agent] local-state history of the current episode.
  std::vector<std::vector<SdHistory>> histories;
};

RolloutWorkers make_workers(const EnvConfig& config, int n_envs);

using ActionChooser = std::function<int(int agent, int state, Rng& rng)>;

/// Runs every env for n_steps with actions from the current policies only.
/// Episodes auto-reset; returns of episodes finishing inside the batch are
/// collected. `trajectory_out`, when set, receives one JSON line per env step.
RolloutBatch collect_rollouts(const std::vector<AgentLearner>& learners, RolloutWorkers& workers, int n_steps,
                              Rng& rng, std::ostream* trajectory_out = nullptr, std::int64_t iteration = 0,
                              const ActionChooser& chooser = {});

/// Fills batch.intrinsic with min-over-episode-history successor distances.
/// `tables[i]` is agent i's distance_table.
void compute_intrinsic(RolloutBatch& batch, RolloutWorkers& workers, const std::vector<Eigen::MatrixXd>& tables,
                       double unreachable_cap);

/// r_i = r_ext + beta * h_i * (intrinsic_scale * r_int), one matrix per agent.
std::vector<Eigen::MatrixXd> assemble_rewards(const RolloutBatch& batch, double beta,
                                              const Eigen::VectorXd& weights, double intrinsic_scale);

/// GAE(gamma, lambda) advantages over (env, step), treating `done` as terminal
/// and bootstrapping from V(next_state) at the end of the rollout.
Eigen::MatrixXd gae_advantages(const Eigen::MatrixXd& rewards, const Eigen::MatrixXi& states,
                               const Eigen::MatrixXi& next_states,
                               const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& done,
                               const Eigen::VectorXd& values, double gamma, double gae_lambda);

struct UpdateStats {
  double clip_fraction{0};
  double max_logit_change{0};
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Clipped-surrogate ascent on each agent's logit table, with per-state
/// averaged analytic gradients, and a tabular value fit to the GAE returns.
UpdateStats update_policies(std::vector<AgentLearner>& learners, const RolloutBatch& batch,
                            const std::vector<Eigen::MatrixXd>& rewards, const TrainerConfig& config);

struct AgentRecord {
  double mu{0};
  double sigma_sq{1};
  double rsq{0};
  double h{1};
  double mean_intrinsic{0};
};

struct IterationRecord {
  std::int64_t iteration{0};
  std::optional<double> mean_team_return;
  int episodes_completed{0};
  double r_ema{0};
  double beta{0};
  std::vector<AgentRecord> agents;
  double quality_gap{0};
  double wall_clock_seconds{0};
};

using RecordSink = std::function<void(const IterationRecord&)>;

/// Full training loop state; one iteration runs return EMA -> beta ->
/// intrinsic stats -> RSQ -> h -> reward assembly -> policy update -> SD refresh.
class Trainer {
 public:
  explicit Trainer(TrainerConfig config);

  IterationRecord step();

  const TrainerConfig& config() const { return config_; }
  const RcbState& rcb_state() const { return rcb_; }
  const std::vector<AgentSignalStats>& signal_stats() const { return stats_; }
  const std::vector<AgentLearner>& learners() const { return learners_; }
  std::vector<AgentLearner>& learners() { return learners_; }
  const std::vector<SuccessorMeasure>& measures() const { return measures_; }
  const std::vector<TransitionCounter>& transition_counts() const { return counters_; }
  /// Weights the allocation would assign from the current statistics.
  Eigen::VectorXd current_weights(double beta) const;
  Eigen::VectorXd current_rsq() const;
  double unreachable_cap() const { return cap_; }
  int n_agents() const { return n_agents_; }

  void set_trajectory_stream(std::ostream* out) { trajectory_out_ = out; }
  /// Overrides policy sampling; used for scripted checks.
  void set_action_chooser(ActionChooser chooser) { chooser_ = std::move(chooser); }
  /// Beta assembled into the most recent policy update.
  double last_assembled_beta() const { return last_assembled_beta_; }

 private:
  void refresh_measures();
  void fill_noise_intrinsic(RolloutBatch& batch);

  TrainerConfig config_;
  Rng rng_;
  Rng noise_rng_;
  RolloutWorkers workers_;
  int n_agents_{0};
  int n_states_{0};
  std::vector<AgentLearner> learners_;
  RcbState rcb_;
  std::vector<AgentSignalStats> stats_;
  std::vector<TransitionCounter> counters_;
  std::vector<SuccessorMeasure> measures_;
  std::vector<Eigen::MatrixXd> tables_;
  double cap_{0};
  std::int64_t iteration_{0};
  std::ostream* trajectory_out_{nullptr};
  ActionChooser chooser_;
  double last_assembled_beta_{0};
};

/// Runs config.total_iterations iterations. Each record is passed to `sink`
/// as soon as it exists, so a failing run has already flushed its prefix.
std::vector<IterationRecord> run_training(const TrainerConfig& config, const RecordSink& sink = {},
                                          std::ostream* trajectory_out = nullptr);

/// Mean of the last `window` recorded team returns.
std::optional<double> final_return(const std::vector<IterationRecord>& records, int window);

}  // namespace qex
