#include "qex/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

namespace qex {

void TrainerConfig::validate() const {
  rcb.validate();
  rsq.validate();
  if (!(stats_alpha > 0 && stats_alpha < 1)) throw std::invalid_argument("rsq.alpha must lie in (0, 1)");
  if (schedule == ScheduleMode::fixed && !(fixed_beta >= 0)) {
    throw std::invalid_argument("rcb.fixed_beta must be >= 0");
  }
  if (!(sd.gamma_sd > 0 && sd.gamma_sd < 1)) throw std::invalid_argument("sd.gamma must lie in (0, 1)");
  if (sd.refresh_interval < 1) throw std::invalid_argument("sd.refresh_interval must be >= 1");
  if (!(sd.smoothing > 0)) throw std::invalid_argument("sd.smoothing must be > 0");
  if (n_envs < 1 || n_steps < 1) throw std::invalid_argument("trainer.n_envs and trainer.n_steps must be >= 1");
  if (!(gamma >= 0 && gamma < 1)) throw std::invalid_argument("trainer.gamma must lie in [0, 1)");
  if (!(gae_lambda >= 0 && gae_lambda <= 1)) throw std::invalid_argument("trainer.gae_lambda must lie in [0, 1]");
  if (!(clip_ratio > 0)) throw std::invalid_argument("trainer.clip_ratio must be > 0");
  if (!(learning_rate > 0) || !(value_learning_rate > 0 && value_learning_rate <= 1)) {
    throw std::invalid_argument("trainer learning rates must be positive (value rate <= 1)");
  }
  if (update_epochs < 1) throw std::invalid_argument("trainer.update_epochs must be >= 1");
  if (!(intrinsic_scale >= 0)) throw std::invalid_argument("trainer.intrinsic_scale must be >= 0");
  if (total_iterations < 0) throw std::invalid_argument("trainer.total_iterations must be >= 0");
  if (final_window < 1) throw std::invalid_argument("trainer.final_window must be >= 1");
}

std::unique_ptr<MultiAgentEnv> make_env(const EnvConfig& config) {
  switch (config.kind) {
    case EnvKind::corridor: return std::make_unique<CorridorGrid>(config.corridor);
    case EnvKind::tag: return std::make_unique<TagGrid>(config.tag);
  }
  throw std::invalid_argument("unknown environment kind");
}

// ---------------------------------------------------------------------------
// Policy

Eigen::VectorXd TabularPolicy::probabilities(int state) const {
  const Eigen::VectorXd row = logits_.row(state).transpose();
  const Eigen::VectorXd e = (row.array() - row.maxCoeff()).exp();
  return e / e.sum();
}

Eigen::MatrixXd TabularPolicy::probability_table() const {
  Eigen::MatrixXd probs(logits_.rows(), logits_.cols());
  for (Eigen::Index s = 0; s < logits_.rows(); ++s) probs.row(s) = probabilities(static_cast<int>(s)).transpose();
  return probs;
}

int TabularPolicy::sample(int state, Rng& rng) const {
  const Eigen::VectorXd probs = probabilities(state);
  const double u = std::generate_canonical<double, 53>(rng);
  double acc = 0.0;
  for (Eigen::Index a = 0; a < probs.size(); ++a) {
    acc += probs(a);
    if (u < acc) return static_cast<int>(a);
  }
  return static_cast<int>(probs.size() - 1);
}

int TabularPolicy::greedy(int state) const {
  Eigen::Index best = 0;
  logits_.row(state).maxCoeff(&best);
  return static_cast<int>(best);
}

// ---------------------------------------------------------------------------
// Rollouts

std::optional<double> RolloutBatch::mean_team_return() const {
  if (completed_returns.empty()) return std::nullopt;
  return std::accumulate(completed_returns.begin(), completed_returns.end(), 0.0) /
         static_cast<double>(completed_returns.size());
}

RolloutWorkers make_workers(const EnvConfig& config, int n_envs) {
  RolloutWorkers workers;
  for (int e = 0; e < n_envs; ++e) workers.envs.push_back(make_env(config));
  const int n_agents = workers.envs.front()->n_agents();
  workers.running_return.assign(static_cast<std::size_t>(n_envs), 0.0);
  workers.fresh_episode.assign(static_cast<std::size_t>(n_envs), true);
  workers.histories.assign(static_cast<std::size_t>(n_envs), std::vector<SdHistory>(static_cast<std::size_t>(n_agents)));
  return workers;
}

RolloutBatch collect_rollouts(const std::vector<AgentLearner>& learners, RolloutWorkers& workers, int n_steps,
                              Rng& rng, std::ostream* trajectory_out, std::int64_t iteration,
                              const ActionChooser& chooser) {
  const int n_envs = static_cast<int>(workers.envs.size());
  const int n_agents = static_cast<int>(learners.size());
  RolloutBatch batch;
  batch.n_envs = n_envs;
  batch.n_steps = n_steps;
  batch.n_agents = n_agents;
  for (int i = 0; i < n_agents; ++i) {
    batch.states.emplace_back(n_envs, n_steps);
    batch.next_states.emplace_back(n_envs, n_steps);
    batch.actions.emplace_back(n_envs, n_steps);
    batch.log_probs.emplace_back(n_envs, n_steps);
    batch.intrinsic.push_back(Eigen::MatrixXd::Zero(n_envs, n_steps));
  }
  batch.extrinsic.resize(n_envs, n_steps);
  batch.done.resize(n_envs, n_steps);
  batch.episode_start.resize(n_envs, n_steps);

  std::vector<Eigen::MatrixXd> probs;
  for (const AgentLearner& learner : learners) probs.push_back(learner.policy.probability_table());

  std::vector<int> joint(static_cast<std::size_t>(n_agents));
  for (int e = 0; e < n_envs; ++e) {
    MultiAgentEnv& env = *workers.envs[static_cast<std::size_t>(e)];
    for (int t = 0; t < n_steps; ++t) {
      batch.episode_start(e, t) = workers.fresh_episode[static_cast<std::size_t>(e)];
      workers.fresh_episode[static_cast<std::size_t>(e)] = false;
      for (int i = 0; i < n_agents; ++i) {
        const int s = env.local_state(i);
        int a = 0;
        if (chooser) {
          a = chooser(i, s, rng);
        } else {
          const double u = std::generate_canonical<double, 53>(rng);
          double acc = 0.0;
          a = static_cast<int>(probs[static_cast<std::size_t>(i)].cols()) - 1;
          for (Eigen::Index k = 0; k < probs[static_cast<std::size_t>(i)].cols(); ++k) {
            acc += probs[static_cast<std::size_t>(i)](s, k);
            if (u < acc) {
              a = static_cast<int>(k);
              break;
            }
          }
        }
        joint[static_cast<std::size_t>(i)] = a;
        batch.states[static_cast<std::size_t>(i)](e, t) = s;
        batch.actions[static_cast<std::size_t>(i)](e, t) = a;
        batch.log_probs[static_cast<std::size_t>(i)](e, t) = std::log(probs[static_cast<std::size_t>(i)](s, a));
      }
      const StepResult result = env.step(joint);
      for (int i = 0; i < n_agents; ++i) batch.next_states[static_cast<std::size_t>(i)](e, t) = env.local_state(i);
      batch.extrinsic(e, t) = result.reward;
      batch.done(e, t) = result.done;
      workers.running_return[static_cast<std::size_t>(e)] += result.reward;

      if (trajectory_out != nullptr) {
        nlohmann::json line;
        line["iteration"] = iteration;
        line["env"] = e;
        line["t"] = env.steps_taken();
        line["actions"] = joint;
        nlohmann::json cells = nlohmann::json::array();
        for (const Cell& c : env.bodies()) cells.push_back({c.x(), c.y()});
        line["bodies"] = cells;
        line["reward"] = result.reward;
        line["done"] = result.done;
        *trajectory_out << line.dump() << '\n';
      }

      if (result.done) {
        batch.completed_returns.push_back(workers.running_return[static_cast<std::size_t>(e)]);
        workers.running_return[static_cast<std::size_t>(e)] = 0.0;
        workers.fresh_episode[static_cast<std::size_t>(e)] = true;
        env.reset();
      }
    }
  }
  return batch;
}

void compute_intrinsic(RolloutBatch& batch, RolloutWorkers& workers, const std::vector<Eigen::MatrixXd>& tables,
                       double unreachable_cap) {
  for (int e = 0; e < batch.n_envs; ++e) {
    auto& histories = workers.histories[static_cast<std::size_t>(e)];
    for (int t = 0; t < batch.n_steps; ++t) {
      for (int i = 0; i < batch.n_agents; ++i) {
        SdHistory& history = histories[static_cast<std::size_t>(i)];
        const Eigen::MatrixXd& table = tables[static_cast<std::size_t>(i)];
        if (batch.episode_start(e, t)) {
          history.clear();
          intrinsic_reward(history, table, batch.states[static_cast<std::size_t>(i)](e, t), unreachable_cap);
        }
        batch.intrinsic[static_cast<std::size_t>(i)](e, t) =
            intrinsic_reward(history, table, batch.next_states[static_cast<std::size_t>(i)](e, t), unreachable_cap);
      }
    }
  }
}

std::vector<Eigen::MatrixXd> assemble_rewards(const RolloutBatch& batch, double beta, const Eigen::VectorXd& weights,
                                              double intrinsic_scale) {
  if (weights.size() != batch.n_agents) throw std::invalid_argument("assemble_rewards: one weight per agent");
  std::vector<Eigen::MatrixXd> rewards;
  rewards.reserve(static_cast<std::size_t>(batch.n_agents));
  for (int i = 0; i < batch.n_agents; ++i) {
    const double intensity = beta * weights(i);
    rewards.push_back(batch.extrinsic + intensity * (intrinsic_scale * batch.intrinsic[static_cast<std::size_t>(i)]));
  }
  return rewards;
}

Eigen::MatrixXd gae_advantages(const Eigen::MatrixXd& rewards, const Eigen::MatrixXi& states,
                               const Eigen::MatrixXi& next_states,
                               const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& done,
                               const Eigen::VectorXd& values, double gamma, double gae_lambda) {
  Eigen::MatrixXd adv(rewards.rows(), rewards.cols());
  for (Eigen::Index e = 0; e < rewards.rows(); ++e) {
    double running = 0.0;
    for (Eigen::Index t = rewards.cols() - 1; t >= 0; --t) {
      const double live = done(e, t) ? 0.0 : 1.0;
      const double next_value = values(next_states(e, t));
      const double delta = rewards(e, t) + gamma * live * next_value - values(states(e, t));
      running = delta + gamma * gae_lambda * live * running;
      adv(e, t) = running;
    }
  }
  return adv;
}

UpdateStats update_policies(std::vector<AgentLearner>& learners, const RolloutBatch& batch,
                            const std::vector<Eigen::MatrixXd>& rewards, const TrainerConfig& config) {
  UpdateStats stats;
  std::size_t clipped = 0;
  std::size_t total = 0;
  for (int i = 0; i < batch.n_agents; ++i) {
    AgentLearner& learner = learners[static_cast<std::size_t>(i)];
    const auto& states = batch.states[static_cast<std::size_t>(i)];
    const auto& actions = batch.actions[static_cast<std::size_t>(i)];
    const auto& old_logp = batch.log_probs[static_cast<std::size_t>(i)];

    Eigen::MatrixXd adv = gae_advantages(rewards[static_cast<std::size_t>(i)], states,
                                         batch.next_states[static_cast<std::size_t>(i)], batch.done,
                                         learner.values, config.gamma, config.gae_lambda);
    const Eigen::MatrixXd targets = adv + states.unaryExpr([&](int s) { return learner.values(s); });

    const double n = static_cast<double>(adv.size());
    const double mean = adv.mean();
    const double var = (adv.array() - mean).square().sum() / n;
    adv = (adv.array() - mean) / (std::sqrt(var) + 1e-8);

    const Eigen::MatrixXd before = learner.policy.logits();
    Eigen::MatrixXd& logits = learner.policy.logits();
    Eigen::MatrixXd grad(logits.rows(), logits.cols());
    Eigen::VectorXd visits(logits.rows());
    for (int epoch = 0; epoch < config.update_epochs; ++epoch) {
      const Eigen::MatrixXd probs = learner.policy.probability_table();
      grad.setZero();
      visits.setZero();
      for (Eigen::Index e = 0; e < adv.rows(); ++e) {
        for (Eigen::Index t = 0; t < adv.cols(); ++t) {
          const int s = states(e, t);
          const int a = actions(e, t);
          const double a_hat = adv(e, t);
          const double ratio = probs(s, a) / std::exp(old_logp(e, t));
          visits(s) += 1.0;
          ++total;
          const bool clip_active = (a_hat >= 0.0 && ratio > 1.0 + config.clip_ratio) ||
                                   (a_hat < 0.0 && ratio < 1.0 - config.clip_ratio);
          if (clip_active) {
            ++clipped;
            continue;
          }
          // d/dtheta[s,b] of ratio * A = A * ratio * (1[b = a] - pi(b|s))
          grad.row(s) -= a_hat * ratio * probs.row(s);
          grad(s, a) += a_hat * ratio;
        }
      }
      if (!grad.allFinite()) {
        throw TrainingError("agent " + std::to_string(i) + ": non-finite policy gradient");
      }
      for (Eigen::Index s = 0; s < logits.rows(); ++s) {
        if (visits(s) > 0) logits.row(s) += config.learning_rate * grad.row(s) / visits(s);
      }
    }
    stats.max_logit_change = std::max(stats.max_logit_change, (logits - before).cwiseAbs().maxCoeff());

    Eigen::VectorXd target_sum = Eigen::VectorXd::Zero(learner.values.size());
    Eigen::VectorXd target_count = Eigen::VectorXd::Zero(learner.values.size());
    for (Eigen::Index e = 0; e < targets.rows(); ++e) {
      for (Eigen::Index t = 0; t < targets.cols(); ++t) {
        target_sum(states(e, t)) += targets(e, t);
        target_count(states(e, t)) += 1.0;
      }
    }
    for (Eigen::Index s = 0; s < learner.values.size(); ++s) {
      if (target_count(s) > 0) {
        learner.values(s) += config.value_learning_rate * (target_sum(s) / target_count(s) - learner.values(s));
      }
    }
    if (!learner.values.allFinite()) throw TrainingError("agent " + std::to_string(i) + ": non-finite value table");
  }
  stats.clip_fraction = total > 0 ? static_cast<double>(clipped) / static_cast<double>(total) : 0.0;
  return stats;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(TrainerConfig config)
    : config_(std::move(config)), rng_(config_.seed), noise_rng_(config_.seed ^ 0x9e3779b97f4a7c15ULL) {
  config_.validate();
  workers_ = make_workers(config_.env, config_.n_envs);
  const MultiAgentEnv& env = *workers_.envs.front();
  n_agents_ = env.n_agents();
  n_states_ = env.n_local_states();
  for (int i = 0; i < n_agents_; ++i) {
    learners_.push_back({TabularPolicy(n_states_, env.n_actions()), Eigen::VectorXd::Zero(n_states_)});
  }
  rcb_ = initial_rcb_state(config_.rcb);
  if (config_.schedule == ScheduleMode::fixed) rcb_.beta = config_.fixed_beta;
  AgentSignalStats fresh;
  fresh.alpha = config_.stats_alpha;
  stats_.assign(static_cast<std::size_t>(n_agents_), fresh);
  counters_.assign(static_cast<std::size_t>(n_agents_), TransitionCounter(n_states_));
  cap_ = config_.sd.unreachable_cap.value_or(default_unreachable_cap(config_.sd.gamma_sd, n_states_));
  refresh_measures();
}

void Trainer::refresh_measures() {
  measures_.clear();
  tables_.clear();
  for (TransitionCounter& counter : counters_) {
    measures_.push_back(successor_measure(counter.to_mdp(config_.sd.smoothing, config_.sd.gamma_sd)));
    tables_.push_back(distance_table(measures_.back()));
    counter.reset();
  }
}

void Trainer::fill_noise_intrinsic(RolloutBatch& batch) {
  static const double kHalfWidth = std::sqrt(3.0);
  std::uniform_real_distribution<double> eta(-kHalfWidth, kHalfWidth);
  for (int i = 0; i < batch.n_agents; ++i) {
    auto& r = batch.intrinsic[static_cast<std::size_t>(i)];
    for (Eigen::Index e = 0; e < r.rows(); ++e) {
      for (Eigen::Index t = 0; t < r.cols(); ++t) r(e, t) = config_.sd.noise_offset + config_.sd.noise_scale * eta(noise_rng_);
    }
  }
}

Eigen::VectorXd Trainer::current_rsq() const {
  Eigen::VectorXd rsq(n_agents_);
  for (int i = 0; i < n_agents_; ++i) rsq(i) = compute_rsq(stats_[static_cast<std::size_t>(i)], config_.rsq.epsilon);
  return rsq;
}

Eigen::VectorXd Trainer::current_weights(double beta) const {
  switch (config_.allocation) {
    case AllocationMode::none: return Eigen::VectorXd::Ones(n_agents_);
    case AllocationMode::affine: return affine_allocation(current_rsq(), config_.rsq).weights;
    case AllocationMode::water_filling: {
      Eigen::VectorXd snr(n_agents_);
      for (int i = 0; i < n_agents_; ++i) {
        // Water-filling needs strictly positive SNR; a silent agent gets a vanishing one.
        snr(i) = std::max(compute_snr(stats_[static_cast<std::size_t>(i)], config_.rsq.epsilon), 1e-12);
      }
      if (!(beta > 0)) return Eigen::VectorXd::Zero(n_agents_);
      const AllocationResult wf = water_filling(snr, static_cast<double>(n_agents_) * beta * beta);
      return wf.powers.cwiseSqrt() / beta;
    }
  }
  throw std::logic_error("unknown allocation mode");
}

IterationRecord Trainer::step() {
  const auto started = std::chrono::steady_clock::now();
  RolloutBatch batch =
      collect_rollouts(learners_, workers_, config_.n_steps, rng_, trajectory_out_, iteration_, chooser_);
  for (int i = 0; i < n_agents_; ++i) {
    const auto& from = batch.states[static_cast<std::size_t>(i)];
    const auto& to = batch.next_states[static_cast<std::size_t>(i)];
    for (int e = 0; e < batch.n_envs; ++e) {
      for (int t = 0; t < batch.n_steps; ++t) counters_[static_cast<std::size_t>(i)].add(from(e, t), to(e, t));
    }
  }

  IterationRecord record;
  record.iteration = iteration_;
  record.mean_team_return = batch.mean_team_return();
  record.episodes_completed = static_cast<int>(batch.completed_returns.size());

  // Phase 1: return EMA, then beta from the updated EMA.
  if (record.mean_team_return) rcb_ = update_return_ema(rcb_, config_.rcb, *record.mean_team_return);
  rcb_.beta = config_.schedule == ScheduleMode::rcb ? compute_beta(rcb_, config_.rcb) : config_.fixed_beta;
  record.r_ema = rcb_.r_ema;
  record.beta = rcb_.beta;

  // Phase 2: intrinsic rewards, per-agent statistics, RSQ and weights.
  if (config_.sd.source == IntrinsicSource::successor_distance) {
    compute_intrinsic(batch, workers_, tables_, cap_);
  } else {
    fill_noise_intrinsic(batch);
  }
  std::vector<double> samples;
  for (int i = 0; i < n_agents_; ++i) {
    const Eigen::MatrixXd& r = batch.intrinsic[static_cast<std::size_t>(i)];
    samples.assign(r.data(), r.data() + r.size());
    if (config_.stats_on_scaled) {
      for (double& v : samples) v *= config_.intrinsic_scale;
    }
    stats_[static_cast<std::size_t>(i)] = update_stats(stats_[static_cast<std::size_t>(i)], std::span<const double>(samples));
  }
  const Eigen::VectorXd rsq = current_rsq();
  const Eigen::VectorXd weights = current_weights(rcb_.beta);
  record.quality_gap = n_agents_ >= 2 ? quality_gap(rsq) : 0.0;
  for (int i = 0; i < n_agents_; ++i) {
    const AgentSignalStats& s = stats_[static_cast<std::size_t>(i)];
    record.agents.push_back({s.mu, s.sigma_sq, rsq(i), weights(i), batch.intrinsic[static_cast<std::size_t>(i)].mean()});
  }

  // Phase 3: augmented rewards and policy update.
  const std::vector<Eigen::MatrixXd> rewards = assemble_rewards(batch, rcb_.beta, weights, config_.intrinsic_scale);
  last_assembled_beta_ = rcb_.beta;
  update_policies(learners_, batch, rewards, config_);

  // Phase 4: successor-measure refresh from the transitions seen since the last one.
  if (iteration_ % config_.sd.refresh_interval == 0) refresh_measures();

  ++iteration_;
  record.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return record;
}

std::vector<IterationRecord> run_training(const TrainerConfig& config, const RecordSink& sink,
                                          std::ostream* trajectory_out) {
  Trainer trainer(config);
  trainer.set_trajectory_stream(trajectory_out);
  std::vector<IterationRecord> records;
  records.reserve(static_cast<std::size_t>(config.total_iterations));
  for (int k = 0; k < config.total_iterations; ++k) {
    records.push_back(trainer.step());
    if (sink) sink(records.back());
  }
  return records;
}

std::optional<double> final_return(const std::vector<IterationRecord>& records, int window) {
  double sum = 0.0;
  int count = 0;
  for (auto it = records.rbegin(); it != records.rend() && count < window; ++it) {
    if (!it->mean_team_return) continue;
    sum += *it->mean_team_return;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

}  // namespace qex
