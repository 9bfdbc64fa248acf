#include "qex/envs.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>

namespace qex {

Cell apply_move(const Cell& cell, int move) {
  switch (static_cast<Move>(move)) {
    case Move::up: return {cell.x(), cell.y() - 1};
    case Move::down: return {cell.x(), cell.y() + 1};
    case Move::left: return {cell.x() - 1, cell.y()};
    case Move::right: return {cell.x() + 1, cell.y()};
    case Move::stay: return cell;
  }
  throw std::invalid_argument("unknown move " + std::to_string(move));
}

int manhattan(const Cell& a, const Cell& b) { return std::abs(a.x() - b.x()) + std::abs(a.y() - b.y()); }

int MultiAgentEnv::feature_to_index(const Cell& cell) const {
  if (!in_bounds(cell)) throw std::out_of_range("cell outside the grid");
  return cell.y() * width_ + cell.x();
}

Cell MultiAgentEnv::index_to_feature(int index) const {
  if (index < 0 || index >= n_local_states()) throw std::out_of_range("state index outside the grid");
  return {index % width_, index / width_};
}

void MultiAgentEnv::validate_action(std::span<const int> joint_action) const {
  if (static_cast<int>(joint_action.size()) != n_agents()) {
    throw std::invalid_argument("joint action has " + std::to_string(joint_action.size()) +
                                " entries, expected " + std::to_string(n_agents()));
  }
  for (std::size_t i = 0; i < joint_action.size(); ++i) {
    if (joint_action[i] < 0 || joint_action[i] >= kNumMoves) {
      throw std::invalid_argument("agent " + std::to_string(i) + ": invalid move " +
                                  std::to_string(joint_action[i]));
    }
  }
}

std::vector<Cell> resolve_moves(std::span<const Cell> current, std::vector<Cell> proposed) {
  const std::size_t n = current.size();
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (proposed[i] == current[i]) continue;
      bool blocked = false;
      for (std::size_t j = 0; j < n && !blocked; ++j) {
        if (j == i) continue;
        const bool same_target = proposed[j] == proposed[i];
        if (same_target && (j < i || proposed[j] == current[j])) blocked = true;
        if (proposed[j] == current[i] && current[j] == proposed[i]) blocked = true;
      }
      if (blocked) {
        proposed[i] = current[i];
        changed = true;
      }
    }
  }
  return proposed;
}

// ---------------------------------------------------------------------------
// Corridor

namespace {

void default_corridor_layout(const CorridorConfig& config, int bottleneck_row, std::vector<Cell>& starts,
                             std::vector<Cell>& goals) {
  if (config.n_agents != 4) {
    throw std::invalid_argument("corridor: default layout needs 4 agents; give explicit starts/goals");
  }
  const int mid = config.width / 2;
  const int last_col = config.width - 1;
  const int last_row = config.height - 1;
  const int top_center = std::max(0, bottleneck_row - 2);
  const int bottom_center = std::min(last_row, bottleneck_row + 2);
  // Two agents per side: one at the outer edge, one near the gap.
  starts = {{0, 0}, {mid, top_center}, {mid, bottom_center}, {last_col, last_row}};
  goals.clear();
  for (const Cell& s : starts) goals.emplace_back(s.x(), last_row - s.y());
}

}  // namespace

CorridorGrid::CorridorGrid(CorridorConfig config) : MultiAgentEnv(config.width, config.height), config_(std::move(config)) {
  if (width_ < 1 || height_ < 1) throw std::invalid_argument("corridor: grid must be at least 1x1");
  if (config_.max_steps < 1) throw std::invalid_argument("corridor: max_steps must be >= 1");
  bottleneck_row_ = config_.has_bottleneck ? (config_.bottleneck_row < 0 ? height_ / 2 : config_.bottleneck_row) : -1;
  if (config_.has_bottleneck) {
    if (bottleneck_row_ >= height_) throw std::invalid_argument("corridor: bottleneck row outside the grid");
    if (config_.gap_width < 1 || config_.gap_width > width_) {
      throw std::invalid_argument("corridor: gap width must lie in [1, width]");
    }
  }
  if (config_.starts.empty() && config_.goals.empty()) {
    default_corridor_layout(config_, bottleneck_row_ < 0 ? height_ / 2 : bottleneck_row_, starts_, goals_);
  } else {
    starts_ = config_.starts;
    goals_ = config_.goals;
  }
  if (starts_.size() != goals_.size() || starts_.empty()) {
    throw std::invalid_argument("corridor: need one goal per agent");
  }
  for (std::size_t i = 0; i < starts_.size(); ++i) {
    if (!in_bounds(starts_[i]) || is_wall(starts_[i]) || !in_bounds(goals_[i]) || is_wall(goals_[i])) {
      throw std::invalid_argument("corridor: start or goal of agent " + std::to_string(i) + " is not a free cell");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (starts_[i] == starts_[j]) throw std::invalid_argument("corridor: agents share a start cell");
      if (goals_[i] == goals_[j]) throw std::invalid_argument("corridor: agents share a goal cell");
    }
  }
  config_.n_agents = static_cast<int>(starts_.size());
  reset();
}

bool CorridorGrid::is_wall(const Cell& cell) const {
  if (bottleneck_row_ < 0 || cell.y() != bottleneck_row_) return false;
  const int gap_begin = (width_ - config_.gap_width) / 2;
  return cell.x() < gap_begin || cell.x() >= gap_begin + config_.gap_width;
}

void CorridorGrid::reset() {
  positions_ = starts_;
  arrived_.assign(starts_.size(), false);
  for (std::size_t i = 0; i < starts_.size(); ++i) arrived_[i] = starts_[i] == goals_[i];
  steps_ = 0;
}

double CorridorGrid::shaping() const {
  double total = 0.0;
  for (std::size_t i = 0; i < positions_.size(); ++i) total += manhattan(positions_[i], goals_[i]);
  return -CorridorConfig::kShaping * total / static_cast<double>(positions_.size());
}

StepResult CorridorGrid::step(std::span<const int> joint_action) {
  validate_action(joint_action);
  if (steps_ >= config_.max_steps) throw std::logic_error("corridor: step after episode end");
  std::vector<Cell> proposed = positions_;
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    if (arrived_[i]) continue;
    const Cell target = apply_move(positions_[i], joint_action[i]);
    if (in_bounds(target) && !is_wall(target)) proposed[i] = target;
  }
  positions_ = resolve_moves(positions_, std::move(proposed));
  ++steps_;

  StepResult result;
  result.reward = shaping();
  bool all_arrived = true;
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    if (!arrived_[i] && positions_[i] == goals_[i]) {
      arrived_[i] = true;
      result.reward += CorridorConfig::kArrivalBonus;
    }
    all_arrived = all_arrived && arrived_[i];
  }
  result.done = all_arrived || steps_ >= config_.max_steps;
  return result;
}

// ---------------------------------------------------------------------------
// Tag

TagGrid::TagGrid(TagConfig config) : MultiAgentEnv(config.width, config.height), config_(std::move(config)) {
  if (width_ < 1 || height_ < 1) throw std::invalid_argument("tag: grid must be at least 1x1");
  if (config_.max_steps < 1) throw std::invalid_argument("tag: max_steps must be >= 1");
  if (config_.capture_radius < 0) throw std::invalid_argument("tag: capture radius must be >= 0");
  predator_starts_ = config_.predator_starts;
  prey_starts_ = config_.prey_starts;
  if (predator_starts_.empty()) {
    const std::vector<Cell> corners = {{0, 0}, {width_ - 1, 0}, {0, height_ - 1}, {width_ - 1, height_ - 1}};
    if (config_.n_predators < 1 || config_.n_predators > 4) {
      throw std::invalid_argument("tag: default layout supports 1-4 predators");
    }
    predator_starts_.assign(corners.begin(), corners.begin() + config_.n_predators);
  }
  if (prey_starts_.empty()) prey_starts_ = {{(2 * width_) / 3, (2 * height_) / 3}};
  std::vector<Cell> all = predator_starts_;
  all.insert(all.end(), prey_starts_.begin(), prey_starts_.end());
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!in_bounds(all[i])) throw std::invalid_argument("tag: start cell outside the grid");
    for (std::size_t j = 0; j < i; ++j) {
      if (all[i] == all[j]) throw std::invalid_argument("tag: two bodies share a start cell");
    }
  }
  config_.n_predators = static_cast<int>(predator_starts_.size());
  reset();
}

void TagGrid::reset() {
  predators_ = predator_starts_;
  prey_ = prey_starts_;
  steps_ = 0;
}

std::vector<Cell> TagGrid::bodies() const {
  std::vector<Cell> all = predators_;
  all.insert(all.end(), prey_.begin(), prey_.end());
  return all;
}

int TagGrid::captured() const {
  int count = 0;
  for (const Cell& p : prey_) {
    const bool caught = std::any_of(predators_.begin(), predators_.end(),
                                    [&](const Cell& q) { return manhattan(p, q) <= config_.capture_radius; });
    count += caught ? 1 : 0;
  }
  return count;
}

void TagGrid::move_prey() {
  if (config_.prey_policy == PreyPolicy::stationary) return;
  static constexpr int kPreference[kNumMoves] = {static_cast<int>(Move::stay), static_cast<int>(Move::up),
                                                 static_cast<int>(Move::down), static_cast<int>(Move::left),
                                                 static_cast<int>(Move::right)};
  for (std::size_t k = 0; k < prey_.size(); ++k) {
    Cell best = prey_[k];
    int best_score = std::numeric_limits<int>::min();
    for (int move : kPreference) {
      const Cell target = apply_move(prey_[k], move);
      if (!in_bounds(target)) continue;
      const auto occupied = [&](const Cell& c) { return c == target; };
      if (std::any_of(predators_.begin(), predators_.end(), occupied)) continue;
      bool other_prey = false;
      for (std::size_t j = 0; j < prey_.size(); ++j) other_prey = other_prey || (j != k && prey_[j] == target);
      if (other_prey) continue;
      int nearest = std::numeric_limits<int>::max();
      for (const Cell& q : predators_) nearest = std::min(nearest, manhattan(target, q));
      if (nearest > best_score) {
        best_score = nearest;
        best = target;
      }
    }
    prey_[k] = best;
  }
}

StepResult TagGrid::step(std::span<const int> joint_action) {
  validate_action(joint_action);
  if (steps_ >= config_.max_steps) throw std::logic_error("tag: step after episode end");
  std::vector<Cell> proposed = predators_;
  for (std::size_t i = 0; i < predators_.size(); ++i) {
    const Cell target = apply_move(predators_[i], joint_action[i]);
    const bool onto_prey = std::find(prey_.begin(), prey_.end(), target) != prey_.end();
    if (in_bounds(target) && !onto_prey) proposed[i] = target;
  }
  predators_ = resolve_moves(predators_, std::move(proposed));
  move_prey();
  ++steps_;
  return {static_cast<double>(captured()), steps_ >= config_.max_steps};
}

}  // namespace qex
