#pragma once

#include <Eigen/Core>

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace qex {

// Desk-scale cooperative grid worlds. All agents share a single team reward;
// an agent's local feature is its own (col, row) cell.

enum class Move : int { up = 0, down = 1, left = 2, right = 3, stay = 4 };
inline constexpr int kNumMoves = 5;

using Cell = Eigen::Vector2i;  // (col, row); row 0 is the top of the grid

Cell apply_move(const Cell& cell, int move);
int manhattan(const Cell& a, const Cell& b);

struct StepResult {
  double reward{0};
  bool done{false};
};

class MultiAgentEnv {
 public:
  MultiAgentEnv(int width, int height) : width_(width), height_(height) {}
  virtual ~MultiAgentEnv() = default;

  virtual int n_agents() const = 0;
  int n_actions() const { return kNumMoves; }
  int n_local_states() const { return width_ * height_; }
  int width() const { return width_; }
  int height() const { return height_; }

  virtual void reset() = 0;
  /// Simultaneous joint move. Throws std::invalid_argument on a malformed action.
  virtual StepResult step(std::span<const int> joint_action) = 0;
  virtual int steps_taken() const = 0;
  virtual int max_steps() const = 0;

  /// Agent-own features; moving other agents never changes them.
  virtual Cell local_features(int agent) const = 0;
  int local_state(int agent) const { return feature_to_index(local_features(agent)); }
  int feature_to_index(const Cell& cell) const;
  Cell index_to_feature(int index) const;

  /// Positions of every body on the grid (agents first), for trajectory dumps.
  virtual std::vector<Cell> bodies() const = 0;
  virtual std::unique_ptr<MultiAgentEnv> clone() const = 0;

 protected:
  bool in_bounds(const Cell& cell) const {
    return cell.x() >= 0 && cell.y() >= 0 && cell.x() < width_ && cell.y() < height_;
  }
  void validate_action(std::span<const int> joint_action) const;

  int width_;
  int height_;
};

/// Resolves simultaneous moves. `proposed[i]` is agent i's target (already
/// equal to current[i] for agents that stay or hit a wall). A move fails when
/// its target is claimed by a lower-index agent, is occupied by an agent that
/// ends up staying, or swaps with another agent. Losers stay.
std::vector<Cell> resolve_moves(std::span<const Cell> current, std::vector<Cell> proposed);

struct CorridorConfig {
  int width{11};
  int height{7};
  int gap_width{1};
  int n_agents{4};
  int max_steps{64};
  // Row of the wall with the gap; negative selects height / 2. Set
  // `has_bottleneck = false` for an open grid.
  int bottleneck_row{-1};
  bool has_bottleneck{true};
  // Explicit layout; when empty the default 4-agent layout is used.
  std::vector<Cell> starts;
  std::vector<Cell> goals;

  static constexpr double kShaping = 0.01;
  static constexpr double kArrivalBonus = 1.0;
};

/// Agents start on both sides of a walled row with a narrow gap and must
/// reach goals on the opposite side. Agents freeze on arrival.
class CorridorGrid final : public MultiAgentEnv {
 public:
  explicit CorridorGrid(CorridorConfig config);

  int n_agents() const override { return static_cast<int>(starts_.size()); }
  void reset() override;
  StepResult step(std::span<const int> joint_action) override;
  int steps_taken() const override { return steps_; }
  int max_steps() const override { return config_.max_steps; }
  Cell local_features(int agent) const override { return positions_.at(static_cast<std::size_t>(agent)); }
  std::vector<Cell> bodies() const override { return positions_; }
  std::unique_ptr<MultiAgentEnv> clone() const override { return std::make_unique<CorridorGrid>(*this); }

  bool is_wall(const Cell& cell) const;
  bool at_goal(int agent) const { return arrived_.at(static_cast<std::size_t>(agent)); }
  const std::vector<Cell>& goals() const { return goals_; }
  const std::vector<Cell>& positions() const { return positions_; }
  int bottleneck_row() const { return bottleneck_row_; }
  /// Largest Manhattan distance on the grid, used for reward bounds.
  int diameter() const { return width_ - 1 + height_ - 1; }
  const CorridorConfig& config() const { return config_; }

 private:
  double shaping() const;

  CorridorConfig config_;
  int bottleneck_row_;
  std::vector<Cell> starts_;
  std::vector<Cell> goals_;
  std::vector<Cell> positions_;
  std::vector<bool> arrived_;
  int steps_{0};
};

enum class PreyPolicy { evasive, stationary };

struct TagConfig {
  int width{9};
  int height{9};
  int n_predators{3};
  int capture_radius{1};
  int max_steps{64};
  PreyPolicy prey_policy{PreyPolicy::evasive};
  std::vector<Cell> predator_starts;
  std::vector<Cell> prey_starts;
};

/// Learning predators chase scripted prey. Team reward is the number of prey
/// with a predator within the capture radius after the prey moves.
class TagGrid final : public MultiAgentEnv {
 public:
  explicit TagGrid(TagConfig config);

  int n_agents() const override { return static_cast<int>(predator_starts_.size()); }
  void reset() override;
  StepResult step(std::span<const int> joint_action) override;
  int steps_taken() const override { return steps_; }
  int max_steps() const override { return config_.max_steps; }
  Cell local_features(int agent) const override { return predators_.at(static_cast<std::size_t>(agent)); }
  std::vector<Cell> bodies() const override;
  std::unique_ptr<MultiAgentEnv> clone() const override { return std::make_unique<TagGrid>(*this); }

  const std::vector<Cell>& predators() const { return predators_; }
  const std::vector<Cell>& prey() const { return prey_; }
  const TagConfig& config() const { return config_; }

 private:
  void move_prey();
  int captured() const;

  TagConfig config_;
  std::vector<Cell> predator_starts_;
  std::vector<Cell> prey_starts_;
  std::vector<Cell> predators_;
  std::vector<Cell> prey_;
  int steps_{0};
};

}  // namespace qex
