#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace qex {

// Exact tabular Successor Distance.
//
//   m = (1 - gamma) (I - gamma P)^{-1}
//   d(x, y) = ln(m[y][y] / m[x][y])

template <typename Scalar>
struct BasicTabularMdp {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Matrix transition;  // row-stochastic, P(x, y) = Pr(next = y | current = x)
  Scalar gamma_sd{0.99};

  Eigen::Index n_states() const { return transition.rows(); }

  void validate() const {
    if (transition.rows() == 0 || transition.rows() != transition.cols()) {
      throw std::invalid_argument("mdp: transition matrix must be square and non-empty");
    }
    if (!(gamma_sd > 0 && gamma_sd < 1)) throw std::invalid_argument("mdp: gamma_sd must lie in (0, 1)");
    if ((transition.array() < 0).any()) throw std::invalid_argument("mdp: negative transition probability");
    for (Eigen::Index x = 0; x < transition.rows(); ++x) {
      if (std::abs(transition.row(x).sum() - Scalar(1)) > Scalar(1e-12)) {
        throw std::invalid_argument("mdp: row " + std::to_string(x) + " does not sum to 1");
      }
    }
  }
};

template <typename Scalar>
struct BasicSuccessorMeasure {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Matrix m;
  // reachable(x, y): y is visited with positive probability starting from x.
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> reachable;
  Scalar gamma_sd{0.99};

  Eigen::Index n_states() const { return m.rows(); }
};

using TabularMdp = BasicTabularMdp<double>;
using SuccessorMeasure = BasicSuccessorMeasure<double>;

/// Transitive closure of the support of P (including x -> x).
template <typename Derived>
Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> reachability(const Eigen::MatrixBase<Derived>& transition) {
  const Eigen::Index n = transition.rows();
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> reach =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);
  std::vector<Eigen::Index> stack;
  for (Eigen::Index source = 0; source < n; ++source) {
    reach(source, source) = true;
    stack.assign(1, source);
    while (!stack.empty()) {
      const Eigen::Index x = stack.back();
      stack.pop_back();
      for (Eigen::Index y = 0; y < n; ++y) {
        if (transition(x, y) > 0 && !reach(source, y)) {
          reach(source, y) = true;
          stack.push_back(y);
        }
      }
    }
  }
  return reach;
}

template <typename Scalar>
BasicSuccessorMeasure<Scalar> successor_measure(const BasicTabularMdp<Scalar>& mdp) {
  mdp.validate();
  using Matrix = typename BasicTabularMdp<Scalar>::Matrix;
  const Eigen::Index n = mdp.n_states();
  const Matrix system = Matrix::Identity(n, n) - mdp.gamma_sd * mdp.transition;
  Eigen::PartialPivLU<Matrix> lu(system);

  BasicSuccessorMeasure<Scalar> measure;
  measure.gamma_sd = mdp.gamma_sd;
  measure.m = (Scalar(1) - mdp.gamma_sd) * lu.solve(Matrix::Identity(n, n));
  if (!measure.m.allFinite()) throw std::logic_error("successor_measure: singular system");
  measure.reachable = reachability(mdp.transition);
  // Unreachable entries are exactly zero; clear solver round-off.
  for (Eigen::Index x = 0; x < n; ++x) {
    for (Eigen::Index y = 0; y < n; ++y) {
      if (!measure.reachable(x, y)) measure.m(x, y) = 0;
    }
  }
  return measure;
}

struct SdValue {
  double distance{0};
  bool reachable{true};
};

/// ln(m[y][y] / m[x][y]) without flooring; may be slightly negative from round-off.
template <typename Scalar>
Scalar sd_log_ratio(const BasicSuccessorMeasure<Scalar>& measure, Eigen::Index x, Eigen::Index y) {
  if (x == y) return Scalar(0);
  return std::log(measure.m(y, y)) - std::log(measure.m(x, y));
}

template <typename Scalar>
SdValue sd_distance(const BasicSuccessorMeasure<Scalar>& measure, Eigen::Index x, Eigen::Index y) {
  if (x < 0 || y < 0 || x >= measure.n_states() || y >= measure.n_states()) {
    throw std::out_of_range("sd_distance: state index outside the measure");
  }
  if (!measure.reachable(x, y) || !(measure.m(x, y) > 0)) {
    return {std::numeric_limits<double>::infinity(), false};
  }
  return {std::max(0.0, static_cast<double>(sd_log_ratio(measure, x, y))), true};
}

/// Longest deterministic-path distance, -ln(gamma) * n_states.
inline double default_unreachable_cap(double gamma_sd, Eigen::Index n_states) {
  return -std::log(gamma_sd) * static_cast<double>(n_states);
}

/// Per-agent, per-episode visit history.
struct SdHistory {
  std::vector<Eigen::Index> visited;

  void clear() { visited.clear(); }
};

/// min over history of d(entry, current); 0 on an empty history. The
/// current state is appended afterwards.
template <typename Scalar>
double intrinsic_reward(SdHistory& history, const BasicSuccessorMeasure<Scalar>& measure,
                        Eigen::Index current, double unreachable_cap) {
  double reward = 0.0;
  if (!history.visited.empty()) {
    double best = std::numeric_limits<double>::infinity();
    bool any = false;
    for (Eigen::Index past : history.visited) {
      const SdValue d = sd_distance(measure, past, current);
      if (!d.reachable) continue;
      any = true;
      if (d.distance < best) best = d.distance;
      if (best == 0.0) break;
    }
    reward = any ? best : unreachable_cap;
  }
  history.visited.push_back(current);
  return reward;
}

/// All pairwise distances, +inf where unreachable. Row = history entry,
/// column = current state.
template <typename Scalar>
Eigen::MatrixXd distance_table(const BasicSuccessorMeasure<Scalar>& measure) {
  const Eigen::Index n = measure.n_states();
  Eigen::MatrixXd table(n, n);
  for (Eigen::Index x = 0; x < n; ++x) {
    for (Eigen::Index y = 0; y < n; ++y) table(x, y) = sd_distance(measure, x, y).distance;
  }
  return table;
}

/// Same as intrinsic_reward over a precomputed distance_table.
inline double intrinsic_reward(SdHistory& history, const Eigen::MatrixXd& table, Eigen::Index current,
                               double unreachable_cap) {
  double reward = 0.0;
  if (!history.visited.empty()) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index past : history.visited) {
      const double d = table(past, current);
      if (d < best) best = d;
      if (best == 0.0) break;
    }
    reward = std::isfinite(best) ? best : unreachable_cap;
  }
  history.visited.push_back(current);
  return reward;
}

struct QuasimetricReport {
  std::size_t triples_checked{0};
  std::size_t pairs_checked{0};
  std::size_t nonnegativity_violations{0};
  std::size_t identity_violations{0};
  std::size_t triangle_violations{0};
  // max over triples of d(x,z) - d(x,y) - d(y,z); <= 0 when the inequality holds.
  double worst_triangle_slack{-std::numeric_limits<double>::infinity()};
  std::size_t asymmetric_pairs{0};

  bool passed() const {
    return nonnegativity_violations == 0 && identity_violations == 0 && triangle_violations == 0;
  }
};

/// Exhaustive axiom check over all pairs and ordered triples with finite distances.
template <typename Scalar>
QuasimetricReport check_quasimetric(const BasicSuccessorMeasure<Scalar>& measure, double tolerance = 1e-9) {
  const Eigen::Index n = measure.n_states();
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::infinity());
  QuasimetricReport report;
  for (Eigen::Index x = 0; x < n; ++x) {
    for (Eigen::Index y = 0; y < n; ++y) {
      if (!measure.reachable(x, y) || !(measure.m(x, y) > 0)) continue;
      d(x, y) = static_cast<double>(sd_log_ratio(measure, x, y));
      ++report.pairs_checked;
      if (d(x, y) < -tolerance) ++report.nonnegativity_violations;
      if (x != y && !(d(x, y) > 0)) ++report.identity_violations;
    }
  }
  for (Eigen::Index x = 0; x < n; ++x) {
    for (Eigen::Index y = x + 1; y < n; ++y) {
      if (std::isfinite(d(x, y)) && std::isfinite(d(y, x)) && std::abs(d(x, y) - d(y, x)) > tolerance) {
        ++report.asymmetric_pairs;
      } else if (std::isfinite(d(x, y)) != std::isfinite(d(y, x))) {
        ++report.asymmetric_pairs;
      }
    }
  }
  for (Eigen::Index x = 0; x < n; ++x) {
    for (Eigen::Index y = 0; y < n; ++y) {
      if (!std::isfinite(d(x, y))) continue;
      for (Eigen::Index z = 0; z < n; ++z) {
        if (!std::isfinite(d(y, z)) || !std::isfinite(d(x, z))) continue;
        ++report.triples_checked;
        const double slack = d(x, z) - d(x, y) - d(y, z);
        report.worst_triangle_slack = std::max(report.worst_triangle_slack, slack);
        if (slack > tolerance) ++report.triangle_violations;
      }
    }
  }
  return report;
}

/// Accumulates observed local transitions and turns them into a smoothed
/// empirical transition matrix.
class TransitionCounter {
 public:
  explicit TransitionCounter(Eigen::Index n_states = 0)
      : counts_(Eigen::MatrixXd::Zero(n_states, n_states)) {}

  void add(Eigen::Index from, Eigen::Index to) { counts_(from, to) += 1.0; }
  void reset() { counts_.setZero(); }
  double total() const { return counts_.sum(); }
  const Eigen::MatrixXd& counts() const { return counts_; }

  TabularMdp to_mdp(double smoothing, double gamma_sd) const {
    TabularMdp mdp;
    mdp.gamma_sd = gamma_sd;
    mdp.transition = counts_.array() + smoothing;
    for (Eigen::Index x = 0; x < mdp.transition.rows(); ++x) {
      const double row = mdp.transition.row(x).sum();
      if (row > 0) {
        mdp.transition.row(x) /= row;
      } else {
        mdp.transition(x, x) = 1.0;  // never left this state: absorbing
      }
    }
    return mdp;
  }

 private:
  Eigen::MatrixXd counts_;
};

// Plain-text matrix dump: a "rows cols" header, then one row per line.
void write_matrix(std::ostream& out, const Eigen::MatrixXd& matrix);
Eigen::MatrixXd read_matrix(std::istream& in);

}  // namespace qex
