#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qex {

// Per-agent reward signal quality (RSQ) and budget allocation.

template <typename Scalar>
struct BasicAgentSignalStats {
  Scalar mu{0};
  Scalar sigma_sq{1};
  Scalar alpha{0.1};
};

template <typename Scalar>
struct BasicRsqParams {
  Scalar lambda{3.0};
  Scalar rsq_ref{0.5};
  Scalar h_min{0.1};
  Scalar h_max{2.0};
  Scalar epsilon{1e-8};

  void validate() const {
    if (!(lambda >= 0)) throw std::invalid_argument("rsq: lambda must be >= 0");
    if (!(rsq_ref >= 0 && rsq_ref <= 1)) throw std::invalid_argument("rsq: rsq_ref must lie in [0, 1]");
    if (!(h_min > 0 && h_min <= 1 && 1 <= h_max)) {
      throw std::invalid_argument("rsq: require 0 < h_min <= 1 <= h_max");
    }
    if (!(epsilon >= 0)) throw std::invalid_argument("rsq: epsilon must be >= 0");
  }
};

enum class AllocationMode { affine, water_filling, none };

inline const char* to_string(AllocationMode mode) {
  switch (mode) {
    case AllocationMode::affine: return "affine";
    case AllocationMode::water_filling: return "water_filling";
    case AllocationMode::none: return "none";
  }
  return "?";
}

template <typename Scalar>
struct BasicAllocationResult {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  AllocationMode mode{AllocationMode::affine};
  Vector weights;  // h_i (affine)
  Vector powers;   // p_i = beta_i^2 (water-filling)
  Scalar water_level{0};
  Scalar budget{0};
};

using AgentSignalStats = BasicAgentSignalStats<double>;
using RsqParams = BasicRsqParams<double>;
using AllocationResult = BasicAllocationResult<double>;

/// EMA update of batch mean and population variance (divide by N).
template <typename Scalar>
BasicAgentSignalStats<Scalar> update_stats(BasicAgentSignalStats<Scalar> stats,
                                           std::span<const Scalar> batch) {
  if (batch.empty()) throw std::invalid_argument("rsq: intrinsic reward batch is empty");
  const Scalar n = static_cast<Scalar>(batch.size());
  const Scalar mean = std::accumulate(batch.begin(), batch.end(), Scalar(0)) / n;
  Scalar sq = 0;
  for (Scalar v : batch) sq += (v - mean) * (v - mean);
  const Scalar var = sq / n;
  stats.mu = stats.alpha * mean + (Scalar(1) - stats.alpha) * stats.mu;
  stats.sigma_sq = stats.alpha * var + (Scalar(1) - stats.alpha) * stats.sigma_sq;
  return stats;
}

template <typename Scalar>
Scalar compute_rsq(const BasicAgentSignalStats<Scalar>& stats, Scalar epsilon) {
  const Scalar signal = stats.mu * stats.mu;
  return signal / (signal + stats.sigma_sq + epsilon);
}

/// mu^2 / (sigma^2 + eps); the same regularised SNR feeds both allocation modes.
template <typename Scalar>
Scalar compute_snr(const BasicAgentSignalStats<Scalar>& stats, Scalar epsilon) {
  return stats.mu * stats.mu / (stats.sigma_sq + epsilon);
}

/// RSQ as a function of SNR, written as 1 - 1/(1 + snr) so that it is
/// monotone under correctly rounded arithmetic.
template <typename Scalar>
Scalar rsq_from_snr(Scalar snr) {
  return Scalar(1) - Scalar(1) / (Scalar(1) + snr);
}

template <typename Scalar>
Scalar modulation_weight(Scalar rsq, const BasicRsqParams<Scalar>& params) {
  const Scalar raw = Scalar(1) + params.lambda * (rsq - params.rsq_ref);
  return std::clamp(raw, params.h_min, params.h_max);
}

template <typename Derived>
BasicAllocationResult<typename Derived::Scalar> affine_allocation(
    const Eigen::MatrixBase<Derived>& rsq, const BasicRsqParams<typename Derived::Scalar>& params) {
  using Scalar = typename Derived::Scalar;
  BasicAllocationResult<Scalar> result;
  result.mode = AllocationMode::affine;
  result.weights = rsq.unaryExpr([&](Scalar r) { return modulation_weight(r, params); });
  return result;
}

/// Exact water-filling: p_i = (nu - 1/snr_i)^+ with sum p_i = budget.
///
/// Active-set solve: agents are ordered by 1/snr ascending (ties by index),
/// and the active set grows while the next agent's floor lies below the
/// closed-form water level nu_k = (budget + sum_{j<=k} 1/snr_j) / k.
template <typename Derived>
BasicAllocationResult<typename Derived::Scalar> water_filling(const Eigen::MatrixBase<Derived>& snr,
                                                              typename Derived::Scalar budget) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = snr.size();
  if (n == 0) throw std::invalid_argument("water_filling: no agents");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(snr(i) > 0) || !std::isfinite(snr(i))) {
      throw std::invalid_argument("water_filling: snr[" + std::to_string(i) +
                                  "] must be positive and finite");
    }
  }
  if (!(budget >= 0) || !std::isfinite(budget)) {
    throw std::invalid_argument("water_filling: budget must be finite and >= 0");
  }

  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> floor = snr.cwiseInverse();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return floor(a) < floor(b); });

  BasicAllocationResult<Scalar> result;
  result.mode = AllocationMode::water_filling;
  result.budget = budget;
  result.powers = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);

  if (budget == 0) {
    result.water_level = floor(order.front());
    return result;
  }

  Scalar floor_sum = floor(order[0]);
  Eigen::Index active = 1;
  Scalar nu = budget + floor_sum;
  while (active < n && floor(order[static_cast<std::size_t>(active)]) < nu) {
    floor_sum += floor(order[static_cast<std::size_t>(active)]);
    ++active;
    nu = (budget + floor_sum) / static_cast<Scalar>(active);
  }
  result.water_level = nu;
  for (Eigen::Index k = 0; k < active; ++k) {
    const Eigen::Index i = order[static_cast<std::size_t>(k)];
    result.powers(i) = std::max(Scalar(0), nu - floor(i));
  }
  return result;
}

/// 0.5 * ln(1 + beta^2 * snr), in nats.
template <typename Scalar>
Scalar mutual_information(Scalar beta, Scalar snr) {
  if (!(snr >= 0)) throw std::invalid_argument("mutual_information: snr must be >= 0");
  return Scalar(0.5) * std::log1p(beta * beta * snr);
}

/// Total information of a power allocation, sum_i 0.5 ln(1 + p_i snr_i).
template <typename DerivedP, typename DerivedS>
typename DerivedP::Scalar total_information(const Eigen::MatrixBase<DerivedP>& powers,
                                            const Eigen::MatrixBase<DerivedS>& snr) {
  using Scalar = typename DerivedP::Scalar;
  Scalar total = 0;
  for (Eigen::Index i = 0; i < powers.size(); ++i) {
    total += Scalar(0.5) * std::log1p(powers(i) * snr(i));
  }
  return total;
}

template <typename Derived>
typename Derived::Scalar quality_gap(const Eigen::MatrixBase<Derived>& rsq) {
  if (rsq.size() < 2) throw std::invalid_argument("quality_gap: need at least two agents");
  return rsq.maxCoeff() - rsq.minCoeff();
}

struct OrderingReport {
  bool passed{true};
  // First violating pair (higher-SNR agent, lower-SNR agent) and what failed.
  std::optional<std::pair<Eigen::Index, Eigen::Index>> violation;
  std::string what;
};

/// Checks that both allocations respect the SNR ordering: powers and weights
/// non-increasing along decreasing SNR, and weights strictly ordered for any
/// pair with distinct SNR where neither weight is clipped.
template <typename Derived>
OrderingReport ordering_check(const Eigen::MatrixBase<Derived>& snr,
                              const BasicAllocationResult<typename Derived::Scalar>& affine,
                              const BasicAllocationResult<typename Derived::Scalar>& wf,
                              const BasicRsqParams<typename Derived::Scalar>& params) {
  const Eigen::Index n = snr.size();
  if (affine.weights.size() != n || wf.powers.size() != n) {
    throw std::invalid_argument("ordering_check: allocation sizes do not match snr");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return snr(a) > snr(b); });

  OrderingReport report;
  auto fail = [&](Eigen::Index hi, Eigen::Index lo, const char* what) {
    report.passed = false;
    report.violation = std::make_pair(hi, lo);
    report.what = what;
  };
  for (std::size_t k = 0; k + 1 < order.size(); ++k) {
    const Eigen::Index hi = order[k];
    const Eigen::Index lo = order[k + 1];
    if (wf.powers(hi) < wf.powers(lo)) {
      fail(hi, lo, "water-filling power out of order");
      return report;
    }
    if (affine.weights(hi) < affine.weights(lo)) {
      fail(hi, lo, "affine weight out of order");
      return report;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!(snr(i) > snr(j))) continue;
      const auto hi = affine.weights(i);
      const auto lo = affine.weights(j);
      const bool unsaturated = params.h_min < lo && hi < params.h_max;
      if (unsaturated && !(hi > lo)) {
        fail(i, j, "unsaturated affine weights not strictly ordered");
        return report;
      }
    }
  }
  return report;
}

}  // namespace qex
