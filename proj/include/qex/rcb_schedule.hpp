#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace qex {

// Return-conditioned global exploration intensity.
//
//   r_ema <- alpha_r * R + (1 - alpha_r) * r_ema
//   beta   = beta_min + (beta_max - beta_min) * sigmoid(kappa * (r_target - r_ema))

template <typename Scalar>
struct BasicRcbParams {
  Scalar beta_min{0.1};
  Scalar beta_max{0.5};
  Scalar kappa{0.01};
  Scalar r_target{400};
  Scalar alpha_r{0.03};

  void validate() const {
    if (!(beta_min > 0) || !(beta_max > beta_min)) {
      throw std::invalid_argument("rcb: require 0 < beta_min < beta_max");
    }
    if (!(kappa > 0)) throw std::invalid_argument("rcb: kappa must be > 0");
    if (!(alpha_r > 0 && alpha_r < 1)) {
      throw std::invalid_argument("rcb: alpha_r must lie in (0, 1)");
    }
    if (!std::isfinite(r_target)) throw std::invalid_argument("rcb: r_target must be finite");
  }

  Scalar span() const { return beta_max - beta_min; }
};

template <typename Scalar>
struct BasicRcbState {
  Scalar r_ema{0};
  Scalar beta{0};
  std::int64_t iteration{0};
};

template <typename Scalar>
struct BasicContractionReport {
  Scalar lipschitz_product{0};
  Scalar l_phi{0};
  // Geometric tracking rate; NaN when the condition fails.
  Scalar rho{std::numeric_limits<Scalar>::quiet_NaN()};
  bool satisfied{false};
};

using RcbParams = BasicRcbParams<double>;
using RcbState = BasicRcbState<double>;
using ContractionReport = BasicContractionReport<double>;

inline constexpr double kSigmoidClamp = 500.0;

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  const Scalar clamped = std::clamp(x, Scalar(-kSigmoidClamp), Scalar(kSigmoidClamp));
  if (clamped >= 0) return Scalar(1) / (Scalar(1) + std::exp(-clamped));
  const Scalar e = std::exp(clamped);
  return e / (Scalar(1) + e);
}

/// Intensity for a given smoothed return. Decreasing in r_ema.
template <typename Scalar>
Scalar beta_for_return(Scalar r_ema, const BasicRcbParams<Scalar>& params) {
  return params.beta_min + params.span() * sigmoid(params.kappa * (params.r_target - r_ema));
}

template <typename Scalar>
Scalar compute_beta(const BasicRcbState<Scalar>& state, const BasicRcbParams<Scalar>& params) {
  return beta_for_return(state.r_ema, params);
}

/// Fresh schedule: r_ema = 0 and beta evaluated there.
template <typename Scalar>
BasicRcbState<Scalar> initial_rcb_state(const BasicRcbParams<Scalar>& params) {
  BasicRcbState<Scalar> state;
  state.beta = beta_for_return(state.r_ema, params);
  return state;
}

/// One EMA step. beta is left untouched; call compute_beta afterwards.
template <typename Scalar>
BasicRcbState<Scalar> update_return_ema(BasicRcbState<Scalar> state,
                                        const BasicRcbParams<Scalar>& params,
                                        Scalar observed_return) {
  if (!std::isfinite(observed_return)) {
    throw std::invalid_argument("rcb: observed return is not finite (" +
                                std::to_string(static_cast<double>(observed_return)) + ")");
  }
  // Increment form: an input equal to r_ema leaves it exactly unchanged.
  state.r_ema += params.alpha_r * (observed_return - state.r_ema);
  ++state.iteration;
  return state;
}

/// Checks kappa * (beta_max - beta_min) * slope / 4 < 1, where slope bounds
/// |dR/dbeta| of the return response.
template <typename Scalar>
BasicContractionReport<Scalar> check_contraction(const BasicRcbParams<Scalar>& params,
                                                 Scalar return_slope_bound) {
  if (!(return_slope_bound >= 0)) {
    throw std::invalid_argument("rcb: return slope bound must be >= 0");
  }
  BasicContractionReport<Scalar> report;
  report.lipschitz_product = params.kappa * params.span() * return_slope_bound / Scalar(4);
  report.l_phi = report.lipschitz_product;
  report.satisfied = report.lipschitz_product < Scalar(1);
  if (report.satisfied) {
    report.rho = Scalar(1) - params.alpha_r * (Scalar(1) - report.l_phi);
  }
  return report;
}

/// Width in return units of the 5%-95% sigmoid transition: 2 ln(19) / kappa.
template <typename Scalar>
Scalar transition_bandwidth(Scalar kappa) {
  if (!(kappa > 0)) throw std::invalid_argument("rcb: kappa must be > 0");
  return Scalar(2) * std::log(Scalar(19)) / kappa;
}

}  // namespace qex
