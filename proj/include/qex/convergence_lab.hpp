#pragma once

#include "qex/rcb_schedule.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qex {

// Numerical checks of the return-conditioned schedule against synthetic,
// instantaneous return responses R(beta) with closed-form slope bounds.

enum class ResponseFamily { linear, tanh_saturating };

struct ResponseFunction {
  ResponseFamily family{ResponseFamily::linear};
  // linear:           R = intercept + slope * beta
  // tanh_saturating:  R = intercept + amplitude * tanh(steepness * (beta - center))
  double intercept{0};
  double slope{0};
  double amplitude{0};
  double steepness{0};
  double center{0};

  static ResponseFunction linear(double intercept, double slope);
  static ResponseFunction constant(double value) { return linear(value, 0.0); }
  static ResponseFunction tanh_saturating(double intercept, double amplitude, double steepness, double center);

  double operator()(double beta) const;
  /// sup |R'(beta)|.
  double slope_bound() const;
  /// Range of R over [beta_lo, beta_hi].
  double min_over(double beta_lo, double beta_hi) const;
  double max_over(double beta_lo, double beta_hi) const;
  std::string describe() const;
};

/// Linear response whose Lipschitz product kappa * span * |slope| / 4 equals l_phi.
/// The slope is negative: more exploration costs return.
ResponseFunction linear_response_for_lphi(const RcbParams& params, double intercept, double l_phi);

enum class NoiseDistribution { gaussian, uniform };

struct NoiseModel {
  double sigma_xi{0};
  NoiseDistribution distribution{NoiseDistribution::gaussian};
};

struct ScheduleTrajectory {
  std::vector<double> r_ema;  // r_ema[0] = 0, then one entry per iteration
  std::vector<double> beta;   // beta[k] = g(r_ema[k])
  bool in_regime{false};
  ContractionReport contraction;
};

/// Iterates R = R(beta) + xi, EMA, beta = g(r_ema) starting from r_ema = 0.
ScheduleTrajectory simulate_schedule(const ResponseFunction& response, const RcbParams& params,
                                     const NoiseModel& noise, int iterations, std::uint64_t seed);

struct FixedPoint {
  double beta_star{0};
  double r_star{0};
  double residual{0};  // |Phi(beta*) - beta*|
  std::vector<double> roots;
  int sign_changes{0};
  bool unique{false};
};

/// Phi(beta) = g(R(beta)).
double schedule_map(const ResponseFunction& response, const RcbParams& params, double beta);

/// Bisection on Phi(beta) - beta over [beta_min, beta_max] to machine
/// precision, with a sign scan over `grid_points` cells to count roots.
FixedPoint find_fixed_point(const ResponseFunction& response, const RcbParams& params, int grid_points = 10000);

struct RateEstimate {
  std::optional<double> rho_hat;  // empty when the trajectory starts at the fixed point
  int samples_used{0};
};

/// Least-squares slope of ln|r_ema[k] - r_star| over the segment before the
/// error reaches `floor`; rho_hat = exp(slope).
RateEstimate measure_contraction_rate(const ScheduleTrajectory& trajectory, double r_star, double floor = 1e-9);

struct NoiseFloorReport {
  double mse{0};
  double bound{0};       // alpha_r * sigma^2 / (1 - L_phi)
  double ar1_oracle{0};  // alpha_r * sigma^2 / (2 - alpha_r): exact for a flat response
  int window_begin{0};   // first iteration of the averaging window
  int n_seeds{0};
  bool within_bound{false};
};

/// Steady-state MSE of r_ema about R*, averaged over the second half of each
/// trajectory and over seeds.
NoiseFloorReport measure_noise_floor(const ResponseFunction& response, const RcbParams& params, const NoiseModel& noise,
                                     int iterations, int n_seeds, std::uint64_t base_seed = 1);

struct RegimeCase {
  std::string name;
  ResponseFunction response;
  RcbParams params;
};

/// Nine in-regime configurations: three schedule parameter sets, each paired
/// with a falling linear, a rising linear and a saturating response.
std::vector<RegimeCase> standard_regime_cases();

}  // namespace qex
