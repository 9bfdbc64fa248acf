#include "qex/convergence_lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace qex {

ResponseFunction ResponseFunction::linear(double intercept, double slope) {
  ResponseFunction r;
  r.family = ResponseFamily::linear;
  r.intercept = intercept;
  r.slope = slope;
  return r;
}

ResponseFunction ResponseFunction::tanh_saturating(double intercept, double amplitude, double steepness,
                                                   double center) {
  ResponseFunction r;
  r.family = ResponseFamily::tanh_saturating;
  r.intercept = intercept;
  r.amplitude = amplitude;
  r.steepness = steepness;
  r.center = center;
  return r;
}

double ResponseFunction::operator()(double beta) const {
  switch (family) {
    case ResponseFamily::linear: return intercept + slope * beta;
    case ResponseFamily::tanh_saturating: return intercept + amplitude * std::tanh(steepness * (beta - center));
  }
  return 0.0;
}

double ResponseFunction::slope_bound() const {
  switch (family) {
    case ResponseFamily::linear: return std::abs(slope);
    case ResponseFamily::tanh_saturating: return std::abs(amplitude * steepness);
  }
  return 0.0;
}

// Both families are monotone, so the extremes sit at the interval ends.
double ResponseFunction::min_over(double beta_lo, double beta_hi) const {
  return std::min((*this)(beta_lo), (*this)(beta_hi));
}

double ResponseFunction::max_over(double beta_lo, double beta_hi) const {
  return std::max((*this)(beta_lo), (*this)(beta_hi));
}

std::string ResponseFunction::describe() const {
  std::ostringstream out;
  if (family == ResponseFamily::linear) {
    out << "linear(" << intercept << " + " << slope << "*b)";
  } else {
    out << "tanh(" << intercept << " + " << amplitude << "*tanh(" << steepness << "*(b-" << center << ")))";
  }
  return out.str();
}

ResponseFunction linear_response_for_lphi(const RcbParams& params, double intercept, double l_phi) {
  if (!(l_phi >= 0)) throw std::invalid_argument("l_phi must be >= 0");
  return ResponseFunction::linear(intercept, -4.0 * l_phi / (params.kappa * params.span()));
}

ScheduleTrajectory simulate_schedule(const ResponseFunction& response, const RcbParams& params,
                                     const NoiseModel& noise, int iterations, std::uint64_t seed) {
  params.validate();
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  ScheduleTrajectory traj;
  traj.contraction = check_contraction(params, response.slope_bound());
  traj.in_regime = traj.contraction.satisfied;
  traj.r_ema.reserve(static_cast<std::size_t>(iterations) + 1);
  traj.beta.reserve(static_cast<std::size_t>(iterations) + 1);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double half_width = std::sqrt(3.0);
  std::uniform_real_distribution<double> uniform(-half_width, half_width);
  auto draw = [&]() -> double {
    if (noise.sigma_xi == 0.0) return 0.0;
    const double unit = noise.distribution == NoiseDistribution::gaussian ? gauss(rng) : uniform(rng);
    return noise.sigma_xi * unit;
  };

  RcbState state = initial_rcb_state(params);
  traj.r_ema.push_back(state.r_ema);
  traj.beta.push_back(state.beta);
  for (int k = 0; k < iterations; ++k) {
    const double observed = response(state.beta) + draw();
    state = update_return_ema(state, params, observed);
    state.beta = compute_beta(state, params);
    traj.r_ema.push_back(state.r_ema);
    traj.beta.push_back(state.beta);
  }
  return traj;
}

double schedule_map(const ResponseFunction& response, const RcbParams& params, double beta) {
  return beta_for_return(response(beta), params);
}

namespace {

double bisect_root(const ResponseFunction& response, const RcbParams& params, double lo, double hi) {
  auto f = [&](double b) { return schedule_map(response, params, b) - b; };
  double f_lo = f(lo);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double f_mid = f(mid);
    if (f_mid == 0.0) return mid;
    if ((f_mid > 0) == (f_lo > 0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return std::abs(f(lo)) <= std::abs(f(hi)) ? lo : hi;
}

}  // namespace

FixedPoint find_fixed_point(const ResponseFunction& response, const RcbParams& params, int grid_points) {
  params.validate();
  if (grid_points < 2) throw std::invalid_argument("grid_points must be >= 2");
  auto f = [&](double b) { return schedule_map(response, params, b) - b; };

  FixedPoint fp;
  const double lo = params.beta_min;
  const double hi = params.beta_max;
  double prev_b = lo;
  double prev_f = f(lo);
  for (int k = 1; k <= grid_points; ++k) {
    const double b = k == grid_points ? hi : lo + (hi - lo) * static_cast<double>(k) / grid_points;
    const double fb = f(b);
    if (prev_f == 0.0) {
      fp.roots.push_back(prev_b);
    } else if ((prev_f > 0) != (fb > 0) && fb != 0.0) {
      fp.roots.push_back(bisect_root(response, params, prev_b, b));
    }
    prev_b = b;
    prev_f = fb;
  }
  if (prev_f == 0.0) fp.roots.push_back(hi);
  fp.sign_changes = static_cast<int>(fp.roots.size());
  if (fp.roots.empty()) throw std::logic_error("find_fixed_point: no root bracketed");
  fp.unique = fp.roots.size() == 1;
  fp.beta_star = fp.roots.front();
  fp.r_star = response(fp.beta_star);
  fp.residual = std::abs(f(fp.beta_star));
  return fp;
}

RateEstimate measure_contraction_rate(const ScheduleTrajectory& trajectory, double r_star, double floor) {
  RateEstimate est;
  if (trajectory.r_ema.empty()) return est;
  const double e0 = std::abs(trajectory.r_ema.front() - r_star);
  if (!(e0 > floor)) return est;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t k = 0; k < trajectory.r_ema.size(); ++k) {
    const double err = std::abs(trajectory.r_ema[k] - r_star);
    if (!(err > floor)) break;
    const double x = static_cast<double>(k);
    const double y = std::log(err);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  est.samples_used = n;
  if (n < 2) return est;
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  est.rho_hat = std::exp(slope);
  return est;
}

NoiseFloorReport measure_noise_floor(const ResponseFunction& response, const RcbParams& params, const NoiseModel& noise,
                                     int iterations, int n_seeds, std::uint64_t base_seed) {
  if (n_seeds < 1 || iterations < 2) throw std::invalid_argument("noise floor needs >= 1 seed and >= 2 iterations");
  const FixedPoint fp = find_fixed_point(response, params);
  const ContractionReport contraction = check_contraction(params, response.slope_bound());

  NoiseFloorReport report;
  report.n_seeds = n_seeds;
  report.window_begin = iterations / 2;
  const double var = noise.sigma_xi * noise.sigma_xi;
  report.bound = contraction.satisfied ? params.alpha_r * var / (1.0 - contraction.l_phi)
                                       : std::numeric_limits<double>::infinity();
  report.ar1_oracle = params.alpha_r * var / (2.0 - params.alpha_r);

  double sum = 0.0;
  std::size_t count = 0;
  for (int s = 0; s < n_seeds; ++s) {
    const ScheduleTrajectory traj = simulate_schedule(response, params, noise, iterations, base_seed + static_cast<std::uint64_t>(s));
    for (std::size_t k = static_cast<std::size_t>(report.window_begin); k < traj.r_ema.size(); ++k) {
      const double e = traj.r_ema[k] - fp.r_star;
      sum += e * e;
      ++count;
    }
  }
  report.mse = sum / static_cast<double>(count);
  report.within_bound = report.mse <= report.bound;
  return report;
}

std::vector<RegimeCase> standard_regime_cases() {
  RcbParams corridor;
  RcbParams sharp;
  sharp.beta_min = 0.05;
  sharp.beta_max = 0.3;
  sharp.kappa = 0.05;
  sharp.r_target = 100;
  sharp.alpha_r = 0.1;
  RcbParams slow;
  slow.beta_min = 0.2;
  slow.beta_max = 0.6;
  slow.kappa = 0.002;
  slow.r_target = 500;
  slow.alpha_r = 0.01;

  std::vector<RegimeCase> cases;
  for (const auto& [label, params] : {std::pair{"corridor", corridor}, std::pair{"sharp", sharp}, std::pair{"slow", slow}}) {
    const double unit = params.kappa * params.span() / 4.0;
    cases.push_back({std::string(label) + "/falling", linear_response_for_lphi(params, params.r_target, 0.5), params});
    cases.push_back({std::string(label) + "/rising",
                     ResponseFunction::linear(params.r_target - 0.7 / unit * params.beta_max, 0.7 / unit), params});
    const double steepness = 8.0 / params.span();
    cases.push_back({std::string(label) + "/tanh",
                     ResponseFunction::tanh_saturating(params.r_target, -0.8 / (unit * steepness), steepness,
                                                       0.5 * (params.beta_min + params.beta_max)),
                     params});
  }
  return cases;
}

}  // namespace qex
