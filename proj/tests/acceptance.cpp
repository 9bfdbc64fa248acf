#include "qex/config.hpp"
#include "qex/convergence_lab.hpp"
#include "qex/reporting.hpp"
#include "qex/rsq_allocation.hpp"
#include "qex/successor_distance.hpp"
#include "qex/trainer.hpp"

#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed{false};
  std::string detail;
};

int g_failed = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
  if (!o.passed) ++g_failed;
  std::printf("%s  %2d  %-34s %s [%.2fs]\n", o.passed ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str(), seconds);
  std::fflush(stdout);
}

double elapsed(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

Eigen::VectorXd random_snr(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> exponent(-3.0, 3.0);
  Eigen::VectorXd snr(n);
  for (int i = 0; i < n; ++i) snr(i) = std::pow(10.0, exponent(rng));
  return snr;
}

Outcome contraction_convergence() {
  const auto start = Clock::now();
  int failures = 0;
  double worst_excess = -std::numeric_limits<double>::infinity();
  double worst_terminal = 0.0;
  std::string failed_names;
  for (const qex::RegimeCase& c : qex::standard_regime_cases()) {
    const qex::ContractionReport contraction = qex::check_contraction(c.params, c.response.slope_bound());
    const qex::FixedPoint fp = qex::find_fixed_point(c.response, c.params);
    const double e0 = std::abs(fp.r_star);
    const int iterations = static_cast<int>(std::ceil(std::log(1e-12 / e0) / std::log(contraction.rho))) + 100;
    const qex::ScheduleTrajectory traj = qex::simulate_schedule(c.response, c.params, {}, iterations, 0);
    double excess = -std::numeric_limits<double>::infinity();
    double envelope = e0;
    for (double r : traj.r_ema) {
      excess = std::max(excess, std::abs(r - fp.r_star) - envelope - 1e-10);
      envelope *= contraction.rho;
    }
    const double terminal = std::abs(traj.r_ema.back() - fp.r_star);
    worst_excess = std::max(worst_excess, excess);
    worst_terminal = std::max(worst_terminal, terminal);
    if (!(contraction.satisfied && fp.unique && fp.sign_changes == 1 && excess <= 0 && terminal < 1e-8)) {
      ++failures;
      failed_names += " " + c.name;
    }
  }
  const double seconds = elapsed(start);
  std::ostringstream d;
  d << "cases=9 failed=" << failures << failed_names << " max_envelope_excess=" << worst_excess
    << " max_terminal=" << worst_terminal << " runtime=" << seconds << "s (<10)";
  return {failures == 0 && seconds < 10.0, d.str()};
}

Outcome noise_floor() {
  const auto start = Clock::now();
  int failures = 0;
  double worst_ratio = 0.0;
  double ar1_lo = std::numeric_limits<double>::infinity();
  double ar1_hi = 0.0;
  qex::RcbParams params;
  for (double alpha : {0.01, 0.03, 0.1}) {
    for (double l_phi : {0.0, 0.4, 0.8}) {
      for (double sigma : {1.0, 10.0, 50.0}) {
        params.alpha_r = alpha;
        const qex::ResponseFunction response = qex::linear_response_for_lphi(params, params.r_target, l_phi);
        const qex::NoiseFloorReport r = qex::measure_noise_floor(response, params, {sigma}, 20000, 20);
        // Independent bound, not the report's own field.
        const double bound = alpha * sigma * sigma / (1.0 - l_phi);
        bool ok = r.mse <= bound;
        worst_ratio = std::max(worst_ratio, r.mse / bound);
        if (l_phi == 0.0) {
          const double ar1 = alpha * sigma * sigma / (2.0 - alpha);
          const double ratio = r.mse / ar1;
          ar1_lo = std::min(ar1_lo, ratio);
          ar1_hi = std::max(ar1_hi, ratio);
          ok = ok && ratio <= 2.0 && ratio >= 0.5;
        }
        if (!ok) ++failures;
      }
    }
  }
  const double seconds = elapsed(start);
  std::ostringstream d;
  d << "cells=27 failed=" << failures << " max_mse/bound=" << worst_ratio << " mse/ar1 in [" << ar1_lo << ","
    << ar1_hi << "] runtime=" << seconds << "s (<60)";
  return {failures == 0 && seconds < 60.0, d.str()};
}

Outcome ordering_preservation() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> size(2, 16);
  std::uniform_real_distribution<double> per_agent(0.01, 1.0);
  const qex::RsqParams params;
  int violations = 0;
  long strict_pairs = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = size(rng);
    const Eigen::VectorXd snr = random_snr(rng, n);
    const auto wf = qex::water_filling(snr, n * per_agent(rng));
    const auto affine =
        qex::affine_allocation(snr.unaryExpr([](double s) { return qex::rsq_from_snr(s); }).eval(), params);
    bool bad = false;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (!(snr(i) > snr(j))) continue;
        if (wf.powers(i) < wf.powers(j) || affine.weights(i) < affine.weights(j)) bad = true;
        const bool unsaturated = affine.weights(j) > params.h_min && affine.weights(i) < params.h_max;
        if (unsaturated) {
          ++strict_pairs;
          if (!(affine.weights(i) > affine.weights(j))) bad = true;
        }
      }
    }
    if (bad) ++violations;
  }
  const double seconds = elapsed(start);
  std::ostringstream d;
  d << "vectors=1000 violations=" << violations << " unsaturated_pairs=" << strict_pairs << " runtime=" << seconds
    << "s (<5)";
  return {violations == 0 && seconds < 5.0, d.str()};
}

Outcome water_filling_optimality() {
  const auto start = Clock::now();
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> size(2, 16);
  std::uniform_int_distribution<int> small(2, 4);
  std::uniform_real_distribution<double> per_agent(0.01, 1.0);
  std::exponential_distribution<double> weight(1.0);
  double worst_budget = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = size(rng);
    const double budget = n * per_agent(rng);
    const auto wf = qex::water_filling(random_snr(rng, n), budget);
    worst_budget = std::max(worst_budget, std::abs(wf.powers.sum() - budget));
  }
  long beaten = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  for (int instance = 0; instance < 100; ++instance) {
    const int n = small(rng);
    const Eigen::VectorXd snr = random_snr(rng, n);
    const double budget = n * per_agent(rng);
    const auto wf = qex::water_filling(snr, budget);
    worst_budget = std::max(worst_budget, std::abs(wf.powers.sum() - budget));
    const double best = qex::total_information(wf.powers, snr);
    for (int draw = 0; draw < 10000; ++draw) {
      Eigen::VectorXd p(n);
      for (int i = 0; i < n; ++i) p(i) = weight(rng);
      p *= budget / p.sum();
      const double info = qex::total_information(p, snr);
      worst_margin = std::min(worst_margin, best - info);
      if (info > best) ++beaten;
    }
  }
  const double seconds = elapsed(start);
  std::ostringstream d;
  d << "max|sum p - B|=" << worst_budget << " (<=1e-9) random_allocations_beating=" << beaten
    << "/1000000 min_margin=" << worst_margin << " runtime=" << seconds << "s (<30)";
  return {worst_budget <= 1e-9 && beaten == 0 && seconds < 30.0, d.str()};
}

Outcome rsq_scale_invariance() {
  std::mt19937_64 rng(303);
  // mu^2 and sigma^2 log-uniform in [1e-2, 1e2].
  std::uniform_real_distribution<double> exponent(-1.0, 1.0);
  std::bernoulli_distribution negative(0.5);
  const double eps = 1e-8;
  const double scales[] = {1e-3, 1.0, 1e3};
  double worst[3] = {0, 0, 0};
  int failures = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const double mu = std::pow(10.0, exponent(rng)) * (negative(rng) ? -1.0 : 1.0);
    const double sigma = std::pow(10.0, exponent(rng));
    const double base = qex::compute_rsq(qex::AgentSignalStats{mu, sigma * sigma}, eps);
    bool ok = true;
    for (int k = 0; k < 3; ++k) {
      const double c = scales[k];
      const double drift = std::abs(qex::compute_rsq(qex::AgentSignalStats{c * mu, c * c * sigma * sigma}, eps) - base);
      worst[k] = std::max(worst[k], drift);
      if (!(drift < 1e-6)) ok = false;
    }
    if (!ok) ++failures;
  }
  double worst_boundary = 0.0;
  for (double v : {0.1, 0.5, 1.0, 3.0, 10.0, 1e3}) {
    worst_boundary = std::max(worst_boundary, std::abs(qex::compute_rsq(qex::AgentSignalStats{v, v * v}, eps) - 0.5));
  }
  std::ostringstream d;
  d << "draws=10000 failing=" << failures << " max_drift c=1e-3:" << worst[0] << " c=1:" << worst[1]
    << " c=1e3:" << worst[2] << " (<1e-6) mu=sigma max|rsq-0.5|=" << worst_boundary << " (<=1e-6)";
  return {failures == 0 && worst_boundary <= 1e-6, d.str()};
}

Outcome quasimetric_axioms() {
  const auto start = Clock::now();
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> size(2, 12);
  std::uniform_real_distribution<double> sparsity(0.0, 0.7);
  const double gammas[] = {0.9, 0.95, 0.99};
  int axiom_failures = 0;
  int reach_mismatches = 0;
  double worst_series = 0.0;
  std::size_t triples = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = size(rng);
    const Eigen::MatrixXd p = oracle::random_stochastic(n, rng, sparsity(rng));
    const double gamma = gammas[trial % 3];
    const qex::SuccessorMeasure m = qex::successor_measure(qex::TabularMdp{p, gamma});
    const qex::QuasimetricReport r = qex::check_quasimetric(m, 1e-9);
    triples += r.triples_checked;
    bool ok = r.passed();
    for (int x = 0; x < n; ++x) ok = ok && qex::sd_log_ratio(m, x, x) == 0.0;
    if (!ok) ++axiom_failures;
    if (m.reachable != oracle::closure(p)) ++reach_mismatches;
    worst_series = std::max(worst_series, (m.m - oracle::successor_series(p, gamma, 10000)).cwiseAbs().maxCoeff());
  }
  const double seconds = elapsed(start);
  std::ostringstream d;
  d << "mdps=50 axiom_failures=" << axiom_failures << " triples=" << triples
    << " reachability_mismatches=" << reach_mismatches << " max|LU - series|=" << worst_series
    << " (<=1e-8) runtime=" << seconds << "s (<30)";
  return {axiom_failures == 0 && reach_mismatches == 0 && worst_series <= 1e-8 && seconds < 30.0, d.str()};
}

Outcome warmup_semantics(const qex::RunConfig& corridor) {
  qex::TrainerConfig c = corridor.trainer;
  // Table-1 corridor schedule parameters are the library defaults.
  c.rcb = qex::RcbParams{};
  c.rsq = qex::RsqParams{};
  const qex::Trainer trainer(c);
  const Eigen::VectorXd rsq = trainer.current_rsq();
  const Eigen::VectorXd h = trainer.current_weights(c.rcb.beta_max);
  const double intensity = c.rcb.beta_max * c.rsq.h_min;
  const bool ok = (rsq.array().abs() < 1e-6).all() && (h.array() == c.rsq.h_min).all() &&
                  (c.rcb.beta_max * h.array() == 0.05).all() && intensity == 0.05;
  std::ostringstream d;
  d << "agents=" << rsq.size() << " max_rsq=" << rsq.cwiseAbs().maxCoeff() << " h=[" << h.minCoeff() << ","
    << h.maxCoeff() << "] beta_max*h_min=" << intensity;
  return {ok, d.str()};
}

struct CellRun {
  qex::MeanStd stats;
  std::vector<std::vector<qex::IterationRecord>> records;
  int failed{0};
};

CellRun run_cell(const qex::RunConfig& base, qex::AblationCell cell) {
  const qex::RunConfig config = qex::ablation_config(base, cell);
  CellRun out;
  std::vector<double> finals;
  for (std::uint64_t seed : config.seeds) {
    qex::TrainerConfig t = config.trainer;
    t.seed = seed;
    out.records.push_back(qex::run_training(t));
    const auto f = qex::final_return(out.records.back(), t.final_window);
    if (f) {
      finals.push_back(*f);
    } else {
      ++out.failed;
    }
  }
  out.stats = qex::mean_std(finals);
  return out;
}

Outcome directional_ablation(const qex::RunConfig& corridor) {
  const auto start = Clock::now();
  const CellRun full = run_cell(corridor, qex::AblationCell::full);
  const CellRun rcb_only = run_cell(corridor, qex::AblationCell::rcb_only);
  const CellRun fixed = run_cell(corridor, qex::AblationCell::fixed_beta);
  const CellRun wf = run_cell(corridor, qex::AblationCell::water_filling);
  const double seconds = elapsed(start);
  const bool complete = full.failed + rcb_only.failed + fixed.failed + wf.failed == 0 && full.stats.n == 10;
  const bool ok = complete && full.stats.mean >= rcb_only.stats.mean && full.stats.mean >= fixed.stats.mean &&
                  full.stats.std <= wf.stats.std && seconds < 1800.0;
  std::ostringstream d;
  d.precision(4);
  d << "seeds=" << full.stats.n << " full=" << full.stats.mean << "+-" << full.stats.std
    << " rcb_only=" << rcb_only.stats.mean << " fixed_beta=" << fixed.stats.mean << " water_filling=" << wf.stats.mean
    << "+-" << wf.stats.std << " runtime=" << seconds << "s (<1800)";
  return {ok, d.str()};
}

Outcome noise_collapse(const qex::RunConfig& corridor) {
  const CellRun noise = run_cell(corridor, qex::AblationCell::uniform_noise);
  double worst = 0.0;
  int bad_seeds = 0;
  for (const auto& records : noise.records) {
    double seed_worst = 0.0;
    for (const auto& r : records) {
      if (r.iteration < 50) continue;
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (const auto& a : r.agents) {
        lo = std::min(lo, a.h);
        hi = std::max(hi, a.h);
      }
      seed_worst = std::max(seed_worst, hi - lo);
    }
    worst = std::max(worst, seed_worst);
    if (!(seed_worst < 0.05)) ++bad_seeds;
  }
  std::ostringstream d;
  d << "seeds=" << noise.records.size() << " failing_seeds=" << bad_seeds << " max|h_i-h_j| after 50=" << worst
    << " (<0.05)";
  return {bad_seeds == 0 && noise.records.size() == 10, d.str()};
}

Outcome bandwidth() {
  const double w = qex::transition_bandwidth(0.01);
  std::ostringstream d;
  d.precision(10);
  d << "bandwidth(0.01)=" << w << " in [588.8, 589.0]";
  return {w >= 588.8 && w <= 589.0, d.str()};
}

Outcome footnote_product() {
  qex::RcbParams p;
  p.kappa = 0.01;
  p.beta_min = 0.3;
  p.beta_max = 0.5;
  const qex::ContractionReport r = qex::check_contraction(p, 0.1);
  std::ostringstream d;
  d.precision(17);
  d << "kappa*dbeta*L/4=" << r.lipschitz_product << " |x-5e-5|<=1e-12";
  return {std::abs(r.lipschitz_product - 5e-5) <= 1e-12, d.str()};
}

}  // namespace

int main() {
  const qex::RunConfig corridor =
      qex::resolve_run_config(qex::read_key_values(std::string(QEX_CONFIG_DIR) + "/corridor.cfg"));

  report(1, "contraction and convergence", contraction_convergence);
  report(2, "noise floor", noise_floor);
  report(3, "ordering preservation", ordering_preservation);
  report(4, "water-filling feasibility/optimum", water_filling_optimality);
  report(5, "rsq scale invariance", rsq_scale_invariance);
  report(6, "successor distance quasimetric", quasimetric_axioms);
  report(7, "warmup semantics", [&] { return warmup_semantics(corridor); });
  report(8, "directional ablation", [&] { return directional_ablation(corridor); });
  report(9, "uniform-noise weight collapse", [&] { return noise_collapse(corridor); });
  report(10, "transition bandwidth", bandwidth);
  report(11, "contraction product", footnote_product);

  std::printf("%d of 11 criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
