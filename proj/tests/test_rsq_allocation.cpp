#include "qex/rsq_allocation.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using qex::AgentSignalStats;
using qex::RsqParams;

namespace {

std::span<const double> view(const std::vector<double>& v) { return {v.data(), v.size()}; }

}  // namespace

TEST_CASE("stats update with a constant batch") {
  AgentSignalStats s;
  const std::vector<double> batch{2.0, 2.0, 2.0};
  const AgentSignalStats next = qex::update_stats(s, view(batch));
  CHECK(next.mu == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(next.sigma_sq == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("stats update against a two-pass oracle") {
  AgentSignalStats s;
  s.alpha = 0.5;
  const std::vector<double> batch{1.0, 2.0, 3.0};
  const auto two = oracle::two_pass(batch);
  CHECK(two.var == doctest::Approx(2.0 / 3.0));
  const AgentSignalStats next = qex::update_stats(s, view(batch));
  CHECK(next.mu == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(next.sigma_sq == doctest::Approx(0.5 * two.var + 0.5).epsilon(1e-15));
  CHECK(next.sigma_sq == doctest::Approx(0.8333333333333334).epsilon(1e-15));
}

TEST_CASE("random batches match the two-pass oracle") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(3.0, 2.0);
  AgentSignalStats s;
  double mu = 0.0;
  double var = 1.0;
  for (int k = 0; k < 50; ++k) {
    std::vector<double> batch(64);
    for (double& v : batch) v = g(rng);
    const auto two = oracle::two_pass(batch);
    mu = 0.1 * two.mean + 0.9 * mu;
    var = 0.1 * two.var + 0.9 * var;
    s = qex::update_stats(s, view(batch));
    CHECK(s.mu == doctest::Approx(mu).epsilon(1e-12));
    CHECK(s.sigma_sq == doctest::Approx(var).epsilon(1e-12));
    CHECK(s.sigma_sq >= 0.0);
  }
}

TEST_CASE("empty batch is rejected") {
  const std::vector<double> empty;
  CHECK_THROWS_AS(qex::update_stats(AgentSignalStats{}, view(empty)), std::invalid_argument);
}

TEST_CASE("rsq reference values") {
  CHECK(qex::compute_rsq(AgentSignalStats{1.0, 1.0}, 1e-8) == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(qex::compute_rsq(AgentSignalStats{0.0, 4.0}, 1e-8) == 0.0);
  const double r = qex::compute_rsq(AgentSignalStats{3.0, 1.0}, 1e-8);
  CHECK(r == doctest::Approx(9.0 / (10.0 + 1e-8)).epsilon(1e-15));
  CHECK(r == doctest::Approx(qex::rsq_from_snr(9.0)).epsilon(1e-8));
}

TEST_CASE("rsq lies in [0, 1) and rescaling drifts by at most the epsilon share") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 5000; ++trial) {
    const double mu = std::pow(10.0, 2.0 * u(rng)) * (u(rng) < 0 ? -1 : 1);
    const double sigma = std::pow(10.0, 2.0 * u(rng));
    const AgentSignalStats s{mu, sigma * sigma};
    const double r = qex::compute_rsq(s, 1e-8);
    CHECK(r >= 0.0);
    CHECK(r < 1.0);
    const AgentSignalStats scaled{10.0 * mu, 100.0 * sigma * sigma};
    const double bound = 1e-8 / (mu * mu + sigma * sigma + 1e-8);
    CHECK(std::abs(qex::compute_rsq(scaled, 1e-8) - r) <= bound * (1.0 + 1e-9) + 1e-15);
  }
}

TEST_CASE("modulation weight clipping") {
  RsqParams p;
  CHECK(qex::modulation_weight(0.5, p) == 1.0);
  CHECK(qex::modulation_weight(0.1, p) == 0.1);
  CHECK(qex::modulation_weight(0.9, p) == 2.0);
  CHECK(qex::modulation_weight(0.6, p) == doctest::Approx(1.3));
  for (int k = 0; k <= 1000; ++k) {
    const double h = qex::modulation_weight(k / 1000.0, p);
    CHECK(h >= p.h_min);
    CHECK(h <= p.h_max);
  }
}

TEST_CASE("modulation weight is monotone in rsq") {
  RsqParams p;
  double prev = qex::modulation_weight(0.0, p);
  for (int k = 1; k <= 1000; ++k) {
    const double h = qex::modulation_weight(k / 1000.0, p);
    CHECK(h >= prev);
    prev = h;
  }
}

TEST_CASE("water-filling symmetric split") {
  const auto r = qex::water_filling(Eigen::Vector2d(1.0, 1.0), 2.0);
  CHECK(r.water_level == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(r.powers(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.powers(1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("water-filling two active agents") {
  const Eigen::Vector2d snr(4.0, 1.0);
  const auto r = qex::water_filling(snr, 2.0);
  CHECK(r.water_level == doctest::Approx(1.625).epsilon(1e-15));
  CHECK(r.powers(0) == doctest::Approx(1.375).epsilon(1e-15));
  CHECK(r.powers(1) == doctest::Approx(0.625).epsilon(1e-15));
  CHECK(r.water_level == doctest::Approx(oracle::water_level_bisection(snr, 2.0)).epsilon(1e-12));
}

TEST_CASE("water-filling excludes a weak agent") {
  const auto r = qex::water_filling(Eigen::Vector2d(10.0, 0.01), 0.5);
  CHECK(r.water_level == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(r.powers(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.powers(1) == 0.0);
}

TEST_CASE("water-filling degenerate and invalid inputs") {
  const auto zero = qex::water_filling(Eigen::Vector3d(2.0, 4.0, 1.0), 0.0);
  CHECK(zero.powers.isZero(0.0));
  CHECK(zero.water_level == 0.25);
  CHECK_THROWS_AS(qex::water_filling(Eigen::Vector2d(1.0, 0.0), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(qex::water_filling(Eigen::Vector2d(1.0, -2.0), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(qex::water_filling(Eigen::Vector2d(1.0, 1.0), -1.0), std::invalid_argument);
}

TEST_CASE("water-filling matches the bisection oracle on random instances") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> size(1, 16);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> b(0.0, 20.0);
  for (int trial = 0; trial < 500; ++trial) {
    Eigen::VectorXd snr(size(rng));
    for (Eigen::Index i = 0; i < snr.size(); ++i) snr(i) = std::pow(10.0, u(rng));
    const double budget = b(rng);
    const auto r = qex::water_filling(snr, budget);
    const double nu = oracle::water_level_bisection(snr, budget);
    CHECK(r.water_level == doctest::Approx(nu).epsilon(1e-9));
    CHECK(std::abs(r.powers.sum() - budget) <= 1e-9 * std::max(1.0, budget));
    CHECK((r.powers.array() >= 0).all());
    for (Eigen::Index i = 0; i < snr.size(); ++i) {
      if (r.powers(i) > 0) CHECK(r.powers(i) + 1.0 / snr(i) == doctest::Approx(r.water_level).epsilon(1e-12));
    }
  }
}

TEST_CASE("ordering preserved with strict unsaturated ordering") {
  RsqParams p;
  p.lambda = 2.0;
  const Eigen::Vector3d snr(9.0, 4.0, 1.0);
  const Eigen::Vector3d rsq = snr.unaryExpr([](double s) { return qex::rsq_from_snr(s); });
  CHECK(rsq(0) == doctest::Approx(0.9));
  CHECK(rsq(1) == doctest::Approx(0.8));
  CHECK(rsq(2) == doctest::Approx(0.5));
  const auto affine = qex::affine_allocation(rsq, p);
  CHECK(affine.weights(0) == doctest::Approx(1.8));
  CHECK(affine.weights(1) == doctest::Approx(1.6));
  CHECK(affine.weights(2) == doctest::Approx(1.0));
  const auto wf = qex::water_filling(snr, 3.0);
  CHECK(qex::ordering_check(snr, affine, wf, p).passed);
}

TEST_CASE("equal snr gives equal allocations") {
  const Eigen::Vector4d snr = Eigen::Vector4d::Constant(2.5);
  const auto wf = qex::water_filling(snr, 1.0);
  const auto affine = qex::affine_allocation(snr.unaryExpr([](double s) { return qex::rsq_from_snr(s); }), RsqParams{});
  CHECK((wf.powers.array() == wf.powers(0)).all());
  CHECK((affine.weights.array() == affine.weights(0)).all());
  CHECK(qex::ordering_check(snr, affine, wf, RsqParams{}).passed);
}

TEST_CASE("ordering check detects a swapped allocation") {
  const Eigen::Vector2d snr(4.0, 1.0);
  auto affine = qex::affine_allocation(Eigen::Vector2d(0.8, 0.5), RsqParams{});
  const auto wf = qex::water_filling(snr, 2.0);
  std::swap(affine.weights(0), affine.weights(1));
  const auto report = qex::ordering_check(snr, affine, wf, RsqParams{});
  CHECK_FALSE(report.passed);
  REQUIRE(report.violation.has_value());
  CHECK(report.violation->first == 0);
}

TEST_CASE("mutual information reference values") {
  CHECK(qex::mutual_information(0.0, 5.0) == 0.0);
  CHECK(qex::mutual_information(1.0, std::exp(2.0) - 1.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("mutual information is concave in power") {
  const double snr = 3.0;
  const double step = 1e-2;
  for (int k = 1; k < 500; ++k) {
    const double p = k * step;
    const auto info = [&](double power) { return qex::mutual_information(std::sqrt(power), snr); };
    const double second = info(p + step) - 2.0 * info(p) + info(p - step);
    CHECK(second <= 1e-15);
  }
}

TEST_CASE("quality gap") {
  CHECK(qex::quality_gap(Eigen::Vector3d(0.8, 0.5, 0.45)) == doctest::Approx(0.35));
  CHECK(qex::quality_gap(Eigen::Vector3d::Constant(0.3)) == 0.0);
  CHECK_THROWS_AS(qex::quality_gap(Eigen::VectorXd::Constant(1, 0.3)), std::invalid_argument);
}
