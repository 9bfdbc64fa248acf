#include "qex/successor_distance.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using qex::SdHistory;
using qex::TabularMdp;

namespace {

TabularMdp two_state_chain() {
  Eigen::Matrix2d p;
  p << 0, 1,
       0, 1;
  return {p, 0.99};
}

// 0 -> 1 -> ... -> k, k absorbing.
TabularMdp path(int k, double gamma) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(k + 1, k + 1);
  for (int i = 0; i < k; ++i) p(i, i + 1) = 1.0;
  p(k, k) = 1.0;
  return {p, gamma};
}

TabularMdp ring(int n) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    p(i, (i + 1) % n) = 0.5;
    p(i, (i + n - 1) % n) = 0.5;
  }
  return {p, 0.9};
}

}  // namespace

TEST_CASE("single absorbing state") {
  const auto m = qex::successor_measure(TabularMdp{Eigen::MatrixXd::Ones(1, 1), 0.99});
  CHECK(m.m(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(qex::check_quasimetric(m).passed());
}

TEST_CASE("two-state chain measure and distance") {
  const auto m = qex::successor_measure(two_state_chain());
  CHECK(m.m(0, 1) == doctest::Approx(0.99).epsilon(1e-14));
  CHECK(m.m(1, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(m.m(1, 0) == 0.0);
  CHECK_FALSE(m.reachable(1, 0));
  const auto d = qex::sd_distance(m, 0, 1);
  CHECK(d.reachable);
  CHECK(d.distance == doctest::Approx(std::log(1.0 / 0.99)).epsilon(1e-12));
  CHECK(d.distance == doctest::Approx(0.01005).epsilon(1e-3));
  const auto back = qex::sd_distance(m, 1, 0);
  CHECK_FALSE(back.reachable);
  CHECK(std::isinf(back.distance));
}

TEST_CASE("deterministic path distance is k steps of -ln gamma") {
  for (int k : {1, 2, 3}) {
    const TabularMdp mdp = path(k, 0.9);
    const auto m = qex::successor_measure(mdp);
    const Eigen::MatrixXd series = oracle::successor_series(mdp.transition, 0.9, 2000);
    CHECK(std::log(series(k, k) / series(0, k)) == doctest::Approx(-k * std::log(0.9)).epsilon(1e-10));
    CHECK(qex::sd_distance(m, 0, k).distance == doctest::Approx(-k * std::log(0.9)).epsilon(1e-12));
  }
}

TEST_CASE("linear solve agrees with the power series") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd p = oracle::random_stochastic(6, rng);
    const auto m = qex::successor_measure(TabularMdp{p, 0.99});
    const Eigen::MatrixXd series = oracle::successor_series(p, 0.99, 10000);
    CHECK((m.m - series).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((m.m.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
    CHECK((m.reachable.array() == oracle::closure(p).array()).all());
  }
}

TEST_CASE("intrinsic reward conventions") {
  const auto m = qex::successor_measure(path(3, 0.9));
  SdHistory h;
  CHECK(qex::intrinsic_reward(h, m, 0, 99.0) == 0.0);
  CHECK(qex::intrinsic_reward(h, m, 0, 99.0) == 0.0);
  const double step = -std::log(0.9);
  CHECK(qex::intrinsic_reward(h, m, 2, 99.0) == doctest::Approx(2 * step));
  CHECK(qex::intrinsic_reward(h, m, 3, 99.0) == doctest::Approx(step));
  CHECK(h.visited.size() == 4);
}

TEST_CASE("intrinsic reward takes the minimum over history") {
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(4, 4);
  table(0, 3) = 0.5;
  table(1, 3) = 0.2;
  table(2, 3) = 0.9;
  SdHistory h;
  h.visited = {0, 1, 2};
  CHECK(qex::intrinsic_reward(h, table, 3, 99.0) == 0.2);
}

TEST_CASE("unreachable-only history returns the cap") {
  const auto m = qex::successor_measure(two_state_chain());
  SdHistory h;
  h.visited = {1};
  CHECK(qex::intrinsic_reward(h, m, 0, 7.5) == 7.5);
  SdHistory h2;
  h2.visited = {1};
  CHECK(qex::intrinsic_reward(h2, qex::distance_table(m), 0, 7.5) == 7.5);
  CHECK(qex::default_unreachable_cap(0.99, 77) == doctest::Approx(-std::log(0.99) * 77));
}

TEST_CASE("table and measure overloads agree") {
  std::mt19937_64 rng(29);
  const auto m = qex::successor_measure(TabularMdp{oracle::random_stochastic(8, rng, 0.7), 0.95});
  const Eigen::MatrixXd table = qex::distance_table(m);
  std::uniform_int_distribution<int> state(0, 7);
  SdHistory a;
  SdHistory b;
  for (int t = 0; t < 200; ++t) {
    const int s = state(rng);
    CHECK(qex::intrinsic_reward(a, m, s, 3.0) == qex::intrinsic_reward(b, table, s, 3.0));
  }
}

TEST_CASE("ring and directed cycle satisfy the axioms") {
  const auto r = qex::check_quasimetric(qex::successor_measure(ring(5)));
  CHECK(r.passed());
  CHECK(r.triples_checked == 125);
  CHECK(r.asymmetric_pairs == 0);

  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(4, 4);
  for (int i = 0; i < 4; ++i) p(i, (i + 1) % 4) = 1.0;
  const auto c = qex::check_quasimetric(qex::successor_measure(TabularMdp{p, 0.9}));
  CHECK(c.passed());
  CHECK(c.asymmetric_pairs > 0);
}

TEST_CASE("random exact MDPs are quasimetric") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> size(1, 12);
  for (int trial = 0; trial < 30; ++trial) {
    const auto r = qex::check_quasimetric(qex::successor_measure(TabularMdp{oracle::random_stochastic(size(rng), rng), 0.97}));
    CHECK(r.passed());
    CHECK(r.worst_triangle_slack <= 1e-9);
  }
}

TEST_CASE("transition counter smoothing") {
  qex::TransitionCounter c(3);
  c.add(0, 1);
  c.add(0, 1);
  c.add(1, 2);
  CHECK(c.total() == 3.0);
  const TabularMdp mdp = c.to_mdp(1e-3, 0.99);
  CHECK_NOTHROW(mdp.validate());
  CHECK(mdp.transition(0, 1) == doctest::Approx(2.001 / 2.003));
  CHECK(mdp.transition(2, 0) == doctest::Approx(1.0 / 3.0));
  const TabularMdp bare = c.to_mdp(0.0, 0.99);
  CHECK(bare.transition(2, 2) == 1.0);
  c.reset();
  CHECK(c.total() == 0.0);
}

TEST_CASE("invalid MDPs are rejected") {
  Eigen::Matrix2d p;
  p << 0.5, 0.4,
       0.0, 1.0;
  CHECK_THROWS_AS(qex::successor_measure(TabularMdp{p, 0.9}), std::invalid_argument);
  CHECK_THROWS_AS(qex::successor_measure(TabularMdp{Eigen::Matrix2d::Identity(), 1.0}), std::invalid_argument);
}

TEST_CASE("matrix text round trip is exact") {
  std::mt19937_64 rng(37);
  const Eigen::MatrixXd m = qex::successor_measure(TabularMdp{oracle::random_stochastic(5, rng), 0.99}).m;
  std::stringstream io;
  qex::write_matrix(io, m);
  const Eigen::MatrixXd back = qex::read_matrix(io);
  CHECK(back.rows() == 5);
  CHECK((back.array() == m.array()).all());
}
