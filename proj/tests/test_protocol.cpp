#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qmem/protocol.hpp"

using namespace qmem;
using doctest::Approx;

namespace {
const double kPi = std::numbers::pi;
const double kRt2 = std::numbers::sqrt2;

bool close(const Observable& a, const Observable& b, double tol = 1e-12) { return (a - b).norm() < tol; }
}  // namespace

TEST_CASE("franson_prob") {
  CHECK(franson_prob(0.0, 0.0, 1.0) == Approx(1.0));
  CHECK(std::abs(franson_prob(kPi / 2, kPi / 2, 1.0)) < 1e-15);
  CHECK(franson_prob(0.3, -0.3, 0.84) == Approx(0.92).epsilon(1e-12));
  CHECK_THROWS_AS(franson_prob(0.0, 0.0, 1.01), ProtocolError);
  CHECK_THROWS_AS(franson_prob(0.0, 0.0, -0.01), ProtocolError);
}

TEST_CASE("property: franson_prob phase average is one half") {
  const int n = 4096;
  for (double v : {0.0, 0.3, 0.84, 1.0})
    for (double di : {0.0, 1.1, 2.5}) {
      double sum = 0.0;
      for (int k = 0; k < n; ++k) sum += franson_prob(2 * kPi * k / n, di, v);
      CHECK(std::abs(sum / n - 0.5) < 1e-12);
    }
}

TEST_CASE("make_setting wraps and validates") {
  const AnalyzerSetting s = make_setting(AnalyzerKind::fiber_interferometer, -kPi / 2);
  CHECK(s.phase == Approx(3 * kPi / 2));
  CHECK(make_setting(AnalyzerKind::partial_readout, 2 * kPi).phase == 0.0);
  CHECK_THROWS_AS(make_setting(AnalyzerKind::hybrid_memory, 0.0, 2.0), ProtocolError);
}

TEST_CASE("HybridBudget factorization") {
  const HybridBudget b = HybridBudget::from_measured(0.36, 0.05, 0.5);
  CHECK(b.eta == Approx(0.2));
  CHECK(b.factorization_consistent());
  CHECK_THROWS_AS(HybridBudget::from_measured(0.36, 0.05, 0.1), ProtocolError);
  CHECK_THROWS_AS(HybridBudget::from_measured(0.36, 0.05, 0.0), ProtocolError);
  // Transmission plus absorption above one is allowed.
  CHECK_NOTHROW(HybridBudget::from_measured(0.6, 0.3, 0.6));
}

TEST_CASE("hybrid_theta") {
  CHECK(hybrid_theta(0.2, 0.2) == Approx(kPi / 4).epsilon(1e-15));
  CHECK(std::cos(2 * hybrid_theta(1.0, 1.0 / (3 + 2 * kRt2))) == Approx(kRt2 / 2).epsilon(1e-12));
  const double t = hybrid_theta(0.36, 0.05);
  CHECK(std::abs(std::cos(2 * t) - 0.7561) < 1e-4);
  CHECK(std::abs(std::sin(2 * t) - 0.6545) < 1e-4);
  CHECK(hybrid_theta(0.0, 0.1) == Approx(kPi / 2));
  CHECK_THROWS_AS(hybrid_theta(0.0, 0.0), ProtocolError);
}

TEST_CASE("hybrid_observable") {
  CHECK(close(hybrid_observable(kPi / 4, 0.0), sigma_x()));
  CHECK(close(hybrid_observable(0.0, 0.0), sigma_z()));
  CHECK(close(hybrid_observable(0.0, kPi), sigma_z()));
  CHECK(close(hybrid_observable(kPi / 8, 0.0), (sigma_x() + sigma_z()) / kRt2));
  CHECK(close(hybrid_observable(kPi / 8, kPi), (-sigma_x() + sigma_z()) / kRt2));
  for (double t = 0.0; t <= kPi / 2; t += 0.1) {
    CHECK(is_hermitian(hybrid_observable(t, 0.0)));
    CHECK(is_dichotomic(hybrid_observable(t, kPi)));
  }
}

TEST_CASE("hybrid_predicted_S") {
  CHECK(std::abs(hybrid_predicted_S(kPi / 8) - 2 * kRt2) < 1e-12);
  CHECK(hybrid_predicted_S(0.0) == Approx(2.0));
  CHECK(std::abs(hybrid_predicted_S(hybrid_theta(0.36, 0.05)) - 2.8211) < 1e-3);
}

TEST_CASE("property: hybrid_predicted_S has a unique maximum at 22.5 degrees") {
  int best = -1;
  double best_s = -1.0;
  const int n = 4500;  // 0.01 degree spacing on [0, 45]
  for (int k = 0; k <= n; ++k) {
    const double s = hybrid_predicted_S(k * 0.01 * kPi / 180);
    if (s > best_s) best_s = s, best = k;
  }
  CHECK(best == 2250);
  CHECK(std::abs(best_s - 2 * kRt2) < 1e-9);
}

TEST_CASE("property: chsh with hybrid observables equals 2cos2t + 2sin2t") {
  const DensityMatrix rho = to_density(bell_state(0.0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, kPi / 2);
  for (int k = 0; k < 100; ++k) {
    const double t = u(rng);
    const ChshSettings s{hybrid_observable(t, 0.0), hybrid_observable(t, kPi), sigma_z(), sigma_x()};
    CHECK(std::abs(chsh(rho, s) - hybrid_predicted_S(t)) < 1e-10);
  }
}

TEST_CASE("hybrid_povm components") {
  const HybridBudget b = HybridBudget::from_measured(0.36, 0.05, 0.5);
  const HybridPovm p = hybrid_povm(b, 0.0);
  CHECK(std::abs(p.plus(0)) == Approx(0.6));
  CHECK(std::abs(p.plus(1)) == Approx(std::sqrt(0.2 * 0.5)));
  CHECK(std::abs(p.minus(0)) == Approx(std::sqrt(0.2) * 0.5));
  CHECK(std::abs(p.minus(1)) == Approx(std::sqrt(0.36 / 0.5)));
  CHECK(p.alpha == Approx(std::sqrt(0.5)));
  HybridBudget zero = b;
  zero.eta_abs = 0.0;
  CHECK_THROWS_AS(hybrid_povm(zero, 0.0), ProtocolError);
}

TEST_CASE("hybrid_povm balanced case is orthogonal") {
  // eta_trans = eta_echo with eta_abs = eta = 1.
  const HybridPovm p = hybrid_povm(HybridBudget::from_measured(0.5, 0.5, 1.0), 0.0);
  CHECK(std::abs(p.plus.dot(p.minus)) < 1e-15);
  CHECK(std::abs(std::abs(p.plus(0)) - std::abs(p.plus(1))) < 1e-15);
}

TEST_CASE("hybrid_povm phase flips the sigma_x sign") {
  const HybridBudget b = HybridBudget::from_measured(0.36, 0.05, 0.5);
  const double e0 = povm_correlation(b, 0.0, sigma_x()).correlator;
  const double e1 = povm_correlation(b, kPi, sigma_x()).correlator;
  CHECK(e0 == Approx(-e1).epsilon(1e-12));
  CHECK(e0 > 0.0);
}

TEST_CASE("measured budget: POVM correlators match observables") {
  const HybridBudget b = HybridBudget::from_measured(0.36, 0.05, 0.5);
  const double t = hybrid_theta(b);
  const DensityMatrix rho = to_density(bell_state(0.0));
  for (double phi : {0.0, kPi})
    for (const Observable& y : {sigma_z(), sigma_x()}) {
      const PovmCorrelation c = povm_correlation(b, phi, y);
      CHECK(std::abs(c.correlator - expectation(rho, hybrid_observable(t, phi), y)) < 1e-9);
      CHECK(c.idler_marginal_plus == Approx(0.5).epsilon(1e-9));
    }
}

TEST_CASE("property: POVM route equals observable route for random budgets") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  const DensityMatrix rho = to_density(bell_state(0.0));
  for (int k = 0; k < 20; ++k) {
    const double eta_abs = u(rng), eta = u(rng);
    const HybridBudget b = HybridBudget::from_measured(u(rng), eta_abs * eta_abs * eta, eta_abs);
    const double t = hybrid_theta(b);
    for (double phi : {0.0, kPi})
      for (const Observable& y : {sigma_z(), sigma_x(), Observable((sigma_x() - sigma_z()) / kRt2)}) {
        const double povm = povm_correlation(b, phi, y).correlator;
        CHECK(std::abs(povm - expectation(rho, hybrid_observable(t, phi), y)) < 1e-9);
      }
  }
}

// Off-diagonal terms cancel only for the two analyzer phases 0 and pi.
TEST_CASE("property: input-referred conclusive operator is at most identity") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int k = 0; k < 200; ++k) {
    // A passive memory emits at most one photon: eta_trans + eta_echo <= 1.
    const double eta_abs = u(rng), eta = u(rng);
    const double eta_echo = eta_abs * eta_abs * eta;
    const HybridBudget b = HybridBudget::from_measured((1.0 - eta_echo) * u(rng), eta_echo, eta_abs);
    const Eigen::Matrix2cd c = hybrid_povm(b, k % 2 ? kPi : 0.0).conclusive_operator();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(Eigen::Matrix2cd::Identity() - c);
    CHECK(es.eigenvalues().minCoeff() > -1e-9);
    // eta_trans + eta_echo per basis state: a proportional-to-identity filter.
    CHECK((c - (b.eta_trans + b.eta_echo) * Eigen::Matrix2cd::Identity()).norm() < 1e-12);
  }
}

TEST_CASE("fidelity_from_visibility and peres_entangled") {
  CHECK(fidelity_from_visibility(0.81) == Approx(0.8575).epsilon(1e-12));
  CHECK(std::round(fidelity_from_visibility(0.81) * 100) == 86.0);
  CHECK(fidelity_from_visibility(1.0) == 1.0);
  CHECK(std::abs(fidelity_from_visibility(1.0 / 3.0) - 0.5) < 1e-15);
  CHECK_THROWS_AS(fidelity_from_visibility(1.2), ProtocolError);
  CHECK(peres_entangled(0.86));
  CHECK(peres_entangled(0.5));
  CHECK_FALSE(peres_entangled(0.49));
}
