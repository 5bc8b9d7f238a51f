#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qmem/qstate.hpp"

using namespace qmem;
using doctest::Approx;

namespace {

const double kRt2 = std::numbers::sqrt2;

StateVector random_state(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  StateVector v;
  for (int i = 0; i < 4; ++i) v(i) = Complex(n(rng), n(rng));
  return v / v.norm();
}

Ket2 random_ket(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Ket2 v(Complex(n(rng), n(rng)), Complex(n(rng), n(rng)));
  return v / v.norm();
}

DensityMatrix random_density(std::mt19937_64& rng) {
  // Mixture of three random pure states.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double w[3] = {u(rng), u(rng), u(rng)};
  const double sum = w[0] + w[1] + w[2];
  DensityMatrix r = DensityMatrix::Zero();
  for (double x : w) r += (x / sum) * to_density(random_state(rng));
  return r;
}

}  // namespace

TEST_CASE("bell_state amplitudes") {
  const StateVector a = bell_state(0.0);
  CHECK(std::abs(a(basis::EE) - 1.0 / kRt2) < 1e-15);
  CHECK(std::abs(a(basis::LL) - 1.0 / kRt2) < 1e-15);
  CHECK(std::abs(a(basis::EL)) == 0.0);
  CHECK(std::abs(a(basis::LE)) == 0.0);
  CHECK(std::abs(bell_state(std::numbers::pi)(basis::LL) + 1.0 / kRt2) < 1e-15);
  const StateVector c = bell_state(std::numbers::pi / 2);
  CHECK(std::abs(c(basis::LL) - Complex(0.0, 1.0 / kRt2)) < 1e-15);
  CHECK(c.norm() == Approx(1.0).epsilon(1e-15));
}

TEST_CASE("asymmetric_state") {
  CHECK((asymmetric_state(1.0) - bell_state(0.0)).norm() < 1e-15);
  const StateVector z = asymmetric_state(0.0);
  CHECK(std::abs(z(basis::LL) - 1.0) < 1e-15);
  CHECK(z.norm() == Approx(1.0));
  // normalize (0.6, 1) by sqrt(1.36)
  const StateVector s = asymmetric_state(std::sqrt(0.36));
  CHECK(std::abs(s(basis::EE)) == Approx(0.6 / std::sqrt(1.36)).epsilon(1e-12));
  CHECK(std::abs(s(basis::EE)) == Approx(0.5145).epsilon(1e-4));
  CHECK(std::abs(s(basis::LL)) == Approx(0.8575).epsilon(1e-4));
  CHECK_THROWS_AS(asymmetric_state(-0.1), StateError);
}

TEST_CASE("to_density") {
  const DensityMatrix r = to_density(bell_state(0.0));
  for (int i : {0, 3})
    for (int j : {0, 3}) CHECK(std::abs(r(i, j) - 0.5) < 1e-15);
  CHECK(std::abs(r.trace() - 1.0) < 1e-12);
  StateVector ee = StateVector::Zero();
  ee(basis::EE) = 1.0;
  DensityMatrix d = DensityMatrix::Zero();
  d(0, 0) = 1.0;
  CHECK((to_density(ee) - d).norm() < 1e-15);
  CHECK((to_density(0.5 * bell_state(0.0)) - r).norm() < 1e-15);
  CHECK_THROWS_AS(to_density(StateVector::Zero()), StateError);
  CHECK_THROWS_AS(to_density(StateVector::Constant(Complex(1e-16, 0.0))), StateError);
}

TEST_CASE("werner") {
  CHECK((werner(1.0, 0.0) - to_density(bell_state(0.0))).norm() < 1e-15);
  CHECK((werner(0.0, 0.3) - 0.25 * DensityMatrix::Identity()).norm() < 1e-15);
  CHECK(fidelity_to(werner(0.81, 0.0), bell_state(0.0)) == Approx(0.8575).epsilon(1e-12));
  CHECK_THROWS_AS(werner(1.1, 0.0), StateError);
  CHECK_THROWS_AS(werner(-0.1, 0.0), StateError);
}

TEST_CASE("expectation") {
  const DensityMatrix b = to_density(bell_state(0.0));
  CHECK(expectation(b, sigma_x(), sigma_x()) == Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(expectation(b, sigma_z(), sigma_x())) < 1e-12);
  const Observable d = (sigma_x() + sigma_z()) / kRt2;
  CHECK(expectation(werner(0.81, 0.0), sigma_x(), d) == Approx(0.81 / kRt2).epsilon(1e-12));
  CHECK(expectation(werner(0.81, 0.0), sigma_x(), d) == Approx(0.5728).epsilon(1e-4));
  Observable bad = sigma_x();
  bad(0, 1) = 2.0;
  CHECK_THROWS(expectation(b, bad, sigma_z()));
}

TEST_CASE("sigma_z orientation: late bin is +1") {
  StateVector ll = StateVector::Zero();
  ll(basis::LL) = 1.0;
  CHECK(expectation(to_density(ll), sigma_z(), identity2()) == Approx(1.0));
  StateVector ee = StateVector::Zero();
  ee(basis::EE) = 1.0;
  CHECK(expectation(to_density(ee), sigma_z(), identity2()) == Approx(-1.0));
}

TEST_CASE("chsh examples") {
  const ChshSettings s = canonical_chsh_settings();
  CHECK(chsh(to_density(bell_state(0.0)), s) == Approx(2 * kRt2).epsilon(1e-12));
  StateVector ee = StateVector::Zero();
  ee(basis::EE) = 1.0;
  CHECK(chsh(to_density(ee), s) == Approx(kRt2).epsilon(1e-12));
  CHECK(chsh(werner(0.81, 0.0), s) == Approx(2 * kRt2 * 0.81).epsilon(1e-12));
  ChshSettings bad = s;
  bad.y2 = 0.5 * sigma_x();
  CHECK_THROWS(chsh(werner(0.5, 0.0), bad));
}

TEST_CASE("fidelity_to") {
  std::mt19937_64 rng(7);
  const StateVector psi = random_state(rng);
  CHECK(fidelity_to(to_density(psi), psi) == Approx(1.0).epsilon(1e-12));
  CHECK(fidelity_to(0.25 * DensityMatrix::Identity(), psi) == Approx(0.25).epsilon(1e-12));
}

TEST_CASE("property: returned density matrices are Hermitian and PSD") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const DensityMatrix a = to_density(random_state(rng));
    const DensityMatrix w = werner(u(rng), 2 * std::numbers::pi * u(rng));
    for (const auto* r : {&a, &w}) {
      CHECK(is_hermitian(*r));
      CHECK(min_eigenvalue(*r) > -1e-10);
      CHECK(is_valid_density(*r));
    }
  }
}

TEST_CASE("property: chsh is linear in rho") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const ChshSettings s = canonical_chsh_settings();
  for (int k = 0; k < 100; ++k) {
    const DensityMatrix a = random_density(rng), b = random_density(rng);
    const double l = u(rng);
    CHECK(std::abs(chsh(l * a + (1 - l) * b, s) - (l * chsh(a, s) + (1 - l) * chsh(b, s))) < 1e-10);
  }
}

TEST_CASE("property: Tsirelson and product-state bounds") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 2 * std::numbers::pi);
  auto random_dichotomic = [&] {
    const double t = u(rng) / 2, p = u(rng);
    return Observable(std::sin(t) * std::cos(p) * sigma_x() + std::sin(t) * std::sin(p) * sigma_y() +
                      std::cos(t) * sigma_z());
  };
  for (int k = 0; k < 500; ++k) {
    const ChshSettings s{random_dichotomic(), random_dichotomic(), random_dichotomic(), random_dichotomic()};
    CHECK(std::abs(chsh(random_density(rng), s)) <= 2 * kRt2 + 1e-9);
    const StateVector prod = kron(random_ket(rng), random_ket(rng));
    CHECK(std::abs(chsh(to_density(prod), s)) <= 2.0 + 1e-9);
  }
}

TEST_CASE("property: Werner fidelity is (1+3V)/4") {
  for (double v : {0.0, 0.25, 0.5, 0.81, 1.0})
    for (double ph : {0.0, 1.0, std::numbers::pi})
      CHECK(std::abs(fidelity_to(werner(v, ph), bell_state(ph)) - (1 + 3 * v) / 4) < 1e-12);
}
