#include "qmem/qstate.hpp"

#include <cmath>
#include <numbers>

namespace qmem {

namespace {
const Complex I{0.0, 1.0};
}

Observable identity2() { return Observable::Identity(); }

Observable sigma_x() {
  Observable m;
  m << 0, 1, 1, 0;
  return m;
}

Observable sigma_y() {
  Observable m;
  m << 0, -I, I, 0;
  return m;
}

Observable sigma_z() {
  Observable m;
  m << -1, 0, 0, 1;
  return m;
}

Eigen::Matrix4cd kron(const Observable& a, const Observable& b) {
  Eigen::Matrix4cd out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return out;
}

StateVector kron(const Ket2& a, const Ket2& b) {
  StateVector out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out(2 * i + j) = a(i) * b(j);
  return out;
}

StateVector bell_state(double phase) {
  StateVector psi = StateVector::Zero();
  psi(basis::EE) = 1.0 / std::numbers::sqrt2;
  psi(basis::LL) = std::polar(1.0 / std::numbers::sqrt2, phase);
  return psi;
}

StateVector asymmetric_state(double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw StateError("asymmetric_state: alpha must be >= 0");
  const double n = std::sqrt(1.0 + alpha * alpha);
  StateVector psi = StateVector::Zero();
  psi(basis::EE) = alpha / n;
  psi(basis::LL) = 1.0 / n;
  return psi;
}

DensityMatrix to_density(const StateVector& psi) {
  const double n2 = psi.squaredNorm();
  if (!(n2 >= 1e-30)) throw StateError("to_density: zero-norm state");
  DensityMatrix rho = psi * psi.adjoint() / n2;
  // exact Hermitian symmetrization removes rounding asymmetry
  return 0.5 * (rho + rho.adjoint());
}

DensityMatrix werner(double visibility, double phase) {
  if (!(visibility >= 0.0 && visibility <= 1.0)) throw StateError("werner: visibility outside [0,1]");
  return visibility * to_density(bell_state(phase)) +
         (1.0 - visibility) * DensityMatrix::Identity() / 4.0;
}

double expectation(const DensityMatrix& rho, const Observable& a, const Observable& b) {
  if (!is_hermitian(a) || !is_hermitian(b)) throw StateError("expectation: observable not Hermitian");
  if (!is_hermitian(rho)) throw StateError("expectation: density matrix not Hermitian");
  const Complex t = (rho * kron(a, b)).trace() / rho.trace();
  return t.real();
}

ChshSettings canonical_chsh_settings() {
  const double r = 1.0 / std::numbers::sqrt2;
  return {sigma_x(), sigma_z(), r * (sigma_x() + sigma_z()), r * (sigma_x() - sigma_z())};
}

double chsh(const DensityMatrix& rho, const ChshSettings& s) {
  for (const Observable* o : {&s.x1, &s.x2, &s.y1, &s.y2})
    if (!is_dichotomic(*o)) throw StateError("chsh: setting is not a +-1 observable");
  return expectation(rho, s.x1, s.y1) + expectation(rho, s.x2, s.y1) + expectation(rho, s.x1, s.y2) -
         expectation(rho, s.x2, s.y2);
}

double fidelity_to(const DensityMatrix& rho, const StateVector& psi) {
  return (psi.adjoint() * rho * psi)(0, 0).real() / psi.squaredNorm();
}

double min_eigenvalue(const DensityMatrix& rho) {
  Eigen::SelfAdjointEigenSolver<DensityMatrix> es(rho, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool is_valid_density(const DensityMatrix& rho) {
  const double tr = rho.trace().real();
  return is_hermitian(rho) && min_eigenvalue(rho) > -kEigenTol && tr > 0.0 && tr <= 1.0 + 1e-12;
}

bool is_dichotomic(const Observable& a, double tol) {
  if (!is_hermitian(a)) return false;
  Eigen::SelfAdjointEigenSolver<Observable> es(a, Eigen::EigenvaluesOnly);
  const auto ev = es.eigenvalues();
  return std::abs(std::abs(ev(0)) - 1.0) < tol && std::abs(std::abs(ev(1)) - 1.0) < tol;
}

}  // namespace qmem
