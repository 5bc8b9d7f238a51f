#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>

// Two-qubit time-bin algebra. Basis order is {E_sE_i, E_sL_i, L_sE_i, L_sL_i}:
// signal qubit first, early bin = index 0. Single-qubit operators act on {E, L}.

namespace qmem {

using Complex = std::complex<double>;
using StateVector = Eigen::Vector4cd;
using DensityMatrix = Eigen::Matrix4cd;
using Observable = Eigen::Matrix2cd;
using Ket2 = Eigen::Vector2cd;

namespace basis {
inline constexpr int EE = 0;
inline constexpr int EL = 1;
inline constexpr int LE = 2;
inline constexpr int LL = 3;
}  // namespace basis

class StateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kEigenTol = 1e-10;

Observable identity2();
Observable sigma_x();
Observable sigma_y();
// |L><L| - |E><E|: the late bin is the +1 eigenstate.
Observable sigma_z();

Eigen::Matrix4cd kron(const Observable& a, const Observable& b);
StateVector kron(const Ket2& a, const Ket2& b);

StateVector bell_state(double phase);
StateVector asymmetric_state(double alpha);
DensityMatrix to_density(const StateVector& psi);
DensityMatrix werner(double visibility, double phase);

double expectation(const DensityMatrix& rho, const Observable& a, const Observable& b);

struct ChshSettings {
  Observable x1, x2, y1, y2;
};
// Signal X1 = sx, X2 = sz; idler Y1 = (sx+sz)/sqrt2, Y2 = (sx-sz)/sqrt2.
ChshSettings canonical_chsh_settings();

// E(X1Y1) + E(X2Y1) + E(X1Y2) - E(X2Y2)
double chsh(const DensityMatrix& rho, const ChshSettings& s);

double fidelity_to(const DensityMatrix& rho, const StateVector& psi);

template <typename M>
bool is_hermitian(const M& m, double tol = kHermitianTol) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff() < tol;
}
double min_eigenvalue(const DensityMatrix& rho);
bool is_valid_density(const DensityMatrix& rho);
bool is_dichotomic(const Observable& a, double tol = kEigenTol);

}  // namespace qmem
