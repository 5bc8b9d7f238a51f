#pragma once

#include <array>
#include <stdexcept>

#include "qmem/qstate.hpp"

namespace qmem {

class ProtocolError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class AnalyzerKind { partial_readout, fiber_interferometer, hybrid_memory };

struct AnalyzerSetting {
  AnalyzerKind kind = AnalyzerKind::fiber_interferometer;
  double phase = 0.0;  // wrapped to [0, 2pi)
  double theta = 0.0;  // hybrid only, [0, pi/2]
};

AnalyzerSetting make_setting(AnalyzerKind kind, double phase, double theta = 0.0);

// Efficiencies of a memory used as a hybrid-qubit analyzer. The echo efficiency
// factorizes as eta_echo = eta_abs^2 * eta; eta_trans + eta_abs may exceed one
// minus residual inter-peak absorption, so no sum rule is imposed.
struct HybridBudget {
  double eta_trans = 0.0;
  double eta_echo = 0.0;
  double eta_abs = 0.0;
  double eta = 0.0;

  // Fills eta from the factorization.
  static HybridBudget from_measured(double eta_trans, double eta_echo, double eta_abs);
  bool factorization_consistent(double tol = 1e-9) const;
};

// (1 + V cos(dphi_s + dphi_i)) / 2; its phase average is 1/2.
double franson_prob(double dphi_s, double dphi_i, double visibility);

double hybrid_theta(const HybridBudget& b);
double hybrid_theta(double eta_trans, double eta_echo);

// X = +-sin2t sx + cos2t sz; the sign of sx follows e^{i phi_s} for phi_s in {0, pi}.
Observable hybrid_observable(double theta, double phi_s);

double hybrid_predicted_S(double theta);

// Bra components of one conclusive outcome, on {L_s, E_QM} (index 0 = L_s).
using Bra2 = Eigen::RowVector2cd;

struct HybridPovm {
  Bra2 plus;   // outcome +1
  Bra2 minus;  // outcome -1
  double alpha = 0.0;  // sqrt(eta_abs): E_QM amplitude scale of the stored component

  // Elements referred to the photon before absorption: components times diag(1, alpha).
  Bra2 plus_input() const;
  Bra2 minus_input() const;
  // sum of P^dag P over the conclusive outcomes, input-referred.
  Eigen::Matrix2cd conclusive_operator() const;
};

HybridPovm hybrid_povm(const HybridBudget& b, double phi_s);

// Result of assigning +-1 to conclusive outcomes on asymmetric_state(sqrt(eta_abs))
// and measuring the idler with a +-1 observable.
struct PovmCorrelation {
  double correlator = 0.0;
  double conclusive_probability = 0.0;  // post-selection fraction
  double idler_marginal_plus = 0.0;     // P(idler +1 | conclusive)
};

PovmCorrelation povm_correlation(const HybridBudget& b, double phi_s, const Observable& idler);

double fidelity_from_visibility(double v_mean);
bool peres_entangled(double fidelity);

}  // namespace qmem
