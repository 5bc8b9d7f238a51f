#include "qmem/protocol.hpp"

#include <cmath>
#include <numbers>

namespace qmem {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_phase(double p) {
  double w = std::fmod(p, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  return w >= kTwoPi ? 0.0 : w;
}

void require_unit(double x, const char* what) {
  if (!(x >= 0.0 && x <= 1.0)) throw ProtocolError(std::string(what) + " outside [0,1]");
}

}  // namespace

AnalyzerSetting make_setting(AnalyzerKind kind, double phase, double theta) {
  if (!(theta >= 0.0 && theta <= std::numbers::pi / 2 + 1e-15))
    throw ProtocolError("analyzer theta outside [0, pi/2]");
  return {kind, wrap_phase(phase), theta};
}

HybridBudget HybridBudget::from_measured(double eta_trans, double eta_echo, double eta_abs) {
  require_unit(eta_trans, "eta_trans");
  require_unit(eta_echo, "eta_echo");
  require_unit(eta_abs, "eta_abs");
  if (eta_abs <= 0.0) throw ProtocolError("eta_abs must be positive");
  const double eta = eta_echo / (eta_abs * eta_abs);
  if (eta > 1.0 + 1e-12) throw ProtocolError("eta_echo > eta_abs^2: rephasing efficiency above one");
  return {eta_trans, eta_echo, eta_abs, std::min(eta, 1.0)};
}

bool HybridBudget::factorization_consistent(double tol) const {
  return std::abs(eta_echo - eta_abs * eta_abs * eta) <= tol;
}

double franson_prob(double dphi_s, double dphi_i, double visibility) {
  require_unit(visibility, "visibility");
  return 0.5 * (1.0 + visibility * std::cos(dphi_s + dphi_i));
}

double hybrid_theta(double eta_trans, double eta_echo) {
  if (!(eta_trans >= 0.0 && eta_echo >= 0.0)) throw ProtocolError("negative efficiency");
  if (eta_trans + eta_echo <= 0.0) throw ProtocolError("hybrid_theta: both efficiencies zero");
  return std::atan2(std::sqrt(eta_echo), std::sqrt(eta_trans));
}

double hybrid_theta(const HybridBudget& b) { return hybrid_theta(b.eta_trans, b.eta_echo); }

Observable hybrid_observable(double theta, double phi_s) {
  const double sign = std::cos(phi_s) >= 0.0 ? 1.0 : -1.0;
  return sign * std::sin(2 * theta) * sigma_x() + std::cos(2 * theta) * sigma_z();
}

double hybrid_predicted_S(double theta) { return 2.0 * std::cos(2 * theta) + 2.0 * std::sin(2 * theta); }

HybridPovm hybrid_povm(const HybridBudget& b, double phi_s) {
  if (!(b.eta_abs > 0.0)) throw ProtocolError("hybrid_povm: eta_abs must be positive");
  const Complex ph = std::polar(1.0, phi_s);
  HybridPovm p;
  p.alpha = std::sqrt(b.eta_abs);
  p.plus << std::sqrt(b.eta_trans), ph * std::sqrt(b.eta * b.eta_abs);
  p.minus << -ph * std::sqrt(b.eta) * b.eta_abs, std::sqrt(b.eta_trans / b.eta_abs);
  return p;
}

Bra2 HybridPovm::plus_input() const { return Bra2(plus(0), plus(1) * alpha); }
Bra2 HybridPovm::minus_input() const { return Bra2(minus(0), minus(1) * alpha); }

Eigen::Matrix2cd HybridPovm::conclusive_operator() const {
  const Bra2 p = plus_input();
  const Bra2 m = minus_input();
  return p.adjoint() * p + m.adjoint() * m;
}

PovmCorrelation povm_correlation(const HybridBudget& b, double phi_s, const Observable& idler) {
  if (!is_dichotomic(idler)) throw ProtocolError("idler observable must have eigenvalues +-1");
  const HybridPovm povm = hybrid_povm(b, phi_s);
  const StateVector psi = asymmetric_state(povm.alpha);
  // Signal index 0 (E) carries the stored excitation E_QM, index 1 (L) the transmitted L_s.
  auto conditional = [&](const Bra2& bra) {
    Ket2 idl;
    for (int i = 0; i < 2; ++i) idl(i) = bra(1) * psi(2 * 0 + i) + bra(0) * psi(2 * 1 + i);
    return idl;
  };
  const Ket2 cp = conditional(povm.plus);
  const Ket2 cm = conditional(povm.minus);
  const double np = cp.squaredNorm();
  const double nm = cm.squaredNorm();
  const double yp = (cp.adjoint() * idler * cp)(0, 0).real();
  const double ym = (cm.adjoint() * idler * cm)(0, 0).real();
  PovmCorrelation r;
  r.conclusive_probability = np + nm;
  if (r.conclusive_probability <= 0.0) throw ProtocolError("no conclusive outcome");
  r.correlator = (yp - ym) / r.conclusive_probability;
  r.idler_marginal_plus = 0.5 * (1.0 + (yp + ym) / r.conclusive_probability);
  return r;
}

double fidelity_from_visibility(double v_mean) {
  require_unit(v_mean, "visibility");
  return (1.0 + 3.0 * v_mean) / 4.0;
}

bool peres_entangled(double fidelity) {
  require_unit(fidelity, "fidelity");
  return fidelity >= 0.5;
}

}  // namespace qmem
