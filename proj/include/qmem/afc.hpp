#pragma once

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <stdexcept>
#include <vector>

namespace qmem {

class AfcError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Uniform frequency grid in FFT order, relative to the photon carrier.
// The paired time grid has dt = 1/span and covers n_points * dt.
struct FrequencyGrid {
  std::size_t n_points = std::size_t{1} << 20;
  double span = 2e9;
  double center_offset = 0.0;

  double dt() const { return 1.0 / span; }
  double resolution() const { return span / static_cast<double>(n_points); }
  double frequency(std::size_t k) const;
  void validate() const;
};

enum class PeakShape { square, gaussian };

// Causal (Kramers-Kronig) medium, or |H| only. The latter is non-physical and
// exists for comparison.
enum class PhaseModel { minimum_phase, amplitude_only };

struct CombParams {
  double period = 40e6;
  double finesse = 3.0;  // period / tooth FWHM; 1 means no modulation
  double peak_depth = 4.0;
  double background_depth = 0.0;
  double bandwidth = 120e6;
  PeakShape shape = PeakShape::square;
  double comb_shift = 0.0;
  double edge_rolloff = 0.0;  // half-width of the band-edge taper; 0 selects one period
};

struct CombSpectrum {
  FrequencyGrid grid;
  std::vector<double> depth;  // optical depth per grid point, FFT order
  double period = 0.0;
  double finesse = 1.0;
  PeakShape peak_shape = PeakShape::square;
  double bandwidth = 0.0;
  double comb_shift = 0.0;
  double background_depth = 0.0;
  bool clipped = false;

  double storage_time() const { return period > 0.0 ? 1.0 / period : 0.0; }
};

// Periodic depth profile before band windowing.
double comb_profile(const CombParams& p, double nu);

// Raised-cosine band window: 1 inside, cos^2 roll-off of half-width `rolloff`
// centred on +-bandwidth/2, zero beyond bandwidth/2 + rolloff.
double band_window(double nu, double bandwidth, double rolloff);

CombSpectrum build_comb(const CombParams& p, const FrequencyGrid& grid);

// Uniform depth over the whole grid.
CombSpectrum flat_comb(double depth, const FrequencyGrid& grid);

struct DoubleReadoutParams {
  double t_short = 50e-9;
  double t_long = 75e-9;
  double weight = 0.5;       // share of the short-delay structure
  double phase_short = 0.0;  // echo phase offsets, realized as per-structure shifts
  double phase_long = 0.0;
  double peak_depth = 2.5;
  double finesse = 3.0;
  double background_depth = 0.0;
  double bandwidth = 120e6;
  PeakShape shape = PeakShape::square;
  double max_depth = std::numeric_limits<double>::infinity();  // material optical depth
};

CombSpectrum double_readout_comb(const DoubleReadoutParams& p, const FrequencyGrid& grid);

std::vector<std::complex<double>> transfer_function(const CombSpectrum& comb,
                                                    PhaseModel model = PhaseModel::minimum_phase);

struct TimeEnvelope {
  std::vector<std::complex<double>> samples;
  double dt = 0.0;
  double t0 = 0.0;

  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
  double energy() const;
};

// Gaussian wavepacket with the given intensity FWHM, unit energy, real carrier.
// The time axis is centred: t0 = -n/2 * dt.
TimeEnvelope gaussian_pulse(const FrequencyGrid& grid, double fwhm, double center = 0.0);

TimeEnvelope propagate(const TimeEnvelope& in, const CombSpectrum& comb,
                       PhaseModel model = PhaseModel::minimum_phase);

struct EchoLine {
  double delay = 0.0;
  double efficiency = 0.0;
  double phase = 0.0;     // relative to the input carrier
  double centroid = 0.0;  // energy-weighted arrival time
};

struct EchoReport {
  double eta_trans = 0.0;
  double trans_phase = 0.0;
  std::vector<EchoLine> echoes;

  double total() const;
};

// Energies in windows of width `window` centred on 0 (transmission) and on each
// expected delay, as fractions of the input energy.
EchoReport echo_report(const TimeEnvelope& in, const TimeEnvelope& out, const std::vector<double>& delays,
                       double window);

// 1 - exp(-d_eff), d_eff the input-spectrum-weighted optical depth.
double absorption_efficiency(const TimeEnvelope& in, const CombSpectrum& comb);

struct EfficiencySearch {
  double finesse = 0.0;
  double peak_depth = 0.0;
  EchoReport report;
};

// Grid search over square combs for the largest first-echo efficiency.
EfficiencySearch search_echo_efficiency(const CombParams& base, const std::vector<double>& finesses,
                                        const std::vector<double>& depths, const FrequencyGrid& grid,
                                        double pulse_fwhm, double window);

// Weight of the short structure at which the two echoes carry equal energy.
double balance_double_readout(DoubleReadoutParams p, const FrequencyGrid& grid, double pulse_fwhm,
                              double window, double rel_tol = 1e-6);

// Columns: frequency_Hz, depth (ascending frequency, |frequency| <= nu_max).
void write_comb_csv(std::ostream& os, const CombSpectrum& comb,
                    double nu_max = std::numeric_limits<double>::infinity());
// Columns: time_s, re, im over [t_min, t_max].
void write_envelope_csv(std::ostream& os, const TimeEnvelope& env, double t_min, double t_max);

}  // namespace qmem
