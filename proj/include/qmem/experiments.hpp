#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qmem/afc.hpp"
#include "qmem/coincidence.hpp"
#include "qmem/montecarlo.hpp"
#include "qmem/scenario.hpp"

namespace qmem {

class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kSummarySchema = "qmem.summary/1";
inline constexpr const char* kVersion = "0.1.0";

// Monte Carlo configuration for one run of a scenario at the given pump power.
McConfig make_mc_config(const Scenario& s, double pump_power, Analyzer signal, Analyzer idler, double duration,
                        std::uint64_t seed);

// Standard deviation of the detected signal-idler delay around its class delay.
double timing_sigma(const McConfig& cfg);
// Share of a Gaussian delay distribution centred on `delay` that falls in the window.
double window_fraction(double delay, double sigma, const WindowSpec& w);

struct ExpectedCounts {
  double true_coincidences = 0.0;  // pair-correlated, in the window
  double accidentals = 0.0;        // uncorrelated singles overlap in the window
  double signal_singles_rate = 0.0;
  double idler_singles_rate = 0.0;

  double total() const { return true_coincidences + accidentals; }
};

// Mean window counts over cfg.duration from the outcome model.
ExpectedCounts expected_counts(const McConfig& cfg, const WindowSpec& w);

// Noise-degraded fringe contrast: accidentals add to both fringe extremes.
double diluted_visibility(double visibility, double mean_true, double accidentals);

// Integration time for one run given its (or the scan-mean) expected true coincidence rate.
double integration_time(const IntegrationConfig& in, double true_rate);

// Transmission, first echo and second echo of a single-delay AFC.
Analyzer afc_analyzer(const AfcMemoryConfig& m, double storage_time, double efficiency);

struct G2Point {
  double pump_power = 0.0;
  double storage_time = 0.0;  // 0 without memory
  double efficiency = 0.0;
  double integration_time = 0.0;
  G2Estimate g2;
  double predicted_g2 = 0.0;   // (true + accidental) / accidental from the outcome model
  double peak_position = 0.0;  // background-subtracted centroid around the histogram maximum
  DelayHistogram histogram;
  RunMetadata meta;
};

// Analytic g2 for the scenario's detection chain (no Monte Carlo).
double predicted_g2(const Scenario& s, double pump_power, double storage_time, double efficiency);

// storage_time <= 0 runs without memory.
G2Point run_g2(const Scenario& s, double pump_power, double storage_time, double efficiency, std::uint64_t seed,
               TagStream* tags_out = nullptr);
std::vector<G2Point> scan_pump_power(const Scenario& s);
std::vector<G2Point> scan_storage_time(const Scenario& s);

// Double-readout memory whose echo phase difference phi(t_long) - phi(t_short) is set
// through the per-structure comb shifts, compensating the bare comb's intrinsic offset.
class PartialReadoutMemory {
 public:
  explicit PartialReadoutMemory(const DoubleReadoutConfig& cfg);

  EchoReport report(double echo_phase_difference) const;
  Analyzer analyzer(double echo_phase_difference) const;
  double weight() const { return params_.weight; }
  const EchoReport& base_report() const { return base_; }
  // Delays reported: t_s, t_l, 2 t_s, t_s + t_l, 2 t_l.
  const std::vector<double>& delays() const { return delays_; }

 private:
  DoubleReadoutConfig cfg_;
  DoubleReadoutParams params_;
  FrequencyGrid grid_;
  std::vector<double> delays_;
  EchoReport base_;
};

enum class EvalMode { monte_carlo, analytic_noisy, analytic_noiseless };

struct FringePoint {
  double signal_phase = 0.0;
  double counts = 0.0;  // measured (MC) or expected (analytic)
  double expected_true = 0.0;
  double expected_accidentals = 0.0;
  double accidental_mean = 0.0;  // off-peak windows (MC only)
};

struct FringeSet {
  double idler_phase = 0.0;
  std::vector<FringePoint> points;
  VisibilityFit fit;
  double predicted_visibility = 0.0;  // diluted model contrast
};

struct FringeResult {
  std::vector<FringeSet> sets;
  double integration_time = 0.0;  // per point
  double phase_difference = 0.0;  // fitted offset of set 1 minus set 0, wrapped to (-pi, pi]
  double phase_difference_sigma = 0.0;
  double mean_visibility = 0.0;
  double fidelity = 0.0;
  double echo_weight = 0.0;
};

FringeResult fringe_scan(const Scenario& s, EvalMode mode);

struct BellRun {
  int correlator = 0;  // 0..3
  int signal_outcome = 1;
  int idler_outcome = 1;
  double signal_setting = 0.0;
  double idler_setting = 0.0;
  double window_center = 0.0;
  double integration_time = 0.0;
  std::uint64_t seed = 0;
  WindowCount count;
  ExpectedCounts expected;
};

struct BellResult {
  BellVariant variant = BellVariant::partial_readout;
  std::array<CorrelatorEstimate, 4> correlators{};
  ChshEstimate chsh;
  std::array<double, 4> ideal_E{};      // noiseless analytic correlators
  std::array<double, 4> predicted_E{};  // from expected counts including accidentals
  double ideal_S = 0.0;
  double predicted_S = 0.0;
  std::array<double, 4> conclusive_probability{1.0, 1.0, 1.0, 1.0};  // hybrid: POVM post-selection fraction
  std::vector<BellRun> runs;  // 16: four per correlator
};

// Correlators ordered (X1 Y1, X1 Y2, X2 Y1, X2 Y2), CHSH signs (+, +, +, -).
BellResult bell_test(const Scenario& s, EvalMode mode);

struct Calibration {
  double rate_per_power = 0.0;
  double predicted_g2_no_memory = 0.0;
  double predicted_g2_memory = 0.0;  // first echo at s.afc.storage_time
  double signal_singles_rate = 0.0;
  double idler_singles_rate = 0.0;
};

// Pair rate per pump power at which the memory-free g2 at s.pump_power equals the
// target on the multi-pair (high-rate) branch.
Calibration calibrate_rate_per_power(const Scenario& s, double target_g2);

struct ScenarioReport {
  nlohmann::json summary;
  std::vector<std::pair<std::string, std::string>> csv;  // file name, contents
  std::optional<TagStream> tags;                          // first Monte Carlo run
  std::string tags_description;
};

ScenarioReport run_scenario(const Scenario& s, EvalMode mode = EvalMode::monte_carlo, bool keep_tags = false);

// True when every number in the document is finite.
bool all_finite(const nlohmann::json& j);

}  // namespace qmem
