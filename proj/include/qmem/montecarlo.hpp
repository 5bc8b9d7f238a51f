#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "qmem/afc.hpp"
#include "qmem/protocol.hpp"

namespace qmem {

class ProbabilityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct SourceConfig {
  double pair_rate = 0.0;        // pairs/s, continuous-wave pump
  double coherence_time = 5e-9;  // FWHM of the signal-idler emission-time difference
};

struct ChannelConfig {
  double transmission = 1.0;
  double delay = 0.0;
};

struct DetectorConfig {
  double efficiency = 1.0;
  double dark_rate = 0.0;
  double jitter_sigma = 0.0;
};

// One route through an analyzer: complex amplitude and added delay.
struct Path {
  std::complex<double> amplitude;
  double delay = 0.0;
};
using Analyzer = std::vector<Path>;

Analyzer direct_path();
// Unbalanced interferometer seen from one output port: (1/2 at 0, e^{i phase}/2 at imbalance).
Analyzer fiber_interferometer(double imbalance, double phase);
// Transmission plus every reported echo; amplitude sqrt(efficiency) e^{i phase}.
Analyzer memory_analyzer(const EchoReport& report);
// One conclusive sub-measurement of the hybrid-qubit analyzer with storage time tau.
// Outcome +1: transmit sqrt(eta_t), echo e^{i phi} sqrt(eta_e).
// Outcome -1: transmit -e^{i phi} sqrt(eta_e), echo sqrt(eta_t).
Analyzer hybrid_analyzer(const HybridBudget& b, double phi_s, int outcome, double tau);

struct PathEntry {
  std::complex<double> amplitude;
  double signal_time = 0.0;
  double idler_time = 0.0;
};

// Arrival-time/amplitude combinations of one pair. Channel transmission is folded
// into the amplitudes.
struct PathAmplitudeTable {
  std::vector<Path> signal;  // absolute arrival times in `delay`
  std::vector<Path> idler;
  std::vector<PathEntry> entries;

  double total_weight() const;
};

PathAmplitudeTable route_pair(double t_pair, const Analyzer& signal, const Analyzer& idler,
                              const ChannelConfig& signal_channel, const ChannelConfig& idler_channel,
                              double delay_tolerance = 0.1e-9);

// Exact per-pair outcome distribution. Combinations sharing a signal-idler delay
// are indistinguishable under a CW pump and add coherently with weight v_model;
// single-detection probabilities keep the per-side marginals exact.
struct Outcome {
  enum Kind : std::uint8_t { both, signal_only, idler_only };
  Kind kind = both;
  double probability = 0.0;
  double signal_delay = 0.0;
  double idler_delay = 0.0;
};

struct OutcomeModel {
  std::vector<Outcome> outcomes;
  double p_none = 1.0;
  double signal_marginal = 0.0;  // P(signal detected)
  double idler_marginal = 0.0;

  double p_detect_any() const { return 1.0 - p_none; }
  double p_both() const;
  // Coincidence probability of the class with relative delay `delay` (tolerance 1 ps).
  double p_both_at(double delay) const;
};

OutcomeModel build_outcomes(const PathAmplitudeTable& table, double eff_signal, double eff_idler,
                            double v_model = 1.0);

// Ordered timestamps per channel, in integer picoseconds.
struct TagStream {
  static constexpr int kSignal = 0;
  static constexpr int kIdler = 1;
  std::array<std::vector<std::int64_t>, 2> channels;
  std::int64_t duration_ps = 0;

  std::size_t size() const { return channels[0].size() + channels[1].size(); }
  bool is_sorted() const;
  bool operator==(const TagStream&) const = default;
};

std::int64_t to_ps(double seconds);
double from_ps(std::int64_t ps);

// splitmix64 of (seed, index): independent stream seeds per time slice.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Distribution transforms written out so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform();  // [0, 1)
  double exponential(double rate);
  double normal();

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::vector<double> generate_pairs(const SourceConfig& cfg, double duration, std::uint64_t seed);

// Samples one outcome per routed pair, applies detector efficiency and jitter,
// and adds Poisson dark counts on both channels.
TagStream detect(const std::vector<PathAmplitudeTable>& pairs, const DetectorConfig& signal_det,
                 const DetectorConfig& idler_det, double duration, std::uint64_t seed, double v_model = 1.0,
                 double coherence_time = 0.0);

struct McConfig {
  SourceConfig source;
  ChannelConfig signal_channel, idler_channel;
  DetectorConfig signal_detector, idler_detector;
  Analyzer signal_analyzer = direct_path();
  Analyzer idler_analyzer = direct_path();
  double v_model = 1.0;
  double duration = 0.0;
  std::uint64_t seed = 1;
  unsigned threads = 0;  // 0 = hardware concurrency
  double slice_duration = 1.0;
};

struct RunMetadata {
  double duration = 0.0;
  double pair_rate = 0.0;
  double detected_event_rate = 0.0;  // pair-derived, excluding dark counts
  double signal_singles_rate = 0.0;  // expected, including dark counts
  double idler_singles_rate = 0.0;
  double signal_marginal = 0.0;
  double idler_marginal = 0.0;
  double coincidence_probability = 0.0;  // per pair, all classes
  std::uint64_t seed = 0;
  std::size_t slices = 0;
  std::size_t signal_tags = 0;
  std::size_t idler_tags = 0;
};

struct RunResult {
  TagStream tags;
  RunMetadata meta;
};

// Event-level run. Detected pair events are drawn as a Poisson process of rate
// pair_rate * P(any detection) with categories from build_outcomes, which is
// equal in law to routing and detecting every pair. Time slices with derived
// seeds make the stream independent of the thread count.
RunResult run_experiment(const McConfig& cfg);

}  // namespace qmem
