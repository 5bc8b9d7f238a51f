#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qmem/afc.hpp"
#include "qmem/montecarlo.hpp"
#include "qmem/protocol.hpp"

namespace qmem {

class ScenarioError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Storage time -> first-echo efficiency. Entries not measured directly are
// tagged `interpolated` and are never overwritten by calibration.
struct EfficiencyEntry {
  enum class Provenance { paper, interpolated };
  double storage_time = 0.0;
  double efficiency = 0.0;
  Provenance provenance = Provenance::interpolated;
};

class EfficiencyTable {
 public:
  EfficiencyTable() = default;
  explicit EfficiencyTable(std::vector<EfficiencyEntry> entries);

  // 21% at 25 ns and 12% at 100 ns; other entries on the exponential through them.
  static EfficiencyTable paper_default(const std::vector<double>& storage_times);

  // Exact entry, else exponential interpolation between neighbours (clamped at the ends).
  double at(double storage_time) const;
  const std::vector<EfficiencyEntry>& entries() const { return entries_; }

 private:
  std::vector<EfficiencyEntry> entries_;
};

enum class MemoryMode { none, afc, double_readout, hybrid };
enum class ExperimentKind { g2, pump_scan, storage_scan, fringe_scan, bell };
enum class BellVariant { partial_readout, hybrid };

struct AfcMemoryConfig {
  double storage_time = 25e-9;
  double efficiency = -1.0;          // < 0: take from the efficiency table
  double transmission = 0.505;       // held fixed across storage times
  double second_echo_ratio = 0.21;   // second echo / first echo
};

struct DoubleReadoutConfig {
  DoubleReadoutParams comb;
  bool balance = true;  // choose the weight that equalizes the two echoes
  std::size_t grid_points = std::size_t{1} << 16;
  double grid_span = 2e9;
  double pulse_fwhm = 5e-9;
  double report_window = 15e-9;
};

struct HybridConfig {
  double eta_trans = 0.36;
  double eta_echo = 0.05;
  double eta_abs = 0.5;
  double storage_time = 25e-9;
};

// Integration per run: explicit time, enough time for a target number of true
// coincidences, or the time that reproduces an experimental count budget
// (paper_time * paper_coincidence_rate true central coincidences on average).
struct IntegrationConfig {
  enum class Mode { time, target_coincidences, paper_equivalent };
  Mode mode = Mode::time;
  double time = 0.0;
  double target_coincidences = 0.0;
  double paper_time = 0.0;
  double paper_coincidence_rate = 0.0;
};

struct AnalysisConfig {
  double window = 10e-9;
  double bin_width = 1e-9;
  int accidental_windows = 20;
  double accidental_first_offset = -500e-9;
  double accidental_spacing = 50e-9;

  std::vector<double> accidental_offsets() const;
};

struct Scenario {
  std::string name;
  ExperimentKind experiment = ExperimentKind::g2;
  std::uint64_t seed = 1;
  unsigned threads = 0;

  double rate_per_power = 0.0;  // pairs/s per W
  double pump_power = 0.0;      // W
  double coherence_time = 5e-9;

  ChannelConfig signal_channel, idler_channel;
  DetectorConfig signal_detector, idler_detector;
  double v_model = 1.0;

  MemoryMode memory = MemoryMode::none;
  AfcMemoryConfig afc;
  DoubleReadoutConfig double_readout;
  HybridConfig hybrid;
  EfficiencyTable efficiency_table;

  double interferometer_imbalance = 25e-9;
  AnalysisConfig analysis;
  IntegrationConfig integration;

  std::vector<double> pump_powers;    // pump_scan
  std::vector<double> storage_times;  // storage_scan
  std::vector<double> signal_phases;  // fringe_scan
  std::vector<double> idler_phases;   // fringe_scan, two values
  BellVariant bell_variant = BellVariant::partial_readout;
  int repetitions = 1;

  double pair_rate(double power) const { return rate_per_power * power; }
};

Scenario parse_scenario(const nlohmann::json& j);
Scenario load_scenario(const std::string& path);

// Canonical form (SI numbers) used for the manifest hash.
nlohmann::json canonical_json(const Scenario& s);
std::uint64_t fnv1a64(const std::string& bytes);

std::string to_string(ExperimentKind k);
std::string to_string(MemoryMode m);
std::string to_string(BellVariant v);

}  // namespace qmem
