#include "qmem/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>

#include "qmem/units.hpp"

namespace qmem {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ScenarioError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : obj.items())
    if (!ok.count(k)) throw ScenarioError(where + ": unknown key '" + k + "'");
}

double quantity(const json& obj, const std::string& key, Dimension d, const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_string())
    throw ScenarioError(where + "." + key + ": expected a quantity string with unit (e.g. \"25 ns\")");
  try {
    return parse_quantity(v.get<std::string>(), d);
  } catch (const UnitError& e) {
    throw ScenarioError(where + "." + key + ": " + e.what());
  }
}

double quantity_or(const json& obj, const std::string& key, Dimension d, const std::string& where, double dflt) {
  return obj.contains(key) ? quantity(obj, key, d, where) : dflt;
}

double number(const json& obj, const std::string& key, const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_number()) throw ScenarioError(where + "." + key + ": expected a dimensionless number");
  return v.get<double>();
}

double number_or(const json& obj, const std::string& key, const std::string& where, double dflt) {
  return obj.contains(key) ? number(obj, key, where) : dflt;
}

double unit_interval(const json& obj, const std::string& key, const std::string& where, double dflt) {
  const double x = number_or(obj, key, where, dflt);
  if (!(x >= 0.0 && x <= 1.0)) throw ScenarioError(where + "." + key + ": must lie in [0,1]");
  return x;
}

double phase_value(const json& v, const std::string& where) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    try {
      return parse_quantity(v.get<std::string>(), dim::dimensionless);
    } catch (const UnitError& e) {
      throw ScenarioError(where + ": " + e.what());
    }
  }
  throw ScenarioError(where + ": expected a phase (\"75 deg\", \"1.2 rad\" or a number in radians)");
}

std::vector<double> phase_list(const json& v, const std::string& where) {
  std::vector<double> out;
  if (v.is_array()) {
    for (const auto& x : v) out.push_back(phase_value(x, where));
    return out;
  }
  check_keys(v, where, {"start", "stop", "count"});
  const double a = phase_value(v.at("start"), where + ".start");
  const double b = phase_value(v.at("stop"), where + ".stop");
  const int n = v.at("count").get<int>();
  if (n < 1) throw ScenarioError(where + ".count must be >= 1");
  for (int i = 0; i < n; ++i) out.push_back(a + (b - a) * i / n);  // stop excluded
  return out;
}

std::vector<double> quantity_list(const json& v, Dimension d, const std::string& where) {
  if (!v.is_array()) throw ScenarioError(where + ": expected a list of quantities");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_string()) throw ScenarioError(where + ": expected quantity strings with units");
    try {
      out.push_back(parse_quantity(x.get<std::string>(), d));
    } catch (const UnitError& e) {
      throw ScenarioError(where + ": " + e.what());
    }
  }
  return out;
}

void parse_arm(const json& j, const std::string& where, ChannelConfig& ch, DetectorConfig& det) {
  check_keys(j, where, {"transmission", "delay", "detector"});
  ch.transmission = unit_interval(j, "transmission", where, 1.0);
  ch.delay = quantity_or(j, "delay", dim::time, where, 0.0);
  if (j.contains("detector")) {
    const json& d = j.at("detector");
    const std::string w = where + ".detector";
    check_keys(d, w, {"efficiency", "dark_rate", "jitter"});
    det.efficiency = unit_interval(d, "efficiency", w, 1.0);
    det.dark_rate = quantity_or(d, "dark_rate", dim::frequency, w, 0.0);
    det.jitter_sigma = quantity_or(d, "jitter", dim::time, w, 0.0);
    if (det.dark_rate < 0.0 || det.jitter_sigma < 0.0) throw ScenarioError(w + ": negative rate or jitter");
  }
}

PeakShape parse_shape(const std::string& s) {
  if (s == "square") return PeakShape::square;
  if (s == "gaussian") return PeakShape::gaussian;
  throw ScenarioError("memory.shape: expected 'square' or 'gaussian'");
}

void parse_memory(const json& j, Scenario& s) {
  const std::string w = "memory";
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "none") {
    check_keys(j, w, {"mode"});
    s.memory = MemoryMode::none;
  } else if (mode == "afc") {
    check_keys(j, w, {"mode", "storage_time", "efficiency", "transmission", "second_echo_ratio"});
    s.memory = MemoryMode::afc;
    s.afc.storage_time = quantity_or(j, "storage_time", dim::time, w, s.afc.storage_time);
    s.afc.efficiency = j.contains("efficiency") ? unit_interval(j, "efficiency", w, 0.0) : -1.0;
    s.afc.transmission = unit_interval(j, "transmission", w, s.afc.transmission);
    s.afc.second_echo_ratio = number_or(j, "second_echo_ratio", w, s.afc.second_echo_ratio);
  } else if (mode == "double_readout") {
    check_keys(j, w,
               {"mode", "t_short", "t_long", "weight", "balance", "peak_depth", "finesse", "background_depth",
                "bandwidth", "shape", "max_depth", "grid_points", "grid_span", "pulse_fwhm", "report_window"});
    s.memory = MemoryMode::double_readout;
    auto& d = s.double_readout;
    d.comb.t_short = quantity_or(j, "t_short", dim::time, w, d.comb.t_short);
    d.comb.t_long = quantity_or(j, "t_long", dim::time, w, d.comb.t_long);
    d.comb.weight = number_or(j, "weight", w, d.comb.weight);
    d.balance = j.value("balance", d.balance);
    d.comb.peak_depth = number_or(j, "peak_depth", w, d.comb.peak_depth);
    d.comb.finesse = number_or(j, "finesse", w, d.comb.finesse);
    d.comb.background_depth = number_or(j, "background_depth", w, d.comb.background_depth);
    d.comb.bandwidth = quantity_or(j, "bandwidth", dim::frequency, w, d.comb.bandwidth);
    if (j.contains("shape")) d.comb.shape = parse_shape(j.at("shape").get<std::string>());
    if (j.contains("max_depth")) d.comb.max_depth = number(j, "max_depth", w);
    d.grid_points = j.value("grid_points", d.grid_points);
    d.grid_span = quantity_or(j, "grid_span", dim::frequency, w, d.grid_span);
    d.pulse_fwhm = quantity_or(j, "pulse_fwhm", dim::time, w, d.pulse_fwhm);
    d.report_window = quantity_or(j, "report_window", dim::time, w, d.report_window);
  } else if (mode == "hybrid") {
    check_keys(j, w, {"mode", "eta_trans", "eta_echo", "eta_abs", "storage_time"});
    s.memory = MemoryMode::hybrid;
    s.hybrid.eta_trans = unit_interval(j, "eta_trans", w, s.hybrid.eta_trans);
    s.hybrid.eta_echo = unit_interval(j, "eta_echo", w, s.hybrid.eta_echo);
    s.hybrid.eta_abs = unit_interval(j, "eta_abs", w, s.hybrid.eta_abs);
    s.hybrid.storage_time = quantity_or(j, "storage_time", dim::time, w, s.hybrid.storage_time);
  } else {
    throw ScenarioError("memory.mode: unknown mode '" + mode + "'");
  }
}

ExperimentKind parse_kind(const std::string& k) {
  if (k == "g2") return ExperimentKind::g2;
  if (k == "pump_scan") return ExperimentKind::pump_scan;
  if (k == "storage_scan") return ExperimentKind::storage_scan;
  if (k == "fringe_scan") return ExperimentKind::fringe_scan;
  if (k == "bell") return ExperimentKind::bell;
  throw ScenarioError("experiment: unknown kind '" + k + "'");
}

}  // namespace

EfficiencyTable::EfficiencyTable(std::vector<EfficiencyEntry> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const auto& a, const auto& b) { return a.storage_time < b.storage_time; });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!(entries_[i].efficiency > 0.0 && entries_[i].efficiency <= 1.0))
      throw ScenarioError("efficiency table: efficiencies must lie in (0,1]");
    if (i > 0 && entries_[i].efficiency > entries_[i - 1].efficiency)
      throw ScenarioError("efficiency table must be non-increasing in storage time");
    if (i > 0 && entries_[i].storage_time == entries_[i - 1].storage_time)
      throw ScenarioError("efficiency table: duplicate storage time");
  }
}

EfficiencyTable EfficiencyTable::paper_default(const std::vector<double>& storage_times) {
  constexpr double t1 = 25e-9, e1 = 0.21, t2 = 100e-9, e2 = 0.12;
  const double decay = std::log(e1 / e2) / (t2 - t1);
  std::vector<EfficiencyEntry> v{{t1, e1, EfficiencyEntry::Provenance::paper},
                                 {t2, e2, EfficiencyEntry::Provenance::paper}};
  for (double t : storage_times) {
    if (std::abs(t - t1) < 1e-12 || std::abs(t - t2) < 1e-12) continue;
    v.push_back({t, e1 * std::exp(-decay * (t - t1)), EfficiencyEntry::Provenance::interpolated});
  }
  return EfficiencyTable(std::move(v));
}

double EfficiencyTable::at(double t) const {
  if (entries_.empty()) throw ScenarioError("efficiency table is empty");
  for (const auto& e : entries_)
    if (std::abs(e.storage_time - t) <= 1e-12) return e.efficiency;
  if (t <= entries_.front().storage_time) return entries_.front().efficiency;
  if (t >= entries_.back().storage_time) return entries_.back().efficiency;
  std::size_t i = 1;
  while (entries_[i].storage_time < t) ++i;
  const auto& a = entries_[i - 1];
  const auto& b = entries_[i];
  const double x = (t - a.storage_time) / (b.storage_time - a.storage_time);
  return a.efficiency * std::pow(b.efficiency / a.efficiency, x);
}

std::vector<double> AnalysisConfig::accidental_offsets() const {
  std::vector<double> v;
  for (int k = 0; k < accidental_windows; ++k) v.push_back(accidental_first_offset - k * accidental_spacing);
  return v;
}

Scenario parse_scenario(const json& j) {
  check_keys(j, "scenario",
             {"name", "experiment", "seed", "threads", "source", "signal", "idler", "v_model", "memory",
              "efficiency_table", "interferometer_imbalance", "analysis", "integration", "pump_powers",
              "storage_times", "signal_phases", "idler_phases", "bell", "comment"});
  Scenario s;
  try {
    s.name = j.at("name").get<std::string>();
    s.experiment = parse_kind(j.at("experiment").get<std::string>());
    s.seed = j.value("seed", std::uint64_t{1});
    s.threads = j.value("threads", 0u);

    const json& src = j.at("source");
    check_keys(src, "source", {"rate_per_power", "pump_power", "coherence_time"});
    s.rate_per_power = quantity(src, "rate_per_power", dim::rate_per_power, "source");
    s.pump_power = quantity_or(src, "pump_power", dim::power, "source", 0.0);
    s.coherence_time = quantity_or(src, "coherence_time", dim::time, "source", s.coherence_time);

    if (j.contains("signal")) parse_arm(j.at("signal"), "signal", s.signal_channel, s.signal_detector);
    if (j.contains("idler")) parse_arm(j.at("idler"), "idler", s.idler_channel, s.idler_detector);
    s.v_model = unit_interval(j, "v_model", "scenario", 1.0);
    if (j.contains("memory")) parse_memory(j.at("memory"), s);
    s.interferometer_imbalance =
        quantity_or(j, "interferometer_imbalance", dim::time, "scenario", s.interferometer_imbalance);

    if (j.contains("storage_times")) s.storage_times = quantity_list(j.at("storage_times"), dim::time, "storage_times");
    if (j.contains("efficiency_table")) {
      const json& t = j.at("efficiency_table");
      if (t.is_string()) {
        if (t.get<std::string>() != "paper_default")
          throw ScenarioError("efficiency_table: expected a list or \"paper_default\"");
        s.efficiency_table = EfficiencyTable::paper_default(s.storage_times);
      } else {
        std::vector<EfficiencyEntry> v;
        for (const auto& e : t) {
          check_keys(e, "efficiency_table[]", {"storage_time", "efficiency", "provenance"});
          EfficiencyEntry x;
          x.storage_time = quantity(e, "storage_time", dim::time, "efficiency_table[]");
          x.efficiency = number(e, "efficiency", "efficiency_table[]");
          const std::string p = e.value("provenance", std::string("interpolated"));
          if (p != "paper" && p != "interpolated") throw ScenarioError("efficiency_table[].provenance: paper|interpolated");
          x.provenance = p == "paper" ? EfficiencyEntry::Provenance::paper : EfficiencyEntry::Provenance::interpolated;
          v.push_back(x);
        }
        s.efficiency_table = EfficiencyTable(std::move(v));
      }
    } else {
      s.efficiency_table = EfficiencyTable::paper_default(s.storage_times);
    }

    if (j.contains("analysis")) {
      const json& a = j.at("analysis");
      check_keys(a, "analysis", {"window", "bin_width", "accidental_windows", "accidental_first_offset",
                                 "accidental_spacing"});
      s.analysis.window = quantity_or(a, "window", dim::time, "analysis", s.analysis.window);
      s.analysis.bin_width = quantity_or(a, "bin_width", dim::time, "analysis", s.analysis.bin_width);
      s.analysis.accidental_windows = a.value("accidental_windows", s.analysis.accidental_windows);
      s.analysis.accidental_first_offset =
          quantity_or(a, "accidental_first_offset", dim::time, "analysis", s.analysis.accidental_first_offset);
      s.analysis.accidental_spacing =
          quantity_or(a, "accidental_spacing", dim::time, "analysis", s.analysis.accidental_spacing);
    }

    const json& in = j.at("integration");
    check_keys(in, "integration", {"time", "target_coincidences", "paper_time", "paper_coincidence_rate"});
    if (in.contains("time")) {
      s.integration.mode = IntegrationConfig::Mode::time;
      s.integration.time = quantity(in, "time", dim::time, "integration");
    } else if (in.contains("target_coincidences")) {
      s.integration.mode = IntegrationConfig::Mode::target_coincidences;
      s.integration.target_coincidences = number(in, "target_coincidences", "integration");
    } else {
      s.integration.mode = IntegrationConfig::Mode::paper_equivalent;
      s.integration.paper_time = quantity(in, "paper_time", dim::time, "integration");
      s.integration.paper_coincidence_rate = quantity(in, "paper_coincidence_rate", dim::frequency, "integration");
    }

    if (j.contains("pump_powers")) s.pump_powers = quantity_list(j.at("pump_powers"), dim::power, "pump_powers");
    if (j.contains("signal_phases")) s.signal_phases = phase_list(j.at("signal_phases"), "signal_phases");
    if (j.contains("idler_phases")) s.idler_phases = phase_list(j.at("idler_phases"), "idler_phases");
    if (j.contains("bell")) {
      const json& b = j.at("bell");
      check_keys(b, "bell", {"variant", "repetitions"});
      const std::string v = b.value("variant", std::string("partial_readout"));
      if (v == "partial_readout")
        s.bell_variant = BellVariant::partial_readout;
      else if (v == "hybrid")
        s.bell_variant = BellVariant::hybrid;
      else
        throw ScenarioError("bell.variant: expected partial_readout or hybrid");
      s.repetitions = b.value("repetitions", 1);
    }
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("scenario: ") + e.what());
  }

  if (!(s.rate_per_power >= 0.0)) throw ScenarioError("source.rate_per_power must be >= 0");
  if (s.integration.mode == IntegrationConfig::Mode::time && !(s.integration.time > 0.0))
    throw ScenarioError("integration.time must be positive");
  if (s.integration.mode == IntegrationConfig::Mode::target_coincidences && !(s.integration.target_coincidences > 0.0))
    throw ScenarioError("integration.target_coincidences must be positive");
  if (s.integration.mode == IntegrationConfig::Mode::paper_equivalent &&
      !(s.integration.paper_time > 0.0 && s.integration.paper_coincidence_rate > 0.0))
    throw ScenarioError("integration: paper_time and paper_coincidence_rate must be positive");
  if (!(s.analysis.window > 0.0 && s.analysis.bin_width > 0.0)) throw ScenarioError("analysis: window and bin_width must be positive");
  if (s.repetitions < 1) throw ScenarioError("bell.repetitions must be >= 1");
  switch (s.experiment) {
    case ExperimentKind::pump_scan:
      if (s.pump_powers.empty()) throw ScenarioError("pump_scan needs pump_powers");
      break;
    case ExperimentKind::storage_scan:
      if (s.storage_times.empty()) throw ScenarioError("storage_scan needs storage_times");
      break;
    case ExperimentKind::fringe_scan:
      if (s.memory != MemoryMode::double_readout) throw ScenarioError("fringe_scan needs a double_readout memory");
      if (s.idler_phases.size() != 2) throw ScenarioError("fringe_scan needs exactly two idler_phases");
      if (s.signal_phases.size() < 4) throw ScenarioError("fringe_scan needs at least four signal_phases");
      break;
    case ExperimentKind::bell:
      if (s.bell_variant == BellVariant::partial_readout && s.memory != MemoryMode::double_readout)
        throw ScenarioError("partial-readout Bell test needs a double_readout memory");
      if (s.bell_variant == BellVariant::hybrid && s.memory != MemoryMode::hybrid)
        throw ScenarioError("hybrid Bell test needs a hybrid memory");
      break;
    default:
      break;
  }
  if (s.experiment != ExperimentKind::pump_scan && !(s.pump_power > 0.0))
    throw ScenarioError("source.pump_power must be positive");
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ScenarioError("cannot read scenario file " + path);
  json j;
  try {
    j = json::parse(is, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ScenarioError(path + ": " + e.what());
  }
  return parse_scenario(j);
}

nlohmann::json canonical_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["experiment"] = to_string(s.experiment);
  j["seed"] = s.seed;
  j["rate_per_power_Hz_per_W"] = s.rate_per_power;
  j["pump_power_W"] = s.pump_power;
  j["coherence_time_s"] = s.coherence_time;
  auto arm = [](const ChannelConfig& c, const DetectorConfig& d) {
    return json{{"transmission", c.transmission}, {"delay_s", c.delay}, {"efficiency", d.efficiency},
                {"dark_rate_Hz", d.dark_rate}, {"jitter_s", d.jitter_sigma}};
  };
  j["signal"] = arm(s.signal_channel, s.signal_detector);
  j["idler"] = arm(s.idler_channel, s.idler_detector);
  j["v_model"] = s.v_model;
  json m{{"mode", to_string(s.memory)}};
  if (s.memory == MemoryMode::afc)
    m.update({{"storage_time_s", s.afc.storage_time}, {"efficiency", s.afc.efficiency},
              {"transmission", s.afc.transmission}, {"second_echo_ratio", s.afc.second_echo_ratio}});
  if (s.memory == MemoryMode::double_readout) {
    const auto& d = s.double_readout;
    m.update({{"t_short_s", d.comb.t_short}, {"t_long_s", d.comb.t_long}, {"weight", d.comb.weight},
              {"balance", d.balance}, {"peak_depth", d.comb.peak_depth}, {"finesse", d.comb.finesse},
              {"background_depth", d.comb.background_depth}, {"bandwidth_Hz", d.comb.bandwidth},
              {"shape", d.comb.shape == PeakShape::square ? "square" : "gaussian"},
              {"max_depth", std::isfinite(d.comb.max_depth) ? json(d.comb.max_depth) : json("inf")},
              {"grid_points", d.grid_points}, {"grid_span_Hz", d.grid_span}, {"pulse_fwhm_s", d.pulse_fwhm},
              {"report_window_s", d.report_window}});
  }
  if (s.memory == MemoryMode::hybrid)
    m.update({{"eta_trans", s.hybrid.eta_trans}, {"eta_echo", s.hybrid.eta_echo}, {"eta_abs", s.hybrid.eta_abs},
              {"storage_time_s", s.hybrid.storage_time}});
  j["memory"] = m;
  json table = json::array();
  for (const auto& e : s.efficiency_table.entries())
    table.push_back({{"storage_time_s", e.storage_time}, {"efficiency", e.efficiency},
                     {"provenance", e.provenance == EfficiencyEntry::Provenance::paper ? "paper" : "interpolated"}});
  j["efficiency_table"] = table;
  j["interferometer_imbalance_s"] = s.interferometer_imbalance;
  j["analysis"] = {{"window_s", s.analysis.window},
                   {"bin_width_s", s.analysis.bin_width},
                   {"accidental_windows", s.analysis.accidental_windows},
                   {"accidental_first_offset_s", s.analysis.accidental_first_offset},
                   {"accidental_spacing_s", s.analysis.accidental_spacing}};
  j["integration"] = {{"mode", static_cast<int>(s.integration.mode)},
                      {"time_s", s.integration.time},
                      {"target_coincidences", s.integration.target_coincidences},
                      {"paper_time_s", s.integration.paper_time},
                      {"paper_coincidence_rate_Hz", s.integration.paper_coincidence_rate}};
  j["pump_powers_W"] = s.pump_powers;
  j["storage_times_s"] = s.storage_times;
  j["signal_phases_rad"] = s.signal_phases;
  j["idler_phases_rad"] = s.idler_phases;
  j["bell"] = {{"variant", to_string(s.bell_variant)}, {"repetitions", s.repetitions}};
  return j;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::g2: return "g2";
    case ExperimentKind::pump_scan: return "pump_scan";
    case ExperimentKind::storage_scan: return "storage_scan";
    case ExperimentKind::fringe_scan: return "fringe_scan";
    case ExperimentKind::bell: return "bell";
  }
  return "?";
}

std::string to_string(MemoryMode m) {
  switch (m) {
    case MemoryMode::none: return "none";
    case MemoryMode::afc: return "afc";
    case MemoryMode::double_readout: return "double_readout";
    case MemoryMode::hybrid: return "hybrid";
  }
  return "?";
}

std::string to_string(BellVariant v) { return v == BellVariant::hybrid ? "hybrid" : "partial_readout"; }

}  // namespace qmem
