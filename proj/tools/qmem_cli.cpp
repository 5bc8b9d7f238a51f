// qmem: run scenarios, inspect AFC combs, run Bell tests, re-analyse tag files.
//
// Exit codes: 0 success, 2 invalid input (scenario, units, flags, tag file),
// 3 runtime failure or a non-finite number in a report.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "qmem/afc.hpp"
#include "qmem/coincidence.hpp"
#include "qmem/experiments.hpp"
#include "qmem/scenario.hpp"
#include "qmem/tagio.hpp"
#include "qmem/units.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qmem;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitRuntime = 3;

struct NonFinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t x) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << x;
  return os.str();
}

fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::invalid_argument("cannot create output directory " + dir);
  const fs::path probe = fs::path(dir) / ".qmem_write_probe";
  {
    std::ofstream os(probe);
    if (!os) throw std::invalid_argument("output directory not writable: " + dir);
  }
  fs::remove(probe, ec);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("failed writing " + p.string());
}

void write_json(const fs::path& p, const json& j) {
  if (!all_finite(j)) throw NonFinite("non-finite value in " + p.filename().string());
  write_text(p, j.dump(2) + "\n");
}

double quantity_flag(const std::string& text, Dimension d, const std::string& flag) {
  try {
    return parse_quantity(text, d);
  } catch (const UnitError& e) {
    throw std::invalid_argument(flag + ": " + e.what());
  }
}

// A scenario file, or a manifest written by `run` (which embeds its scenario).
json load_scenario_source(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ScenarioError("cannot read scenario file " + path);
  json j;
  try {
    j = json::parse(is, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ScenarioError(path + ": " + e.what());
  }
  if (j.is_object() && j.contains("scenario_source")) return j.at("scenario_source");
  return j;
}

struct Common {
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  std::string mode = "monte_carlo";
  bool save_tags = false;
};

EvalMode parse_mode(const std::string& m) {
  if (m == "monte_carlo" || m == "mc") return EvalMode::monte_carlo;
  if (m == "analytic") return EvalMode::analytic_noisy;
  if (m == "noiseless") return EvalMode::analytic_noiseless;
  throw std::invalid_argument("--mode: expected monte_carlo, analytic or noiseless");
}

void write_report(const fs::path& dir, const std::string& command, json source, const Scenario& s, EvalMode mode,
                  const ScenarioReport& rep) {
  json outputs = json::array({"summary.json"});
  for (const auto& [name, text] : rep.csv) {
    write_text(dir / name, text);
    outputs.push_back(name);
  }
  write_json(dir / "summary.json", rep.summary);
  if (rep.tags) {
    write_tags((dir / "tags.bin").string(), *rep.tags);
    json side = {{"format", "qmem.tags/1"},
                 {"record_bytes", kTagRecordBytes},
                 {"byte_order", "little-endian"},
                 {"record", "uint8 channel, uint64 timestamp_ps"},
                 {"channels", {{"0", "signal"}, {"1", "idler"}}},
                 {"duration_ps", rep.tags->duration_ps},
                 {"signal_tags", rep.tags->channels[0].size()},
                 {"idler_tags", rep.tags->channels[1].size()},
                 {"seed", s.seed},
                 {"content", rep.tags_description}};
    write_json(dir / "tags.json", side);
    outputs.push_back("tags.bin");
    outputs.push_back("tags.json");
  }
  source["seed"] = s.seed;
  const std::string canonical = canonical_json(s).dump();
  json manifest = {{"manifest", "qmem.manifest/1"},
                   {"version", kVersion},
                   {"command", command},
                   {"mode", mode == EvalMode::monte_carlo     ? "monte_carlo"
                            : mode == EvalMode::analytic_noisy ? "analytic"
                                                               : "noiseless"},
                   {"seed", s.seed},
                   {"scenario_hash", hex64(fnv1a64(canonical))},
                   {"scenario", canonical_json(s)},
                   {"scenario_source", source},
                   {"outputs", outputs}};
  write_json(dir / "manifest.json", manifest);
}

int cmd_run(const std::string& command, const std::string& path, const Common& c,
            const std::optional<std::string>& variant) {
  json source = load_scenario_source(path);
  if (c.seed) source["seed"] = *c.seed;
  if (variant) {
    source["experiment"] = "bell";
    json bell = source.value("bell", json::object());
    bell["variant"] = *variant;
    source["bell"] = bell;
  } else if (command == "bell") {
    source["experiment"] = "bell";
  }
  Scenario s = parse_scenario(source);
  if (c.threads) s.threads = c.threads;
  const EvalMode mode = parse_mode(c.mode);
  const fs::path dir = prepare_dir(c.out);
  const ScenarioReport rep = run_scenario(s, mode, c.save_tags);
  write_report(dir, command, source, s, mode, rep);
  const json& j = rep.summary;
  std::cout << s.name << " (" << to_string(s.experiment) << ", seed " << s.seed << ")\n";
  for (const char* k : {"g2", "V", "S"})
    if (!j.at(k).is_null())
      std::cout << "  " << k << " = " << j.at(k).get<double>() << " +- " << j.at(std::string(k) + "_sigma").get<double>()
                << '\n';
  std::cout << "  wrote " << dir.string() << '\n';
  return 0;
}

struct CombOptions {
  std::string period = "40 MHz";
  double finesse = 3.0;
  double depth = 4.0;
  double background = 0.0;
  std::string shape = "square";
  std::string bandwidth = "120 MHz";
  std::string shift = "0 Hz";
  std::size_t grid_points = std::size_t{1} << 20;
  std::string span = "2 GHz";
  std::string fwhm = "5 ns";
  std::string window = "15 ns";
  int echoes = 2;
};

int cmd_comb(const CombOptions& o, const Common& c) {
  CombParams p;
  p.period = quantity_flag(o.period, dim::frequency, "--period");
  p.finesse = o.finesse;
  p.peak_depth = o.depth;
  p.background_depth = o.background;
  if (o.shape == "square")
    p.shape = PeakShape::square;
  else if (o.shape == "gaussian")
    p.shape = PeakShape::gaussian;
  else
    throw std::invalid_argument("--shape: expected square or gaussian");
  p.bandwidth = quantity_flag(o.bandwidth, dim::frequency, "--bandwidth");
  p.comb_shift = quantity_flag(o.shift, dim::frequency, "--shift");
  const FrequencyGrid grid{o.grid_points, quantity_flag(o.span, dim::frequency, "--span"), 0.0};
  const double fwhm = quantity_flag(o.fwhm, dim::time, "--pulse-fwhm");
  const double window = quantity_flag(o.window, dim::time, "--window");
  if (o.echoes < 1) throw std::invalid_argument("--echoes must be >= 1");

  const fs::path dir = prepare_dir(c.out);
  const CombSpectrum comb = build_comb(p, grid);
  const TimeEnvelope in = gaussian_pulse(grid, fwhm);
  const TimeEnvelope out = propagate(in, comb);
  std::vector<double> delays;
  for (int k = 1; k <= o.echoes; ++k) delays.push_back(k * comb.storage_time());
  const EchoReport rep = echo_report(in, out, delays, window);

  {
    std::ofstream os(dir / "comb.csv");
    write_comb_csv(os, comb, 0.5 * p.bandwidth + 2 * p.period);
  }
  {
    std::ofstream os(dir / "envelope.csv");
    write_envelope_csv(os, out, -3 * fwhm, delays.back() + 3 * fwhm);
  }
  json echoes = json::array();
  for (const auto& e : rep.echoes)
    echoes.push_back(
        {{"delay_s", e.delay}, {"efficiency", e.efficiency}, {"phase_rad", e.phase}, {"centroid_s", e.centroid}});
  json summary = {{"schema", "qmem.echo_report/1"},
                  {"period_Hz", p.period},
                  {"storage_time_s", comb.storage_time()},
                  {"finesse", p.finesse},
                  {"peak_depth", p.peak_depth},
                  {"clipped", comb.clipped},
                  {"eta_trans", rep.eta_trans},
                  {"trans_phase_rad", rep.trans_phase},
                  {"absorption_efficiency", absorption_efficiency(in, comb)},
                  {"echoes", echoes}};
  write_json(dir / "echo_report.json", summary);
  std::cout << "storage time " << comb.storage_time() * 1e9 << " ns\n";
  for (const auto& e : rep.echoes)
    std::cout << "  echo at " << e.delay * 1e9 << " ns: efficiency " << e.efficiency << ", centroid "
              << e.centroid * 1e9 << " ns, phase " << e.phase << " rad\n";
  std::cout << "  transmission " << rep.eta_trans << '\n';
  return 0;
}

struct AnalyzeOptions {
  std::string tags;
  std::string window = "10 ns";
  std::string center = "0 ns";
  std::string bin = "1 ns";
  int accidentals = 20;
  std::string first_offset = "-500 ns";
  std::string spacing = "50 ns";
};

int cmd_analyze(const AnalyzeOptions& o, const Common& c) {
  const double w = quantity_flag(o.window, dim::time, "--window");
  const double center = quantity_flag(o.center, dim::time, "--center");
  const double bin = quantity_flag(o.bin, dim::time, "--bin");
  AnalysisConfig a;
  a.window = w;
  a.bin_width = bin;
  a.accidental_windows = o.accidentals;
  a.accidental_first_offset = quantity_flag(o.first_offset, dim::time, "--first-offset");
  a.accidental_spacing = quantity_flag(o.spacing, dim::time, "--spacing");
  const TagStream t = read_tags(o.tags);
  const fs::path dir = prepare_dir(c.out);

  const auto offsets = a.accidental_offsets();
  double lo = 0.0, hi = 0.0;
  for (double off : offsets) {
    lo = std::min(lo, off);
    hi = std::max(hi, off);
  }
  const DelayHistogram h = histogram(t.channels[TagStream::kSignal], t.channels[TagStream::kIdler], bin,
                                     center + lo - w, center + std::max(hi + w, 0.5e-6));
  const G2Estimate g = g2si(h, {center, w}, offsets);
  {
    std::ofstream os(dir / "histogram.csv");
    write_histogram_csv(os, h);
  }
  json summary = {{"schema", kSummarySchema},
                  {"source", fs::path(o.tags).filename().string()},
                  {"signal_tags", t.channels[0].size()},
                  {"idler_tags", t.channels[1].size()},
                  {"window_s", w},
                  {"center_s", center},
                  {"g2", g.g2},
                  {"g2_sigma", g.sigma},
                  {"g2_lower_bound", g.lower_bound},
                  {"peak_count", g.peak_count},
                  {"accidental_mean", g.accidental_mean},
                  {"V", nullptr},
                  {"V_sigma", nullptr},
                  {"S", nullptr},
                  {"S_sigma", nullptr},
                  {"correlators", json::array()}};
  write_json(dir / "summary.json", summary);
  std::cout << "g2 = " << g.g2 << " +- " << g.sigma << (g.lower_bound ? " (lower bound)" : "") << " from "
            << g.peak_count << " peak counts\n";
  return 0;
}

int cmd_calibrate(const std::string& path, double target, const Common& c) {
  json source = load_scenario_source(path);
  if (c.seed) source["seed"] = *c.seed;
  const Scenario s = parse_scenario(source);
  const Calibration cal = calibrate_rate_per_power(s, target);
  const fs::path dir = prepare_dir(c.out);
  json j = {{"schema", "qmem.calibration/1"},
            {"scenario", s.name},
            {"pump_power_W", s.pump_power},
            {"target_g2", target},
            {"rate_per_power_Hz_per_W", cal.rate_per_power},
            {"rate_per_power", std::to_string(cal.rate_per_power * 1e-6) + " kHz/mW"},
            {"pair_rate_Hz", cal.rate_per_power * s.pump_power},
            {"predicted_g2_no_memory", cal.predicted_g2_no_memory},
            {"predicted_g2_memory", cal.predicted_g2_memory},
            {"memory_storage_time_s", s.afc.storage_time},
            {"signal_singles_rate_Hz", cal.signal_singles_rate},
            {"idler_singles_rate_Hz", cal.idler_singles_rate}};
  write_json(dir / "calibration.json", j);
  std::cout << "rate_per_power = " << cal.rate_per_power * 1e-6 << " kHz/mW (g2 " << cal.predicted_g2_no_memory
            << " without memory, " << cal.predicted_g2_memory << " after " << s.afc.storage_time * 1e9
            << " ns storage)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum storage of photonic entanglement: simulation and analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Common common;
  auto add_common = [&](CLI::App* sub, bool randomness) {
    sub->add_option("-o,--output", common.out, "Output directory")->capture_default_str();
    if (randomness) {
      sub->add_option("--seed", common.seed, "Override the scenario seed (64-bit)");
      sub->add_option("--threads", common.threads, "Worker threads; 0 = available cores. Results do not depend on it");
      sub->add_option("--mode", common.mode, "monte_carlo | analytic | noiseless")->capture_default_str();
    }
  };

  std::string scenario_path;
  auto* run = app.add_subcommand("run", "Run a scenario file (or re-run a manifest.json)");
  run->footer(
      "Outputs: summary.json (schema qmem.summary/1), manifest.json, and per experiment\n"
      "  g2: histogram.csv (delay_s,counts)\n"
      "  pump_scan: g2_vs_power.csv (pump_power_W,storage_time_s,efficiency,integration_time_s,g2,g2_sigma,\n"
      "             predicted_g2,peak_count,accidental_mean,peak_position_s)\n"
      "  storage_scan: g2_vs_storage.csv (same columns), histogram_<t>ns.csv\n"
      "  fringe_scan: fringes.csv (idler_phase_rad,signal_phase_rad,counts,expected_true,expected_accidentals,\n"
      "               accidental_mean)\n"
      "  bell: bell_runs.csv (correlator,signal_outcome,idler_outcome,signal_setting_rad,idler_setting_rad,\n"
      "        window_center_s,integration_time_s,seed,count,expected_true,expected_accidentals)\n"
      "  --save-tags: tags.bin (9-byte records: uint8 channel, uint64 LE picoseconds) + tags.json");
  run->add_option("scenario", scenario_path, "Scenario file")->required();
  add_common(run, true);
  run->add_flag("--save-tags", common.save_tags, "Write the first Monte Carlo run's tags");

  std::optional<std::string> variant;
  auto* bell = app.add_subcommand("bell", "Run the CHSH test of a scenario");
  bell->add_option("scenario", scenario_path, "Scenario file")->required();
  bell->add_option("--variant", variant, "partial_readout | hybrid");
  add_common(bell, true);
  bell->add_flag("--save-tags", common.save_tags, "Write the first run's tags");

  CombOptions comb_opt;
  auto* comb = app.add_subcommand("comb", "Build an AFC and report its echoes");
  comb->add_option("--period", comb_opt.period, "Tooth spacing (frequency)")->capture_default_str();
  comb->add_option("--finesse", comb_opt.finesse, "Spacing / tooth width")->capture_default_str();
  comb->add_option("--depth", comb_opt.depth, "Peak optical depth")->capture_default_str();
  comb->add_option("--background", comb_opt.background, "Background optical depth")->capture_default_str();
  comb->add_option("--shape", comb_opt.shape, "square | gaussian")->capture_default_str();
  comb->add_option("--bandwidth", comb_opt.bandwidth, "Comb bandwidth")->capture_default_str();
  comb->add_option("--shift", comb_opt.shift, "Comb frequency shift")->capture_default_str();
  comb->add_option("--grid-points", comb_opt.grid_points, "Frequency grid size (power of two)")->capture_default_str();
  comb->add_option("--span", comb_opt.span, "Frequency grid span")->capture_default_str();
  comb->add_option("--pulse-fwhm", comb_opt.fwhm, "Input pulse intensity FWHM")->capture_default_str();
  comb->add_option("--window", comb_opt.window, "Echo integration window")->capture_default_str();
  comb->add_option("--echoes", comb_opt.echoes, "Number of echoes to report")->capture_default_str();
  comb->footer("Outputs: comb.csv (frequency_Hz,depth), envelope.csv (time_s,re,im), echo_report.json");
  add_common(comb, false);

  AnalyzeOptions an;
  auto* analyze = app.add_subcommand("analyze", "Delay histogram and g2 of a recorded tag file");
  analyze->add_option("tags", an.tags, "Binary tag file")->required();
  analyze->add_option("--window", an.window, "Coincidence window")->capture_default_str();
  analyze->add_option("--center", an.center, "Peak window centre (signal - idler delay)")->capture_default_str();
  analyze->add_option("--bin", an.bin, "Histogram bin width")->capture_default_str();
  analyze->add_option("--accidentals", an.accidentals, "Number of accidental windows")->capture_default_str();
  analyze->add_option("--first-offset", an.first_offset, "First accidental window offset")->capture_default_str();
  analyze->add_option("--spacing", an.spacing, "Accidental window spacing")->capture_default_str();
  analyze->footer("Outputs: histogram.csv (delay_s,counts), summary.json");
  add_common(analyze, false);

  double target_g2 = 115.0;
  auto* cal = app.add_subcommand("calibrate", "Pair rate per pump power reproducing a memory-free g2");
  cal->add_option("scenario", scenario_path, "Scenario file")->required();
  cal->add_option("--target-g2", target_g2, "Target g2 without memory")->capture_default_str();
  cal->footer("Outputs: calibration.json");
  add_common(cal, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*run) return cmd_run("run", scenario_path, common, std::nullopt);
    if (*bell) return cmd_run("bell", scenario_path, common, variant);
    if (*comb) return cmd_comb(comb_opt, common);
    if (*analyze) return cmd_analyze(an, common);
    if (*cal) return cmd_calibrate(scenario_path, target_g2, common);
  } catch (const NonFinite& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const TagFormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
