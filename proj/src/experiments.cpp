#include "qmem/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "qmem/protocol.hpp"
#include "qmem/qstate.hpp"

namespace qmem {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFwhmToSigma = 2.3548200450309493;

double wrap_pi(double x) {
  x = std::remainder(x, 2 * kPi);
  return x <= -kPi ? x + 2 * kPi : x;
}

double delay_offset(const Scenario& s) { return s.signal_channel.delay - s.idler_channel.delay; }

// Moves the tags into *keep the first time a run is asked to keep them.
RunResult run_mc(const McConfig& cfg, TagStream* keep) {
  RunResult r = run_experiment(cfg);
  if (keep && keep->size() == 0 && keep->duration_ps == 0) *keep = r.tags;
  return r;
}

DelayHistogram centered_histogram(const TagStream& t, const Scenario& s, double center) {
  return histogram(t.channels[TagStream::kSignal], t.channels[TagStream::kIdler], s.analysis.bin_width,
                   center - 1.5e-6, center + 0.5e-6);
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(12) << x;
  return os.str();
}

}  // namespace

McConfig make_mc_config(const Scenario& s, double pump_power, Analyzer signal, Analyzer idler, double duration,
                        std::uint64_t seed) {
  McConfig c;
  c.source.pair_rate = s.pair_rate(pump_power);
  c.source.coherence_time = s.coherence_time;
  c.signal_channel = s.signal_channel;
  c.idler_channel = s.idler_channel;
  c.signal_detector = s.signal_detector;
  c.idler_detector = s.idler_detector;
  c.signal_analyzer = std::move(signal);
  c.idler_analyzer = std::move(idler);
  c.v_model = s.v_model;
  c.duration = duration;
  c.seed = seed;
  c.threads = s.threads;
  return c;
}

double timing_sigma(const McConfig& cfg) {
  const double c = cfg.source.coherence_time / kFwhmToSigma;
  const double js = cfg.signal_detector.jitter_sigma;
  const double ji = cfg.idler_detector.jitter_sigma;
  return std::sqrt(c * c + js * js + ji * ji);
}

double window_fraction(double delay, double sigma, const WindowSpec& w) {
  const double lo = w.center - 0.5 * w.width;
  const double hi = w.center + 0.5 * w.width;
  if (!(sigma > 0.0)) return delay >= lo && delay < hi ? 1.0 : 0.0;
  const double k = 1.0 / (sigma * std::numbers::sqrt2);
  return 0.5 * (std::erf((hi - delay) * k) - std::erf((lo - delay) * k));
}

ExpectedCounts expected_counts(const McConfig& cfg, const WindowSpec& w) {
  const PathAmplitudeTable table =
      route_pair(0.0, cfg.signal_analyzer, cfg.idler_analyzer, cfg.signal_channel, cfg.idler_channel);
  const OutcomeModel m =
      build_outcomes(table, cfg.signal_detector.efficiency, cfg.idler_detector.efficiency, cfg.v_model);
  const double sigma = timing_sigma(cfg);
  const double rate = cfg.source.pair_rate;
  ExpectedCounts e;
  for (const auto& o : m.outcomes)
    if (o.kind == Outcome::both)
      e.true_coincidences += rate * o.probability * window_fraction(o.signal_delay - o.idler_delay, sigma, w);
  e.true_coincidences *= cfg.duration;
  e.signal_singles_rate = rate * m.signal_marginal + cfg.signal_detector.dark_rate;
  e.idler_singles_rate = rate * m.idler_marginal + cfg.idler_detector.dark_rate;
  e.accidentals = e.signal_singles_rate * e.idler_singles_rate * w.width * cfg.duration;
  return e;
}

double diluted_visibility(double visibility, double mean_true, double accidentals) {
  if (!(mean_true > 0.0)) throw ExperimentError("diluted_visibility: mean true counts must be positive");
  if (accidentals < 0.0) throw ExperimentError("diluted_visibility: negative accidentals");
  return visibility * mean_true / (mean_true + accidentals);
}

double integration_time(const IntegrationConfig& in, double true_rate) {
  switch (in.mode) {
    case IntegrationConfig::Mode::time:
      return in.time;
    case IntegrationConfig::Mode::target_coincidences:
      if (!(true_rate > 0.0)) throw ExperimentError("no true coincidences expected in the window");
      return in.target_coincidences / true_rate;
    case IntegrationConfig::Mode::paper_equivalent:
      if (!(true_rate > 0.0)) throw ExperimentError("no true coincidences expected in the window");
      return in.paper_time * in.paper_coincidence_rate / true_rate;
  }
  return 0.0;
}

Analyzer afc_analyzer(const AfcMemoryConfig& m, double storage_time, double efficiency) {
  if (!(storage_time > 0.0)) throw ExperimentError("storage time must be positive");
  if (!(efficiency >= 0.0 && efficiency <= 1.0) || !(m.transmission >= 0.0) ||
      m.transmission + efficiency * (1.0 + m.second_echo_ratio) > 1.0 + 1e-12)
    throw ExperimentError("AFC transmission and echo efficiencies exceed unity");
  return {Path{std::sqrt(m.transmission), 0.0}, Path{std::sqrt(efficiency), storage_time},
          Path{std::sqrt(efficiency * m.second_echo_ratio), 2 * storage_time}};
}

namespace {

Analyzer g2_signal_analyzer(const Scenario& s, double storage_time, double efficiency) {
  return storage_time > 0.0 ? afc_analyzer(s.afc, storage_time, efficiency) : direct_path();
}

double afc_efficiency(const Scenario& s, double storage_time) {
  return s.afc.efficiency >= 0.0 ? s.afc.efficiency : s.efficiency_table.at(storage_time);
}

}  // namespace

double predicted_g2(const Scenario& s, double pump_power, double storage_time, double efficiency) {
  const McConfig cfg =
      make_mc_config(s, pump_power, g2_signal_analyzer(s, storage_time, efficiency), direct_path(), 1.0, 0);
  const WindowSpec w{std::max(storage_time, 0.0) + delay_offset(s), s.analysis.window};
  const ExpectedCounts e = expected_counts(cfg, w);
  if (!(e.accidentals > 0.0)) throw ExperimentError("predicted_g2: no accidental coincidences expected");
  return e.total() / e.accidentals;
}

G2Point run_g2(const Scenario& s, double pump_power, double storage_time, double efficiency, std::uint64_t seed,
               TagStream* tags_out) {
  G2Point p;
  p.pump_power = pump_power;
  p.storage_time = std::max(storage_time, 0.0);
  p.efficiency = storage_time > 0.0 ? efficiency : 0.0;
  McConfig cfg = make_mc_config(s, pump_power, g2_signal_analyzer(s, storage_time, efficiency), direct_path(), 1.0,
                                seed);
  const WindowSpec w{p.storage_time + delay_offset(s), s.analysis.window};
  const ExpectedCounts unit = expected_counts(cfg, w);
  p.predicted_g2 = unit.accidentals > 0.0 ? unit.total() / unit.accidentals : 0.0;
  p.integration_time = integration_time(s.integration, unit.true_coincidences);
  cfg.duration = p.integration_time;

  const RunResult r = run_mc(cfg, tags_out);
  p.meta = r.meta;
  p.histogram = centered_histogram(r.tags, s, w.center);
  p.g2 = g2si(p.histogram, w, s.analysis.accidental_offsets());

  // The transmitted peak at zero delay is excluded when a memory is present.
  const auto& h = p.histogram;
  const double search_from = p.storage_time > 0.0 ? delay_offset(s) + s.analysis.window : h.min();
  std::size_t best = h.counts.size();
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    if (h.bin_center(i) >= search_from && (best == h.counts.size() || h.counts[i] > h.counts[best])) best = i;
  if (best < h.counts.size()) {
    const double bins_per_window = s.analysis.window / h.bin_width();
    const double bg = p.g2.accidental_mean / bins_per_window;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      const double t = h.bin_center(i);
      if (std::abs(t - h.bin_center(best)) > 0.5 * s.analysis.window) continue;
      const double c = static_cast<double>(h.counts[i]) - bg;
      num += c * t;
      den += c;
    }
    p.peak_position = den > 0.0 ? num / den : h.bin_center(best);
  }
  return p;
}

std::vector<G2Point> scan_pump_power(const Scenario& s) {
  if (s.pump_powers.empty()) throw ExperimentError("pump scan without powers");
  const bool mem = s.memory == MemoryMode::afc;
  const double ts = mem ? s.afc.storage_time : 0.0;
  const double eff = mem ? afc_efficiency(s, ts) : 0.0;
  std::vector<G2Point> out;
  for (std::size_t i = 0; i < s.pump_powers.size(); ++i)
    out.push_back(run_g2(s, s.pump_powers[i], ts, eff, derive_seed(s.seed, i)));
  return out;
}

std::vector<G2Point> scan_storage_time(const Scenario& s) {
  if (s.storage_times.empty()) throw ExperimentError("storage scan without storage times");
  std::vector<G2Point> out;
  for (std::size_t i = 0; i < s.storage_times.size(); ++i) {
    const double t = s.storage_times[i];
    out.push_back(run_g2(s, s.pump_power, t, s.efficiency_table.at(t), derive_seed(s.seed, i)));
  }
  return out;
}

PartialReadoutMemory::PartialReadoutMemory(const DoubleReadoutConfig& cfg)
    : cfg_(cfg), params_(cfg.comb), grid_{cfg.grid_points, cfg.grid_span, 0.0} {
  grid_.validate();
  const double a = params_.t_short, b = params_.t_long;
  delays_ = {a, b, 2 * a, a + b, 2 * b};
  params_.phase_short = 0.0;
  params_.phase_long = 0.0;
  if (cfg.balance)
    params_.weight = balance_double_readout(params_, grid_, cfg.pulse_fwhm, cfg.report_window);
  const TimeEnvelope in = gaussian_pulse(grid_, cfg.pulse_fwhm);
  base_ = echo_report(in, propagate(in, double_readout_comb(params_, grid_)), delays_, cfg.report_window);
}

EchoReport PartialReadoutMemory::report(double echo_phase_difference) const {
  DoubleReadoutParams p = params_;
  p.phase_long = 0.0;
  p.phase_short = base_.echoes[1].phase - base_.echoes[0].phase - echo_phase_difference;
  const TimeEnvelope in = gaussian_pulse(grid_, cfg_.pulse_fwhm);
  return echo_report(in, propagate(in, double_readout_comb(p, grid_)), delays_, cfg_.report_window);
}

Analyzer PartialReadoutMemory::analyzer(double echo_phase_difference) const {
  return memory_analyzer(report(echo_phase_difference));
}

FringeResult fringe_scan(const Scenario& s, EvalMode mode) {
  if (s.memory != MemoryMode::double_readout) throw ExperimentError("fringe scan needs a double-readout memory");
  if (s.idler_phases.empty() || s.signal_phases.size() < 4) throw ExperimentError("fringe scan phase grid too small");
  const PartialReadoutMemory mem(s.double_readout);
  const WindowSpec w{s.double_readout.comb.t_short + delay_offset(s), s.analysis.window};

  std::vector<Analyzer> signal_analyzers;
  for (double ph : s.signal_phases) signal_analyzers.push_back(mem.analyzer(ph));

  struct Job {
    McConfig cfg;
    ExpectedCounts unit;
  };
  std::vector<std::vector<Job>> jobs(s.idler_phases.size());
  double rate_sum = 0.0;
  std::size_t n = 0;
  for (std::size_t j = 0; j < s.idler_phases.size(); ++j)
    for (std::size_t i = 0; i < s.signal_phases.size(); ++i) {
      Job job{make_mc_config(s, s.pump_power, signal_analyzers[i],
                             fiber_interferometer(s.interferometer_imbalance, s.idler_phases[j]), 1.0,
                             derive_seed(s.seed, 1000 * j + i)),
              {}};
      job.unit = expected_counts(job.cfg, w);
      rate_sum += job.unit.true_coincidences;
      ++n;
      jobs[j].push_back(std::move(job));
    }

  FringeResult res;
  res.echo_weight = mem.weight();
  res.integration_time = integration_time(s.integration, rate_sum / static_cast<double>(n));
  const double T = res.integration_time;

  for (std::size_t j = 0; j < jobs.size(); ++j) {
    FringeSet set;
    set.idler_phase = s.idler_phases[j];
    std::vector<double> counts, expected;
    for (std::size_t i = 0; i < jobs[j].size(); ++i) {
      Job& job = jobs[j][i];
      FringePoint pt;
      pt.signal_phase = s.signal_phases[i];
      pt.expected_true = job.unit.true_coincidences * T;
      pt.expected_accidentals = job.unit.accidentals * T;
      switch (mode) {
        case EvalMode::analytic_noiseless:
          pt.counts = pt.expected_true;
          break;
        case EvalMode::analytic_noisy:
          pt.counts = pt.expected_true + pt.expected_accidentals;
          break;
        case EvalMode::monte_carlo: {
          job.cfg.duration = T;
          const RunResult r = run_experiment(job.cfg);
          const DelayHistogram h = centered_histogram(r.tags, s, w.center);
          const G2Estimate g = g2si(h, w, s.analysis.accidental_offsets());
          pt.counts = static_cast<double>(g.peak_count);
          pt.accidental_mean = g.accidental_mean;
          break;
        }
      }
      counts.push_back(pt.counts);
      expected.push_back(pt.expected_true + pt.expected_accidentals);
      set.points.push_back(pt);
    }
    set.fit = fit_visibility(s.signal_phases, counts);
    set.predicted_visibility =
        mode == EvalMode::analytic_noiseless ? set.fit.V : fit_visibility(s.signal_phases, expected).V;
    res.sets.push_back(std::move(set));
  }

  double vsum = 0.0;
  for (const auto& set : res.sets) vsum += set.fit.V;
  res.mean_visibility = vsum / static_cast<double>(res.sets.size());
  res.fidelity = fidelity_from_visibility(std::clamp(res.mean_visibility, 0.0, 1.0));
  if (res.sets.size() >= 2) {
    res.phase_difference = wrap_pi(res.sets[1].fit.phase_offset - res.sets[0].fit.phase_offset);
    res.phase_difference_sigma = std::hypot(res.sets[0].fit.phase_sigma, res.sets[1].fit.phase_sigma);
  }
  return res;
}

namespace {

struct BellPlan {
  std::array<McConfig, 16> cfg;
  std::array<BellRun, 16> runs;
  std::array<double, 4> ideal_E{};
  std::array<double, 4> conclusive{1.0, 1.0, 1.0, 1.0};
  double ideal_S = 0.0;
};

BellPlan plan_partial_readout(const Scenario& s) {
  const PartialReadoutMemory mem(s.double_readout);
  const std::array<double, 2> sig{0.0, kPi / 2};
  const std::array<double, 2> idl{-kPi / 4, kPi / 4};
  const double center = s.double_readout.comb.t_short + delay_offset(s);
  BellPlan plan;
  for (int c = 0; c < 4; ++c)
    for (int k = 0; k < 4; ++k) {
      BellRun& r = plan.runs[4 * c + k];
      r.correlator = c;
      r.signal_outcome = k < 2 ? 1 : -1;
      r.idler_outcome = k % 2 == 0 ? 1 : -1;
      r.signal_setting = sig[c / 2];
      r.idler_setting = idl[c % 2];
      r.window_center = center;
      const double ps = r.signal_setting + (r.signal_outcome < 0 ? kPi : 0.0);
      const double pi = r.idler_setting + (r.idler_outcome < 0 ? kPi : 0.0);
      plan.cfg[4 * c + k] = make_mc_config(s, s.pump_power, mem.analyzer(ps),
                                           fiber_interferometer(s.interferometer_imbalance, pi), 1.0, 0);
    }
  for (int c = 0; c < 4; ++c) plan.ideal_E[c] = s.v_model * std::cos(sig[c / 2] + idl[c % 2]);
  return plan;
}

BellPlan plan_hybrid(const Scenario& s) {
  const HybridBudget b = HybridBudget::from_measured(s.hybrid.eta_trans, s.hybrid.eta_echo, s.hybrid.eta_abs);
  const double tau = s.hybrid.storage_time;
  const std::array<double, 2> sig{0.0, kPi};
  const double off = delay_offset(s);
  BellPlan plan;
  for (int c = 0; c < 4; ++c)
    for (int k = 0; k < 4; ++k) {
      BellRun& r = plan.runs[4 * c + k];
      r.correlator = c;
      r.signal_outcome = k < 2 ? 1 : -1;
      r.idler_outcome = k % 2 == 0 ? 1 : -1;
      r.signal_setting = sig[c / 2];
      const bool time_basis = c % 2 == 0;  // Y1 = sigma_z by arrival time, Y2 = sigma_x interferometer
      r.idler_setting = time_basis ? 0.0 : (r.idler_outcome > 0 ? 0.0 : kPi);
      // Late idler bin (+1) pairs with the transmitted signal at zero relative delay.
      r.window_center = off + (time_basis && r.idler_outcome < 0 ? tau : 0.0);
      plan.cfg[4 * c + k] =
          make_mc_config(s, s.pump_power, hybrid_analyzer(b, r.signal_setting, r.signal_outcome, tau),
                         time_basis ? direct_path() : fiber_interferometer(tau, r.idler_setting), 1.0, 0);
    }
  for (int c = 0; c < 4; ++c) {
    const auto pc = povm_correlation(b, sig[c / 2], c % 2 == 0 ? sigma_z() : sigma_x());
    plan.ideal_E[c] = pc.correlator;
    plan.conclusive[c] = pc.conclusive_probability;
  }
  return plan;
}

std::array<double, 4> correlators_from(const std::array<double, 16>& n) {
  std::array<double, 4> e{};
  for (int c = 0; c < 4; ++c) {
    const double* x = &n[4 * c];
    const double tot = x[0] + x[1] + x[2] + x[3];
    e[c] = tot > 0.0 ? (x[0] + x[3] - x[1] - x[2]) / tot : 0.0;
  }
  return e;
}

double chsh_of(const std::array<double, 4>& e) { return e[0] + e[1] + e[2] - e[3]; }

BellResult bell_test_impl(const Scenario& s, EvalMode mode, TagStream* keep) {
  BellPlan plan = s.bell_variant == BellVariant::hybrid ? plan_hybrid(s) : plan_partial_readout(s);
  if (mode == EvalMode::analytic_noiseless)
    for (auto& c : plan.cfg) {
      c.signal_detector.dark_rate = 0.0;
      c.idler_detector.dark_rate = 0.0;
    }
  double rate_sum = 0.0;
  for (int r = 0; r < 16; ++r) {
    plan.runs[r].expected = expected_counts(plan.cfg[r], {plan.runs[r].window_center, s.analysis.window});
    rate_sum += plan.runs[r].expected.true_coincidences;
  }
  // Same integration time for every run: rate_sum/16 is the mean expected true rate.
  const double T = integration_time(s.integration, rate_sum / 16.0);

  BellResult res;
  res.variant = s.bell_variant;
  res.ideal_E = plan.ideal_E;
  res.conclusive_probability = plan.conclusive;
  res.ideal_S = chsh_of(plan.ideal_E);
  std::array<double, 16> expected{};
  std::array<std::uint64_t, 16> counts{};
  for (int r = 0; r < 16; ++r) {
    BellRun& run = plan.runs[r];
    run.integration_time = T;
    run.seed = derive_seed(s.seed, 100 + static_cast<std::uint64_t>(r));
    run.expected.true_coincidences *= T;
    run.expected.accidentals *= T;
    expected[r] = run.expected.total();
    const WindowSpec w{run.window_center, s.analysis.window};
    run.count = {w.center, w.width, 0};
    switch (mode) {
      case EvalMode::monte_carlo: {
        McConfig cfg = plan.cfg[r];
        cfg.duration = T;
        cfg.seed = run.seed;
        const RunResult rr = run_mc(cfg, keep);
        run.count = count_coincidences(rr.tags.channels[TagStream::kSignal], rr.tags.channels[TagStream::kIdler], w);
        counts[r] = run.count.count;
        break;
      }
      case EvalMode::analytic_noisy:
      case EvalMode::analytic_noiseless:
        counts[r] = static_cast<std::uint64_t>(std::llround(run.expected.total()));
        run.count.count = counts[r];
        break;
    }
  }
  res.predicted_E = correlators_from(expected);
  res.predicted_S = chsh_of(res.predicted_E);
  if (mode == EvalMode::monte_carlo) {
    for (int c = 0; c < 4; ++c)
      res.correlators[c] = correlator(std::array<WindowCount, 4>{plan.runs[4 * c].count, plan.runs[4 * c + 1].count,
                                                                 plan.runs[4 * c + 2].count, plan.runs[4 * c + 3].count});
  } else {
    // Expected counts are not integers: E is exact, sigma uses the rounded counts.
    for (int c = 0; c < 4; ++c) {
      CorrelatorEstimate e = correlator(std::array<std::uint64_t, 4>{counts[4 * c], counts[4 * c + 1],
                                                                     counts[4 * c + 2], counts[4 * c + 3]});
      e.E = res.predicted_E[c];
      res.correlators[c] = e;
    }
  }
  res.chsh = chsh_S(res.correlators);
  res.runs.assign(plan.runs.begin(), plan.runs.end());
  return res;
}

}  // namespace

BellResult bell_test(const Scenario& s, EvalMode mode) { return bell_test_impl(s, mode, nullptr); }

Calibration calibrate_rate_per_power(const Scenario& s, double target_g2) {
  if (!(target_g2 > 1.0)) throw ExperimentError("calibration target g2 must exceed 1");
  if (!(s.pump_power > 0.0)) throw ExperimentError("calibration needs a positive pump power");
  Scenario unit = s;
  unit.rate_per_power = 1.0 / s.pump_power;  // pair rate 1/s
  const WindowSpec w{delay_offset(s), s.analysis.window};
  const McConfig cfg = make_mc_config(unit, s.pump_power, direct_path(), direct_path(), 1.0, 0);
  const ExpectedCounts e = expected_counts(cfg, w);
  const double fq = e.true_coincidences;  // true rate per unit pair rate
  const double ms = e.signal_singles_rate - s.signal_detector.dark_rate;
  const double mi = e.idler_singles_rate - s.idler_detector.dark_rate;
  const double ds = s.signal_detector.dark_rate, di = s.idler_detector.dark_rate;
  // (g - 1) w (R ms + ds)(R mi + di) = f q R, larger root.
  const double gw = (target_g2 - 1.0) * w.width;
  const double a = gw * ms * mi;
  const double b = gw * (ms * di + mi * ds) - fq;
  const double c = gw * ds * di;
  if (!(a > 0.0)) throw ExperimentError("calibration: zero singles probability");
  const double disc = b * b - 4 * a * c;
  if (disc < 0.0) throw ExperimentError("calibration: target g2 above the attainable maximum");
  const double rate = (-b + std::sqrt(disc)) / (2 * a);

  Calibration cal;
  cal.rate_per_power = rate / s.pump_power;
  Scenario done = s;
  done.rate_per_power = cal.rate_per_power;
  cal.predicted_g2_no_memory = predicted_g2(done, s.pump_power, 0.0, 0.0);
  const double ts = s.afc.storage_time;
  cal.predicted_g2_memory = predicted_g2(done, s.pump_power, ts, afc_efficiency(s, ts));
  cal.signal_singles_rate = rate * ms + ds;
  cal.idler_singles_rate = rate * mi + di;
  return cal;
}

bool all_finite(const json& j) {
  if (j.is_number_float()) return std::isfinite(j.get<double>());
  if (j.is_array() || j.is_object()) {
    for (const auto& x : j) if (!all_finite(x)) return false;
  }
  return true;
}

namespace {

std::string mode_name(EvalMode m) {
  switch (m) {
    case EvalMode::monte_carlo: return "monte_carlo";
    case EvalMode::analytic_noisy: return "analytic_noisy";
    case EvalMode::analytic_noiseless: return "analytic_noiseless";
  }
  return "?";
}

json g2_json(const G2Point& p) {
  return {{"pump_power_W", p.pump_power},
          {"storage_time_s", p.storage_time},
          {"efficiency", p.efficiency},
          {"integration_time_s", p.integration_time},
          {"g2", p.g2.g2},
          {"g2_sigma", p.g2.sigma},
          {"g2_lower_bound", p.g2.lower_bound},
          {"peak_count", p.g2.peak_count},
          {"accidental_mean", p.g2.accidental_mean},
          {"predicted_g2", p.predicted_g2},
          {"peak_position_s", p.peak_position},
          {"signal_singles_rate_Hz", p.meta.signal_singles_rate},
          {"idler_singles_rate_Hz", p.meta.idler_singles_rate}};
}

std::string g2_table_csv(const std::vector<G2Point>& pts) {
  std::ostringstream os;
  os << "pump_power_W,storage_time_s,efficiency,integration_time_s,g2,g2_sigma,predicted_g2,peak_count,"
        "accidental_mean,peak_position_s\n";
  for (const auto& p : pts)
    os << fmt(p.pump_power) << ',' << fmt(p.storage_time) << ',' << fmt(p.efficiency) << ','
       << fmt(p.integration_time) << ',' << fmt(p.g2.g2) << ',' << fmt(p.g2.sigma) << ',' << fmt(p.predicted_g2)
       << ',' << p.g2.peak_count << ',' << fmt(p.g2.accidental_mean) << ',' << fmt(p.peak_position) << '\n';
  return os.str();
}

std::string histogram_csv(const DelayHistogram& h) {
  std::ostringstream os;
  write_histogram_csv(os, h);
  return os.str();
}

void set_g2(json& j, const G2Point& p) {
  j["g2"] = p.g2.g2;
  j["g2_sigma"] = p.g2.sigma;
}

json bell_json(const BellResult& b) {
  json cs = json::array();
  for (int c = 0; c < 4; ++c) {
    cs.push_back({{"E", b.correlators[c].E},
                  {"sigma", b.correlators[c].sigma},
                  {"counts", b.correlators[c].counts},
                  {"ideal_E", b.ideal_E[c]},
                  {"predicted_E", b.predicted_E[c]}});
    if (b.variant == BellVariant::hybrid) cs.back()["conclusive_probability"] = b.conclusive_probability[c];
  }
  return cs;
}

std::string bell_runs_csv(const BellResult& b) {
  std::ostringstream os;
  os << "correlator,signal_outcome,idler_outcome,signal_setting_rad,idler_setting_rad,window_center_s,"
        "integration_time_s,seed,count,expected_true,expected_accidentals\n";
  for (const auto& r : b.runs)
    os << r.correlator << ',' << r.signal_outcome << ',' << r.idler_outcome << ',' << fmt(r.signal_setting) << ','
       << fmt(r.idler_setting) << ',' << fmt(r.window_center) << ',' << fmt(r.integration_time) << ',' << r.seed
       << ',' << r.count.count << ',' << fmt(r.expected.true_coincidences) << ',' << fmt(r.expected.accidentals)
       << '\n';
  return os.str();
}

}  // namespace

ScenarioReport run_scenario(const Scenario& s, EvalMode mode, bool keep_tags) {
  ScenarioReport rep;
  json& j = rep.summary;
  j = {{"schema", kSummarySchema},
       {"scenario", s.name},
       {"experiment", to_string(s.experiment)},
       {"mode", mode_name(mode)},
       {"seed", s.seed},
       {"g2", nullptr},
       {"g2_sigma", nullptr},
       {"V", nullptr},
       {"V_sigma", nullptr},
       {"S", nullptr},
       {"S_sigma", nullptr},
       {"correlators", json::array()}};
  TagStream tags;
  TagStream* keep = keep_tags && mode == EvalMode::monte_carlo ? &tags : nullptr;
  const bool analytic = mode != EvalMode::monte_carlo;

  switch (s.experiment) {
    case ExperimentKind::g2: {
      const bool mem = s.memory == MemoryMode::afc;
      const double ts = mem ? s.afc.storage_time : 0.0;
      const double eff = mem ? afc_efficiency(s, ts) : 0.0;
      if (analytic) {
        j["g2"] = predicted_g2(s, s.pump_power, ts, eff);
        j["g2_sigma"] = 0.0;
        break;
      }
      const G2Point p = run_g2(s, s.pump_power, ts, eff, s.seed, keep);
      set_g2(j, p);
      j["point"] = g2_json(p);
      rep.csv.emplace_back("histogram.csv", histogram_csv(p.histogram));
      rep.tags_description = "g2 run";
      break;
    }
    case ExperimentKind::pump_scan:
    case ExperimentKind::storage_scan: {
      const bool pump = s.experiment == ExperimentKind::pump_scan;
      json pts = json::array();
      if (analytic) {
        const std::vector<double>& xs = pump ? s.pump_powers : s.storage_times;
        std::ostringstream os;
        os << (pump ? "pump_power_W" : "storage_time_s") << ",predicted_g2\n";
        for (double x : xs) {
          const double ts = pump ? (s.memory == MemoryMode::afc ? s.afc.storage_time : 0.0) : x;
          const double eff = ts > 0.0 ? (pump ? afc_efficiency(s, ts) : s.efficiency_table.at(ts)) : 0.0;
          const double g = predicted_g2(s, pump ? x : s.pump_power, ts, eff);
          pts.push_back({{pump ? "pump_power_W" : "storage_time_s", x}, {"predicted_g2", g}});
          os << fmt(x) << ',' << fmt(g) << '\n';
        }
        rep.csv.emplace_back(pump ? "g2_vs_power.csv" : "g2_vs_storage.csv", os.str());
        j["points"] = pts;
        break;
      }
      std::vector<G2Point> res;
      if (pump) {
        res = scan_pump_power(s);
      } else {
        res = scan_storage_time(s);
        for (const auto& p : res) {
          std::ostringstream name;
          name << "histogram_" << std::llround(p.storage_time * 1e9) << "ns.csv";
          rep.csv.emplace_back(name.str(), histogram_csv(p.histogram));
        }
      }
      for (const auto& p : res) pts.push_back(g2_json(p));
      j["points"] = pts;
      rep.csv.emplace(rep.csv.begin(), pump ? "g2_vs_power.csv" : "g2_vs_storage.csv", g2_table_csv(res));
      const G2Point* headline = &res.front();
      if (pump)
        for (const auto& p : res)
          if (std::abs(std::log(p.pump_power / s.pump_power)) < std::abs(std::log(headline->pump_power / s.pump_power)))
            headline = &p;
      if (!pump || s.pump_power > 0.0) set_g2(j, *headline);
      if (keep) {
        const double ts = pump ? (s.memory == MemoryMode::afc ? s.afc.storage_time : 0.0) : res.front().storage_time;
        run_g2(s, res.front().pump_power, ts, res.front().efficiency, derive_seed(s.seed, 0), keep);
        rep.tags_description = "first scan point";
      }
      break;
    }
    case ExperimentKind::fringe_scan: {
      const FringeResult f = fringe_scan(s, mode);
      json sets = json::array();
      std::ostringstream os;
      os << "idler_phase_rad,signal_phase_rad,counts,expected_true,expected_accidentals,accidental_mean\n";
      double var = 0.0;
      for (const auto& set : f.sets) {
        sets.push_back({{"idler_phase_rad", set.idler_phase},
                        {"V", set.fit.V},
                        {"V_sigma", set.fit.V_sigma},
                        {"phase_offset_rad", set.fit.phase_offset},
                        {"phase_sigma_rad", set.fit.phase_sigma},
                        {"baseline", set.fit.baseline},
                        {"predicted_V", set.predicted_visibility}});
        var += set.fit.V_sigma * set.fit.V_sigma;
        for (const auto& p : set.points)
          os << fmt(set.idler_phase) << ',' << fmt(p.signal_phase) << ',' << fmt(p.counts) << ','
             << fmt(p.expected_true) << ',' << fmt(p.expected_accidentals) << ',' << fmt(p.accidental_mean) << '\n';
      }
      j["V"] = f.mean_visibility;
      j["V_sigma"] = std::sqrt(var) / static_cast<double>(f.sets.size());
      j["fits"] = sets;
      j["phase_difference_deg"] = f.phase_difference * 180.0 / kPi;
      j["phase_difference_sigma_deg"] = f.phase_difference_sigma * 180.0 / kPi;
      j["fidelity"] = f.fidelity;
      j["integration_time_per_point_s"] = f.integration_time;
      j["echo_weight"] = f.echo_weight;
      rep.csv.emplace_back("fringes.csv", os.str());
      if (keep) {
        // Fringe runs are analysed in place; keep the first point's tags for --save-tags.
        const PartialReadoutMemory mem(s.double_readout);
        McConfig cfg = make_mc_config(s, s.pump_power, mem.analyzer(s.signal_phases.front()),
                                      fiber_interferometer(s.interferometer_imbalance, s.idler_phases.front()),
                                      f.integration_time, derive_seed(s.seed, 0));
        run_mc(cfg, keep);
        rep.tags_description = "first fringe point";
      }
      break;
    }
    case ExperimentKind::bell: {
      const BellResult b = bell_test_impl(s, mode, keep);
      if (keep) rep.tags_description = "first Bell run";
      j["S"] = b.chsh.S;
      j["S_sigma"] = b.chsh.sigma;
      j["S_unphysical"] = b.chsh.unphysical;
      j["ideal_S"] = b.ideal_S;
      j["predicted_S"] = b.predicted_S;
      j["variant"] = to_string(b.variant);
      j["correlators"] = bell_json(b);
      j["integration_time_per_run_s"] = b.runs.front().integration_time;
      if (b.variant == BellVariant::hybrid) {
        const HybridBudget hb = HybridBudget::from_measured(s.hybrid.eta_trans, s.hybrid.eta_echo, s.hybrid.eta_abs);
        j["hybrid_theta_rad"] = hybrid_theta(hb);
        j["hybrid_predicted_S"] = hybrid_predicted_S(hybrid_theta(hb));
      }
      rep.csv.emplace_back("bell_runs.csv", bell_runs_csv(b));
      if (s.repetitions > 1) {
        json reps = json::array();
        int violations = 0;
        for (int r = 0; r < s.repetitions; ++r) {
          Scenario sr = s;
          sr.seed = r == 0 ? s.seed : derive_seed(s.seed, 10000 + static_cast<std::uint64_t>(r));
          const BellResult br = r == 0 ? b : bell_test(sr, mode);
          const bool viol = br.chsh.S - 2.0 >= 2.0 * br.chsh.sigma;
          violations += viol;
          reps.push_back({{"seed", sr.seed}, {"S", br.chsh.S}, {"S_sigma", br.chsh.sigma}, {"violation_2sigma", viol}});
        }
        j["repetitions"] = reps;
        j["violation_fraction"] = static_cast<double>(violations) / s.repetitions;
      }
      break;
    }
  }
  if (keep) rep.tags = std::move(tags);
  return rep;
}

}  // namespace qmem
