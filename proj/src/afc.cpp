#include "qmem/afc.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <ostream>

namespace qmem {

namespace {

using cplx = std::complex<double>;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kFwhmToSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// In-place unnormalized DFT; sign = FFTW_FORWARD (e^{-i}) or FFTW_BACKWARD.
void dft_inplace(std::vector<cplx>& data, int sign) {
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_1d(static_cast<int>(data.size()), p, p, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plan);
}

bool is_pow2(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

// bin > 0 averages a square tooth over [nu - bin/2, nu + bin/2]; point sampling of
// teeth whose period is not a whole number of bins makes widths jitter by one bin,
// which shows up as mrad-level echo phase errors.
double tooth(double nu, double period, double finesse, PeakShape shape, double shift, double bin = 0.0) {
  if (finesse <= 1.0) return 1.0;
  const double x = (nu - shift) / period;
  const double frac = (x - std::nearbyint(x)) * period;
  const double width = period / finesse;
  if (shape == PeakShape::square) {
    if (bin <= 0.0) return std::abs(frac) <= 0.5 * width ? 1.0 : 0.0;
    const double lo = std::max(frac - 0.5 * bin, -0.5 * width);
    const double hi = std::min(frac + 0.5 * bin, 0.5 * width);
    return std::max(hi - lo, 0.0) / bin;
  }
  const double s = width / kFwhmToSigma;
  return std::exp(-0.5 * frac * frac / (s * s));
}

void check_grid_for(const FrequencyGrid& grid, double period, double bandwidth) {
  grid.validate();
  if (grid.resolution() > period / 50.0) throw AfcError("grid too coarse: resolution exceeds period/50");
  if (bandwidth > grid.span / 4.0) throw AfcError("comb bandwidth exceeds span/4");
}

double wrap_pm_pi(double p) { return std::remainder(p, kTwoPi); }

struct Window {
  std::size_t lo, hi;
};

Window window_indices(const TimeEnvelope& env, double center, double width) {
  const double a = (center - 0.5 * width - env.t0) / env.dt;
  const double b = (center + 0.5 * width - env.t0) / env.dt;
  const auto n = static_cast<double>(env.samples.size());
  const auto lo = static_cast<std::size_t>(std::clamp(std::ceil(a), 0.0, n));
  const auto hi = static_cast<std::size_t>(std::clamp(std::floor(b) + 1.0, 0.0, n));
  return {lo, std::max(lo, hi)};
}

struct WindowStats {
  double energy = 0.0;
  double phase = 0.0;
  double centroid = 0.0;
};

WindowStats window_stats(const TimeEnvelope& env, double center, double width) {
  const Window w = window_indices(env, center, width);
  WindowStats s;
  cplx phasor{0.0, 0.0};
  double tsum = 0.0;
  for (std::size_t k = w.lo; k < w.hi; ++k) {
    const cplx a = env.samples[k];
    const double i = std::norm(a);
    s.energy += i;
    tsum += i * env.time(k);
    phasor += a * std::abs(a);
  }
  s.centroid = s.energy > 0.0 ? tsum / s.energy : center;
  s.phase = std::arg(phasor);
  s.energy *= env.dt;
  return s;
}

double intensity_fwhm_estimate(const TimeEnvelope& env) {
  double e = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < env.samples.size(); ++k) {
    const double i = std::norm(env.samples[k]);
    const double t = env.time(k);
    e += i;
    m1 += i * t;
  }
  if (e <= 0.0) return 0.0;
  m1 /= e;
  for (std::size_t k = 0; k < env.samples.size(); ++k) {
    const double t = env.time(k) - m1;
    m2 += std::norm(env.samples[k]) * t * t;
  }
  return kFwhmToSigma * std::sqrt(m2 / e);
}

}  // namespace

double FrequencyGrid::frequency(std::size_t k) const {
  const auto n = static_cast<std::ptrdiff_t>(n_points);
  auto i = static_cast<std::ptrdiff_t>(k);
  if (i >= n / 2) i -= n;
  return static_cast<double>(i) * resolution() + center_offset;
}

void FrequencyGrid::validate() const {
  if (!is_pow2(n_points)) throw AfcError("grid size must be a power of two");
  if (!(span > 0.0) || !std::isfinite(span)) throw AfcError("grid span must be positive");
}

double comb_profile(const CombParams& p, double nu) {
  return p.background_depth +
         (p.peak_depth - p.background_depth) * tooth(nu, p.period, p.finesse, p.shape, p.comb_shift);
}

double band_window(double nu, double bandwidth, double rolloff) {
  if (rolloff <= 0.0) return std::abs(nu) <= 0.5 * bandwidth ? 1.0 : 0.0;
  const double x = std::clamp((std::abs(nu) - (0.5 * bandwidth - rolloff)) / (2.0 * rolloff), 0.0, 1.0);
  if (x >= 1.0) return 0.0;
  const double c = std::cos(0.5 * std::numbers::pi * x);
  return c * c;
}

CombSpectrum build_comb(const CombParams& p, const FrequencyGrid& grid) {
  if (!(p.period > 0.0)) throw AfcError("comb period must be positive");
  if (!(p.finesse >= 1.0)) throw AfcError("finesse must be >= 1");
  if (!(p.background_depth >= 0.0 && p.peak_depth >= p.background_depth))
    throw AfcError("require peak_depth >= background_depth >= 0");
  check_grid_for(grid, p.period, p.bandwidth);
  const double rolloff = p.edge_rolloff > 0.0 ? p.edge_rolloff : p.period;

  CombSpectrum c;
  c.grid = grid;
  c.period = p.period;
  c.finesse = p.finesse;
  c.peak_shape = p.shape;
  c.bandwidth = p.bandwidth;
  c.comb_shift = p.comb_shift;
  c.background_depth = p.background_depth;
  c.depth.resize(grid.n_points);
  const double bin = grid.resolution();
  for (std::size_t k = 0; k < grid.n_points; ++k) {
    const double nu = grid.frequency(k);
    const double t = tooth(nu, p.period, p.finesse, p.shape, p.comb_shift, bin);
    c.depth[k] = (p.background_depth + (p.peak_depth - p.background_depth) * t) * band_window(nu, p.bandwidth, rolloff);
  }
  return c;
}

CombSpectrum flat_comb(double depth, const FrequencyGrid& grid) {
  grid.validate();
  if (!(depth >= 0.0)) throw AfcError("depth must be >= 0");
  CombSpectrum c;
  c.grid = grid;
  c.bandwidth = grid.span;
  c.background_depth = depth;
  c.depth.assign(grid.n_points, depth);
  return c;
}

CombSpectrum double_readout_comb(const DoubleReadoutParams& p, const FrequencyGrid& grid) {
  if (!(p.t_short > 0.0 && p.t_short < p.t_long)) throw AfcError("require 0 < t_short < t_long");
  if (!(p.weight > 0.0 && p.weight < 1.0)) throw AfcError("weight must lie in (0,1)");
  if (!(p.finesse >= 1.0)) throw AfcError("finesse must be >= 1");
  if (!(p.background_depth >= 0.0 && p.peak_depth >= p.background_depth))
    throw AfcError("require peak_depth >= background_depth >= 0");
  const double period_short = 1.0 / p.t_short;
  const double period_long = 1.0 / p.t_long;
  check_grid_for(grid, period_long, p.bandwidth);
  const double shift_short = p.phase_short / kTwoPi * period_short;
  const double shift_long = p.phase_long / kTwoPi * period_long;
  // Hann profile over |nu| < bandwidth: its smooth edge keeps the tails of one
  // structure's echo out of the other's window.
  const double rolloff = 0.5 * p.bandwidth;
  const double bin = grid.resolution();
  const double span = p.peak_depth - p.background_depth;

  CombSpectrum c;
  c.grid = grid;
  c.period = period_short;
  c.finesse = p.finesse;
  c.peak_shape = p.shape;
  c.bandwidth = p.bandwidth;
  c.comb_shift = shift_short;
  c.background_depth = p.background_depth;
  c.depth.resize(grid.n_points);
  for (std::size_t k = 0; k < grid.n_points; ++k) {
    const double nu = grid.frequency(k);
    double d = p.background_depth +
               p.weight * span * tooth(nu, period_short, p.finesse, p.shape, shift_short, bin) +
               (1.0 - p.weight) * span * tooth(nu, period_long, p.finesse, p.shape, shift_long, bin);
    if (d > p.max_depth) {
      d = p.max_depth;
      c.clipped = true;
    }
    c.depth[k] = d * band_window(nu, p.bandwidth, rolloff);
  }
  return c;
}

std::vector<cplx> transfer_function(const CombSpectrum& comb, PhaseModel model) {
  const std::size_t n = comb.depth.size();
  std::vector<cplx> h(n);
  if (model == PhaseModel::amplitude_only) {
    for (std::size_t k = 0; k < n; ++k) h[k] = std::exp(-0.5 * comb.depth[k]);
    return h;
  }
  // Minimum phase from the folded complex cepstrum of ln|H| = -d/2.
  for (std::size_t k = 0; k < n; ++k) h[k] = -0.5 * comb.depth[k];
  dft_inplace(h, FFTW_BACKWARD);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    double w = 0.0;
    if (k == 0 || k == n / 2)
      w = 1.0;
    else if (k < n / 2)
      w = 2.0;
    h[k] *= w * inv_n;
  }
  dft_inplace(h, FFTW_FORWARD);
  for (auto& x : h) x = std::exp(x);
  return h;
}

double TimeEnvelope::energy() const {
  double e = 0.0;
  for (const auto& a : samples) e += std::norm(a);
  return e * dt;
}

TimeEnvelope gaussian_pulse(const FrequencyGrid& grid, double fwhm, double center) {
  grid.validate();
  if (!(fwhm > 0.0)) throw AfcError("pulse FWHM must be positive");
  TimeEnvelope env;
  env.dt = grid.dt();
  env.t0 = -0.5 * static_cast<double>(grid.n_points) * env.dt;
  env.samples.resize(grid.n_points);
  const double s = fwhm / kFwhmToSigma;  // intensity sigma
  double e = 0.0;
  for (std::size_t k = 0; k < grid.n_points; ++k) {
    const double t = env.time(k) - center;
    const double a = std::exp(-t * t / (4.0 * s * s));
    env.samples[k] = a;
    e += a * a;
  }
  const double norm = 1.0 / std::sqrt(e * env.dt);
  for (auto& a : env.samples) a *= norm;
  return env;
}

TimeEnvelope propagate(const TimeEnvelope& in, const CombSpectrum& comb, PhaseModel model) {
  if (in.samples.size() != comb.depth.size() || std::abs(in.dt * comb.grid.span - 1.0) > 1e-9)
    throw AfcError("envelope grid does not match comb grid");
  const std::vector<cplx> h = transfer_function(comb, model);
  TimeEnvelope out = in;
  dft_inplace(out.samples, FFTW_FORWARD);
  const double inv_n = 1.0 / static_cast<double>(out.samples.size());
  for (std::size_t k = 0; k < h.size(); ++k) out.samples[k] *= h[k] * inv_n;
  dft_inplace(out.samples, FFTW_BACKWARD);
  return out;
}

double EchoReport::total() const {
  double s = eta_trans;
  for (const auto& e : echoes) s += e.efficiency;
  return s;
}

EchoReport echo_report(const TimeEnvelope& in, const TimeEnvelope& out, const std::vector<double>& delays,
                       double window) {
  if (!(window > 0.0)) throw AfcError("report window must be positive");
  if (window < 3.0 * intensity_fwhm_estimate(in) * (1.0 - 1e-6))
    throw AfcError("report window shorter than 3x the input FWHM");
  std::vector<double> centers{0.0};
  centers.insert(centers.end(), delays.begin(), delays.end());
  std::vector<double> sorted = centers;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] - sorted[i - 1] < window) throw AfcError("report windows overlap");

  const WindowStats ref = window_stats(in, 0.0, window);
  const double e_in = in.energy();
  if (!(e_in > 0.0)) throw AfcError("input envelope has zero energy");

  EchoReport r;
  const WindowStats t = window_stats(out, 0.0, window);
  r.eta_trans = t.energy / e_in;
  r.trans_phase = wrap_pm_pi(t.phase - ref.phase);
  for (double d : delays) {
    const WindowStats s = window_stats(out, d, window);
    r.echoes.push_back({d, s.energy / e_in, wrap_pm_pi(s.phase - ref.phase), s.centroid});
  }
  return r;
}

double absorption_efficiency(const TimeEnvelope& in, const CombSpectrum& comb) {
  if (in.samples.size() != comb.depth.size()) throw AfcError("envelope grid does not match comb grid");
  std::vector<cplx> spec = in.samples;
  dft_inplace(spec, FFTW_FORWARD);
  double w = 0.0, wd = 0.0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double p = std::norm(spec[k]);
    w += p;
    wd += p * comb.depth[k];
  }
  return w > 0.0 ? 1.0 - std::exp(-wd / w) : 0.0;
}

EfficiencySearch search_echo_efficiency(const CombParams& base, const std::vector<double>& finesses,
                                        const std::vector<double>& depths, const FrequencyGrid& grid,
                                        double pulse_fwhm, double window) {
  const TimeEnvelope in = gaussian_pulse(grid, pulse_fwhm);
  EfficiencySearch best;
  best.report.echoes.push_back({});
  for (double f : finesses) {
    for (double d : depths) {
      CombParams p = base;
      p.finesse = f;
      p.peak_depth = d;
      const CombSpectrum comb = build_comb(p, grid);
      const EchoReport r = echo_report(in, propagate(in, comb), {1.0 / p.period}, window);
      if (r.echoes[0].efficiency > best.report.echoes[0].efficiency) best = {f, d, r};
    }
  }
  return best;
}

double balance_double_readout(DoubleReadoutParams p, const FrequencyGrid& grid, double pulse_fwhm,
                              double window, double rel_tol) {
  const TimeEnvelope in = gaussian_pulse(grid, pulse_fwhm);
  auto log_ratio = [&](double w) {
    p.weight = w;
    const EchoReport r = echo_report(in, propagate(in, double_readout_comb(p, grid)), {p.t_short, p.t_long}, window);
    return std::log(r.echoes[0].efficiency / r.echoes[1].efficiency);
  };
  double lo = 0.05, hi = 0.95;
  double flo = log_ratio(lo), fhi = log_ratio(hi);
  if (flo > 0.0 || fhi < 0.0) throw AfcError("double readout: echo ratio not bracketed by weight range");
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 80; ++it) {
    mid = 0.5 * (lo + hi);
    const double fm = log_ratio(mid);
    if (std::abs(fm) < rel_tol) break;
    (fm < 0.0 ? lo : hi) = mid;
  }
  return mid;
}

void write_comb_csv(std::ostream& os, const CombSpectrum& comb, double nu_max) {
  const std::size_t n = comb.depth.size();
  os << "frequency_Hz,depth\n";
  os.precision(12);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = (i + n / 2) % n;  // ascending frequency
    if (std::abs(comb.grid.frequency(k)) > nu_max) continue;
    os << comb.grid.frequency(k) << ',' << comb.depth[k] << '\n';
  }
}

void write_envelope_csv(std::ostream& os, const TimeEnvelope& env, double t_min, double t_max) {
  os << "time_s,re,im\n";
  os.precision(12);
  for (std::size_t k = 0; k < env.samples.size(); ++k) {
    const double t = env.time(k);
    if (t < t_min || t > t_max) continue;
    os << t << ',' << env.samples[k].real() << ',' << env.samples[k].imag() << '\n';
  }
}

}  // namespace qmem
