#include "qmem/coincidence.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

namespace qmem {

namespace {

std::int64_t ps_of(double s) { return static_cast<std::int64_t>(std::llround(s * 1e12)); }

}  // namespace

std::uint64_t DelayHistogram::total() const {
  std::uint64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

DelayHistogram& DelayHistogram::operator+=(const DelayHistogram& other) {
  if (other.bin_ps != bin_ps || other.min_ps != min_ps || other.counts.size() != counts.size())
    throw AnalysisError("histogram binning mismatch");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  n_start_tags += other.n_start_tags;
  n_stop_tags += other.n_stop_tags;
  return *this;
}

DelayHistogram histogram(const std::vector<std::int64_t>& signal, const std::vector<std::int64_t>& idler,
                         double bin_width, double range_min, double range_max) {
  if (!(bin_width > 0.0)) throw AnalysisError("bin width must be positive");
  if (!(range_max > range_min)) throw AnalysisError("histogram range is empty");
  DelayHistogram h;
  h.bin_ps = ps_of(bin_width);
  if (h.bin_ps <= 0) throw AnalysisError("bin width below 1 ps");
  h.min_ps = ps_of(range_min);
  const auto n_bins = static_cast<std::size_t>(std::ceil((range_max - range_min) / bin_width - 1e-9));
  h.counts.assign(n_bins, 0);
  h.n_start_tags = idler.size();
  h.n_stop_tags = signal.size();
  const std::int64_t span = static_cast<std::int64_t>(n_bins) * h.bin_ps;

  std::size_t lo = 0;
  for (const std::int64_t ti : idler) {
    const std::int64_t first = ti + h.min_ps;
    while (lo < signal.size() && signal[lo] < first) ++lo;
    for (std::size_t k = lo; k < signal.size(); ++k) {
      const std::int64_t d = signal[k] - first;
      if (d >= span) break;
      ++h.counts[static_cast<std::size_t>(d / h.bin_ps)];
    }
  }
  return h;
}

WindowCount count_window(const DelayHistogram& h, const WindowSpec& w) {
  if (!(w.width > 0.0)) throw AnalysisError("window width must be positive");
  const std::int64_t lo = ps_of(w.center - 0.5 * w.width);
  const std::int64_t hi = ps_of(w.center + 0.5 * w.width);
  if (lo < h.min_ps || hi > h.min_ps + static_cast<std::int64_t>(h.counts.size()) * h.bin_ps)
    throw AnalysisError("window extends beyond histogram range");
  WindowCount c{w.center, w.width, 0};
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    // doubled centre keeps the comparison in integers
    const std::int64_t c2 = 2 * h.min_ps + (2 * static_cast<std::int64_t>(i) + 1) * h.bin_ps;
    if (c2 >= 2 * lo && c2 < 2 * hi) c.count += h.counts[i];
  }
  return c;
}

WindowCount count_coincidences(const std::vector<std::int64_t>& signal, const std::vector<std::int64_t>& idler,
                               const WindowSpec& w) {
  if (!(w.width > 0.0)) throw AnalysisError("window width must be positive");
  const std::int64_t lo = ps_of(w.center - 0.5 * w.width);
  const std::int64_t hi = ps_of(w.center + 0.5 * w.width);
  WindowCount c{w.center, w.width, 0};
  std::size_t k0 = 0;
  for (const std::int64_t ti : idler) {
    while (k0 < signal.size() && signal[k0] < ti + lo) ++k0;
    for (std::size_t k = k0; k < signal.size() && signal[k] < ti + hi; ++k) ++c.count;
  }
  return c;
}

G2Estimate g2si(const DelayHistogram& h, const WindowSpec& peak, const std::vector<double>& accidental_offsets) {
  if (accidental_offsets.size() < 3) throw AnalysisError("g2si needs at least 3 accidental windows");
  for (double off : accidental_offsets)
    if (std::abs(off) < peak.width) throw AnalysisError("accidental window overlaps the peak window");
  G2Estimate g;
  g.peak_count = count_window(h, peak).count;
  std::uint64_t acc = 0;
  for (double off : accidental_offsets) acc += count_window(h, {peak.center + off, peak.width}).count;
  const auto n = static_cast<double>(accidental_offsets.size());
  const auto np = static_cast<double>(g.peak_count);
  if (acc == 0) {
    g.lower_bound = true;
    g.accidental_mean = 0.0;
    g.g2 = np * n;
    g.sigma = 0.0;
    return g;
  }
  g.accidental_mean = static_cast<double>(acc) / n;
  g.g2 = np / g.accidental_mean;
  g.sigma = g.peak_count > 0 ? g.g2 * std::sqrt(1.0 / np + 1.0 / static_cast<double>(acc))
                             : 1.0 / g.accidental_mean;
  return g;
}

VisibilityFit fit_visibility(const std::vector<double>& phases, const std::vector<double>& counts) {
  const std::size_t n = phases.size();
  if (n != counts.size()) throw AnalysisError("phases and counts differ in length");
  std::vector<double> wrapped;
  for (double p : phases) {
    double w = std::fmod(p, 2 * std::numbers::pi);
    if (w < 0) w += 2 * std::numbers::pi;
    wrapped.push_back(w);
  }
  std::sort(wrapped.begin(), wrapped.end());
  wrapped.erase(std::unique(wrapped.begin(), wrapped.end(), [](double a, double b) { return b - a < 1e-9; }),
                wrapped.end());
  if (wrapped.size() < 4) throw AnalysisError("fit_visibility needs at least 4 distinct phases");
  double max_gap = 2 * std::numbers::pi - (wrapped.back() - wrapped.front());
  for (std::size_t i = 1; i < wrapped.size(); ++i) max_gap = std::max(max_gap, wrapped[i] - wrapped[i - 1]);
  if (max_gap >= std::numbers::pi) throw AnalysisError("fit_visibility: phases must span more than pi");

  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = std::cos(phases[i]);
    X(i, 2) = std::sin(phases[i]);
    y(i) = counts[i];
    w(i) = 1.0 / std::max(counts[i], 1.0);
  }
  Eigen::Vector3d beta = Eigen::Vector3d::Zero();
  Eigen::Matrix3d normal;
  for (int it = 0; it < 50; ++it) {
    normal = X.transpose() * w.asDiagonal() * X;
    const Eigen::Vector3d next = normal.ldlt().solve(X.transpose() * w.asDiagonal() * y);
    const bool converged = (next - beta).norm() <= 1e-12 * std::max(1.0, next.norm());
    beta = next;
    const Eigen::VectorXd mu = X * beta;
    for (std::size_t i = 0; i < n; ++i) w(i) = 1.0 / std::max(mu(i), 1e-3);
    if (converged) break;
  }
  normal = X.transpose() * w.asDiagonal() * X;
  if (std::abs(normal.determinant()) < 1e-300) throw AnalysisError("fit_visibility: degenerate design");
  const Eigen::Matrix3d cov = normal.inverse();

  const double a = beta(0), b = beta(1), c = beta(2);
  const double r = std::hypot(b, c);
  VisibilityFit f;
  f.baseline = a;
  f.baseline_sigma = std::sqrt(cov(0, 0));
  f.V = r / a;
  f.phase_offset = std::atan2(-c, b);
  Eigen::Vector3d gv(-r / (a * a), r > 0 ? b / (a * r) : 0.0, r > 0 ? c / (a * r) : 0.0);
  Eigen::Vector3d gp(0.0, r > 0 ? c / (r * r) : 0.0, r > 0 ? -b / (r * r) : 0.0);
  f.V_sigma = std::sqrt(gv.dot(cov * gv));
  f.phase_sigma = std::sqrt(gp.dot(cov * gp));
  return f;
}

CorrelatorEstimate correlator(const std::array<std::uint64_t, 4>& counts) {
  const double pp = static_cast<double>(counts[0]), pm = static_cast<double>(counts[1]);
  const double mp = static_cast<double>(counts[2]), mm = static_cast<double>(counts[3]);
  const double n = pp + pm + mp + mm;
  if (n <= 0.0) throw AnalysisError("correlator: all counts zero");
  const double np = pp + mm, nm = pm + mp;
  CorrelatorEstimate e;
  e.counts = counts;
  e.E = (np - nm) / n;
  e.sigma = 2.0 * std::sqrt(np * nm / (n * n * n));
  return e;
}

CorrelatorEstimate correlator(const std::array<WindowCount, 4>& counts) {
  for (const auto& c : counts)
    if (std::abs(c.width - counts[0].width) > 1e-15) throw AnalysisError("correlator windows differ in width");
  return correlator(std::array<std::uint64_t, 4>{counts[0].count, counts[1].count, counts[2].count, counts[3].count});
}

ChshEstimate chsh_S(const std::array<CorrelatorEstimate, 4>& e, const std::array<int, 4>& signs) {
  ChshEstimate r;
  double var = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    r.S += signs[i] * e[i].E;
    var += e[i].sigma * e[i].sigma;
  }
  r.sigma = std::sqrt(var);
  r.unphysical = std::abs(r.S) > kTsirelsonBound + 1e-9;
  return r;
}

void write_histogram_csv(std::ostream& os, const DelayHistogram& h) {
  os << "delay_s,counts\n";
  os.precision(12);
  for (std::size_t i = 0; i < h.counts.size(); ++i) os << h.bin_center(i) << ',' << h.counts[i] << '\n';
}

}  // namespace qmem
