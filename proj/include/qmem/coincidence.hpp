#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace qmem {

class AnalysisError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kClassicalG2Bound = 2.0;
inline constexpr double kTsirelsonBound = 2.8284271247461903;

// Counts of (t_signal - t_idler) in contiguous bins on an integer picosecond axis.
struct DelayHistogram {
  std::int64_t bin_ps = 0;
  std::int64_t min_ps = 0;
  std::vector<std::uint64_t> counts;
  std::uint64_t n_start_tags = 0;  // idler tags
  std::uint64_t n_stop_tags = 0;   // signal tags

  double bin_width() const { return static_cast<double>(bin_ps) * 1e-12; }
  double min() const { return static_cast<double>(min_ps) * 1e-12; }
  double max() const { return min() + static_cast<double>(counts.size()) * bin_width(); }
  double bin_center(std::size_t i) const { return min() + (static_cast<double>(i) + 0.5) * bin_width(); }
  std::uint64_t total() const;
  // Bin-wise sum with a histogram of identical binning (e.g. a disjoint time slice).
  DelayHistogram& operator+=(const DelayHistogram& other);
};

// Sorted two-pointer sweep, linear in the number of tags.
DelayHistogram histogram(const std::vector<std::int64_t>& signal, const std::vector<std::int64_t>& idler,
                         double bin_width, double range_min, double range_max);

struct WindowSpec {
  double center = 0.0;
  double width = 10e-9;
};

struct WindowCount {
  double center = 0.0;
  double width = 0.0;
  std::uint64_t count = 0;
};

// Sum of the bins whose centres fall in [center - width/2, center + width/2).
WindowCount count_window(const DelayHistogram& h, const WindowSpec& w);

// Coincidences with t_signal - t_idler in [center - width/2, center + width/2), from tags directly.
WindowCount count_coincidences(const std::vector<std::int64_t>& signal, const std::vector<std::int64_t>& idler,
                               const WindowSpec& w);

struct G2Estimate {
  double g2 = 0.0;
  double sigma = 0.0;
  std::uint64_t peak_count = 0;
  double accidental_mean = 0.0;
  bool lower_bound = false;  // no accidental counts: g2 assumes one accidental in total
};

// accidental_offsets: centres of the accidental windows relative to the peak centre.
G2Estimate g2si(const DelayHistogram& h, const WindowSpec& peak, const std::vector<double>& accidental_offsets);

struct VisibilityFit {
  double V = 0.0;
  double V_sigma = 0.0;
  double phase_offset = 0.0;  // model A (1 + V cos(phi + phase_offset))
  double phase_sigma = 0.0;
  double baseline = 0.0;
  double baseline_sigma = 0.0;
};

// Poisson-weighted (iteratively reweighted) least squares of a + b cos(phi) + c sin(phi).
VisibilityFit fit_visibility(const std::vector<double>& phases, const std::vector<double>& counts);

struct CorrelatorEstimate {
  double E = 0.0;
  double sigma = 0.0;
  std::array<std::uint64_t, 4> counts{};  // N++, N+-, N-+, N--
};

// Counts ordered (++, +-, -+, --).
CorrelatorEstimate correlator(const std::array<WindowCount, 4>& counts);
CorrelatorEstimate correlator(const std::array<std::uint64_t, 4>& counts);

struct ChshEstimate {
  double S = 0.0;
  double sigma = 0.0;
  bool unphysical = false;  // |S| above the Tsirelson bound
};

ChshEstimate chsh_S(const std::array<CorrelatorEstimate, 4>& e, const std::array<int, 4>& signs = {1, 1, 1, -1});

// Columns: delay_s, counts.
void write_histogram_csv(std::ostream& os, const DelayHistogram& h);

}  // namespace qmem
