#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qmem {

/// Physical dimension as integer exponents of time and pump power.
struct Dimension {
  int time = 0;
  int power = 0;
  constexpr bool operator==(const Dimension&) const = default;
};

namespace dim {
inline constexpr Dimension dimensionless{0, 0};
inline constexpr Dimension time{1, 0};
inline constexpr Dimension frequency{-1, 0};
inline constexpr Dimension power{0, 1};
inline constexpr Dimension rate_per_power{-1, -1};
}  // namespace dim

class UnitError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parses "<number> <unit>" (space optional, e.g. "25 ns", "40MHz", "290 kHz/mW")
/// into SI units (seconds, hertz, watts). A missing unit or a unit of the wrong
/// dimension is an error; bare numbers are never accepted.
double parse_quantity(std::string_view text, Dimension expected);

std::string to_string(Dimension d);

}  // namespace qmem
