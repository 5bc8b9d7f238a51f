#include "qmem/units.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>

namespace qmem {

namespace {

struct UnitEntry {
  std::string_view symbol;
  Dimension dim;
  double scale;
};

constexpr std::array<UnitEntry, 22> kUnits{{
    {"s", dim::time, 1.0},
    {"ms", dim::time, 1e-3},
    {"us", dim::time, 1e-6},
    {"\xC2\xB5s", dim::time, 1e-6},
    {"ns", dim::time, 1e-9},
    {"ps", dim::time, 1e-12},
    {"fs", dim::time, 1e-15},
    {"min", dim::time, 60.0},
    {"h", dim::time, 3600.0},
    {"Hz", dim::frequency, 1.0},
    {"kHz", dim::frequency, 1e3},
    {"MHz", dim::frequency, 1e6},
    {"GHz", dim::frequency, 1e9},
    {"THz", dim::frequency, 1e12},
    {"W", dim::power, 1.0},
    {"mW", dim::power, 1e-3},
    {"uW", dim::power, 1e-6},
    {"\xC2\xB5W", dim::power, 1e-6},
    {"1", dim::dimensionless, 1.0},
    {"%", dim::dimensionless, 1e-2},
    {"rad", dim::dimensionless, 1.0},
    {"deg", dim::dimensionless, 0.017453292519943295},
}};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

const UnitEntry* lookup(std::string_view sym) {
  for (const auto& u : kUnits)
    if (u.symbol == sym) return &u;
  return nullptr;
}

}  // namespace

std::string to_string(Dimension d) {
  return "time^" + std::to_string(d.time) + " power^" + std::to_string(d.power);
}

double parse_quantity(std::string_view text, Dimension expected) {
  const std::string_view s = trim(text);
  if (s.empty()) throw UnitError("empty quantity");

  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{}) throw UnitError("malformed number in '" + std::string(text) + "'");
  if (!std::isfinite(value)) throw UnitError("non-finite quantity '" + std::string(text) + "'");

  const std::string_view unit = trim(std::string_view(ptr, s.data() + s.size() - ptr));
  if (unit.empty())
    throw UnitError("missing unit in '" + std::string(text) + "' (expected " + to_string(expected) + ")");

  Dimension d{};
  double scale = 1.0;
  const auto slash = unit.find('/');
  const std::string_view num = trim(unit.substr(0, slash));
  const UnitEntry* n = lookup(num);
  if (!n) throw UnitError("unknown unit '" + std::string(num) + "'");
  d = n->dim;
  scale = n->scale;
  if (slash != std::string_view::npos) {
    const std::string_view den = trim(unit.substr(slash + 1));
    const UnitEntry* q = lookup(den);
    if (!q || q->symbol == "%") throw UnitError("unknown unit '" + std::string(den) + "'");
    d.time -= q->dim.time;
    d.power -= q->dim.power;
    scale /= q->scale;
  }
  if (!(d == expected))
    throw UnitError("unit '" + std::string(unit) + "' has dimension " + to_string(d) + ", expected " +
                    to_string(expected));
  return value * scale;
}

}  // namespace qmem
