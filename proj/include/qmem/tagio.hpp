#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>

#include "qmem/montecarlo.hpp"

// Binary tag format: a sequence of 9-byte little-endian records
// (uint8 channel, uint64 picosecond timestamp) in time order; ties put the
// signal channel (0) first.

namespace qmem {

class TagFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kTagRecordBytes = 9;

void write_tags(std::ostream& os, const TagStream& tags);
void write_tags(const std::string& path, const TagStream& tags);

// duration_ps < 0 takes the last timestamp as the duration.
TagStream read_tags(std::istream& is, std::int64_t duration_ps = -1);
TagStream read_tags(const std::string& path, std::int64_t duration_ps = -1);

}  // namespace qmem
