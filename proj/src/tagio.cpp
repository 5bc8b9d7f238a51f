#include "qmem/tagio.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <ostream>

namespace qmem {

namespace {

void put_record(std::vector<char>& buf, std::uint8_t channel, std::int64_t ps) {
  const auto v = static_cast<std::uint64_t>(ps);
  buf.push_back(static_cast<char>(channel));
  for (int b = 0; b < 8; ++b) buf.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

}  // namespace

void write_tags(std::ostream& os, const TagStream& tags) {
  const auto& s = tags.channels[TagStream::kSignal];
  const auto& i = tags.channels[TagStream::kIdler];
  std::vector<char> buf;
  constexpr std::size_t kChunk = 1 << 16;
  buf.reserve(kChunk * kTagRecordBytes + kTagRecordBytes);
  std::size_t a = 0, b = 0;
  while (a < s.size() || b < i.size()) {
    if (b >= i.size() || (a < s.size() && s[a] <= i[b]))
      put_record(buf, TagStream::kSignal, s[a++]);
    else
      put_record(buf, TagStream::kIdler, i[b++]);
    if (buf.size() >= kChunk * kTagRecordBytes) {
      os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw TagFormatError("failed writing tag stream");
}

void write_tags(const std::string& path, const TagStream& tags) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw TagFormatError("cannot open " + path + " for writing");
  write_tags(os, tags);
}

TagStream read_tags(std::istream& is, std::int64_t duration_ps) {
  TagStream t;
  std::array<unsigned char, kTagRecordBytes> rec{};
  std::int64_t last = -1;
  while (is.read(reinterpret_cast<char*>(rec.data()), kTagRecordBytes)) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(rec[1 + b]) << (8 * b);
    const auto ps = static_cast<std::int64_t>(v);
    if (rec[0] > 1) throw TagFormatError("unknown channel id " + std::to_string(rec[0]));
    if (ps < last) throw TagFormatError("tag records out of time order");
    last = ps;
    t.channels[rec[0]].push_back(ps);
  }
  if (is.gcount() != 0) throw TagFormatError("truncated tag record");
  t.duration_ps = duration_ps >= 0 ? duration_ps : std::max<std::int64_t>(last, 0);
  if (!t.is_sorted()) throw TagFormatError("timestamps exceed the stated duration");
  return t;
}

TagStream read_tags(const std::string& path, std::int64_t duration_ps) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw TagFormatError("cannot open " + path);
  return read_tags(is, duration_ps);
}

}  // namespace qmem
