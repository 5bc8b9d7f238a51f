#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "qmem/tagio.hpp"

using namespace qmem;

namespace {

TagStream sample_stream() {
  McConfig c;
  c.source.pair_rate = 2e4;
  c.signal_analyzer = fiber_interferometer(25e-9, 0.3);
  c.idler_analyzer = fiber_interferometer(25e-9, 0.0);
  c.signal_detector = {0.5, 300.0, 350e-12};
  c.idler_detector = {0.5, 100.0, 100e-12};
  c.duration = 0.5;
  c.slice_duration = 0.1;
  c.seed = 99;
  c.threads = 1;
  return run_experiment(c).tags;
}

std::string encode(const TagStream& t) {
  std::ostringstream os(std::ios::binary);
  write_tags(os, t);
  return os.str();
}

}  // namespace

TEST_CASE("record layout is little-endian channel + u64 picoseconds") {
  TagStream t;
  t.channels[0] = {0x0102030405LL};
  t.channels[1] = {7};
  t.duration_ps = 0x0102030405LL;
  const std::string b = encode(t);
  REQUIRE(b.size() == 2 * kTagRecordBytes);
  CHECK(b[0] == 1);  // idler at 7 ps first
  CHECK(b[1] == 7);
  CHECK(b[9] == 0);
  CHECK(static_cast<unsigned char>(b[10]) == 0x05);
  CHECK(static_cast<unsigned char>(b[14]) == 0x01);
  CHECK(b[17] == 0);
}

TEST_CASE("ties put the signal channel first") {
  TagStream t;
  t.channels[0] = {10};
  t.channels[1] = {10};
  t.duration_ps = 10;
  const std::string b = encode(t);
  CHECK(b[0] == 0);
  CHECK(b[9] == 1);
}

TEST_CASE("round trip through a stream and a file") {
  const TagStream t = sample_stream();
  REQUIRE(t.size() > 1000);
  std::istringstream is(encode(t), std::ios::binary);
  CHECK(read_tags(is, t.duration_ps) == t);

  const auto path = std::filesystem::temp_directory_path() / "qmem_tagio_test.bin";
  write_tags(path.string(), t);
  CHECK(std::filesystem::file_size(path) == t.size() * kTagRecordBytes);
  CHECK(read_tags(path.string(), t.duration_ps) == t);
  std::filesystem::remove(path);
}

TEST_CASE("fixed seed gives bit-identical files") {
  CHECK(encode(sample_stream()) == encode(sample_stream()));
}

TEST_CASE("duration defaults to the last timestamp") {
  TagStream t;
  t.channels[0] = {5, 900};
  t.channels[1] = {40};
  std::istringstream is(encode(t), std::ios::binary);
  CHECK(read_tags(is).duration_ps == 900);
  std::istringstream empty(std::string{}, std::ios::binary);
  const TagStream e = read_tags(empty);
  CHECK(e.size() == 0);
  CHECK(e.duration_ps == 0);
}

TEST_CASE("malformed input is rejected") {
  TagStream t;
  t.channels[0] = {5, 900};
  t.duration_ps = 900;
  const std::string good = encode(t);

  std::istringstream truncated(good.substr(0, good.size() - 3), std::ios::binary);
  CHECK_THROWS_AS(read_tags(truncated), TagFormatError);

  std::string bad_channel = good;
  bad_channel[0] = 2;
  std::istringstream c(bad_channel, std::ios::binary);
  CHECK_THROWS_AS(read_tags(c), TagFormatError);

  const std::string swapped = good.substr(kTagRecordBytes) + good.substr(0, kTagRecordBytes);
  std::istringstream o(swapped, std::ios::binary);
  CHECK_THROWS_AS(read_tags(o), TagFormatError);

  std::istringstream d(good, std::ios::binary);
  CHECK_THROWS_AS(read_tags(d, 100), TagFormatError);

  CHECK_THROWS_AS(read_tags(std::string("/nonexistent/dir/tags.bin")), TagFormatError);
}
