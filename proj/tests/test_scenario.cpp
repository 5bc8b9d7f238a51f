#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "qmem/scenario.hpp"

using namespace qmem;
using doctest::Approx;
using nlohmann::json;

namespace {

json minimal() {
  return json::parse(R"({
    "name": "t",
    "experiment": "g2",
    "source": {"rate_per_power": "289.5 kHz/mW", "pump_power": "3 mW"},
    "signal": {"transmission": 0.5, "detector": {"efficiency": 0.3, "dark_rate": "100 Hz", "jitter": "350 ps"}},
    "integration": {"time": "2 s"}
  })");
}

}  // namespace

TEST_CASE("quantities are converted to SI") {
  const Scenario s = parse_scenario(minimal());
  CHECK(s.rate_per_power == Approx(289.5e3 / 1e-3));
  CHECK(s.pump_power == Approx(3e-3));
  CHECK(s.pair_rate(3e-3) == Approx(868.5e3));
  CHECK(s.signal_detector.dark_rate == Approx(100.0));
  CHECK(s.signal_detector.jitter_sigma == Approx(350e-12));
  CHECK(s.integration.time == Approx(2.0));
  CHECK(s.idler_channel.transmission == 1.0);
  CHECK(s.memory == MemoryMode::none);
}

TEST_CASE("bare numbers and wrong dimensions are rejected") {
  json j = minimal();
  j["source"]["pump_power"] = 3;
  CHECK_THROWS_AS(parse_scenario(j), ScenarioError);
  j = minimal();
  j["source"]["pump_power"] = "3";
  CHECK_THROWS_AS(parse_scenario(j), ScenarioError);
  j = minimal();
  j["source"]["pump_power"] = "3 ns";
  CHECK_THROWS_AS(parse_scenario(j), ScenarioError);
  j = minimal();
  j["integration"]["time"] = 2.0;
  CHECK_THROWS_AS(parse_scenario(j), ScenarioError);
  j = minimal();
  j["storage_times"] = {25, 50};
  CHECK_THROWS_AS(parse_scenario(j), ScenarioError);
}

TEST_CASE("unknown keys are rejected at every level") {
  json j = minimal();
  j["pump"] = "3 mW";
  CHECK_THROWS_AS(parse_scenario(j), ScenarioError);
  j = minimal();
  j["signal"]["detector"]["qe"] = 0.3;
  CHECK_THROWS_AS(parse_scenario(j), ScenarioError);
  j = minimal();
  j["memory"] = {{"mode", "afc"}, {"storage", "25 ns"}};
  CHECK_THROWS_AS(parse_scenario(j), ScenarioError);
}

TEST_CASE("value checks") {
  json j = minimal();
  j["signal"]["transmission"] = 1.5;
  CHECK_THROWS_AS(parse_scenario(j), ScenarioError);
  j = minimal();
  j["integration"]["time"] = "0 s";
  CHECK_THROWS_AS(parse_scenario(j), ScenarioError);
  j = minimal();
  j["experiment"] = "fringe_scan";
  CHECK_THROWS_AS(parse_scenario(j), ScenarioError);
  j = minimal();
  j["experiment"] = "bell";
  j["memory"] = {{"mode", "hybrid"}};
  CHECK_THROWS_AS(parse_scenario(j), ScenarioError);  // default variant needs double_readout
  j["bell"] = {{"variant", "hybrid"}};
  CHECK_NOTHROW(parse_scenario(j));
  j["bell"]["repetitions"] = 0;
  CHECK_THROWS_AS(parse_scenario(j), ScenarioError);
  j = minimal();
  j["memory"] = {{"mode", "teleport"}};
  CHECK_THROWS_AS(parse_scenario(j), ScenarioError);
  CHECK_THROWS_AS(load_scenario("/nonexistent.scenario"), ScenarioError);
}

TEST_CASE("phase lists accept degrees, radians and ranges") {
  json j = minimal();
  j["signal_phases"] = {{"start", "0 deg"}, {"stop", "360 deg"}, {"count", 12}};
  j["idler_phases"] = {"0 rad", "75 deg"};
  const Scenario s = parse_scenario(j);
  REQUIRE(s.signal_phases.size() == 12);
  CHECK(s.signal_phases[3] == Approx(M_PI / 2));
  CHECK(s.idler_phases[1] == Approx(75 * M_PI / 180));
}

TEST_CASE("default efficiency table keeps its two anchors and is monotone") {
  json j = minimal();
  j["storage_times"] = {"25 ns", "50 ns", "75 ns", "100 ns", "150 ns", "200 ns"};
  const Scenario s = parse_scenario(j);
  const auto& e = s.efficiency_table.entries();
  REQUIRE(e.size() == 6);
  int anchors = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (i > 0) CHECK(e[i].efficiency <= e[i - 1].efficiency);
    if (e[i].provenance == EfficiencyEntry::Provenance::paper) ++anchors;
  }
  CHECK(anchors == 2);
  CHECK(s.efficiency_table.at(25e-9) == 0.21);
  CHECK(s.efficiency_table.at(100e-9) == 0.12);
  CHECK(s.efficiency_table.at(50e-9) == Approx(0.21 * std::pow(0.12 / 0.21, 1.0 / 3)));
  CHECK(s.efficiency_table.at(200e-9) > 0.0);
  // Interpolation between entries is exponential and clamped outside.
  CHECK(s.efficiency_table.at(10e-9) == 0.21);
  CHECK(s.efficiency_table.at(1e-6) == e.back().efficiency);
}

TEST_CASE("explicit efficiency tables are validated") {
  json j = minimal();
  j["efficiency_table"] = json::array({{{"storage_time", "25 ns"}, {"efficiency", 0.1}},
                                       {{"storage_time", "50 ns"}, {"efficiency", 0.2}}});
  CHECK_THROWS_AS(parse_scenario(j), ScenarioError);
  j["efficiency_table"][1]["efficiency"] = 0.0;
  CHECK_THROWS_AS(parse_scenario(j), ScenarioError);
  j["efficiency_table"][1]["efficiency"] = 0.05;
  j["efficiency_table"][1]["provenance"] = "paper";
  const Scenario s = parse_scenario(j);
  CHECK(s.efficiency_table.entries()[1].provenance == EfficiencyEntry::Provenance::paper);
  CHECK(s.efficiency_table.at(37.5e-9) == Approx(std::sqrt(0.1 * 0.05)));
}

TEST_CASE("canonical form and hash are stable") {
  const Scenario a = parse_scenario(minimal());
  json reordered = json::parse(R"({
    "integration": {"time": "2000 ms"},
    "signal": {"detector": {"jitter": "0.35 ns", "dark_rate": "0.1 kHz", "efficiency": 0.3}, "transmission": 0.5},
    "source": {"pump_power": "3000 uW", "rate_per_power": "289.5 kHz/mW"},
    "experiment": "g2",
    "name": "t"
  })");
  const Scenario b = parse_scenario(reordered);
  // Equal up to the last ulp of unit conversion.
  const json ca = canonical_json(a), cb = canonical_json(b);
  CHECK(ca.dump() == canonical_json(parse_scenario(minimal())).dump());
  CHECK(ca["pump_power_W"].get<double>() == Approx(cb["pump_power_W"].get<double>()));
  CHECK(fnv1a64(ca.dump()) == fnv1a64(canonical_json(a).dump()));
  json c = minimal();
  c["seed"] = 2;
  CHECK(fnv1a64(canonical_json(parse_scenario(c)).dump()) != fnv1a64(ca.dump()));
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("bundled scenario files parse") {
  int n = 0;
  for (const auto& f : std::filesystem::directory_iterator(QMEM_SCENARIOS)) {
    if (f.path().extension() != ".scenario") continue;
    CAPTURE(f.path().string());
    CHECK_NOTHROW(load_scenario(f.path().string()));
    ++n;
  }
  CHECK(n == 8);
}
