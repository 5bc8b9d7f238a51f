#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qmem/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = QMEM_CLI;
const std::string kScenarios = QMEM_SCENARIOS;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "qmem_cli_test" / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

int cli(const std::string& args) {
  const int rc = std::system((kCli + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::string scenario_file(const std::string& name) { return kScenarios + "/" + name + ".scenario"; }

fs::path write_scenario(const std::string& name, const json& j) {
  const fs::path p = scratch(name);
  std::ofstream(p) << j.dump(2);
  return p;
}

json source(const std::string& name) {
  std::ifstream is(scenario_file(name));
  return json::parse(is, nullptr, true, true);
}

}  // namespace

TEST_CASE("run writes summary, histogram and manifest") {
  const fs::path out = scratch("run_g2");
  REQUIRE(cli("run " + scenario_file("g2_no_memory") + " -o " + out.string()) == 0);
  for (const char* f : {"summary.json", "manifest.json", "histogram.csv"}) CHECK(fs::exists(out / f));
  const json summary = read_json(out / "summary.json");
  CHECK(summary.at("schema") == "qmem.summary/1");
  CHECK(summary.at("g2").get<double>() > 2.0);
  const json manifest = read_json(out / "manifest.json");
  CHECK(manifest.at("seed") == 20110001);
  CHECK(manifest.at("version").is_string());
  const std::string canonical = manifest.at("scenario").dump();
  std::ostringstream hex;
  hex << std::hex;
  hex.width(16);
  hex.fill('0');
  hex << qmem::fnv1a64(canonical);
  CHECK(manifest.at("scenario_hash") == hex.str());
  CHECK(slurp(out / "histogram.csv").rfind("delay_s,counts\n", 0) == 0);
}

TEST_CASE("pump scan run writes the g2-vs-power table") {
  const fs::path out = scratch("run_fig2a");
  REQUIRE(cli("run " + scenario_file("fig2a_pump_scan") + " -o " + out.string()) == 0);
  const std::string csv = slurp(out / "g2_vs_power.csv");
  CHECK(csv.rfind("pump_power_W,storage_time_s,efficiency,integration_time_s,g2,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);
}

TEST_CASE("re-running a manifest reproduces every output byte for byte") {
  const fs::path a = scratch("manifest_a"), b = scratch("manifest_b");
  REQUIRE(cli("run " + scenario_file("g2_afc_25ns") + " --seed 77 --save-tags -o " + a.string()) == 0);
  REQUIRE(cli("run " + (a / "manifest.json").string() + " --save-tags -o " + b.string()) == 0);
  int n = 0;
  for (const auto& f : fs::directory_iterator(a)) {
    CAPTURE(f.path().filename().string());
    CHECK(slurp(f.path()) == slurp(b / f.path().filename()));
    ++n;
  }
  CHECK(n == 5);  // summary.json, histogram.csv, tags.bin, tags.json, manifest.json
  CHECK(read_json(a / "manifest.json").at("seed") == 77);
}

TEST_CASE("results do not depend on the thread count") {
  const fs::path a = scratch("threads_1"), b = scratch("threads_4");
  REQUIRE(cli("run " + scenario_file("bell_partial_noiseless") + " --threads 1 -o " + a.string()) == 0);
  REQUIRE(cli("run " + scenario_file("bell_partial_noiseless") + " --threads 4 -o " + b.string()) == 0);
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
  CHECK(slurp(a / "bell_runs.csv") == slurp(b / "bell_runs.csv"));
}

TEST_CASE("seed override changes the draw") {
  const fs::path a = scratch("seed_a"), b = scratch("seed_b");
  REQUIRE(cli("run " + scenario_file("g2_no_memory") + " --seed 1 -o " + a.string()) == 0);
  REQUIRE(cli("run " + scenario_file("g2_no_memory") + " --seed 2 -o " + b.string()) == 0);
  CHECK(slurp(a / "histogram.csv") != slurp(b / "histogram.csv"));
}

TEST_CASE("analyze of saved tags equals the in-memory analysis") {
  const fs::path run = scratch("analyze_run"), an = scratch("analyze_out");
  REQUIRE(cli("run " + scenario_file("g2_afc_25ns") + " --save-tags -o " + run.string()) == 0);
  REQUIRE(cli("analyze " + (run / "tags.bin").string() + " --window 10ns --center 25ns -o " + an.string()) == 0);
  const json mem = read_json(run / "summary.json").at("point");
  const json file = read_json(an / "summary.json");
  CHECK(file.at("peak_count") == mem.at("peak_count"));
  CHECK(file.at("accidental_mean") == mem.at("accidental_mean"));
  CHECK(file.at("g2") == mem.at("g2"));
  CHECK(file.at("g2_sigma") == mem.at("g2_sigma"));
  const json side = read_json(run / "tags.json");
  CHECK(fs::file_size(run / "tags.bin") ==
        (side.at("signal_tags").get<std::size_t>() + side.at("idler_tags").get<std::size_t>()) * 9);
}

TEST_CASE("comb at 40 MHz echoes after 25 ns") {
  // Depth 1: higher optical depth advances the echo centroid (about 1 ns at depth 4).
  const fs::path out = scratch("comb");
  REQUIRE(cli("comb --period 40MHz --finesse 4 --depth 1 -o " + out.string()) == 0);
  const json r = read_json(out / "echo_report.json");
  CHECK(r.at("storage_time_s").get<double>() == doctest::Approx(25e-9));
  const json& e = r.at("echoes").at(0);
  CHECK(std::abs(e.at("centroid_s").get<double>() - 25e-9) < 0.5e-9);  // one time bin at 2 GHz span
  CHECK(e.at("efficiency").get<double>() > 0.02);
  CHECK(fs::exists(out / "comb.csv"));
  CHECK(fs::exists(out / "envelope.csv"));
}

TEST_CASE("bell subcommand selects the variant") {
  const fs::path out = scratch("bell");
  REQUIRE(cli("bell " + scenario_file("bell_hybrid") + " --variant hybrid -o " + out.string()) == 0);
  const json s = read_json(out / "summary.json");
  CHECK(s.at("variant") == "hybrid");
  CHECK(s.at("correlators").size() == 4);
  for (const auto& c : s.at("correlators")) {
    const double p = c.at("conclusive_probability").get<double>();
    CHECK(p > 0.0);
    CHECK(p <= 1.0);
  }
  CHECK(s.at("S").get<double>() > 2.0);
  // A hybrid run needs a hybrid memory.
  CHECK(cli("bell " + scenario_file("bell_partial_noiseless") + " --variant hybrid -o " + out.string()) == 2);
}

TEST_CASE("calibrate reports the rate reproducing the target") {
  const fs::path out = scratch("calibrate");
  REQUIRE(cli("calibrate " + scenario_file("g2_afc_25ns") + " --target-g2 115 -o " + out.string()) == 0);
  const json c = read_json(out / "calibration.json");
  CHECK(c.at("predicted_g2_no_memory").get<double>() == doctest::Approx(115.0));
  CHECK(c.at("rate_per_power_Hz_per_W").get<double>() > 0.0);
}

TEST_CASE("analytic modes run without Monte Carlo") {
  const fs::path out = scratch("analytic");
  REQUIRE(cli("run " + scenario_file("fig3_fringes") + " --mode noiseless -o " + out.string()) == 0);
  CHECK(read_json(out / "summary.json").at("V").get<double>() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(cli("run " + scenario_file("fig3_fringes") + " --mode guess -o " + out.string()) == 2);
}

TEST_CASE("invalid input exits with 2") {
  const fs::path out = scratch("invalid");
  CHECK(cli("run /nonexistent/file.scenario -o " + out.string()) == 2);
  json bare = source("g2_no_memory");
  bare["source"]["pump_power"] = 3;
  CHECK(cli("run " + write_scenario("bare.scenario", bare).string() + " -o " + out.string()) == 2);
  json unknown = source("g2_no_memory");
  unknown["pump"] = "3 mW";
  CHECK(cli("run " + write_scenario("unknown.scenario", unknown).string() + " -o " + out.string()) == 2);
  const fs::path junk = scratch("junk.bin");
  std::ofstream(junk) << "not a tag file";
  CHECK(cli("analyze " + junk.string() + " -o " + out.string()) == 2);
  CHECK(cli("comb --period 40 -o " + out.string()) == 2);
  CHECK(cli("frobnicate") == 2);
  CHECK(cli("run " + scenario_file("g2_no_memory") + " --threads x") == 2);
  const fs::path file = scratch("a_file");
  std::ofstream(file) << "x";
  CHECK(cli("run " + scenario_file("g2_no_memory") + " -o " + file.string()) == 2);
}

TEST_CASE("runtime failure exits with 3") {
  // No signal transmission: no true coincidences to size the integration by.
  json dead = source("g2_no_memory");
  dead["signal"]["transmission"] = 0.0;
  CHECK(cli("run " + write_scenario("dead.scenario", dead).string() + " -o " + scratch("dead").string()) == 3);
}

TEST_CASE("help lists the CSV columns") {
  const fs::path out = scratch("help.txt");
  CHECK(std::system((kCli + " run --help > " + out.string() + " 2>&1").c_str()) == 0);
  const std::string text = slurp(out);
  CHECK(text.find("delay_s,counts") != std::string::npos);
  CHECK(cli("--help") == 0);
}
