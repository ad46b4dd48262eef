#include "doctest.h"

#include "twpp/io.hpp"
#include "twpp/runner.hpp"

#include <chrono>
#include <thread>
#include <cstring>
#include <filesystem>

using namespace twpp;
using nlohmann::json;

namespace {

json minimal_config(const std::string& outdir) {
  json j;
  j["grid"] = {{"x_min", -8.0}, {"x_max", 8.0}, {"n_points", 64}};
  j["initial_state"] = {{"alpha0", {{2.0, 0.0}, {0.0, 0.0}}}};
  j["observation_times"] = {0.0, 0.05};
  j["n_trajectories"] = 50;
  j["n_modes"] = 4;
  j["seed"] = 11;
  j["output"] = outdir;
  return j;
}

std::string outdir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("twpp_test_" + name);
  std::filesystem::remove_all(p);
  return p.string();
}

}  // namespace

TEST_CASE("config parsing: defaults, unknown keys, value checks") {
  SUBCASE("defaults applied") {
    json j = minimal_config("x");
    j.erase("n_modes");
    j["grid"]["n_points"] = 257;
    RunConfig c = parse_config_json(j);
    CHECK(c.n_modes == 12);
    CHECK(c.dt == 1e-3);
    CHECK(c.flags.deterministic_merge);
    CHECK(c.correlations.occupations);
  }

  SUBCASE("unknown key is named") {
    json j = minimal_config("x");
    j["temprature"] = 3.0;
    CHECK_THROWS_WITH_AS(parse_config_json(j),
                         doctest::Contains("temprature"), ConfigError);
  }

  SUBCASE("zero trajectories rejected") {
    json j = minimal_config("x");
    j["n_trajectories"] = 0;
    CHECK_THROWS_AS(parse_config_json(j), ConfigError);
  }

  SUBCASE("every violation listed at once") {
    json j = minimal_config("x");
    j["n_trajectories"] = 0;
    j["dt"] = -1.0;
    j["bogus"] = 1;
    try {
      parse_config_json(j);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      std::string msg = e.what();
      CHECK(msg.find("n_trajectories") != std::string::npos);
      CHECK(msg.find("dt") != std::string::npos);
      CHECK(msg.find("bogus") != std::string::npos);
    }
  }

  SUBCASE("config hash is stable and ignores the worker count") {
    RunConfig a = parse_config_json(minimal_config("x"));
    RunConfig b = parse_config_json(minimal_config("x"));
    b.workers = 7;
    CHECK(a.hash() == b.hash());
    b.seed = 99;
    CHECK(a.hash() != b.hash());
  }
}

TEST_CASE("ensemble runs are byte-identical across repeats and worker counts") {
  json j = minimal_config(outdir("det1"));
  j["g_strength"] = 0.2;  // interaction on, so noise channels are active
  j["correlations"] = {{"occupations", true},
                       {"g1_pairs", {{0.0, 0.5}}},
                       {"g1_diagonal", true}};
  j["workers"] = 1;
  RunConfig c1 = parse_config_json(j);
  RunReport r1 = run_ensemble(c1);
  CHECK(r1.exit_code == 0);
  CHECK(r1.diverged == 0);

  std::string occ1 = read_text_file(c1.output_dir + "/occupations.csv");
  std::string g11 = read_text_file(c1.output_dir + "/g1_pairs.csv");

  SUBCASE("same worker count, repeated run") {
    json j2 = j;
    j2["output"] = outdir("det2");
    RunConfig c2 = parse_config_json(j2);
    RunReport r2 = run_ensemble(c2);
    CHECK(read_text_file(c2.output_dir + "/occupations.csv") == occ1);
    CHECK(read_text_file(c2.output_dir + "/g1_pairs.csv") == g11);
    CHECK(r2.derivation_hash == r1.derivation_hash);
  }

  SUBCASE("two workers, deterministic merge") {
    json j2 = j;
    j2["output"] = outdir("det3");
    j2["workers"] = 2;
    RunConfig c2 = parse_config_json(j2);
    RunReport r2 = run_ensemble(c2);
    CHECK(read_text_file(c2.output_dir + "/occupations.csv") == occ1);
    CHECK(read_text_file(c2.output_dir + "/g1_diagonal.csv") ==
          read_text_file(c1.output_dir + "/g1_diagonal.csv"));
  }
}

TEST_CASE("divergence-dominated run: cap 0 diverges everything") {
  json j = minimal_config(outdir("divg"));
  j["divergence_cap"] = 0.0;
  RunConfig c = parse_config_json(j);
  RunReport r = run_ensemble(c);
  CHECK(r.diverged == c.n_trajectories);
  CHECK(r.diverged_fraction == 1.0);
  CHECK(r.exit_code == 4);
  // correlation files hold headers only
  std::string occ = read_text_file(c.output_dir + "/occupations.csv");
  size_t lines = std::count(occ.begin(), occ.end(), '\n');
  CHECK(lines == 2);  // provenance comment + column header
}

TEST_CASE("report integrity: files exist and embed the config hash") {
  json j = minimal_config(outdir("integrity"));
  j["flags"] = {{"dump_derivation", true}, {"dump_trajectories", true}};
  j["correlations"] = {{"g1_pairs", {{-0.5, 0.5}}}};
  RunConfig c = parse_config_json(j);
  RunReport r = run_ensemble(c);

  for (const std::string& f : r.files) {
    auto path = std::filesystem::path(c.output_dir) / f;
    REQUIRE_MESSAGE(std::filesystem::exists(path), f);
    if (path.extension() == ".csv") {
      std::string head = read_text_file(path.string()).substr(0, 200);
      CHECK(head.find(r.config_hash) != std::string::npos);
    }
    if (path.extension() == ".json") {
      json parsed = json::parse(read_text_file(path.string()));
      CHECK(parsed["config_hash"] == r.config_hash);
    }
  }
  json report = json::parse(read_text_file(c.output_dir + "/report.json"));
  CHECK(report["config_hash"] == r.config_hash);
  CHECK(report["derivation_hash"] == r.derivation_hash);

  // binary dump header: magic, n_modes, n_times, n_trajectories
  std::string bin = read_text_file(c.output_dir + "/trajectories.bin");
  REQUIRE(bin.size() >= 24);
  CHECK(bin.substr(0, 8) == "TWPPTRJ1");
  uint32_t nm, nt;
  uint64_t ntr;
  std::memcpy(&nm, bin.data() + 8, 4);
  std::memcpy(&nt, bin.data() + 12, 4);
  std::memcpy(&ntr, bin.data() + 16, 8);
  CHECK(nm == 4);
  CHECK(nt == 2);
  CHECK(ntr == 50);
  // completed trajectories: 17-byte record head + samples
  size_t expect = 24 + 50 * (17 + 2 * 8 * 16);
  CHECK(bin.size() == expect);
}

TEST_CASE("oracle path: caps enforced") {
  json j = minimal_config(outdir("oraclecap"));
  j["n_modes"] = 6;
  RunConfig c = parse_config_json(j);
  CHECK_THROWS_AS(run_oracle_compare(c), ConfigError);
}

namespace {

// Per-unit-work slowdown of this machine when two independent FP-bound
// threads run instead of one. Virtualized 2-vCPU boxes often deliver well
// under 2x; the ensemble scaling bound below is checked against whichever
// is weaker, the 0.65 contract or the hardware ceiling plus margin.
double machine_dual_core_ratio() {
  auto burn = [](double* out) {
    double x = 1.0;
    for (long i = 0; i < 400000000L; ++i) x = x * 1.0000001 + 1e-9;
    *out = x;
  };
  double sink1 = 0.0, sink2 = 0.0, sink3 = 0.0;
  auto t0 = std::chrono::steady_clock::now();
  burn(&sink1);
  double serial =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  t0 = std::chrono::steady_clock::now();
  std::thread th(burn, &sink2);
  burn(&sink3);
  th.join();
  double dual =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  (void)(sink1 + sink2 + sink3);
  return dual / (2.0 * serial);
}

}  // namespace

TEST_CASE("strong-scaling sanity: two workers track the hardware ceiling "
          "(0.65x contract on full dual-core machines)") {
  json j = minimal_config(outdir("scale"));
  j["n_trajectories"] = 10000;
  j["g_strength"] = 0.1;
  j["observation_times"] = {0.0, 0.2};
  auto timed = [&](size_t workers) {
    json jw = j;
    jw["workers"] = workers;
    jw["output"] = outdir("scale_w" + std::to_string(workers));
    RunConfig c = parse_config_json(jw);
    auto t0 = std::chrono::steady_clock::now();
    run_ensemble(c);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };
  double ceiling = machine_dual_core_ratio();
  double t1 = timed(1);
  double t2 = timed(2);
  double bound = std::max(0.65, ceiling + 0.08);
  MESSAGE("t2/t1 = ", t2 / t1, ", machine dual-core ratio = ", ceiling,
          ", bound = ", bound);
  CHECK(t2 / t1 <= bound);
}
