// Black-box tests for the command-line tool: exit-code contract, file outputs,
// rerun determinism, thread invariance. The binary path arrives via the
// SPINFORGE_CLI environment variable (set by the test registration).
#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "spinforge/io.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("SPINFORGE_CLI");
  REQUIRE(p != nullptr);
  REQUIRE(fs::exists(p));
  return p;
}

struct Workspace {
  fs::path root;
  Workspace() {
    root = fs::temp_directory_path() / ("spinforge_cli_" + std::to_string(::getpid()));
    fs::create_directories(root);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(root, ec);
  }
  std::string dir(const std::string& name) const { return (root / name).string(); }
  std::string file(const std::string& name) const { return (root / name).string(); }
};

int run(const std::string& cmd, const std::string& log) {
  const std::string full = cmd + " > " + log + " 2>&1";
  const int status = std::system(full.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  Workspace ws;
  const std::string cli = cli_path();
  const std::string log = ws.file("log.txt");
  REQUIRE(run(cli + " frobnicate", log) == 2);
  REQUIRE(run(cli + " scan --bogus-flag", log) == 2);
  REQUIRE(run(cli + " scan", log) == 2);  // neither --config nor --preset
  REQUIRE(run(cli + " scan --config " + ws.file("absent.json"), log) == 2);
  REQUIRE(run(cli + " scan --config x.json --preset fig2", log) == 2);
  REQUIRE(run(cli + " scan --preset fig9", log) == 2);
  REQUIRE(run(cli + " calibrate --preset fig2 --format yaml", log) == 2);
}

TEST_CASE("calibrate reports the derived geometry in both formats") {
  Workspace ws;
  const std::string cli = cli_path();
  const std::string out = ws.dir("cal");
  REQUIRE(run(cli + " calibrate --preset config_a --out " + out, ws.file("log.txt")) == 0);
  const auto j = spinforge::parse_json(slurp(out + "/calibrate.json"), "calibrate.json");
  const double eta = j.at("eta").get<double>();
  REQUIRE(eta > 0.131);
  REQUIRE(eta < 0.135);
  const double p = j.at("p").get<double>();
  REQUIRE(p > 21.8);
  REQUIRE(p < 22.2);

  REQUIRE(run(cli + " calibrate --preset config_b --format csv --out " + out,
              ws.file("log.txt")) == 0);
  const std::string csv = slurp(out + "/calibrate.csv");
  REQUIRE(csv.rfind("quantity,value\n", 0) == 0);
  REQUIRE(csv.find("\neta,") != std::string::npos);
  REQUIRE(csv.find("\np,") != std::string::npos);
}

TEST_CASE("scan is deterministic across reruns and thread counts") {
  Workspace ws;
  const std::string cli = cli_path();
  const std::string log = ws.file("log.txt");
  REQUIRE(run(cli + " scan --preset fig2 --out " + ws.dir("a"), log) == 0);
  REQUIRE(run(cli + " scan --preset fig2 --out " + ws.dir("b"), log) == 0);
  REQUIRE(run("SPINFORGE_THREADS=1 " + cli + " scan --preset fig2 --out " + ws.dir("c"), log) ==
          0);
  REQUIRE(run("SPINFORGE_THREADS=4 " + cli + " scan --preset fig2 --out " + ws.dir("d"), log) ==
          0);
  for (const char* name : { "scan_phi_0.csv", "scan_phi_1.csv", "scan_phi_0.json",
                            "scan_phi_1.json" }) {
    const std::string a = slurp(ws.dir("a") + "/" + name);
    REQUIRE(a == slurp(ws.dir("b") + "/" + name));
    REQUIRE(a == slurp(ws.dir("c") + "/" + name));
    REQUIRE(a == slurp(ws.dir("d") + "/" + name));
  }

  // two analysis angles, 36 phase points each, attributed to the right angle
  const auto scan0 =
      spinforge::scan_from_json(spinforge::parse_json(slurp(ws.dir("a") + "/scan_phi_0.json"),
                                                      "scan_phi_0.json"));
  const auto scan1 =
      spinforge::scan_from_json(spinforge::parse_json(slurp(ws.dir("a") + "/scan_phi_1.json"),
                                                      "scan_phi_1.json"));
  REQUIRE(scan0.records.size() == 36);
  REQUIRE(scan1.records.size() == 36);
  REQUIRE(scan0.metadata.theta == 0.54 * spinforge::pi);
  REQUIRE(scan1.metadata.theta == 0.66 * spinforge::pi);
  REQUIRE(scan0.metadata.sequence == "double_w");
  REQUIRE(scan0.metadata.seed != scan1.metadata.seed);
}

TEST_CASE("simulate, tomo, and fit-model chain through files") {
  Workspace ws;
  const std::string cli = cli_path();
  const std::string log = ws.file("log.txt");

  REQUIRE(run(cli + " simulate --preset fig2 --out " + ws.dir("sim"), log) == 0);
  const auto st = spinforge::parse_json(slurp(ws.dir("sim") + "/state.json"), "state.json");
  const double f_state = st.at("metrics").at("fidelity").get<double>();
  REQUIRE(f_state > 0.80);
  REQUIRE(f_state < 0.86);
  double pop_sum = 0;
  for (const auto& v : st.at("populations")) pop_sum += v.get<double>();
  REQUIRE(std::abs(pop_sum - 1.0) < 1e-12);

  REQUIRE(run(cli + " scan --preset fig2 --out " + ws.dir("scans"), log) == 0);
  const std::string f0 = ws.dir("scans") + "/scan_phi_0";
  const std::string f1 = ws.dir("scans") + "/scan_phi_1";
  REQUIRE(run(cli + " tomo " + f0 + ".json " + f1 + ".json --out " + ws.dir("tomo"), log) == 0);
  const auto tj = spinforge::parse_json(slurp(ws.dir("tomo") + "/tomo.json"), "tomo.json");
  const double f_rec = tj.at("metrics").at("fidelity").get<double>();
  REQUIRE(f_rec > 0.70);
  REQUIRE(f_rec < 0.95);
  REQUIRE(tj.at("null_space_dims").get<int>() == 3);
  std::istringstream bars(slurp(ws.dir("tomo") + "/rho_bars.csv"));
  int lines = 0;
  for (std::string line; std::getline(bars, line);) ++lines;
  REQUIRE(lines == 17);

  // CSV inputs carry the same counts, so the reconstruction must agree exactly
  REQUIRE(run(cli + " tomo " + f0 + ".csv " + f1 + ".csv --out " + ws.dir("tomo_csv"), log) == 0);
  const auto tc = spinforge::parse_json(slurp(ws.dir("tomo_csv") + "/tomo.json"), "tomo.json");
  REQUIRE(tc.at("metrics").at("fidelity").get<double>() == f_rec);

  // one input file is a usage error; duplicated angles are an analysis failure
  REQUIRE(run(cli + " tomo " + f0 + ".json --out " + ws.dir("t1"), log) == 2);
  REQUIRE(run(cli + " tomo " + f0 + ".json " + f0 + ".json --out " + ws.dir("t2"), log) == 1);

  REQUIRE(run(cli + " scan --preset fig1a --out " + ws.dir("decay"), log) == 0);
  REQUIRE(fs::exists(ws.dir("decay") + "/scan_tau.csv"));
  REQUIRE(run(cli + " fit-model --preset fig1a " + ws.dir("decay") + "/scan_tau.json --out " +
                  ws.dir("fit"),
              log) == 0);
  const auto fj = spinforge::parse_json(slurp(ws.dir("fit") + "/fit.json"), "fit.json");
  const double gamma_ms = fj.at("gamma_per_ms").get<double>();
  REQUIRE(gamma_ms > 3.0);
  REQUIRE(gamma_ms < 9.0);
  const double delta_hz = fj.at("delta_hz").get<double>();
  REQUIRE(delta_hz > 11e3);
  REQUIRE(delta_hz < 15e3);
  std::istringstream resid(slurp(ws.dir("fit") + "/fit_residuals.csv"));
  std::string header;
  std::getline(resid, header);
  REQUIRE(header == "tau_s,p_uu_data,p_uu_fit,p_mid_data,p_mid_fit");
  int rows = 0;
  for (std::string line; std::getline(resid, line);) ++rows;
  REQUIRE(rows == 40);
}

TEST_CASE("seed override changes sampled counts") {
  Workspace ws;
  const std::string cli = cli_path();
  const std::string log = ws.file("log.txt");
  REQUIRE(run(cli + " scan --preset fig1b --out " + ws.dir("s1"), log) == 0);
  REQUIRE(run(cli + " scan --preset fig1b --seed 99 --out " + ws.dir("s2"), log) == 0);
  REQUIRE(slurp(ws.dir("s1") + "/scan_phi_0.csv") != slurp(ws.dir("s2") + "/scan_phi_0.csv"));
}
