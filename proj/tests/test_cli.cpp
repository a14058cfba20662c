#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "corrstop/cli.hpp"
#include "helpers.hpp"

using namespace corrstop;
using Catch::Matchers::WithinAbs;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("corrstop_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A small dataset with a strong signal on x0, x1.
std::string signal_csv(int n, int p, std::uint64_t seed) {
  Rng rng(seed);
  std::ostringstream os;
  for (int j = 0; j < p; ++j) os << "x" << j << ",";
  os << "y\n";
  for (int i = 0; i < n; ++i) {
    std::vector<double> row(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j) row[static_cast<std::size_t>(j)] = rng.normal();
    const double y = 3.0 * row[0] - 2.0 * row[1] + 0.3 * rng.normal();
    for (int j = 0; j < p; ++j) os << row[static_cast<std::size_t>(j)] << ",";
    os << y << "\n";
  }
  return os.str();
}

}  // namespace

TEST_CASE("select produces a parseable trace and finds the signal", "[cli]") {
  TempDir tmp;
  write_file(tmp.file("data.csv"), signal_csv(60, 10, 1401));
  const std::string out = tmp.file("trace.json");
  const int rc = cli::run({"select", "--data", tmp.file("data.csv"), "--response", "y",
                           "--method", "lars", "--gamma", "0.05", "--mode", "iid",
                           "--out", out});
  REQUIRE(rc == 0);
  const auto j = nlohmann::json::parse(read_file(out));
  const auto active = j.at("final_active").get<std::vector<int>>();
  REQUIRE(std::find(active.begin(), active.end(), 0) != active.end());
  REQUIRE(std::find(active.begin(), active.end(), 1) != active.end());
  REQUIRE(j.at("config").at("method") == "lars");

  // csv format
  const std::string out2 = tmp.file("trace.csv");
  REQUIRE(cli::run({"select", "--data", tmp.file("data.csv"), "--response", "y",
                    "--format", "csv", "--out", out2}) == 0);
  REQUIRE(read_file(out2).rfind("k,event_kind,", 0) == 0);
}

TEST_CASE("select with gamma zero returns the empty model", "[cli]") {
  TempDir tmp;
  write_file(tmp.file("data.csv"), signal_csv(40, 6, 1409));
  const std::string out = tmp.file("trace.json");
  const int rc = cli::run({"select", "--data", tmp.file("data.csv"), "--response", "y",
                           "--gamma", "0", "--out", out});
  REQUIRE(rc == 0);
  const auto j = nlohmann::json::parse(read_file(out));
  REQUIRE(j.at("final_active").empty());
}

TEST_CASE("select maps data problems to exit 2", "[cli]") {
  TempDir tmp;
  write_file(tmp.file("bad.csv"), "a,b,y\n1,2,3\n4,oops,6\n7,8,9\n1,2,3\n");
  REQUIRE(cli::run({"select", "--data", tmp.file("bad.csv"), "--response", "y"}) == 2);

  write_file(tmp.file("const.csv"), "a,y\n1,5\n2,5\n3,5\n4,5\n");
  REQUIRE(cli::run({"select", "--data", tmp.file("const.csv"), "--response", "y"}) == 2);

  write_file(tmp.file("short.csv"), "a,y\n1,2\n3,4\n5,6\n");
  REQUIRE(cli::run({"select", "--data", tmp.file("short.csv"), "--response", "y"}) == 2);

  REQUIRE(cli::run({"select", "--data", tmp.file("nonexistent.csv"), "--response", "y"}) == 2);
}

TEST_CASE("usage errors exit 1", "[cli]") {
  REQUIRE(cli::run({"select"}) == 1);                       // missing required flags
  REQUIRE(cli::run({"bogus"}) == 1);                        // unknown subcommand
  REQUIRE(cli::run({"nulldist", "--p", "100", "--n", "4", "--s", "2"}) == 1);
  TempDir tmp;
  write_file(tmp.file("data.csv"), signal_csv(40, 6, 1423));
  REQUIRE(cli::run({"select", "--data", tmp.file("data.csv"), "--response", "y",
                    "--gamma", "1.5"}) == 1);
}

TEST_CASE("nulldist emits the standardization constants and quantiles", "[cli]") {
  TempDir tmp;
  const std::string out = tmp.file("null.csv");
  std::ostringstream q0;
  q0.precision(17);
  q0 << 1.0 - std::exp(-1.0);
  REQUIRE(cli::run({"nulldist", "--p", "2000", "--n", "200", "--s", "0",
                    "--quantiles", q0.str(), "--out", out}) == 0);
  // parse the three constants back
  std::istringstream in(read_file(out));
  std::string line;
  std::getline(in, line);
  double a = 0, b = 0, c = 0, qstd = -1, qr2 = -1;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string name, arg, val;
    std::getline(ss, name, ',');
    std::getline(ss, arg, ',');
    std::getline(ss, val, ',');
    if (name == "location") a = std::stod(val);
    if (name == "scale") b = std::stod(val);
    if (name == "correction") c = std::stod(val);
    if (name == "upper_quantile_std") qstd = std::stod(val);
    if (name == "upper_quantile_r2") qr2 = std::stod(val);
  }
  REQUIRE(c > 0);
  REQUIRE_THAT(a + b * (200 - 0 - 2) / 2.0, WithinAbs(1.0, 1e-12));
  // upper-tail probability 1 - 1/e: standardized 0, raw value = location
  REQUIRE_THAT(qstd, WithinAbs(0.0, 1e-9));
  REQUIRE_THAT(qr2, WithinAbs(a, 1e-9));
}

TEST_CASE("nulldist with rho tabulates tails", "[cli]") {
  TempDir tmp;
  const std::string out = tmp.file("tails.csv");
  REQUIRE(cli::run({"nulldist", "--p", "500", "--n", "100", "--s", "0", "--rho", "0.3",
                    "--t-grid", "0.2,0.4", "--out", out}) == 0);
  const std::string text = read_file(out);
  REQUIRE(text.find("equicorr_tail,0.2,") != std::string::npos);
  REQUIRE(text.find("equicorr_tail,0.4,") != std::string::npos);
}

TEST_CASE("permtest reports a reproducible p-value", "[cli]") {
  TempDir tmp;
  write_file(tmp.file("data.csv"), signal_csv(40, 5, 1433));
  const std::string out1 = tmp.file("p1.json");
  const std::string out2 = tmp.file("p2.json");
  REQUIRE(cli::run({"permtest", "--data", tmp.file("data.csv"), "--response", "y",
                    "--active", "x0", "--q", "99", "--seed", "5", "--out", out1}) == 0);
  REQUIRE(cli::run({"permtest", "--data", tmp.file("data.csv"), "--response", "y",
                    "--active", "0", "--q", "99", "--seed", "5", "--out", out2}) == 0);
  const auto j1 = nlohmann::json::parse(read_file(out1));
  const auto j2 = nlohmann::json::parse(read_file(out2));
  REQUIRE(j1.at("p_value") == j2.at("p_value"));
  REQUIRE(j1.at("permutations") == 99);
}

TEST_CASE("simulate smoke run emits reports deterministically", "[cli][slow]") {
  TempDir tmp;
  write_file(tmp.file("smoke.spec"),
             "example = 1\nn = 60\np = 120\nrho = 0\nsigma = 2\nn_test = 100\n"
             "reps = 3\nseed = 99\nmethods = lars\ngammas = 0.05\nmodes = corr\n");
  const std::string d1 = tmp.file("out1");
  const std::string d2 = tmp.file("out2");
  std::filesystem::create_directories(d1);
  std::filesystem::create_directories(d2);
  REQUIRE(cli::run({"simulate", "--spec", tmp.file("smoke.spec"), "--out-dir", d1}) == 0);
  REQUIRE(cli::run({"simulate", "--spec", tmp.file("smoke.spec"), "--out-dir", d2}) == 0);

  // identical bytes once the wall-time columns are stripped
  auto strip_times = [](const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      for (std::size_t i = 0; i < cells.size(); ++i)
        if (i != 8 && i != 9) out += cells[i] + ",";
      out += "\n";
    }
    return out;
  };
  const std::string r1 = read_file(d1 + "/report.csv");
  const std::string r2 = read_file(d2 + "/report.csv");
  REQUIRE(strip_times(r1) == strip_times(r2));
  REQUIRE(r1.rfind("method,gamma,mse,mse_se,fn,fn_se,fp,fp_se,time,time_se,failures", 0) == 0);
  REQUIRE(nlohmann::json::parse(read_file(d1 + "/report.json")).contains("rows"));

  REQUIRE(cli::run({"simulate", "--spec", tmp.file("missing.spec")}) == 2);
}

TEST_CASE("bundled smoke spec parses and has the documented shape", "[cli]") {
  std::ifstream in(std::string(CORRSTOP_SOURCE_DIR) + "/specs/example1_smoke.spec");
  REQUIRE(in.good());
  const ExperimentSpec spec = parse_experiment_spec(in);
  REQUIRE(spec.example == 1);
  REQUIRE(spec.n == 100);
  REQUIRE(spec.p == 500);
  REQUIRE(spec.reps == 5);
  REQUIRE(spec.gammas.size() == 2);
}
