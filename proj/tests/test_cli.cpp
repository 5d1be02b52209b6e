#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "psram/cp.hpp"
#include "psram/tensor_io.hpp"

namespace fs = std::filesystem;

namespace {

std::string sim_binary() {
  const char* bin = std::getenv("PSRAM_SIM_BIN");
  REQUIRE(bin != nullptr);
  return bin;
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("psram_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args, const std::string& out_file,
            const std::string& err_file) {
  const std::string cmd =
      sim_binary() + " " + args + " > " + out_file + " 2> " + err_file;
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("mttkrp on the all-ones cube exits 0 with zero deviation") {
  TempDir dir;
  write_text(dir.file("ones.txt"), "3 2 2 2\n1 1 1 1 1 1 1 1\n");
  const int rc = run_cli("mttkrp --tensor " + dir.file("ones.txt") +
                             " --rank 2 --out-prefix " + dir.file("run"),
                         dir.file("out.txt"), dir.file("err.txt"));
  REQUIRE(rc == 0);
  const std::string summary = slurp(dir.file("run_summary.csv"));
  REQUIRE(summary.find("max_deviation,0\n") != std::string::npos);
  REQUIRE(slurp(dir.file("out.txt")).find("max_deviation=0") != std::string::npos);
}

TEST_CASE("a malformed coordinate line fails with its line number") {
  TempDir dir;
  write_text(dir.file("bad.tns"), "1 1 1 1.0\n2 2 2 2.0\n1 2 x 3.0\n");
  const int rc = run_cli("mttkrp --tensor " + dir.file("bad.tns") +
                             " --rank 2 --out-prefix " + dir.file("run"),
                         dir.file("out.txt"), dir.file("err.txt"));
  REQUIRE(rc == 3);
  REQUIRE(slurp(dir.file("err.txt")).find("bad.tns:3") != std::string::npos);
}

TEST_CASE("repeated runs with one seed produce byte-identical outputs") {
  TempDir dir;
  write_text(dir.file("t.txt"), [] {
    psram::DenseTensor t = psram::DenseTensor::random({4, 5, 6}, 99);
    std::ostringstream out;
    psram::write_dense(out, t);
    return out.str();
  }());
  const std::string args = "mttkrp --tensor " + dir.file("t.txt") +
                           " --rank 8 --seed 0 --out-prefix " + dir.file("a") + " --force";
  REQUIRE(run_cli(args, dir.file("o1.txt"), dir.file("e1.txt")) == 0);
  const std::string first_summary = slurp(dir.file("a_summary.csv"));
  const std::string first_array = slurp(dir.file("a_array.csv"));
  REQUIRE(run_cli(args, dir.file("o2.txt"), dir.file("e2.txt")) == 0);
  REQUIRE(slurp(dir.file("a_summary.csv")) == first_summary);
  REQUIRE(slurp(dir.file("a_array.csv")) == first_array);
  REQUIRE(slurp(dir.file("o1.txt")) == slurp(dir.file("o2.txt")));
}

TEST_CASE("cp-als recovers a synthetic rank-1 fixture") {
  TempDir dir;
  psram::CpModel truth{{psram::FactorMatrix::random(0, 4, 1, 1),
                        psram::FactorMatrix::random(1, 4, 1, 2),
                        psram::FactorMatrix::random(2, 4, 1, 3)},
                       {1.0}};
  std::ostringstream body;
  psram::write_dense(body, psram::reconstruct(truth));
  write_text(dir.file("rank1.txt"), body.str());
  const int rc = run_cli("cp-als --tensor " + dir.file("rank1.txt") +
                             " --rank 1 --max-iters 10 --out-prefix " + dir.file("d"),
                         dir.file("out.txt"), dir.file("err.txt"));
  REQUIRE(rc == 0);
  const std::string trace = slurp(dir.file("d_fit_trace.csv"));
  REQUIRE(trace.rfind("sweep,fit,abs_error\n", 0) == 0);
  // Final fit from the summary line.
  const std::string out = slurp(dir.file("out.txt"));
  const std::size_t pos = out.find("fit=0.9999");
  const bool perfect = out.find("fit=1") != std::string::npos;
  REQUIRE((pos != std::string::npos || perfect));
}

TEST_CASE("cp-als with tol 1 stops after a single sweep") {
  TempDir dir;
  write_text(dir.file("t.txt"), [] {
    std::ostringstream out;
    psram::write_dense(out, psram::DenseTensor::random({3, 3, 3}, 5));
    return out.str();
  }());
  REQUIRE(run_cli("cp-als --tensor " + dir.file("t.txt") +
                      " --rank 2 --tol 1 --out-prefix " + dir.file("d"),
                  dir.file("out.txt"), dir.file("err.txt")) == 0);
  const std::string trace = slurp(dir.file("d_fit_trace.csv"));
  REQUIRE(std::count(trace.begin(), trace.end(), '\n') == 2);  // header + one sweep
}

TEST_CASE("cp-als factor exports carry the weights comment") {
  TempDir dir;
  write_text(dir.file("t.txt"), "3 2 2 2\n1 2 3 4 5 6 7 8\n");
  REQUIRE(run_cli("cp-als --tensor " + dir.file("t.txt") +
                      " --rank 2 --max-iters 5 --out-prefix " + dir.file("d"),
                  dir.file("out.txt"), dir.file("err.txt")) == 0);
  for (int m = 0; m < 3; ++m) {
    const std::string f = slurp(dir.file("d_factor" + std::to_string(m) + ".csv"));
    REQUIRE(f.rfind("# weights,", 0) == 0);
  }
}

TEST_CASE("a single-point sweep emits one data row at the calibrated figure") {
  TempDir dir;
  REQUIRE(run_cli("sweep --channels 52:52 --freq 20G:20G --out " + dir.file("s.csv"),
                  dir.file("out.txt"), dir.file("err.txt")) == 0);
  const std::string csv = slurp(dir.file("s.csv"));
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 2);
  REQUIRE(csv.find("20000000000,52,256,32,") != std::string::npos);
  REQUIRE(csv.find("17039360000000000") != std::string::npos);  // 1.703936e16
}

TEST_CASE("sweep plots contain two monotone polylines") {
  TempDir dir;
  REQUIRE(run_cli("sweep --channels 13:52:13 --freq 5G:20G:5G --out " + dir.file("s.csv") +
                      " --plot " + dir.file("s.svg"),
                  dir.file("out.txt"), dir.file("err.txt")) == 0);
  const std::string svg = slurp(dir.file("s.svg"));
  std::size_t polylines = 0;
  for (std::size_t pos = svg.find("<polyline"); pos != std::string::npos;
       pos = svg.find("<polyline", pos + 1)) {
    ++polylines;
    const std::size_t p0 = svg.find("points=\"", pos) + 8;
    const std::size_t p1 = svg.find('"', p0);
    std::istringstream pts(svg.substr(p0, p1 - p0));
    double prev_x = -1e300, prev_y = 1e300;
    std::string pair;
    std::size_t n = 0;
    while (pts >> pair) {
      const std::size_t comma = pair.find(',');
      const double x = std::stod(pair.substr(0, comma));
      const double y = std::stod(pair.substr(comma + 1));
      REQUIRE(x > prev_x);
      REQUIRE(y < prev_y);  // SVG y axis points down: rising data descends
      prev_x = x;
      prev_y = y;
      ++n;
    }
    REQUIRE(n >= 2);
  }
  REQUIRE(polylines == 2);
}

TEST_CASE("the schedule dump is parseable and hazard-free") {
  TempDir dir;
  write_text(dir.file("t.txt"), [] {
    std::ostringstream out;
    psram::write_dense(out, psram::DenseTensor::random({3, 4, 2}, 12));
    return out.str();
  }());
  REQUIRE(run_cli("mttkrp --tensor " + dir.file("t.txt") + " --rank 3 --out-prefix " +
                      dir.file("r") + " --dump-schedule " + dir.file("sched.txt"),
                  dir.file("o.txt"), dir.file("e.txt")) == 0);
  std::ifstream in(dir.file("sched.txt"));
  REQUIRE(in.good());
  psram::ArrayConfig cfg;
  psram::Schedule sched = psram::read_schedule(in, cfg, "sched.txt");
  REQUIRE(!sched.ops.empty());
  REQUIRE(psram::hadamard_fan_in_is_one(sched));
  REQUIRE(psram::hazards_respected(sched, cfg.rows, cfg.word_cols()));
}

TEST_CASE("the config environment variable supplies the default config") {
  TempDir dir;
  write_text(dir.file("half.ini"), "channels = 26\n");
  const std::string cmd = "PSRAM_SIM_CONFIG=" + dir.file("half.ini") + " " + sim_binary() +
                          " sweep --channels 26:26 --freq 20G:20G --out " +
                          dir.file("s.csv") + " > " + dir.file("o.txt") + " 2> " +
                          dir.file("e.txt");
  const int rc = std::system(cmd.c_str());
  REQUIRE(WEXITSTATUS(rc) == 0);
  // Half the channels sustain half the calibrated figure.
  REQUIRE(slurp(dir.file("s.csv")).find("8519680000000000") != std::string::npos);
}

TEST_CASE("analog runs exit 0 and report a nonzero deviation") {
  TempDir dir;
  write_text(dir.file("t.txt"), [] {
    std::ostringstream out;
    psram::write_dense(out, psram::DenseTensor::random({4, 4, 4}, 21));
    return out.str();
  }());
  REQUIRE(run_cli("mttkrp --tensor " + dir.file("t.txt") +
                      " --rank 4 --analog --sigma 0.002 --out-prefix " + dir.file("r"),
                  dir.file("o.txt"), dir.file("e.txt")) == 0);
  const std::string summary = slurp(dir.file("r_summary.csv"));
  REQUIRE(summary.find("mode,analog") != std::string::npos);
  REQUIRE(summary.find("max_deviation,0\n") == std::string::npos);
}

TEST_CASE("outputs are not overwritten without --force") {
  TempDir dir;
  const std::string args = "sweep --channels 1:2 --freq 1G:1G --out " + dir.file("s.csv");
  REQUIRE(run_cli(args, dir.file("o.txt"), dir.file("e.txt")) == 0);
  REQUIRE(run_cli(args, dir.file("o.txt"), dir.file("e.txt")) == 3);
  REQUIRE(slurp(dir.file("e.txt")).find("--force") != std::string::npos);
  REQUIRE(run_cli(args + " --force", dir.file("o.txt"), dir.file("e.txt")) == 0);
}

TEST_CASE("an inverted range is a usage error") {
  TempDir dir;
  REQUIRE(run_cli("sweep --channels 52:1 --freq 1G:1G --out " + dir.file("s.csv"),
                  dir.file("o.txt"), dir.file("e.txt")) == 2);
}

TEST_CASE("a missing tensor file is an I/O error") {
  TempDir dir;
  REQUIRE(run_cli("mttkrp --tensor " + dir.file("nope.tns") + " --out-prefix " +
                      dir.file("x"),
                  dir.file("o.txt"), dir.file("e.txt")) == 3);
}

TEST_CASE("validate runs twice with byte-identical outputs") {
  TempDir dir;
  REQUIRE(run_cli("validate --seed 0 --out " + dir.file("r1.csv"), dir.file("o1.txt"),
                  dir.file("e1.txt")) == 0);
  REQUIRE(run_cli("validate --seed 0 --out " + dir.file("r2.csv"), dir.file("o2.txt"),
                  dir.file("e2.txt")) == 0);
  REQUIRE(slurp(dir.file("r1.csv")) == slurp(dir.file("r2.csv")));
  const std::string o1 = slurp(dir.file("o1.txt"));
  std::string o2 = slurp(dir.file("o2.txt"));
  // Stdout differs only in the report path it names.
  const std::string p1 = dir.file("r1.csv"), p2 = dir.file("r2.csv");
  std::size_t pos;
  while ((pos = o2.find(p2)) != std::string::npos) o2.replace(pos, p2.size(), p1);
  REQUIRE(o1 == o2);
}
