#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct RunOutput {
  int exit_code;
  std::string stdout_text;
};

RunOutput run_cli(const std::string& args) {
  const fs::path out = fs::temp_directory_path() / "cdqn_cli_stdout.txt";
  const std::string cmd = std::string(CDQN_CLI_PATH) + " " + args + " > " + out.string() + " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  std::ifstream in(out);
  std::ostringstream ss;
  ss << in.rdbuf();
  return {WEXITSTATUS(rc), ss.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kData = std::string(CDQN_SOURCE_DIR) + "/tests/data";

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("clear-market prints the hand-checked clearing") {
  const RunOutput r =
      run_cli("clear-market --offers " + kData + "/two_offers.csv --demand 50 --buy 0.20 --sell 0.10");
  CHECK(r.exit_code == 0);
  CHECK(r.stdout_text.find("clearing_price 0.12") != std::string::npos);
  CHECK(r.stdout_text.find("grid_import_kwh 0") != std::string::npos);
  CHECK(r.stdout_text.find("supplier 2 in_mg_kwh 10 to_grid_kwh 10 avg_sell_price 0.11") !=
        std::string::npos);
}

TEST_CASE("unknown flags and subcommands are rejected with exit 1") {
  CHECK(run_cli("train --definitely-not-a-flag 3").exit_code != 0);
  CHECK(run_cli("frobnicate").exit_code != 0);
  CHECK(run_cli("clear-market --offers nope.csv").exit_code != 0);  // missing required flags
}

TEST_CASE("config validation failures exit with 1") {
  const fs::path bad = fs::temp_directory_path() / "cdqn_bad.toml";
  {
    std::ofstream out(bad);
    out << slurp(kData + "/tiny.toml");
    out << "\n";
  }
  // Append a duplicate section to corrupt it.
  {
    std::ofstream out(bad, std::ios::app);
    out << "[ess]\n";
  }
  const RunOutput r = run_cli("train --config " + bad.string() + " --out /tmp/cdqn_never");
  CHECK(r.exit_code == 1);
}

TEST_CASE("train twice with one seed: byte-identical stdout, metrics and checkpoints") {
  const fs::path base = fs::temp_directory_path() / "cdqn_cli_det";
  fs::remove_all(base);
  const std::string cfg = kData + "/tiny.toml";
  const RunOutput a =
      run_cli("train --config " + cfg + " --seed 7 --out " + (base / "a").string());
  const RunOutput b =
      run_cli("train --config " + cfg + " --seed 7 --out " + (base / "b").string());
  REQUIRE(a.exit_code == 0);
  REQUIRE(b.exit_code == 0);
  // argv differs in --out, so drop the line that echoes it back.
  auto strip_outputs_line = [](std::string s) {
    const auto pos = s.find("outputs ");
    if (pos != std::string::npos) s.erase(pos);
    return s;
  };
  CHECK(strip_outputs_line(a.stdout_text) == strip_outputs_line(b.stdout_text));
  for (const char* name : {"metrics.csv", "dsm.ckpt", "ess.ckpt", "pv.ckpt", "run_manifest.json"})
    CHECK(slurp(base / "a" / name) == slurp(base / "b" / name));

  const RunOutput c =
      run_cli("train --config " + cfg + " --seed 8 --out " + (base / "c").string());
  REQUIRE(c.exit_code == 0);
  CHECK(slurp(base / "a" / "metrics.csv") != slurp(base / "c" / "metrics.csv"));
  fs::remove_all(base);
}

TEST_CASE("evaluate consumes checkpoints and writes the trace") {
  const fs::path base = fs::temp_directory_path() / "cdqn_cli_eval";
  fs::remove_all(base);
  const std::string cfg = kData + "/tiny.toml";
  REQUIRE(run_cli("train --config " + cfg + " --seed 4 --out " + (base / "run").string()).exit_code ==
          0);
  const RunOutput e = run_cli("evaluate --checkpoint-dir " + (base / "run").string() + " --config " +
                              cfg + " --out " + (base / "eval").string());
  CHECK(e.exit_code == 0);
  CHECK(e.stdout_text.find("total_reward dsm") != std::string::npos);
  const std::string trace = slurp(base / "eval" / "trace.csv");
  CHECK(trace.rfind("hour,dev1_on,dev2_on,dev3_on,dev4_on,dev5_on,ess_mode,", 0) == 0);
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 1 + 28);
  fs::remove_all(base);
}

TEST_CASE("selfcheck runs its suites and exits 0") {
  const RunOutput r = run_cli("selfcheck --suite gradients");
  CHECK(r.exit_code == 0);
  CHECK(r.stdout_text.find("gradients: PASS") != std::string::npos);
}

TEST_SUITE_END();
