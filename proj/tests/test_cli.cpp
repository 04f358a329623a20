// Spawns the installed binary and checks the user-facing contract: exit
// codes, output files, and bit-reproducibility. INAMP_CLI_PATH comes from
// the build system.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path out = fs::temp_directory_path() / ("cli_out_" + std::to_string(counter) + ".txt");
  const fs::path err = fs::temp_directory_path() / ("cli_err_" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string cmd =
      std::string(INAMP_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  r.out = slurp(out);
  r.err = slurp(err);
  fs::remove(out);
  fs::remove(err);
  return r;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("help and error exit codes") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("train --help").exit_code == 0);

  auto no_cmd = run_cli("");
  CHECK(no_cmd.exit_code == 1);
  CHECK(no_cmd.err.find("Usage") != std::string::npos);

  auto bad_cmd = run_cli("frobnicate");
  CHECK(bad_cmd.exit_code == 1);
  CHECK_FALSE(bad_cmd.err.empty());

  CHECK(run_cli("gen-data --out /tmp/x --no-such-flag").exit_code == 1);
  CHECK(run_cli("gen-data").exit_code == 1);  // missing required --out

  // Bad input file is a user error, not a crash.
  CHECK(run_cli("eval --checkpoint /nonexistent.iawt --data /nonexistent.csv").exit_code == 1);
}

TEST_CASE("gradcheck subcommand passes") {
  auto r = run_cli("gradcheck --module inamp");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("pass") != std::string::npos);
  CHECK(r.out.find("max_rel_error") != std::string::npos);
  CHECK(run_cli("gradcheck --module bogus").exit_code == 1);
}

TEST_CASE("gen-data writes the full corpus and is reproducible") {
  const auto d1 = fresh_dir("cli_gen1");
  const auto d2 = fresh_dir("cli_gen2");
  REQUIRE(run_cli("gen-data --seed 5 --per-label 4 --size 16 --out " + d1.string()).exit_code == 0);
  REQUIRE(run_cli("gen-data --seed 5 --per-label 4 --size 16 --out " + d2.string()).exit_code == 0);

  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(d1)) names.push_back(e.path().filename().string());
  CHECK(names.size() == 13);  // 3 labels x 4 images + manifest

  // Rasters must match bit for bit; the manifest differs only in the
  // directory prefix baked into each path column.
  for (const auto& n : names) {
    if (n == "manifest.csv") continue;
    CHECK(read_bytes(d1 / n) == read_bytes(d2 / n));
  }
  auto strip_dirs = [](std::string s, const std::string& dir) {
    for (std::size_t pos; (pos = s.find(dir)) != std::string::npos;) s.erase(pos, dir.size());
    return s;
  };
  CHECK(strip_dirs(read_bytes(d1 / "manifest.csv"), d1.string()) ==
        strip_dirs(read_bytes(d2 / "manifest.csv"), d2.string()));
}

TEST_CASE("train/eval/viz/index round trip") {
  const auto data = fresh_dir("cli_data");
  const auto run = fresh_dir("cli_run");
  REQUIRE(run_cli("gen-data --seed 9 --per-label 10 --size 16 --out " + data.string()).exit_code ==
          0);

  const std::string train_args = " --data " + (data / "manifest.csv").string() +
                                 " --seed 9 --epochs 3 --batch-size 8 --widths 4,8"
                                 " --inamp-out-channels 8 --sa-kernel 3 --ca-reduction 4";
  auto tr = run_cli("train" + train_args + " --out " + run.string());
  REQUIRE(tr.exit_code == 0);
  CHECK(fs::exists(run / "checkpoint.iawt"));
  CHECK(fs::exists(run / "report.txt"));
  CHECK(fs::exists(run / "epochs.csv"));

  {
    std::ifstream csv(run / "epochs.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "epoch,train_loss,train_accuracy,val_loss,val_accuracy,lr");
  }

  // Second run from the same seed: identical checkpoint and CSV bytes.
  const auto run2 = fresh_dir("cli_run2");
  REQUIRE(run_cli("train" + train_args + " --out " + run2.string()).exit_code == 0);
  CHECK(read_bytes(run / "checkpoint.iawt") == read_bytes(run2 / "checkpoint.iawt"));
  CHECK(read_bytes(run / "epochs.csv") == read_bytes(run2 / "epochs.csv"));

  auto ev = run_cli("eval --checkpoint " + (run / "checkpoint.iawt").string() + " --data " +
                    (data / "manifest.csv").string() + " --seed 9 --split test");
  CHECK(ev.exit_code == 0);
  CHECK(ev.out.find("accuracy=") != std::string::npos);
  CHECK(ev.out.find("kappa=") != std::string::npos);
  CHECK(ev.out.find("fn_rate=") != std::string::npos);

  const auto vizdir = fresh_dir("cli_viz");
  auto vz = run_cli("viz --checkpoint " + (run / "checkpoint.iawt").string() + " --image " +
                    (data / "smoke_0000.msib").string() + " --bands 0,7 --out " + vizdir.string());
  CHECK(vz.exit_code == 0);
  CHECK(fs::exists(vizdir / "band_0.pgm"));
  CHECK(fs::exists(vizdir / "band_7.pgm"));
  CHECK(read_bytes(vizdir / "band_0.pgm").substr(0, 2) == "P5");

  const auto ndvi = fs::temp_directory_path() / "cli_ndvi.pgm";
  auto ix = run_cli("index --image " + (data / "smoke_0000.msib").string() + " --kind ndvi --out " +
                    ndvi.string());
  CHECK(ix.exit_code == 0);
  CHECK(read_bytes(ndvi).substr(0, 2) == "P5");

  // A plain-backbone checkpoint must be rejected by viz with a user error.
  const auto plain = fresh_dir("cli_plain");
  REQUIRE(run_cli("train" + train_args + " --no-inamp --out " + plain.string()).exit_code == 0);
  auto bad = run_cli("viz --checkpoint " + (plain / "checkpoint.iawt").string() + " --image " +
                     (data / "smoke_0000.msib").string() + " --bands 0 --out " + vizdir.string());
  CHECK(bad.exit_code == 1);
}

TEST_CASE("ablate writes one row per variant") {
  const auto data = fresh_dir("cli_abl_data");
  const auto out = fresh_dir("cli_abl_out");
  REQUIRE(run_cli("gen-data --seed 4 --per-label 8 --size 16 --out " + data.string()).exit_code ==
          0);
  auto r = run_cli("ablate --axis attention --data " + (data / "manifest.csv").string() +
                   " --seed 4 --epochs 2 --batch-size 8 --widths 4,8 --inamp-out-channels 8"
                   " --sa-kernel 3 --ca-reduction 4 --out " +
                   out.string());
  REQUIRE(r.exit_code == 0);

  std::ifstream csv(out / "ablation_attention.csv");
  std::vector<std::string> lines;
  for (std::string line; std::getline(csv, line);) lines.push_back(line);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "variant,accuracy,kappa,fn_rate");
  CHECK(lines[1].rfind("None,", 0) == 0);
  CHECK(lines[2].rfind("CA,", 0) == 0);
  CHECK(lines[3].rfind("SA,", 0) == 0);
  CHECK(lines[4].rfind("CA & SA,", 0) == 0);
}
