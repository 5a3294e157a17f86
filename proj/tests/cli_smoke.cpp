// Drives the built CLI end to end: gen -> train -> eval -> export-attention
// -> gradcheck, checking artifacts, determinism of regenerated datasets, and
// exit codes.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "gdcaf_cli_smoke";

int run(const std::string& args) {
  const std::string cmd = std::string(GDCAF_TOOL_PATH) + " " + args + " >> " +
                          (kWork / "cli.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("cli: full pipeline on a small dataset") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  const std::string data = (kWork / "data").string();
  const std::string data2 = (kWork / "data2").string();
  const std::string run_dir = (kWork / "run").string();
  const std::string eval_dir = (kWork / "eval").string();
  const std::string attn_dir = (kWork / "attn").string();

  // gen: three split files plus a manifest; reruns are byte-identical.
  REQUIRE(run("gen --out " + data + " --seed 5 --hours 420 --nodes 2 --height 8 --width 8") == 0);
  CHECK(fs::exists(fs::path(data) / "train.bin"));
  CHECK(fs::exists(fs::path(data) / "val.bin"));
  CHECK(fs::exists(fs::path(data) / "test.bin"));
  CHECK(fs::exists(fs::path(data) / "manifest.json"));
  CHECK(fs::exists(fs::path(data) / "repro.json"));
  REQUIRE(run("gen --out " + data2 + " --seed 5 --hours 420 --nodes 2 --height 8 --width 8") == 0);
  CHECK(slurp(fs::path(data) / "train.bin") == slurp(fs::path(data2) / "train.bin"));
  CHECK(slurp(fs::path(data) / "test.bin") == slurp(fs::path(data2) / "test.bin"));

  // train: writes checkpoint, config, log, repro record.
  REQUIRE(run("train --dataset " + data + "/manifest.json --out " + run_dir +
              " --t-in 6 --delta 1 --heads 1 --blocks 1 --epochs 2 --batch 8 --seed 3"
              " --normalize --max-train-windows 24 --max-val-windows 6") == 0);
  CHECK(fs::exists(fs::path(run_dir) / "best.ckpt"));
  CHECK(fs::exists(fs::path(run_dir) / "config.json"));
  CHECK(fs::exists(fs::path(run_dir) / "log.csv"));
  CHECK(fs::exists(fs::path(run_dir) / "repro.json"));

  // eval: model and persistence rows on the test tail.
  REQUIRE(run("eval --run " + run_dir + " --dataset " + data + "/manifest.json --out " +
              eval_dir + " --max-windows 12") == 0);
  const std::string table = slurp(fs::path(eval_dir) / "table.csv");
  CHECK(table.find("/model") != std::string::npos);
  CHECK(table.find("/persistence") != std::string::npos);
  CHECK(fs::exists(fs::path(eval_dir) / "run_report.json"));

  // export-attention: panels for every season, edge list, svg bytes.
  REQUIRE(run("export-attention --run " + run_dir + " --dataset " + data +
              "/manifest.json --out " + attn_dir + " --top-k 2 --max-windows 8") == 0);
  CHECK(fs::exists(fs::path(attn_dir) / "edges.json"));
  CHECK(fs::exists(fs::path(attn_dir) / "spatial_DJF_t1.svg"));

  // Error paths map to the documented exit codes.
  CHECK(run("eval --dataset " + data + "/manifest.json --out " + eval_dir) == 2);
  CHECK(run("train --dataset /nonexistent/manifest.json --out " + run_dir) == 4);
}

TEST_CASE("cli: gradcheck passes") {
  fs::create_directories(kWork);
  CHECK(run("gradcheck --seed 7") == 0);
}
