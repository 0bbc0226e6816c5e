#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "oapt/degrade.hpp"

using namespace oapt;
namespace fs = std::filesystem;

namespace {

const std::string kCli = OAPT_CLI_PATH;

int run(const std::string& args, const std::string& redirect = "") {
  std::string cmd = kCli + " " + args;
  if (!redirect.empty())
    cmd += " > " + redirect + " 2>&1";
  else
    cmd += " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("help and argument errors use the documented exit codes") {
  CHECK(run("--help") == 0);
  CHECK(run("synth") == 2);                          // missing required options
  CHECK(run("no-such-subcommand") == 2);
  CHECK(run("restore --in x.pgm --out y.pgm --weights w --offsets 9,0") == 2);
}

TEST_CASE("missing input files are data errors") {
  CHECK(run("predict-offset --in /nonexistent.pgm --weights /nonexistent.w") == 3);
  CHECK(run("eval --manifest /nonexistent.jsonl --weights /nonexistent.w") == 3);
}

TEST_CASE("test image generation and dataset synthesis are deterministic") {
  const fs::path base = "cli_ds";
  fs::remove_all(base);
  CHECK(run("testimg --out " + (base / "src").string() + " --count 2 --size 96 --seed 3") == 0);
  CHECK(fs::exists(base / "src" / "img_0.pgm"));

  const std::string common = "synth --src " + (base / "src").string() +
                             " --seed 9 --patches-per-image 2 --patch-size 48";
  CHECK(run(common + " --out " + (base / "a").string()) == 0);
  CHECK(run(common + " --out " + (base / "b").string()) == 0);
  CHECK(slurp(base / "a" / "manifest.jsonl") == slurp(base / "b" / "manifest.jsonl"));
  CHECK(slurp(base / "a" / "lq_0000.pgm") == slurp(base / "b" / "lq_0000.pgm"));
  // every run leaves a settings log next to its outputs
  CHECK(fs::exists(base / "a" / "run_synth.log"));
}

TEST_CASE("cluster visualization round-trips the input image") {
  const fs::path base = "cli_viz";
  fs::remove_all(base);
  fs::create_directories(base);
  write_image((base / "in.pgm").string(), make_test_image(64, 64, 5));

  CHECK(run("cluster-viz --in " + (base / "in.pgm").string() + " --r 4 --c 4 --out " +
            (base / "viz").string()) == 0);
  CHECK(fs::exists(base / "viz" / "cluster_tl.pgm"));
  CHECK(fs::exists(base / "viz" / "cluster_br.pgm"));
  const Plane in = read_image((base / "in.pgm").string());
  const Plane rt = read_image((base / "viz" / "roundtrip.pgm").string());
  CHECK(rt == in);
}

TEST_CASE("restore with fresh toy weights is a no-op image copy") {
  const fs::path base = "cli_restore";
  fs::remove_all(base);
  fs::create_directories(base);
  write_image((base / "in.pgm").string(), make_test_image(48, 48, 6));

  // 0-step training just materializes the initial weights
  CHECK(run("testimg --out " + (base / "src").string() + " --count 1 --size 96 --seed 1") == 0);
  CHECK(run("synth --src " + (base / "src").string() + " --out " + (base / "ds").string() +
            " --seed 1 --patches-per-image 2 --patch-size 48") == 0);
  CHECK(run("train-reconstructor --manifest " + (base / "ds" / "manifest.jsonl").string() +
            " --out-weights " + (base / "w").string() + " --steps 0") == 0);

  CHECK(run("restore --in " + (base / "in.pgm").string() + " --out " +
            (base / "out.pgm").string() + " --weights " + (base / "w").string() +
            " --offsets 2,3") == 0);
  const Plane in = read_image((base / "in.pgm").string());
  const Plane out = read_image((base / "out.pgm").string());
  // zero-initialized reconstruction conv: the network starts as the identity
  CHECK(out == in);
}

TEST_CASE("predict-offset prints two integers in range") {
  const fs::path base = "cli_pred";
  fs::remove_all(base);
  fs::create_directories(base);
  write_image((base / "in.pgm").string(), make_test_image(48, 48, 7));
  CHECK(run("testimg --out " + (base / "src").string() + " --count 1 --size 96 --seed 2") == 0);
  CHECK(run("synth --src " + (base / "src").string() + " --out " + (base / "ds").string() +
            " --seed 2 --patches-per-image 2 --patch-size 48") == 0);
  CHECK(run("train-predictor --manifest " + (base / "ds" / "manifest.jsonl").string() +
            " --out-weights " + (base / "pw").string() + " --steps 1") == 0);

  const fs::path txt = base / "pred.txt";
  CHECK(run("predict-offset --in " + (base / "in.pgm").string() + " --weights " +
            (base / "pw").string(),
            txt.string()) == 0);
  std::istringstream ss(slurp(txt));
  int r = -1, c = -1;
  ss >> r >> c;
  CHECK(r >= 0);
  CHECK(r <= 7);
  CHECK(c >= 0);
  CHECK(c <= 7);
}
