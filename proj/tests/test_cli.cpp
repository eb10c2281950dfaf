#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "flnet/raster.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_bin() {
  const char* bin = std::getenv("FLNET_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "FLNET_BIN must point at the flnet binary");
  return bin;
}

int run(const std::string& args, std::string* output = nullptr) {
  const std::string log = testutil::scratch_dir("cli_log") + "/out.txt";
  const std::string cmd = cli_bin() + " " + args + " > " + log + " 2>&1";
  const int rc = std::system(cmd.c_str());
  if (output) {
    std::ifstream in(log);
    output->assign(std::istreambuf_iterator<char>(in), {});
  }
  return WEXITSTATUS(rc);
}

std::map<std::string, std::vector<uint8_t>> dir_bytes(const std::string& dir) {
  std::map<std::string, std::vector<uint8_t>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file())
      out[fs::relative(e.path(), dir).string()] = flnet::read_file(e.path().string());
  return out;
}

const std::string kSynthFlags =
    " --hr-size 240 --parcels 40 --damage-fraction 0.4 --strips 3 --scale 3";

}  // namespace

TEST_CASE("help exists for every command") {
  std::string out;
  REQUIRE(run("--help", &out) == 0);
  for (const char* cmd : {"synth", "preprocess", "train-sr", "infer-sr", "label",
                          "train-seg", "infer", "evaluate"}) {
    CHECK(out.find(cmd) != std::string::npos);
    std::string sub;
    REQUIRE(run(std::string(cmd) + " --help", &sub) == 0);
    CHECK(sub.find("--help") != std::string::npos);
  }
}

TEST_CASE("synth with a fixed seed is byte-identical across runs") {
  const std::string a = testutil::scratch_dir("synth_a");
  const std::string b = testutil::scratch_dir("synth_b");
  REQUIRE(run("synth --seed 7 --count 1 --out " + a + " --hr-size 96 --parcels 20") == 0);
  REQUIRE(run("synth --seed 7 --count 1 --out " + b + " --hr-size 96 --parcels 20") == 0);
  const auto da = dir_bytes(a), db = dir_bytes(b);
  REQUIRE(!da.empty());
  REQUIRE(da.size() == db.size());
  for (const auto& [name, bytes] : da) {
    REQUIRE(db.count(name) == 1);
    CHECK(bytes == db.at(name));
  }
}

TEST_CASE("full pipeline smoke run") {
  const std::string work = testutil::scratch_dir("pipeline");
  const std::string scenes = work + "/scenes";
  REQUIRE(run("synth --seed 100 --count 2 --out " + scenes + kSynthFlags) == 0);
  const std::string scene0 = scenes + "/scene_000100";

  // preprocess with registration on the coarse inputs
  std::string out;
  REQUIRE(run("preprocess --pre-ndvi " + scene0 + "/pre_lr.fr1 --post-ndvi " + scene0 +
                  "/post_lr.fr1 --pre-quality " + scene0 +
                  "/quality_pre_lr.fr1 --post-quality " + scene0 +
                  "/quality_post_lr.fr1 --cropland " + scene0 +
                  "/cropland.fr1 --max-shift 4 --out-pre " + work +
                  "/pre_m.fr1 --out-post " + work + "/post_m.fr1",
              &out) == 0);
  CHECK(out.find("registration dx") != std::string::npos);

  // tiny SR model
  REQUIRE(run("train-sr --scenes " + scenes +
              " --val-count 1 --chip 24 --stride 48 --resblocks 1 --feats 4"
              " --epochs 2 --batch 8 --lr 1e-3 --seed 3 --out " +
              work + "/edsr.ckpt --history " + work + "/sr_history.csv") == 0);
  REQUIRE(fs::exists(work + "/edsr.ckpt"));
  REQUIRE(fs::exists(work + "/sr_history.csv"));

  for (const char* date : {"pre", "post"})
    REQUIRE(run(std::string("infer-sr --checkpoint ") + work +
                "/edsr.ckpt --resblocks 1 --feats 4 --input " + work + "/" + date +
                "_m.fr1 --out " + work + "/" + date + "_sr.fr1 --tile 64 --overlap 8") ==
            0);

  REQUIRE(run("label --pre " + work + "/pre_sr.fr1 --post " + work +
              "/post_sr.fr1 --delta-out " + work + "/delta.fr1 --labels-out " + work +
              "/labels_threshold.fr1") == 0);

  REQUIRE(run("train-seg --scenes " + scenes +
              " --val-count 1 --chip 48 --stride 96 --base-channels 4"
              " --epochs 2 --batch 8 --lr 1e-3 --seed 4 --out " +
              work + "/unet.ckpt --history " + work + "/seg_history.csv") == 0);

  REQUIRE(run("infer --checkpoint " + work + "/unet.ckpt --base-channels 4 --delta " +
              work + "/delta.fr1 --out " + work + "/damage.fr1 --render " + work +
              "/damage.ppm") == 0);
  REQUIRE(fs::exists(work + "/damage.fr1"));
  REQUIRE(fs::exists(work + "/damage.ppm"));

  std::string report;
  REQUIRE(run("evaluate --pred " + work + "/damage.fr1 --truth " + scene0 +
                  "/truth_labels.fr1 --sr " + work + "/pre_sr.fr1 --hr " + scene0 +
                  "/pre_hr.fr1 --report " + work + "/report.csv --render-dir " + work +
                  "/maps",
              &report) == 0);
  CHECK(report.find("macro_f1") != std::string::npos);
  CHECK(fs::exists(work + "/report.csv"));
  CHECK(fs::exists(work + "/maps/pred.ppm"));

  std::ifstream in(work + "/report.csv");
  std::string csv(std::istreambuf_iterator<char>(in), {});
  CHECK(csv.find("# config_hash ") != std::string::npos);
  CHECK(csv.find("metric,value,pixels") != std::string::npos);
  for (const char* m : {"psnr", "ssim", "f1_no", "f1_partial", "f1_full"})
    CHECK(csv.find(m) != std::string::npos);
}

TEST_CASE("error paths use their designated exit codes") {
  const std::string work = testutil::scratch_dir("cli_err");
  REQUIRE(run("synth --seed 5 --count 1 --out " + work + "/s --hr-size 48 --parcels 8") ==
          0);
  const std::string scene = work + "/s/scene_000005";

  SUBCASE("unknown flag: usage error") {
    CHECK(run("synth --no-such-flag") == 2);
  }
  SUBCASE("missing file") {
    CHECK(run("label --delta " + work + "/absent.fr1 --labels-out " + work + "/x.fr1") ==
          3);
  }
  SUBCASE("bad container") {
    std::ofstream bad(work + "/bad.fr1", std::ios::binary);
    bad << "XXXXXXXXjunk";
    bad.close();
    CHECK(run("label --delta " + work + "/bad.fr1 --labels-out " + work + "/x.fr1") == 4);
  }
  SUBCASE("grid mismatch leaves no partial report") {
    CHECK(run("evaluate --pred " + scene + "/truth_labels.fr1 --truth " + scene +
              "/pre_lr.fr1 --report " + work + "/r.csv") == 5);
    CHECK_FALSE(fs::exists(work + "/r.csv"));
  }
}

TEST_CASE("FLNET_WORK_DIR anchors relative outputs") {
  const std::string work = testutil::scratch_dir("cli_workdir");
  const std::string cmd = "FLNET_WORK_DIR=" + work + " " + cli_bin() +
                          " synth --seed 9 --count 1 --out rel_scenes --hr-size 48"
                          " --parcels 8 > /dev/null 2>&1";
  REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  CHECK(fs::exists(work + "/rel_scenes/scene_000009/manifest.txt"));
}
