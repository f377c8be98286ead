#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "hadit_test_cli";

int run(const std::string& args) {
    const std::string cmd = std::string(HADIT_CLI_PATH) + " " + args + " > " +
                            (kWork / "stdout.txt").string() + " 2> " +
                            (kWork / "stderr.txt").string();
    const int rc = std::system(cmd.c_str());
    return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("cli lifecycle: gen, train, sample, eval, segment-regions") {
    fs::remove_all(kWork);
    fs::create_directories(kWork);

    // --- gen: deterministic corpus, output dir created on demand ---
    const std::string gen_flags =
        " --count 4 --seed 5 --canvas 16 --prims-min 1 --prims-max 2";
    CHECK(run("gen --out " + (kWork / "corpus_a").string() + gen_flags) == 0);
    CHECK(run("gen --out " + (kWork / "corpus_b" / "nested").string() + gen_flags) == 0);
    CHECK(read_file(kWork / "corpus_a" / "manifest.csv") ==
          read_file(kWork / "corpus_b" / "nested" / "manifest.csv"));

    // --- train: micro run writes checkpoint + loss log ---
    const std::string model_flags =
        " --d-model 48 --heads 4 --depth 1 --grid 4 --patch 4 --seed 3";
    CHECK(run("train --corpus " + (kWork / "corpus_a").string() + " --out " +
              (kWork / "run").string() + model_flags +
              " --pretrain-steps 4 --train-steps 4 --lr 1e-3") == 0);
    CHECK(fs::exists(kWork / "run" / "checkpoint.hckpt"));
    const std::string loss_log = read_file(kWork / "run" / "loss.csv");
    CHECK(loss_log.find("pretrain,0,") != std::string::npos);
    CHECK(loss_log.find("finetune,3,") != std::string::npos);

    // --- sample: single pair, bit-identical across reruns of the same seed ---
    const std::string ckpt = (kWork / "run" / "checkpoint.hckpt").string();
    const std::string pair_flags = " --checkpoint " + ckpt + " --line " +
                                   (kWork / "corpus_a" / "000000_line.ppm").string() +
                                   " --ref " + (kWork / "corpus_a" / "000000_ref.ppm").string() +
                                   " --steps 3 --seed 11";
    CHECK(run("sample --out " + (kWork / "s1.ppm").string() + pair_flags) == 0);
    CHECK(run("sample --out " + (kWork / "s2.ppm").string() + pair_flags) == 0);
    CHECK(read_file(kWork / "s1.ppm") == read_file(kWork / "s2.ppm"));

    // --- sample: corpus batch mode + eval against the corpus ---
    CHECK(run("sample --checkpoint " + ckpt + " --corpus " + (kWork / "corpus_a").string() +
              " --out " + (kWork / "gen").string() + " --steps 2 --seed 12") == 0);
    CHECK(run("eval --gen " + (kWork / "gen").string() + " --gt " +
              (kWork / "corpus_a").string() + " --out " + (kWork / "metrics.csv").string()) ==
          0);
    const std::string metrics = read_file(kWork / "metrics.csv");
    CHECK(metrics.find("file,psnr,ssim,mse_cr") != std::string::npos);
    CHECK(metrics.find("mean,") != std::string::npos);

    // --- eval: identical directories score perfectly (plain mode) ---
    fs::create_directories(kWork / "plain");
    for (int i = 0; i < 4; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%06d_target.ppm", i);
        fs::copy_file(kWork / "corpus_a" / name, kWork / "plain" / name);
    }
    CHECK(run("eval --gen " + (kWork / "plain").string() + " --gt " +
              (kWork / "plain").string() + " --line " + (kWork / "plain").string() +
              " --out " + (kWork / "self.csv").string()) == 0);
    std::ifstream self(kWork / "self.csv");
    std::string line;
    std::getline(self, line);  // header
    int rows = 0;
    while (std::getline(self, line)) {
        if (line.empty()) continue;
        ++rows;
        std::stringstream ss(line);
        std::string file, psnr, ssim, mse;
        std::getline(ss, file, ',');
        std::getline(ss, psnr, ',');
        std::getline(ss, ssim, ',');
        std::getline(ss, mse, ',');
        CHECK(std::stod(psnr) == 100.0);
        CHECK(std::stod(ssim) == 1.0);
        CHECK(std::stod(mse) == 0.0);
    }
    CHECK(rows == 5);  // 4 pairs + mean

    // --- segment-regions: visualization + table ---
    CHECK(run("segment-regions --image " + (kWork / "corpus_a" / "000000_target.ppm").string() +
              " --line " + (kWork / "corpus_a" / "000000_line.ppm").string() + " --out-viz " +
              (kWork / "viz.ppm").string() + " --out-table " + (kWork / "regions.csv").string()) ==
          0);
    CHECK(fs::exists(kWork / "viz.ppm"));
    CHECK(read_file(kWork / "regions.csv").find("region,pixels,rep_x,rep_y") !=
          std::string::npos);

    // --- error handling ---
    CHECK(run("gen --out " + (kWork / "x").string() + " --bogus-flag 1") != 0);
    CHECK(run("train --corpus " + (kWork / "missing").string() + " --out " +
              (kWork / "y").string()) != 0);
    CHECK(run("--help") == 0);
    CHECK(run("sample --checkpoint " + (kWork / "nope.hckpt").string() + " --out " +
              (kWork / "z.ppm").string()) != 0);

    fs::remove_all(kWork);
}
