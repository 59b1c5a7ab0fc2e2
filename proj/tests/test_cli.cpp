#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string cli = DELTASEG_CLI_PATH;

int run(const std::string& args) {
    const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "deltaseg_cli_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("no subcommand prints usage and exits 2") { CHECK(run("") == 2); }

TEST_CASE("unknown flags exit nonzero") {
    CHECK(run("params --frobnicate") != 0);
    CHECK(run("definitely-not-a-subcommand") != 0);
}

TEST_CASE("params subcommand validates the reference budgets") {
    CHECK(run("params --variant full --classes 7") == 0);
    CHECK(run("params --variant v1 --classes 7") == 0);
    CHECK(run("params --variant v2 --classes 7") == 0);
    // scaled widths skip the reference comparison but still print
    CHECK(run("params --variant full --classes 7 --width-mult 0.5") == 0);
}

TEST_CASE("synth, train, eval and predict chain end to end") {
    const auto data = fresh_dir("data");
    const auto out = fresh_dir("out");
    CHECK(run("synth --out " + data.string() + " --count 6 --val-count 2 --test-count 2 --classes 3 --input-size 32 --seed 4") == 0);
    REQUIRE(fs::exists(data / "train" / "images" / "synth_train_0.png"));
    REQUIRE(fs::exists(data / "classes.txt"));

    CHECK(run("train --data " + data.string() + " --out " + out.string() +
              " --epochs 1 --batch-size 4 --classes 3 --input-size 32 --width-mult 0.25 --no-augment --quiet") == 0);
    REQUIRE(fs::exists(out / "last.ckpt"));
    REQUIRE(fs::exists(out / "train_log.csv"));

    CHECK(run("eval --checkpoint " + (out / "last.ckpt").string() + " --data " + data.string() +
              " --split val --csv " + (out / "metrics.csv").string()) == 0);
    CHECK(fs::exists(out / "metrics.csv"));

    const auto pred = fresh_dir("pred");
    CHECK(run("predict --checkpoint " + (out / "last.ckpt").string() + " --out " + pred.string() + " " +
              (data / "val" / "images" / "synth_val_0.png").string()) == 0);
    CHECK(fs::exists(pred / "synth_val_0_mask.png"));
    CHECK(fs::exists(pred / "synth_val_0_color.png"));

    SUBCASE("config file fills defaults and flags override it") {
        const auto cfg = out / "run.cfg";
        std::ofstream f(cfg);
        f << "# tiny run\n";
        f << "epochs = 1\n";
        f << "batch-size = 4\n";
        f << "classes = 3\n";
        f << "input-size = 32\n";
        f << "width-mult = 0.25\n";
        f.close();
        const auto out2 = fresh_dir("out2");
        CHECK(run("train --config " + cfg.string() + " --data " + data.string() + " --out " + out2.string() +
                  " --no-augment --quiet") == 0);
        CHECK(fs::exists(out2 / "last.ckpt"));
        // an unknown key is rejected
        std::ofstream g(cfg, std::ios::app);
        g << "mystery-knob = 3\n";
        g.close();
        CHECK(run("train --config " + cfg.string() + " --data " + data.string() + " --out " + out2.string() +
                  " --no-augment --quiet") != 0);
    }
}

TEST_CASE("eval on a missing checkpoint fails cleanly") {
    CHECK(run("eval --checkpoint /nonexistent.ckpt --data /nonexistent") != 0);
}
