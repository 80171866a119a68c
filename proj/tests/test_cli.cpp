#include <cmvrp/evaluation.hpp>
#include <cmvrp/plan_io.hpp>
#include <cmvrp/render.hpp>

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace cmvrp;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// Runs the CLI with the given arguments; stdout/stderr go to files in `dir`.
int cli(const fs::path& dir, const std::string& args) {
    const std::string cmd = std::string(CMVRP_CLI) + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " +
                            (dir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("cmvrp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        spit(dir_ / "toy.cfg", "name = TOY4\nnum_customers = 4\nnum_vehicles = 2\ncapacities = 10, 12\n"
                               "test_set_size = 6\nseed = 5\n");
        spit(dir_ / "smoke.cfg", "batch_size = 4\niterations = 1\nembed_dim = 8\nattn_dim = 8\n"
                                 "validation_size = 4\neval_every = 1\nactor_lr = 0.001\ncritic_lr = 0.001\n");
    }

    std::string d(const std::string& leaf) const { return (dir_ / leaf).string(); }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenerateWritesOneDocumentPerInstanceDeterministically) {
    ASSERT_EQ(cli(dir_, "--out-dir " + d("a") + " generate " + d("toy.cfg") + " --size 1"), 0);
    ASSERT_TRUE(fs::exists(dir_ / "a" / "manifest.json"));
    ASSERT_TRUE(fs::exists(dir_ / "a" / "TOY4-0000.json"));
    EXPECT_FALSE(fs::exists(dir_ / "a" / "TOY4-0001.json"));
    const auto first = slurp(dir_ / "a" / "TOY4-0000.json");
    EXPECT_EQ(read_instance(first), generate_instance({"TOY4", 4, 2, {10, 12}, 1, 5}, 0));
    ASSERT_EQ(cli(dir_, "--out-dir " + d("a") + " generate " + d("toy.cfg") + " --size 1"), 0);
    EXPECT_EQ(slurp(dir_ / "a" / "TOY4-0000.json"), first);
    EXPECT_EQ(slurp(dir_ / "a" / "manifest.json").find("\"config_hash\"") != std::string::npos, true);
}

TEST_F(Cli, InvalidCapacitiesAreValidationErrors) {
    spit(dir_ / "bad.cfg", "name = BAD\nnum_customers = 4\nnum_vehicles = 2\ncapacities = 10\n"
                           "test_set_size = 3\nseed = 1\n");
    EXPECT_EQ(cli(dir_, "--out-dir " + d("b") + " generate " + d("bad.cfg")), 2);
    EXPECT_EQ(cli(dir_, "--out-dir " + d("b") + " train " + d("smoke.cfg") + " " + d("bad.cfg")), 2);
    EXPECT_NE(slurp(dir_ / "stderr.txt").find("capacities"), std::string::npos);
}

TEST_F(Cli, TrainSmokeIsReproducible) {
    const std::string base = " --no-timing --seed 7 train " + d("smoke.cfg") + " " + d("toy.cfg");
    ASSERT_EQ(cli(dir_, "--out-dir " + d("r1") + base), 0);
    ASSERT_EQ(cli(dir_, "--out-dir " + d("r2") + base), 0);
    ASSERT_TRUE(fs::exists(dir_ / "r1" / "final.ckpt"));
    ASSERT_TRUE(fs::exists(dir_ / "r1" / "train_log.csv"));
    EXPECT_EQ(slurp(dir_ / "r1" / "final.ckpt"), slurp(dir_ / "r2" / "final.ckpt"));
    EXPECT_EQ(slurp(dir_ / "r1" / "train_log.csv"), slurp(dir_ / "r2" / "train_log.csv"));
    ASSERT_EQ(cli(dir_, "--out-dir " + d("r3") + " --no-timing --seed 8 train " + d("smoke.cfg") + " " + d("toy.cfg")), 0);
    EXPECT_NE(slurp(dir_ / "r1" / "final.ckpt"), slurp(dir_ / "r3" / "final.ckpt"));
}

TEST_F(Cli, EvalWritesRowsAndSummary) {
    ASSERT_EQ(cli(dir_, "--out-dir " + d("set") + " generate " + d("toy.cfg")), 0);
    ASSERT_EQ(cli(dir_, "--out-dir " + d("ev") + " --no-timing eval --test-set " + d("set") + " --methods cw,sweep"), 0);
    const auto rows = read_csv(slurp(dir_ / "ev" / "results.csv"));
    ASSERT_EQ(rows.size(), 12u);
    EXPECT_EQ(rows.front().method, "cw");
    EXPECT_EQ(rows.back().method, "sweep");
    const auto summary = slurp(dir_ / "ev" / "summary.md");
    EXPECT_EQ(summary, summary_table(summarize(rows)));
    EXPECT_NE(summary.find("| TOY4 | cw |"), std::string::npos);
    EXPECT_NE(summary.find("| TOY4 | sweep |"), std::string::npos);

    // Serial and parallel runs agree byte for byte.
    ASSERT_EQ(cli(dir_, "--out-dir " + d("ev4") + " --jobs 4 --no-timing eval --test-set " + d("set") +
                            " --methods cw,sweep"),
              0);
    EXPECT_EQ(slurp(dir_ / "ev" / "results.csv"), slurp(dir_ / "ev4" / "results.csv"));
}

TEST_F(Cli, EvalRefusesEmptyMethodsAndForeignCheckpoints) {
    ASSERT_EQ(cli(dir_, "--out-dir " + d("set") + " generate " + d("toy.cfg")), 0);
    EXPECT_EQ(cli(dir_, "--out-dir " + d("ev") + " eval --test-set " + d("set") + " --methods ,"), 2);
    EXPECT_EQ(cli(dir_, "--out-dir " + d("ev") + " eval --test-set " + d("set") + " --methods drl-greedy"), 2);

    // A checkpoint trained for another capacity vector is refused.
    spit(dir_ / "other.cfg", "name = TOY4\nnum_customers = 4\nnum_vehicles = 2\ncapacities = 10, 10\n"
                             "test_set_size = 6\nseed = 5\n");
    ASSERT_EQ(cli(dir_, "--out-dir " + d("tr") + " train " + d("smoke.cfg") + " " + d("other.cfg")), 0);
    EXPECT_EQ(cli(dir_, "--out-dir " + d("ev") + " eval --test-set " + d("set") + " --methods drl-greedy --checkpoint " +
                            d("tr/final.ckpt")),
              2);
    EXPECT_NE(slurp(dir_ / "stderr.txt").find("configuration"), std::string::npos);

    // A matching one is accepted.
    ASSERT_EQ(cli(dir_, "--out-dir " + d("tr2") + " train " + d("smoke.cfg") + " " + d("toy.cfg")), 0);
    EXPECT_EQ(cli(dir_, "--out-dir " + d("ev2") + " eval --test-set " + d("set") + " --methods drl-greedy,cw --checkpoint " +
                            d("tr2/final.ckpt")),
              0);
    EXPECT_EQ(read_csv(slurp(dir_ / "ev2" / "results.csv")).size(), 12u);
}

TEST_F(Cli, SolveRenderCompare) {
    ASSERT_EQ(cli(dir_, "--out-dir " + d("set") + " generate " + d("toy.cfg") + " --size 2"), 0);
    ASSERT_EQ(cli(dir_, "solve " + d("set/TOY4-0000.json") + " --method sweep --out " + d("p.json")), 0);
    const auto doc = read_plan(slurp(dir_ / "p.json"));
    EXPECT_EQ(doc.plan, sweep(doc.instance));
    ASSERT_EQ(cli(dir_, "render " + d("p.json") + " --out " + d("p.svg")), 0);
    const auto svg = slurp(dir_ / "p.svg");
    EXPECT_EQ(svg, render_svg(doc.plan, doc.instance));

    ASSERT_EQ(cli(dir_, "--out-dir " + d("e1") + " eval --test-set " + d("set") + " --methods cw"), 0);
    ASSERT_EQ(cli(dir_, "--out-dir " + d("e2") + " eval --test-set " + d("set") + " --methods sweep"), 0);
    ASSERT_EQ(cli(dir_, "compare " + d("e1/results.csv") + " " + d("e2/results.csv") + " --out " + d("cmp.md")), 0);
    const auto md = slurp(dir_ / "cmp.md");
    EXPECT_NE(md.find("| cw |"), std::string::npos);
    EXPECT_NE(md.find("| sweep |"), std::string::npos);
    EXPECT_EQ(cli(dir_, "compare " + d("e1/results.csv") + " " + d("e1/results.csv")), 2);
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(cli(dir_, "--out-dir " + d("x") + " eval --test-set " + d("missing") + " --methods cw"), 3);
    EXPECT_EQ(cli(dir_, "solve " + d("missing.json") + " --method cw"), 3);
    spit(dir_ / "broken.json", "{ not json");
    EXPECT_EQ(cli(dir_, "solve " + d("broken.json") + " --method cw"), 2);
    EXPECT_EQ(cli(dir_, "solve " + d("broken.json") + " --method tabu"), 2);
    EXPECT_EQ(cli(dir_, "frobnicate"), 2);
    EXPECT_EQ(cli(dir_, ""), 2);
}
