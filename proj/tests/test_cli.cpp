#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("D2DGAIN_CLI");
    return p ? p : "";
}

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run_cli(const fs::path& dir, const std::string& args) {
    fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
    std::string cmd = cli_path() + " " + args + " >" + out.string() + " 2>" + err.string();
    int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("d2dgain_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        if (cli_path().empty()) GTEST_SKIP() << "D2DGAIN_CLI not set";
    }
};

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s)
        if (c == '\n') ++n;
    return n;
}

}  // namespace

TEST_F(CliTest, GenDataIsByteIdenticalAcrossRuns) {
    fs::path dir = fresh_dir("gendata");
    std::string base = "gen-data --samples 200 --seed 3 --env rural ";
    RunResult a = run_cli(dir, base + "--out " + (dir / "a.bin").string() + " --csv " +
                                   (dir / "a.csv").string());
    ASSERT_EQ(a.exit_code, 0) << a.err;
    RunResult b = run_cli(dir, base + "--out " + (dir / "b.bin").string() + " --csv " +
                                   (dir / "b.csv").string());
    ASSERT_EQ(b.exit_code, 0) << b.err;
    EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));
    EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
    EXPECT_FALSE(slurp(dir / "a.bin").empty());

    std::string manifest = slurp(dir / "a.bin.manifest.txt");
    EXPECT_EQ(manifest.rfind("# d2dgain 0.1.0 config_hash=", 0), 0u);
    EXPECT_NE(manifest.find("samples = 200"), std::string::npos);
    EXPECT_NE(manifest.find("environment = rural"), std::string::npos);
}

TEST_F(CliTest, TrainEvalRegressionFlow) {
    fs::path dir = fresh_dir("train");
    fs::path data = dir / "data.bin", model = dir / "model.bin", report = dir / "report.csv";
    RunResult g = run_cli(dir, "gen-data --samples 400 --seed 5 --env rural --out " + data.string());
    ASSERT_EQ(g.exit_code, 0) << g.err;

    RunResult t = run_cli(dir, "train --data " + data.string() + " --out " + model.string() +
                                   " --report " + report.string() + " --max-epochs 2");
    ASSERT_EQ(t.exit_code, 0) << t.err;
    EXPECT_TRUE(fs::exists(model));
    EXPECT_NE(t.out.find("test_pearson="), std::string::npos);

    std::string rep = slurp(report);
    EXPECT_NE(rep.find("epoch,train_mse,val_mse,mu"), std::string::npos);
    int rows = count_lines(rep) - 2;  // manifest + header
    EXPECT_GE(rows, 1);
    EXPECT_LE(rows, 2);

    RunResult e = run_cli(dir, "eval --model " + model.string() + " --data " + data.string());
    ASSERT_EQ(e.exit_code, 0) << e.err;
    EXPECT_EQ(e.out.rfind("pearson=", 0), 0u);

    fs::path reg = dir / "reg.csv";
    RunResult e2 = run_cli(dir, "eval --model " + model.string() + " --data " + data.string() +
                                    " --regression-out " + reg.string() + " --rows 20");
    ASSERT_EQ(e2.exit_code, 0) << e2.err;
    std::string reg_text = slurp(reg);
    EXPECT_NE(reg_text.find("true_pl_db,predicted_pl_db"), std::string::npos);
    EXPECT_EQ(count_lines(reg_text), 22);  // manifest + header + 20 rows
}

TEST_F(CliTest, RrmSubcommandWritesDecisionCapacities) {
    fs::path dir = fresh_dir("rrm");
    fs::path data = dir / "data.bin", model = dir / "model.bin", out = dir / "rrm.csv";
    ASSERT_EQ(run_cli(dir, "gen-data --samples 400 --seed 6 --env rural --out " + data.string())
                  .exit_code,
              0);
    ASSERT_EQ(run_cli(dir, "train --data " + data.string() + " --out " + model.string() +
                               " --max-epochs 2")
                  .exit_code,
              0);
    RunResult r = run_cli(dir, "rrm --model " + model.string() + " --out " + out.string() +
                                   " --mode dedicated --pairs 2 4 --drops 2 --seed 9");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    std::string text = slurp(out);
    EXPECT_NE(text.find("n_pairs,mode,gains_source,sum_capacity_bps"), std::string::npos);
    EXPECT_NE(text.find("dedicated,true"), std::string::npos);
    EXPECT_NE(text.find("dedicated,predicted"), std::string::npos);
    EXPECT_EQ(text.find("shared,"), std::string::npos);
    EXPECT_EQ(count_lines(text), 2 + 4);  // manifest + header + 2 sources x 2 pair counts
}

TEST_F(CliTest, ConfigFileAndSetOverrides) {
    fs::path dir = fresh_dir("config");
    fs::path cfg = dir / "run.cfg";
    {
        std::ofstream f(cfg);
        f << "# comment line\n";
        f << "run.samples = 150\n";
        f << "area.environment = urban\n";
    }
    fs::path out = dir / "d.bin";
    RunResult a = run_cli(dir, "gen-data --config " + cfg.string() + " --out " + out.string());
    ASSERT_EQ(a.exit_code, 0) << a.err;
    std::string manifest = slurp(out.string() + ".manifest.txt");
    EXPECT_NE(manifest.find("samples = 150"), std::string::npos);
    EXPECT_NE(manifest.find("environment = urban"), std::string::npos);

    RunResult b = run_cli(dir, "gen-data --config " + cfg.string() +
                                   " --set run.samples=120 --out " + out.string());
    ASSERT_EQ(b.exit_code, 0) << b.err;
    EXPECT_NE(slurp(out.string() + ".manifest.txt").find("samples = 120"), std::string::npos);

    RunResult bad = run_cli(dir, "gen-data --set nope=1 --out " + out.string());
    EXPECT_EQ(bad.exit_code, 1);
    EXPECT_NE(bad.err.find("nope"), std::string::npos);
}

TEST_F(CliTest, ErrorExitCodes) {
    fs::path dir = fresh_dir("errors");
    // runtime failure: input file missing
    RunResult missing = run_cli(dir, "train --data " + (dir / "nope.bin").string() + " --out " +
                                         (dir / "m.bin").string());
    EXPECT_EQ(missing.exit_code, 2);

    // usage errors
    EXPECT_EQ(run_cli(dir, "no-such-command").exit_code, 1);
    EXPECT_EQ(run_cli(dir, "gen-data").exit_code, 1);  // --out is required

    RunResult fig = run_cli(dir, "reproduce fig99 --out-dir " + dir.string());
    EXPECT_EQ(fig.exit_code, 1);
    EXPECT_NE(fig.err.find("fig5"), std::string::npos);  // lists valid ids
}

TEST_F(CliTest, ReproduceOverheadFigure) {
    fs::path dir = fresh_dir("fig11");
    RunResult r = run_cli(dir, "reproduce fig11 --out-dir " + dir.string());
    ASSERT_EQ(r.exit_code, 0) << r.err;
    std::string csv = slurp(dir / "fig11.csv");
    EXPECT_NE(csv.find("series,n_pairs,replica_seed,total"), std::string::npos);
    EXPECT_NE(csv.find("shared,10,0,670,90,580"), std::string::npos);
    EXPECT_NE(csv.find("dedicated,2,0,24,12,12"), std::string::npos);
    std::string manifest = slurp(dir / "fig11_manifest.txt");
    EXPECT_NE(manifest.find("experiment = overhead"), std::string::npos);
    EXPECT_NE(manifest.find("csv = fig11.csv"), std::string::npos);
}

TEST_F(CliTest, OverheadSubcommand) {
    fs::path dir = fresh_dir("overhead");
    fs::path out = dir / "o.csv";
    RunResult r = run_cli(dir, "overhead --out " + out.string());
    ASSERT_EQ(r.exit_code, 0) << r.err;
    std::string csv = slurp(out);
    EXPECT_NE(csv.find("670"), std::string::npos);
    // default pair counts 2..10, two modes each
    EXPECT_EQ(count_lines(csv), 2 + 9 * 2);
}

TEST_F(CliTest, VersionFlag) {
    fs::path dir = fresh_dir("version");
    RunResult r = run_cli(dir, "--version");
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_NE(r.out.find("d2dgain 0.1.0"), std::string::npos);
}
