#include "edgesplat/cli.hpp"
#include "edgesplat/errors.hpp"
#include "edgesplat/scenes.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace edgesplat;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = 0;
    std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
    args.insert(args.begin(), "edgesplat");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("edgesplat_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path make_scene(const std::string& name = "ds") {
        const auto p = dir_ / name;
        const auto r = cli({"make-scene", "--kind", "blob-field", "--views", "8", "--res", "24", "--seed", "7",
                            "--out", p.string()});
        EXPECT_EQ(r.code, 0) << r.err;
        return p;
    }

    fs::path write_config(const std::string& body, const std::string& name = "cfg.json") {
        std::ofstream(dir_ / name) << body;
        return dir_ / name;
    }

    fs::path dir_;
};

const char* kTinyConfig = R"({
  "dataset": "ds", "output": "run", "total_iters": 30, "eval_interval": 10, "workers": 1,
  "policy": {"densify_interval": 5, "budget_max": 150, "abs_grad_threshold": 0.0001},
  "init": {"count": 40}
})";

} // namespace

TEST(RunConfigParse, DefaultsAndOverrides) {
    const RunConfig rc = parse_run_config(R"({"dataset": "d", "output": "o", "mode": "baseline_adc",
        "total_iters": 100, "policy": {"las_d_fraction": 0.3, "rs_multiplier": 0.9},
        "schedule": {"mu_stages": [{"start": 0, "interval": 1}, {"start": 0.6, "interval": 4}]}})",
                                          "/base");
    EXPECT_EQ(rc.dataset, fs::path("/base/d"));
    EXPECT_EQ(rc.train.mode, DensifyMode::baseline_adc);
    EXPECT_EQ(rc.train.total_iters, 100);
    EXPECT_DOUBLE_EQ(rc.train.policy.las_d_fraction, 0.3);
    ASSERT_TRUE(rc.train.policy.rs_multiplier.has_value());
    EXPECT_EQ(rc.train.schedule.mu_stages.size(), 2u);
    EXPECT_GE(rc.train.workers, 1);
}

TEST(RunConfigParse, ResolvedJsonRoundTrips) {
    const RunConfig rc = parse_run_config(R"({"dataset": "/d", "output": "/o", "lambda": 0.3, "seed": 12,
        "policy": {"reset_opacity_value": 0.02}})");
    const RunConfig back = parse_run_config(run_config_to_json(rc));
    EXPECT_EQ(run_config_to_json(back), run_config_to_json(rc));
    EXPECT_EQ(back.train.seed, 12u);
    EXPECT_EQ(back.train.reset_opacity_value, std::optional<double>(0.02));
}

TEST(RunConfigParse, RejectsBadInput) {
    auto message = [](const std::string& text) {
        try {
            parse_run_config(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_NE(message(R"({"output": "o"})").find("dataset"), std::string::npos);
    EXPECT_NE(message(R"({"dataset": "d", "output": "o", "extra": 1})").find("extra"), std::string::npos);
    EXPECT_NE(message(R"({"dataset": "d", "output": "o", "policy": {"typo": 1}})").find("policy.typo"),
              std::string::npos);
    EXPECT_NE(message(R"({"dataset": "d", "output": "o", "total_iters": "many"})").find("total_iters"),
              std::string::npos);
    EXPECT_NE(message(R"({"dataset": "d", "output": "o", "mode": "fast"})").find("mode"), std::string::npos);
    EXPECT_NE(message(R"({"dataset": "d", "output": "o", "lambda": 2})").find("lambda"), std::string::npos);
    EXPECT_NE(message("{ nope").find("JSON"), std::string::npos);
}

TEST(Geometry, ClosedFormChecksPassAndCatchWrongMultiplier) {
    GeometryOptions opt;
    opt.grid_search = false;
    opt.parents = 25;
    opt.d_fractions = {0.1, 0.3, 0.45, 0.5};
    const GeometryReport ok = verify_geometry(opt);
    EXPECT_TRUE(ok.passed);
    for (const auto& c : ok.cases) {
        EXPECT_LE(c.tangency_error, kTangencyTolerance);
        EXPECT_LE(c.endpoint_error, kEndpointTolerance);
    }
    opt.multiplier_override = 1.0;
    const GeometryReport bad = verify_geometry(opt);
    EXPECT_FALSE(bad.passed);
    EXPECT_EQ(bad.las_failures, static_cast<int>(bad.cases.size()));
}

TEST(Geometry, GridSearchAtDefaultFraction) {
    GeometryOptions opt;
    opt.parents = 2;
    opt.samples = 200000;
    const GeometryReport rep = verify_geometry(opt);
    EXPECT_TRUE(rep.passed) << rep.to_json();
    EXPECT_NE(rep.to_json().find("expected_multiplier"), std::string::npos);
}

TEST_F(CliTest, MakeSceneIsByteStable) {
    const auto a = make_scene("a"), b = make_scene("b");
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (entry.is_regular_file()) {
            const auto rel = fs::relative(entry.path(), a);
            EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
        }
    }
    EXPECT_TRUE(fs::exists(a / "manifest.json"));
    EXPECT_EQ(cli({"make-scene", "--views", "4", "--out", (dir_ / "c").string()}).code, 2);
    EXPECT_EQ(cli({"make-scene", "--kind", "donut", "--out", (dir_ / "c").string()}).code, 2);
    EXPECT_EQ(cli({"make-scene"}).code, 2);
    EXPECT_EQ(cli({}).code, 2);
}

TEST_F(CliTest, TrainEvalRoundTrip) {
    make_scene();
    const auto cfg = write_config(kTinyConfig);
    const auto r = cli({"train", "--config", cfg.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"log.csv", "final.ckpt", "manifest.json", "metrics.json", "densify.csv", "prune.csv",
                          "count_curve.csv", "timing.csv", "renders/test_0000.png"}) {
        EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
    }
    const auto e1 = cli({"eval", "--checkpoint", (dir_ / "run" / "final.ckpt").string(), "--dataset",
                         (dir_ / "ds").string(), "--workers", "1"});
    const auto e2 = cli({"eval", "--checkpoint", (dir_ / "run" / "final.ckpt").string(), "--dataset",
                         (dir_ / "ds").string(), "--workers", "2"});
    ASSERT_EQ(e1.code, 0) << e1.err;
    EXPECT_EQ(e1.out, e2.out);
    EXPECT_NE(e1.out.find("mean_psnr"), std::string::npos);

    const auto baseline = cli({"train", "--config", cfg.string(), "--mode", "baseline_adc", "--output",
                               (dir_ / "run_b").string()});
    EXPECT_EQ(baseline.code, 0) << baseline.err;
    EXPECT_NE(slurp(dir_ / "run_b" / "manifest.json").find("baseline_adc"), std::string::npos);
}

TEST_F(CliTest, EvalRejectsOtherDataset) {
    make_scene();
    ASSERT_EQ(cli({"train", "--config", write_config(kTinyConfig).string(), "--iters", "10"}).code, 0);
    const auto other = dir_ / "other";
    ASSERT_EQ(cli({"make-scene", "--kind", "checker-box", "--views", "8", "--res", "24", "--out", other.string()})
                  .code,
              0);
    const auto r = cli({"eval", "--checkpoint", (dir_ / "run" / "final.ckpt").string(), "--dataset",
                        other.string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("different dataset"), std::string::npos);
}

TEST_F(CliTest, TrainUsageErrors) {
    EXPECT_EQ(cli({"train"}).code, 2);
    EXPECT_EQ(cli({"train", "--config", (dir_ / "missing.json").string()}).code, 2);
    const auto r = cli({"train", "--config", write_config(R"({"output": "o"})").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("dataset"), std::string::npos);
    const auto nodir = cli({"train", "--config", write_config(R"({"dataset": "nowhere", "output": "o"})").string()});
    EXPECT_EQ(nodir.code, 2);
    EXPECT_NE(nodir.err.find("dataset"), std::string::npos);
}

TEST_F(CliTest, ResumeFromCheckpointMatchesFullRun) {
    make_scene();
    std::string body = kTinyConfig;
    body.insert(body.rfind('}'), R"(, "checkpoint_interval": 12)");
    const auto cfg = write_config(body);
    ASSERT_EQ(cli({"train", "--config", cfg.string()}).code, 0);
    ASSERT_TRUE(fs::exists(dir_ / "run" / "state.bin"));
    ASSERT_EQ(cli({"train", "--config", cfg.string(), "--resume", (dir_ / "run" / "state.bin").string(), "--output",
                   (dir_ / "resumed").string()})
                  .code,
              0);
    for (const char* f : {"log.csv", "final.ckpt", "densify.csv", "count_curve.csv"}) {
        EXPECT_EQ(slurp(dir_ / "run" / f), slurp(dir_ / "resumed" / f)) << f;
    }
}

TEST_F(CliTest, AblateWritesTables) {
    make_scene();
    const auto cfg = write_config(kTinyConfig);
    const auto r = cli({"ablate", "--config", cfg.string(), "--sweep", "gc_on_off", "--out", (dir_ / "ab").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir_ / "ab" / "count_curve_gc_on.csv"));
    EXPECT_TRUE(fs::exists(dir_ / "ab" / "count_curve_gc_off.csv"));
    const std::string table = slurp(dir_ / "ab" / "ablation.csv");
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);

    EXPECT_EQ(cli({"ablate", "--config", cfg.string(), "--sweep", "colour"}).code, 2);
    EXPECT_EQ(cli({"ablate", "--config", cfg.string(), "--sweep", "d_fraction", "--values", "0.2,x"}).code, 2);
    EXPECT_EQ(cli({"ablate", "--config", cfg.string(), "--sweep", "d_fraction", "--values", "0.9"}).code, 2);
}

TEST_F(CliTest, VerifyGeometryExitCodes) {
    EXPECT_EQ(cli({"verify-geometry", "--no-grid-search"}).code, 0);
    const auto bad = cli({"verify-geometry", "--no-grid-search", "--inject-multiplier", "1.0"});
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.out.find("\"passed\": false"), std::string::npos);
}

TEST_F(CliTest, RenderWritesPng) {
    make_scene();
    ASSERT_EQ(cli({"train", "--config", write_config(kTinyConfig).string(), "--iters", "5"}).code, 0);
    const auto png = dir_ / "view.png";
    EXPECT_EQ(cli({"render", "--checkpoint", (dir_ / "run" / "final.ckpt").string(), "--dataset",
                   (dir_ / "ds").string(), "--view", "3", "--out", png.string()})
                  .code,
              0);
    EXPECT_TRUE(fs::exists(png));
    EXPECT_EQ(cli({"render", "--checkpoint", (dir_ / "run" / "final.ckpt").string(), "--dataset",
                   (dir_ / "ds").string(), "--view", "99", "--out", png.string()})
                  .code,
              2);
}
