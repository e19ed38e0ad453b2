// Copyright (c) 2026 The moerlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "moerlab/cli.hpp"
#include "moerlab/config.hpp"
#include "moerlab/io.hpp"

namespace moerlab {
namespace {

namespace fs = std::filesystem;

constexpr const char* kSmallConfig = R"({
  "seed": 3,
  "model": {"num_layers": 4, "num_experts": 16, "k_base": 4, "d_model": 16, "d_expert": 16,
            "vocab": 64, "num_domains": 2, "max_seq_len": 16, "num_query_tokens": 4},
  "plant": {"num_keys": 2},
  "corpus": {"sequences_per_domain": 6, "seq_len": 8},
  "tasks": {"sequences_per_domain": 4, "seq_len": 8},
  "baseline": {"des_k_low": 2}
})";

struct CliRun {
    int code = 0;
    std::string out;
    std::string err;
};

CliRun cli(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    CliRun r;
    r.code = cli_main(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        root_ = fs::temp_directory_path() /
                (std::string("moerlab_cli_") +
                 ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(root_);
        fs::create_directories(root_);
        config_ = (root_ / "config.json").string();
        write_file_atomic(config_, kSmallConfig);
        unsetenv("MOERLAB_OUT");
    }
    void TearDown() override {
        unsetenv("MOERLAB_OUT");
        fs::remove_all(root_);
    }

    // Runs a subcommand against the small config and the given output dir.
    CliRun step(const std::string& command, const fs::path& dir,
                std::vector<std::string> extra = {}) {
        std::vector<std::string> args = {"--config", config_, "--out", dir.string(), command};
        args.insert(args.end(), extra.begin(), extra.end());
        return cli(args);
    }

    void pipeline(const fs::path& dir) {
        for (const char* command : {"gen-model", "gen-corpus", "profile", "calibrate", "identify"}) {
            const auto r = step(command, dir);
            ASSERT_EQ(r.code, 0) << command << ": " << r.err;
        }
        const auto r = step("compare", dir, {"--policies", "baseline,pick,ban,banpick,dyntau,des,odp"});
        ASSERT_EQ(r.code, 0) << r.err;
        ASSERT_EQ(step("report", dir).code, 0);
    }

    fs::path root_;
    std::string config_;
};

std::size_t line_count(const std::string& text) {
    std::size_t n = 0;
    for (char c : text) {
        n += c == '\n';
    }
    return n;
}

TEST_F(CliTest, HelpExitsZero) {
    const auto r = cli({"--help"});
    EXPECT_EQ(r.code, 0);
    for (const char* command : {"gen-model", "gen-corpus", "profile", "calibrate", "identify",
                                "run", "compare", "report"}) {
        EXPECT_NE(r.out.find(command), std::string::npos) << command;
    }
}

TEST_F(CliTest, UsageErrorsExitOne) {
    EXPECT_EQ(cli({}).code, 1);
    EXPECT_EQ(cli({"frobnicate"}).code, 1);
    EXPECT_EQ(cli({"--bogus", "gen-model"}).code, 1);
    EXPECT_EQ(cli({"--seed", "abc", "gen-model"}).code, 1);
    const auto r = cli({"gen-model", "profile"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("error"), std::string::npos);
}

TEST_F(CliTest, MissingArtifactsNameTheFixingCommand) {
    const auto dir = root_ / "empty";
    auto r = step("profile", dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("model.bin"), std::string::npos);
    EXPECT_NE(r.err.find("run gen-model first"), std::string::npos);

    ASSERT_EQ(step("gen-model", dir).code, 0);
    r = step("identify", dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("run calibrate first"), std::string::npos);
    r = step("run", dir, {"--policy", "ban"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("run calibrate first"), std::string::npos);
}

TEST_F(CliTest, ConfigErrorsExitOne) {
    write_file_atomic(root_ / "bad.json", R"({"pruning": {"lamda": 0.5}})");
    auto r = cli({"--config", (root_ / "bad.json").string(), "--out", root_.string(), "gen-model"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("config error"), std::string::npos);
    EXPECT_NE(r.err.find("lamda"), std::string::npos);

    r = step("run", root_ / "x", {"--policy", "nope"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("unknown policy"), std::string::npos);

    r = cli({"--config", (root_ / "absent.json").string(), "gen-model"});
    EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, CorruptModelIsAFormatError) {
    const auto dir = root_ / "corrupt";
    write_file_atomic(dir / "model.bin", "MOERLAB1 truncated");
    const auto r = step("profile", dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("format error"), std::string::npos);
}

TEST_F(CliTest, FullPipelineWritesEveryArtifact) {
    const auto dir = root_ / "a";
    pipeline(dir);
    for (const char* name :
         {"model.bin", "spec.json", "config.json", "corpus.json", "tasks.json", "usage.csv",
          "usage_layer_0.svg", "usage_layer_3.svg", "candidates.json", "kl_impact.json",
          "sensitivity.json", "sensitivity.csv", "key_experts.json", "metrics.csv",
          "trace_baseline.ndjson", "trace_odp.ndjson"}) {
        EXPECT_TRUE(fs::exists(dir / name)) << name;
    }
    const auto metrics = metrics_from_csv(read_file(dir / "metrics.csv"));
    ASSERT_EQ(metrics.size(), 7u);
    EXPECT_EQ(metrics[0].policy, "baseline");
    EXPECT_DOUBLE_EQ(metrics[0].avg_topk, 4.0);
    for (const auto& m : metrics) {
        EXPECT_EQ(m.runtime_s, 0.0);
    }
    // Trace: 8 task sequences x 8 positions x 4 layers.
    EXPECT_EQ(line_count(read_file(dir / "trace_baseline.ndjson")), 256u);
}

TEST_F(CliTest, PipelineIsByteIdenticalAcrossRuns) {
    const auto a = root_ / "a";
    const auto b = root_ / "b";
    pipeline(a);
    pipeline(b);
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
        const auto name = entry.path().filename();
        if (name == "config.json") {
            continue;  // records the output directory
        }
        ASSERT_TRUE(fs::exists(b / name)) << name;
        EXPECT_EQ(read_file(a / name), read_file(b / name)) << name;
        ++compared;
    }
    EXPECT_GE(compared, 20u);
}

TEST_F(CliTest, CompareWritesOneRowPerPolicyInOrder) {
    const auto dir = root_ / "c";
    for (const char* command : {"gen-model", "calibrate", "identify"}) {
        ASSERT_EQ(step(command, dir).code, 0) << command;
    }
    const auto r = step("compare", dir, {"--policies", "ban,baseline,pick"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto text = read_file(dir / "metrics.csv");
    EXPECT_EQ(line_count(text), 4u);
    const auto metrics = metrics_from_csv(text);
    ASSERT_EQ(metrics.size(), 3u);
    EXPECT_EQ(metrics[0].policy, "ban");
    EXPECT_EQ(metrics[1].policy, "baseline");
    EXPECT_EQ(metrics[2].policy.rfind("pick", 0), 0u);
    EXPECT_NE(r.out.find("accuracy"), std::string::npos);
}

TEST_F(CliTest, RunWritesPolicyMetricsAndTrace) {
    const auto dir = root_ / "r";
    ASSERT_EQ(step("gen-model", dir).code, 0);
    const auto r = step("run", dir, {"--policy", "dyntau"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto metrics = metrics_from_csv(read_file(dir / "metrics_dyntau.csv"));
    ASSERT_EQ(metrics.size(), 1u);
    EXPECT_TRUE(fs::exists(dir / "trace_dyntau.ndjson"));
    EXPECT_TRUE(fs::exists(dir / "tasks.json"));
    const auto timed = step("run", dir, {"--policy", "baseline"});
    ASSERT_EQ(timed.code, 0);
    EXPECT_EQ(metrics_from_csv(read_file(dir / "metrics_baseline.csv"))[0].runtime_s, 0.0);
    ASSERT_EQ(cli({"--config", config_, "--out", dir.string(), "--timing", "run", "--policy",
                   "baseline"})
                  .code,
              0);
    EXPECT_GT(metrics_from_csv(read_file(dir / "metrics_baseline.csv"))[0].runtime_s, 0.0);
}

TEST_F(CliTest, OutputDirectoryPrecedence) {
    const auto from_flag = root_ / "flag";
    const auto from_env = root_ / "env";
    const auto from_config = root_ / "cfgdir";
    ExperimentConfig cfg = config_from_json(kSmallConfig);
    cfg.out_dir = from_config.string();
    write_file_atomic(root_ / "with_out.json", config_to_json(cfg));
    const std::string with_out = (root_ / "with_out.json").string();

    ASSERT_EQ(cli({"--config", with_out, "gen-model"}).code, 0);
    EXPECT_TRUE(fs::exists(from_config / "model.bin"));

    setenv("MOERLAB_OUT", from_env.string().c_str(), 1);
    ASSERT_EQ(cli({"--config", with_out, "gen-model"}).code, 0);
    EXPECT_TRUE(fs::exists(from_env / "model.bin"));

    ASSERT_EQ(cli({"--config", with_out, "--out", from_flag.string(), "gen-model"}).code, 0);
    EXPECT_TRUE(fs::exists(from_flag / "model.bin"));
    EXPECT_EQ(read_file(from_flag / "model.bin"), read_file(from_env / "model.bin"));
}

TEST_F(CliTest, SeedFlagOverridesConfig) {
    const auto a = root_ / "s3";
    const auto b = root_ / "s4";
    ASSERT_EQ(step("gen-model", a).code, 0);
    ASSERT_EQ(cli({"--config", config_, "--out", b.string(), "--seed", "4", "gen-model"}).code, 0);
    EXPECT_EQ(load_config(a / "config.json").seed, 3u);
    EXPECT_EQ(load_config(b / "config.json").seed, 4u);
    EXPECT_NE(read_file(a / "model.bin"), read_file(b / "model.bin"));
}

}  // namespace
}  // namespace moerlab
