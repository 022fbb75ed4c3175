#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "savae/evaluation.hpp"
#include "support.hpp"

namespace {

namespace fs = std::filesystem;
using savae::testing::TempDir;

struct Run {
    int status = 0;
    std::string out;
    std::string err;
};

Run savae_cli(const fs::path& dir, const std::string& args)
{
    const auto out = dir / "stdout.txt";
    const auto err = dir / "stderr.txt";
    const std::string command = std::string("cd '") + dir.string() + "' && '" + SAVAE_CLI_PATH + "' " + args + " >'"
        + out.string() + "' 2>'" + err.string() + "'";
    const int raw = std::system(command.c_str());
    Run r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = savae::testing::read_bytes(out);
    r.err = savae::testing::read_bytes(err);
    return r;
}

void write_toy_corpus(const fs::path& dir)
{
    auto lines = [](const std::vector<savae::RawDocument>& docs) {
        std::string text;
        for (const auto& d : docs)
            text += d.labels[0] + "\t" + d.text + "\n";
        return text;
    };
    savae::testing::write_text(dir / "train.tsv", lines(savae::testing::two_topic_corpus(60, 1, 30)));
    savae::testing::write_text(dir / "test.tsv", lines(savae::testing::two_topic_corpus(20, 2, 30)));
}

std::map<std::string, std::string> key_values(const std::string& text)
{
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (const auto eq = line.find('='); eq != std::string::npos)
            out[line.substr(0, eq)] = line.substr(eq + 1);
    return out;
}

constexpr const char* kTrainArgs = "train --corpus run/corpus.savc --epochs 5 --lr 0.003 --d 4 --k 2 "
                                   "--encoder-layers 16 --checkpoint-every 2 --deterministic --seed 4";

TEST(Cli, EndToEndPipelineEmitsEveryArtifact)
{
    TempDir dir("cli_e2e");
    write_toy_corpus(dir.path());
    ASSERT_EQ(savae_cli(dir.path(), "preprocess --train train.tsv --test test.tsv --format labeled-lines --out run").status, 0);
    const auto trained = savae_cli(dir.path(), std::string(kTrainArgs) + " --out run");
    ASSERT_EQ(trained.status, 0) << trained.err;
    for (const char* split : {"train", "test"})
        ASSERT_EQ(savae_cli(dir.path(), std::string("represent --model run/model.savm --corpus run/corpus.savc --out run --split ")
                                            + split).status, 0);
    const auto retrieval = savae_cli(dir.path(), "eval-retrieval --query run/test.csv --index run/train.csv --out run");
    ASSERT_EQ(retrieval.status, 0) << retrieval.err;

    const auto run = dir.path() / "run";
    for (const char* file : {"corpus.savc", "model.savm", "train_log.csv", "checkpoints/epoch-2.savm",
                             "checkpoints/epoch-4.savm", "train.csv", "test.csv", "pr_curve.csv",
                             "manifest-preprocess.txt", "manifest-train.txt", "manifest-represent-test.txt",
                             "manifest-eval-retrieval.txt"})
        EXPECT_TRUE(fs::exists(run / file)) << file;

    const auto log = savae::testing::read_bytes(run / "train_log.csv");
    EXPECT_EQ(log.rfind("epoch,elbo,kl,perplexity,seconds\n", 0), 0u);
    EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 6);
    const auto curve = savae::testing::read_bytes(run / "pr_curve.csv");
    ASSERT_EQ(curve.rfind("recall,precision\n", 0), 0u);
    EXPECT_EQ(std::stod(curve.substr(17, curve.find(',', 17) - 17)), 0.0001);
    const auto manifest = key_values(savae::testing::read_bytes(run / "manifest-train.txt"));
    EXPECT_EQ(manifest.at("train.seed"), "4");
    EXPECT_EQ(manifest.at("model.d"), "4");
    EXPECT_EQ(manifest.at("train.deterministic"), "true");

    const auto bound = savae_cli(dir.path(), "bound --model run/model.savm --corpus run/corpus.savc --out run");
    ASSERT_EQ(bound.status, 0) << bound.err;
    EXPECT_EQ(key_values(bound.out).at("documents"), "20");
    const auto neighbors = savae_cli(dir.path(), "neighbors --model run/model.savm --corpus run/corpus.savc "
                                                 "--words goal,gene --n 3 --space local --out run");
    ASSERT_EQ(neighbors.status, 0) << neighbors.err;
    EXPECT_EQ(std::count(neighbors.out.begin(), neighbors.out.end(), '\n'), 7);
    const auto probe = savae_cli(dir.path(), "probe --train run/train.csv --test run/test.csv --out run");
    ASSERT_EQ(probe.status, 0) << probe.err;
    EXPECT_TRUE(key_values(probe.out).contains("accuracy"));
}

TEST(Cli, DeterministicTrainingIsByteIdentical)
{
    TempDir dir("cli_det");
    write_toy_corpus(dir.path());
    ASSERT_EQ(savae_cli(dir.path(), "preprocess --train train.tsv --format labeled-lines --out run").status, 0);
    ASSERT_EQ(savae_cli(dir.path(), std::string(kTrainArgs) + " --out a").status, 0);
    ASSERT_EQ(savae_cli(dir.path(), std::string(kTrainArgs) + " --out b").status, 0);
    EXPECT_EQ(savae::testing::read_bytes(dir.path() / "a/model.savm"),
              savae::testing::read_bytes(dir.path() / "b/model.savm"));
    EXPECT_EQ(savae::testing::read_bytes(dir.path() / "a/checkpoints/epoch-4.savm"),
              savae::testing::read_bytes(dir.path() / "b/checkpoints/epoch-4.savm"));
}

TEST(Cli, ClusterFixtureMetrics)
{
    TempDir dir("cli_cluster");
    const auto fixture = savae::testing::test_data_dir() / "cluster_fixture.csv";
    const auto run = savae_cli(dir.path(), "eval-cluster --reps '" + fixture.string() + "' --out run");
    ASSERT_EQ(run.status, 0) << run.err;
    const auto report = key_values(savae::testing::read_bytes(dir.path() / "run/cluster_metrics.txt"));
    EXPECT_EQ(report.at("clusters"), "3");
    EXPECT_EQ(report.at("points"), "30");
    // Values from tests/oracles/cluster_fixture.py.
    EXPECT_NEAR(std::stod(report.at("davies_bouldin_mean")), 0.2994182077178484, 1e-12);
    EXPECT_NEAR(std::stod(report.at("davies_bouldin_std")), 0.00017876956867221783, 1e-12);
    EXPECT_NEAR(std::stod(report.at("dunn")), 4.920278556622535, 1e-10);
    EXPECT_NEAR(std::stod(report.at("silhouette_mean")), 0.781789760398394, 1e-12);
    EXPECT_NEAR(std::stod(report.at("silhouette_std")), 0.042575760965366125, 1e-12);
}

TEST(Cli, ErrorsAreOneMachineReadableLine)
{
    TempDir dir("cli_err");
    write_toy_corpus(dir.path());
    ASSERT_EQ(savae_cli(dir.path(), "preprocess --train train.tsv --format labeled-lines --out run").status, 0);

    auto expect_error = [&](const std::string& args, const std::string& kind) {
        const auto r = savae_cli(dir.path(), args);
        EXPECT_NE(r.status, 0) << args;
        EXPECT_EQ(r.err.rfind("savae: error: " + kind + ": ", 0), 0u) << r.err;
        EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
    };
    expect_error("train --corpus missing.savc", "IoError");
    expect_error("train --corpus run/corpus.savc --epochs 0 --d 0 --set model.colour=red", "InvalidConfig");
    expect_error("train --corpus run/corpus.savc --bogus", "InvalidConfig");
    expect_error("preprocess --train train.tsv --format nope", "InvalidConfig");
    expect_error("eval-cluster --reps train.tsv", "ParseError");
    savae::testing::write_text(dir.path() / "cut.savm", "SAVM\x01");
    expect_error("represent --model cut.savm --corpus run/corpus.savc", "CorruptCheckpoint");

    const auto r = savae_cli(dir.path(), "train --corpus run/corpus.savc --epochs 0 --d 0 --set model.colour=red");
    for (const char* key : {"train.epochs", "model.d", "model.colour"})
        EXPECT_NE(r.err.find(key), std::string::npos) << key;
}

TEST(Cli, InputsAreNotModified)
{
    TempDir dir("cli_inputs");
    write_toy_corpus(dir.path());
    const auto before = savae::testing::read_bytes(dir.path() / "train.tsv");
    ASSERT_EQ(savae_cli(dir.path(), "preprocess --train train.tsv --format labeled-lines --out run").status, 0);
    const auto corpus = savae::testing::read_bytes(dir.path() / "run/corpus.savc");
    ASSERT_EQ(savae_cli(dir.path(), "train --corpus run/corpus.savc --epochs 1 --d 4 --encoder-layers 8 --out run").status, 0);
    EXPECT_EQ(savae::testing::read_bytes(dir.path() / "train.tsv"), before);
    EXPECT_EQ(savae::testing::read_bytes(dir.path() / "run/corpus.savc"), corpus);
}

} // namespace
