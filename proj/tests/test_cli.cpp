#include "evsi/cli.hpp"

#include "fixtures.hpp"
#include "test_support.hpp"

#include <fstream>

using namespace evsi;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::filesystem::path write_stats(const std::filesystem::path& dir) {
    const auto p = dir / "stats.json";
    std::ofstream(p) << channel_stats_to_json(fixtures::inversion_stats()).dump(2);
    return p;
}

}  // namespace

TEST(Cli, NoArgumentsIsUsageError) {
    const auto r = run_cli({});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("Usage"), std::string::npos);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
    EXPECT_EQ(run_cli({"rank"}).code, 2);
    EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, RankTable) {
    const auto stats = write_stats(evsi::testing::scratch_dir());
    const auto r = run_cli({"rank", "--stats", stats.string(), "--cost-r", "1", "--cost-p", "8"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("Action (Signal)"), std::string::npos);
    EXPECT_NE(r.out.find("0.0500"), std::string::npos);
    EXPECT_LT(r.out.find("A "), r.out.find("B "));
}

TEST(Cli, RankJsonMatchesDecisionCore) {
    const auto stats = write_stats(evsi::testing::scratch_dir());
    const auto r = run_cli(
        {"rank", "--stats", stats.string(), "--cost-r", "1", "--cost-p", "8", "--output-format", "json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    const auto s = fixtures::inversion_stats();
    const auto expected = rank_candidates(s.sensors, std::nullopt, *s.priors, CostModel{1, 8});
    ASSERT_EQ(j.at("rankings").size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_EQ(j.at("rankings")[i].at("label"), expected[i].sensor_label);
        EXPECT_EQ(j.at("rankings")[i].at("evsi").get<double>(), expected[i].evsi);
    }
}

TEST(Cli, RankCsvAndErrors) {
    const auto dir = evsi::testing::scratch_dir();
    const auto stats = write_stats(dir);
    const auto r = run_cli(
        {"rank", "--stats", stats.string(), "--cost-r", "1", "--cost-p", "8", "--output-format", "csv"});
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "sensor,evsi,action_signal,action_no_signal");
    EXPECT_EQ(run_cli({"rank", "--stats", (dir / "missing.json").string(), "--cost-r", "1", "--cost-p", "8"}).code, 1);
    EXPECT_EQ(run_cli({"rank", "--stats", stats.string(), "--cost-r", "-1", "--cost-p", "8"}).code, 1);
    EXPECT_EQ(run_cli({"rank", "--stats", stats.string(), "--cost-r", "1", "--cost-p", "8", "--convention", "x"}).code,
              2);
}

TEST(Cli, SweepHasFourSortedSections) {
    const auto stats = write_stats(evsi::testing::scratch_dir());
    const auto r = run_cli({"sweep", "--stats", stats.string(), "--cost-r", "1", "--ratios", "2,4,8,16",
                            "--output-format", "json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    ASSERT_EQ(j.at("sections").size(), 4u);
    for (const auto& sec : j.at("sections")) {
        const auto& rows = sec.at("rows");
        for (std::size_t i = 1; i < rows.size(); ++i) {
            EXPECT_GE(rows[i - 1].at("evsi").get<double>(), rows[i].at("evsi").get<double>() - 1e-12);
        }
    }
    const auto table = run_cli({"sweep", "--stats", stats.string(), "--cost-r", "1", "--ratios", "0.5,3"});
    EXPECT_EQ(table.code, 0);
    EXPECT_NE(table.out.find("P/R = 0.5"), std::string::npos);
    EXPECT_EQ(run_cli({"sweep", "--stats", stats.string(), "--cost-r", "1", "--ratios", "-2"}).code, 1);
}

TEST(Cli, GenSplitTrainPipeline) {
    const auto dir = evsi::testing::scratch_dir();
    const auto data = (dir / "all.csv").string();
    auto r = run_cli({"gen", "--features", "4", "--classes", "3", "--sims", "12", "--samples", "10", "--informative",
                      "X1,X2", "--out", data, "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(load_csv(data).size(), 3u * 12u * 10u);

    r = run_cli({"split", "--train", data, "--spec", "6,6,4,4,0,0", "--out-dir", (dir / "split").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(std::filesystem::exists(dir / "split" / "train.csv"));

    const auto model = (dir / "model.json").string();
    const auto confusion = (dir / "confusion.csv").string();
    r = run_cli({"train", "--data", (dir / "split").string(), "--features", "X1,X2", "--cv", "--model-out", model,
                 "--confusion-out", confusion});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("best C="), std::string::npos);
    EXPECT_NE(r.out.find("validation accuracy="), std::string::npos);
    EXPECT_NO_THROW(model_from_json(nlohmann::json::parse(std::ifstream(model))));
    std::ifstream cf(confusion);
    std::string header;
    std::getline(cf, header);
    EXPECT_EQ(header, "true\\predicted,0,1,2");

    EXPECT_EQ(run_cli({"train", "--data", (dir / "split").string(), "--features", "nope"}).code, 1);
    EXPECT_EQ(run_cli({"split", "--train", data, "--out-dir", (dir / "x").string()}).code, 1);
}

TEST(Cli, SelectModesProduceJson) {
    const auto dir = evsi::testing::scratch_dir();
    const auto splits = fixtures::greedy_splits(5, 3);
    save_csv(splits.train, dir / "train.csv");
    save_csv(splits.validation, dir / "validation.csv");
    for (const std::string mode : {"mask", "forward", "evsi"}) {
        const auto r = run_cli({"select", mode, "--data", dir.string(), "--candidates", "X1,X2,X3", "--budget", "2",
                                "--output-format", "json"});
        ASSERT_EQ(r.code, 0) << mode << ": " << r.err;
        EXPECT_NO_THROW(nlohmann::json::parse(r.out)) << mode;
    }
    const auto table = run_cli({"select", "evsi", "--data", dir.string(), "--candidates", "X1,X2"});
    EXPECT_EQ(table.code, 0);
    EXPECT_NE(table.out.find("Stop reason: no_improvement"), std::string::npos);
    EXPECT_EQ(run_cli({"select", "evsi", "--data", dir.string(), "--base", "X1", "--candidates", "X1"}).code, 1);
    EXPECT_EQ(run_cli({"select", "bogus", "--data", dir.string()}).code, 2);
}

TEST(Cli, SeedFromEnvironment) {
    const auto dir = evsi::testing::scratch_dir();
    ::setenv("EVSI_SEED", "777", 1);
    EXPECT_EQ(cli::default_seed(), 777u);
    ::setenv("EVSI_SEED", "junk", 1);
    EXPECT_EQ(cli::default_seed(), 42u);
    ::unsetenv("EVSI_SEED");
}
