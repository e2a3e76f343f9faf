#include "evsi/session.hpp"

#include "fixtures.hpp"
#include "test_support.hpp"

#include <fstream>
#include <random>
#include <thread>

using namespace evsi;

namespace {

std::vector<std::string> labels(const DeploymentSession& s) {
    std::vector<std::string> out;
    for (const auto& r : s.latest_rankings) out.push_back(r.sensor_label);
    return out;
}

ErrorCode code_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an evsi::Error";
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Session, CreateRanksAllCandidates) {
    const auto s = fixtures::stats_session();
    EXPECT_EQ(labels(s), (std::vector<std::string>{"A", "B", "C"}));
    EXPECT_EQ(s.status, SessionStatus::Idle);
    EXPECT_FALSE(s.current_baseline_channel.has_value());
    EXPECT_NEAR(s.latest_rankings[0].evsi, 0.05, 1e-12);
    EXPECT_EQ(s.recommendation()->sensor_label, "A");
}

TEST(Session, EmptyCandidatePool) {
    const auto s = fixtures::stats_session(fixtures::inversion_stats(), {});
    EXPECT_TRUE(s.latest_rankings.empty());
    EXPECT_EQ(s.status, SessionStatus::Idle);
    EXPECT_FALSE(s.recommendation().has_value());
}

TEST(Session, UnknownCandidateOrMissingPriors) {
    EXPECT_EQ(code_of([] { fixtures::stats_session(fixtures::inversion_stats(), {"Z"}); }),
              ErrorCode::UnknownSensor);
    auto stats = fixtures::inversion_stats();
    stats.priors.reset();
    EXPECT_EQ(code_of([&] { fixtures::stats_session(stats); }), ErrorCode::SchemaViolation);
}

TEST(Session, DeployTopAndRerankInverts) {
    const auto s0 = fixtures::stats_session();
    const auto s1 = deploy(s0, "A");
    EXPECT_EQ(s1.deployed, (std::vector<std::string>{"A"}));
    EXPECT_EQ(labels(s1), (std::vector<std::string>{"C", "B"}));
    ASSERT_TRUE(s1.current_baseline_channel.has_value());
    EXPECT_EQ(s1.current_baseline_channel->label, "A");
    EXPECT_EQ(code_of([&] { deploy(s1, "A"); }), ErrorCode::AlreadyDeployed);
    EXPECT_EQ(code_of([&] { deploy(s1, "Q"); }), ErrorCode::UnknownSensor);
    // s0 is unchanged: operations are value-semantic.
    EXPECT_TRUE(s0.deployed.empty());
}

TEST(Session, DeployMidRankedIsAccepted) {
    const auto s = deploy(fixtures::stats_session(), "B");
    EXPECT_EQ(s.deployed, (std::vector<std::string>{"B"}));
    EXPECT_EQ(s.current_baseline_channel->label, "B");
    for (const auto& r : s.latest_rankings) {
        EXPECT_NE(r.sensor_label, "B");
        EXPECT_NEAR(r.baseline_cost, expected_cost_with_sensor(*s.current_baseline_channel, s.priors, s.cost_model)
                                         .expected_cost,
                    1e-12);
    }
}

TEST(Session, SignalsFollowBaselineBranchActions) {
    auto s = deploy(fixtures::stats_session(), "A");
    EXPECT_EQ(code_of([&] { record_signal(s, "B", true, "t0"); }), ErrorCode::NotDeployed);
    auto [s1, a1] = record_signal(s, "A", true, "t1");
    EXPECT_EQ(a1, Action::Fix);
    EXPECT_EQ(s1.status, SessionStatus::AwaitingOperator);
    auto [s2, a2] = record_signal(s1, "A", false, "t2");
    EXPECT_EQ(a2, Action::NoFix);
    EXPECT_EQ(s2.status, SessionStatus::Idle);
    ASSERT_EQ(s2.signal_log.size(), 2u);
    EXPECT_EQ(s2.signal_log[0].timestamp, "t1");
    // Replay: each logged action equals the baseline breakdown's branch choice.
    const auto b = baseline_breakdown(s2.current_baseline_channel, s2.priors, s2.cost_model);
    for (const auto& e : s2.signal_log) {
        EXPECT_EQ(e.recommended_action, e.signal ? b.action_on_signal : b.action_on_no_signal);
    }
}

TEST(Session, ResetReturnsRoundZero) {
    const auto s0 = fixtures::stats_session();
    auto s = deploy(s0, "A");
    s = record_signal(s, "A", true, "t").first;
    EXPECT_EQ(reset_session(s), s0);
}

TEST(Session, SweepSaturatesAtHighRatio) {
    const auto s = fixtures::stats_session();
    const std::vector<double> ratios{2, 4, 8, 16, 1000};
    const auto t = session_sweep(s, ratios);
    ASSERT_EQ(t.sections.size(), 5u);
    for (const auto& r : t.sections.back().rows) {
        EXPECT_EQ(r.action_on_signal, Action::Fix);
        EXPECT_EQ(r.action_on_no_signal, Action::Fix);
        EXPECT_NEAR(r.evsi, 0.0, 1e-12);
    }
    // The ratio-8 section equals the live rankings (costs R=1, P=8).
    const auto& at8 = t.sections[2].rows;
    ASSERT_EQ(at8.size(), s.latest_rankings.size());
    for (std::size_t i = 0; i < at8.size(); ++i) EXPECT_EQ(at8[i], s.latest_rankings[i]);
}

TEST(Session, SaveLoadRoundTrip) {
    const auto dir = evsi::testing::scratch_dir();
    auto s = deploy(fixtures::stats_session(), "A");
    s = record_signal(s, "A", true, "2026-01-01T00:00:00Z").first;
    save_session(s, dir / "s.json");
    EXPECT_EQ(load_session(dir / "s.json"), s);

    auto loaded = load_session(dir / "s.json");
    save_session(deploy(loaded, "C"), dir / "s.json");
    EXPECT_EQ(load_session(dir / "s.json").deployed, (std::vector<std::string>{"A", "C"}));

    std::ifstream in(dir / "s.json");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    std::ofstream(dir / "cut.json") << text.substr(0, text.size() / 2);
    EXPECT_EQ(code_of([&] { load_session(dir / "cut.json"); }), ErrorCode::SchemaViolation);
    std::ofstream(dir / "wrong.json") << R"({"session_id": 3})";
    EXPECT_EQ(code_of([&] { load_session(dir / "wrong.json"); }), ErrorCode::SchemaViolation);
}

TEST(SessionProperty, RandomSessionsRoundTrip) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        ChannelStats stats;
        stats.priors = Priors::from_fault_probability(u(rng));
        const int n = 1 + static_cast<int>(rng() % 6);
        std::vector<std::string> cands;
        for (int i = 0; i < n; ++i) {
            cands.push_back("S" + std::to_string(i));
            stats.sensors.push_back({u(rng), u(rng), cands.back()});
        }
        auto s = fixtures::stats_session(stats, cands, CostModel{u(rng) + 0.1, 20 * u(rng),
                                                                  trial % 2 ? CostConvention::FlatFix
                                                                            : CostConvention::WeightedFix});
        const int deploys = static_cast<int>(rng() % (n + 1));
        for (int d = 0; d < deploys; ++d) {
            const auto rem = s.remaining();
            const auto pick = rem[rng() % rem.size()];
            s = deploy(s, pick);
            if (rng() % 2) s = record_signal(s, pick, rng() % 2 == 0, "t" + std::to_string(d)).first;
            EXPECT_EQ(s.deployed.size(), static_cast<std::size_t>(d + 1));
            for (const auto& r : s.latest_rankings) EXPECT_FALSE(s.is_deployed(r.sensor_label));
        }
        ASSERT_EQ(session_from_json(nlohmann::json::parse(session_to_json(s).dump())), s);
    }
}

TEST(SessionStore, ConcurrentDeploysAreLinearizable) {
    for (int trial = 0; trial < 20; ++trial) {
        SessionStore store(fixtures::stats_session());
        std::atomic<int> ok{0}, conflict{0};
        std::vector<std::thread> threads;
        for (int t = 0; t < 4; ++t) {
            threads.emplace_back([&] {
                try {
                    store.deploy("A");
                    ++ok;
                } catch (const Error& e) {
                    if (e.code() == ErrorCode::AlreadyDeployed) ++conflict;
                }
            });
        }
        for (auto& t : threads) t.join();
        EXPECT_EQ(ok.load(), 1);
        EXPECT_EQ(conflict.load(), 3);
        EXPECT_EQ(store.snapshot().deployed.size(), 1u);
    }
}

TEST(SessionStore, PersistsEveryMutation) {
    const auto path = evsi::testing::scratch_dir() / "store.json";
    SessionStore store(fixtures::stats_session(), path);
    store.deploy("A");
    EXPECT_EQ(load_session(path).deployed, (std::vector<std::string>{"A"}));
    store.record_signal("A", true, "t");
    EXPECT_EQ(load_session(path).status, SessionStatus::AwaitingOperator);
    store.reset();
    EXPECT_TRUE(load_session(path).deployed.empty());
}

TEST(SessionFull, RanksPlantedSensorFirst) {
    const auto dir = evsi::testing::scratch_dir();
    const auto splits = fixtures::planted_splits(11, 4, {"X3"}, 2, 6.0);
    save_csv(splits.train, dir / "train.csv");
    save_csv(splits.validation, dir / "validation.csv");
    SessionSource src;
    src.backend = Backend::Full;
    src.full.data_dir = dir.string();
    auto s = create_session(src, {}, {"X1", "X2", "X3", "X4"}, CostModel{1.0, 8.0});
    EXPECT_EQ(s.latest_rankings.front().sensor_label, "X3");
    EXPECT_EQ(s.current_baseline_channel->label, "base");

    SessionStore store(s);
    const auto after = store.deploy("X3");
    EXPECT_EQ(after.deployed, (std::vector<std::string>{"X3"}));
    EXPECT_EQ(after.latest_rankings.size(), 3u);
    EXPECT_EQ(after.status, SessionStatus::Idle);
    EXPECT_EQ(session_from_json(session_to_json(after)), after);
}
