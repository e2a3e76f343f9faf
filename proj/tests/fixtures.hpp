#pragma once

#include "evsi/data.hpp"

#include <string>
#include <vector>

namespace evsi::fixtures {

/// Planted-signal dataset split by simulation id: 6 train and 4 validation
/// simulations per class.
inline DataSplits planted_splits(std::uint64_t seed, int num_features, std::vector<std::string> informative,
                                 int total_classes, double shift, int samples_per_sim = 20) {
    SynthConfig cfg;
    cfg.num_features = num_features;
    cfg.num_fault_classes = total_classes - 1;
    cfg.sims_per_class = 10;
    cfg.samples_per_sim = samples_per_sim;
    cfg.informative_features = std::move(informative);
    cfg.shift_magnitude = shift;
    cfg.noise_std = 1.0;
    cfg.seed = seed;
    return simulation_split(synth_generate(cfg), std::nullopt, SplitSpec{6, 6, 4, 4, 0, 0});
}

/// One strongly informative feature (X1) and pure-noise features X2..Xn, two
/// classes. X1 separates the classes perfectly in practice.
inline DataSplits greedy_splits(std::uint64_t seed, int num_features = 2) {
    return planted_splits(seed, num_features, {"X1"}, 2, 8.0);
}

}  // namespace evsi::fixtures

#include "evsi/session.hpp"

namespace evsi::fixtures {

/// Three stats-backend sensors with priors 0.5. The conditional entry for
/// {"A"} inverts the order of B and C once A is deployed.
inline ChannelStats inversion_stats() {
    return parse_channel_stats(nlohmann::json::parse(R"({
        "priors": {"p_fault": 0.5},
        "sensors": [
            {"label": "A", "p_signal_given_fault": 0.9,  "p_signal_given_no_fault": 0.1},
            {"label": "B", "p_signal_given_fault": 0.8,  "p_signal_given_no_fault": 0.15},
            {"label": "C", "p_signal_given_fault": 0.7,  "p_signal_given_no_fault": 0.2}
        ],
        "conditional": [
            {"deployed": ["A"],
             "sensors": [
                {"label": "B", "p_signal_given_fault": 0.9,  "p_signal_given_no_fault": 0.12},
                {"label": "C", "p_signal_given_fault": 0.97, "p_signal_given_no_fault": 0.05}
             ]}
        ]
    })"));
}

inline DeploymentSession stats_session(ChannelStats stats = inversion_stats(),
                                       std::vector<std::string> candidates = {"A", "B", "C"},
                                       CostModel costs = {1.0, 8.0}) {
    SessionSource src;
    src.backend = Backend::Stats;
    src.stats = std::move(stats);
    return create_session(std::move(src), {}, std::move(candidates), costs);
}

}  // namespace evsi::fixtures
