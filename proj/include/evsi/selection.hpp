#pragma once

// Feature/sensor selection procedures:
//   * mask_importance       - rank features by the validation-accuracy drop when masked
//   * forward_stepwise      - greedily add the candidate that maximizes retrained accuracy
//   * greedy_evsi_selection - greedily deploy the candidate with the largest EVSI,
//                             reranking after every deployment, stopping once no
//                             candidate improves EVSI
// All three are generic over the Trainer concept.

#include "evsi/classifier.hpp"
#include "evsi/data.hpp"
#include "evsi/decision.hpp"
#include "evsi/error.hpp"
#include "evsi/metrics.hpp"

#include "json.hpp"

#include <algorithm>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace evsi {

enum class MaskingMode {
    MeanSubstitute,  // replace the column by its training mean, no retraining
    Retrain,         // retrain without the feature
};

enum class BaselineUpdate {
    Advance,    // after each deployment the augmented model becomes the baseline
    FixedBase,  // always compare against the base-feature model
};

enum class SelectionMode { ForwardAccuracy, GreedyEvsi };
enum class StopReason { Exhausted, NoImprovement, BudgetReached };

inline std::string_view to_wire(SelectionMode m) {
    return m == SelectionMode::ForwardAccuracy ? "forward_accuracy" : "greedy_evsi";
}

inline std::string_view to_wire(StopReason r) {
    switch (r) {
        case StopReason::Exhausted: return "exhausted";
        case StopReason::NoImprovement: return "no_improvement";
        case StopReason::BudgetReached: return "budget_reached";
    }
    return "exhausted";
}

struct SelectionOptions {
    int budget = 10;
    double tolerance = kEvsiTolerance;
    double smoothing = kDefaultSmoothing;
    MaskingMode masking = MaskingMode::MeanSubstitute;
    BaselineUpdate baseline_update = BaselineUpdate::Advance;
    bool parallel = true;
};

struct ImportanceEntry {
    std::string feature;
    double accuracy_delta = 0.0;
    double masked_accuracy = 0.0;
};

struct ImportanceRanking {
    double baseline_accuracy = 0.0;
    std::vector<ImportanceEntry> entries;

    std::vector<std::string> top(std::size_t n) const {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < std::min(n, entries.size()); ++i) out.push_back(entries[i].feature);
        return out;
    }
};

/// Per-candidate detail kept by greedy EVSI rounds.
struct CandidateEvaluation {
    BinarySensorChannel channel;
    double validation_accuracy = 0.0;
    double candidate_cost = 0.0;
    Action action_on_signal = Action::Fix;
    Action action_on_no_signal = Action::Fix;
};

struct SelectionRound {
    int round_index = 0;
    std::map<std::string, double> candidate_scores;
    std::optional<std::string> chosen;
    // Accuracy of the current model (forward mode) or expected cost of the
    // current baseline channel (EVSI mode).
    double baseline_score = 0.0;
    std::optional<BinarySensorChannel> baseline_channel;
    std::map<std::string, CandidateEvaluation> details;

    /// Candidates ordered by score, highest first; ties by feature id.
    std::vector<std::pair<std::string, double>> ranked() const {
        std::vector<std::pair<std::string, double>> out(candidate_scores.begin(), candidate_scores.end());
        std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
            const auto ka = ranking_key(a.second);
            const auto kb = ranking_key(b.second);
            if (ka != kb) return ka > kb;
            return a.first < b.first;
        });
        return out;
    }
};

struct SelectionTrace {
    SelectionMode mode = SelectionMode::ForwardAccuracy;
    std::vector<std::string> base_features;
    std::vector<SelectionRound> rounds;
    std::vector<std::string> deployed;
    StopReason stop_reason = StopReason::Exhausted;
    std::optional<Priors> priors;
    std::optional<CostModel> costs;
};

namespace detail {

template <typename Fn>
auto map_candidates(const std::vector<std::string>& candidates, bool parallel, Fn&& fn) {
    using Result = decltype(fn(candidates.front()));
    std::vector<Result> out;
    out.reserve(candidates.size());
    if (!parallel || candidates.size() < 2) {
        for (const auto& c : candidates) out.push_back(fn(c));
        return out;
    }
    std::vector<std::future<Result>> futures;
    futures.reserve(candidates.size());
    for (const auto& c : candidates) futures.push_back(std::async(std::launch::async, [&fn, &c] { return fn(c); }));
    // Merged in candidate order, independent of completion order.
    for (auto& f : futures) out.push_back(f.get());
    return out;
}

inline std::vector<std::string> with_feature(std::vector<std::string> features, const std::string& extra) {
    features.push_back(extra);
    return features;
}

inline void require_disjoint(std::span<const std::string> base, std::span<const std::string> candidates) {
    std::set<std::string> seen(base.begin(), base.end());
    for (const auto& c : candidates) {
        EVSI_REQUIRE(seen.insert(c).second, ErrorCode::DisjointnessViolation,
                     "feature '" + c + "' is both a base feature and a candidate (or listed twice)");
    }
}

/// Highest score, ties to the smallest feature id.
inline std::pair<std::string, double> best_candidate(const std::map<std::string, double>& scores) {
    auto best = scores.begin();
    for (auto it = std::next(scores.begin()); it != scores.end(); ++it) {
        if (ranking_key(it->second) > ranking_key(best->second)) best = it;
    }
    return *best;
}

inline double column_mean(const SimDataset& ds, std::size_t col) {
    double sum = 0.0;
    for (const auto& r : ds.records) sum += r.values[col];
    return ds.empty() ? 0.0 : sum / static_cast<double>(ds.size());
}

template <Trainer T>
Evaluation fit_and_score(const T& trainer, const DataSplits& splits, std::span<const std::string> features) {
    const auto model = trainer.fit(splits.train, features);
    return evaluate_predictions(splits.validation.labels(),
                                trainer.predict(model, splits.validation, FeatureOverrides{}));
}

template <Trainer T>
CandidateEvaluation channel_for(const T& trainer, const DataSplits& splits, std::span<const std::string> features,
                                const std::string& label, double smoothing) {
    const Evaluation ev = fit_and_score(trainer, splits, features);
    CandidateEvaluation out;
    out.validation_accuracy = ev.accuracy;
    out.channel = channel_from_counts(collapse_to_binary(ev.matrix, kNormalClass), smoothing, label);
    return out;
}

}  // namespace detail

template <Trainer T>
ImportanceRanking mask_importance(const T& trainer, const DataSplits& splits, std::span<const std::string> all_features,
                                  const SelectionOptions& options = {}) {
    EVSI_REQUIRE(!splits.validation.empty(), ErrorCode::EmptyDataset, "validation split is empty");
    const std::vector<std::string> features(all_features.begin(), all_features.end());
    const auto model = trainer.fit(splits.train, features);
    const auto truth = splits.validation.labels();

    ImportanceRanking ranking;
    ranking.baseline_accuracy =
        evaluate_predictions(truth, trainer.predict(model, splits.validation, FeatureOverrides{})).accuracy;

    const auto masked = detail::map_candidates(features, options.parallel, [&](const std::string& f) {
        if (options.masking == MaskingMode::Retrain) {
            std::vector<std::string> rest;
            for (const auto& g : features) {
                if (g != f) rest.push_back(g);
            }
            return detail::fit_and_score(trainer, splits, rest).accuracy;
        }
        const auto col = splits.train.feature_index(f);
        EVSI_REQUIRE(col.has_value(), ErrorCode::UnknownFeature, "dataset has no feature '" + f + "'");
        const FeatureOverrides ov{{f, detail::column_mean(splits.train, *col)}};
        return evaluate_predictions(truth, trainer.predict(model, splits.validation, ov)).accuracy;
    });

    for (std::size_t i = 0; i < features.size(); ++i) {
        ranking.entries.push_back({features[i], ranking.baseline_accuracy - masked[i], masked[i]});
    }
    std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                     [](const ImportanceEntry& a, const ImportanceEntry& b) {
                         const auto ka = ranking_key(a.accuracy_delta);
                         const auto kb = ranking_key(b.accuracy_delta);
                         if (ka != kb) return ka > kb;
                         return a.feature < b.feature;
                     });
    return ranking;
}

template <Trainer T>
SelectionTrace forward_stepwise(const T& trainer, const DataSplits& splits, std::span<const std::string> base_features,
                                std::span<const std::string> candidates, const SelectionOptions& options = {}) {
    EVSI_REQUIRE(options.budget >= 1, ErrorCode::InvalidArgument, "budget must be >= 1");
    detail::require_disjoint(base_features, candidates);

    SelectionTrace trace;
    trace.mode = SelectionMode::ForwardAccuracy;
    trace.base_features.assign(base_features.begin(), base_features.end());
    std::vector<std::string> current = trace.base_features;
    std::vector<std::string> remaining(candidates.begin(), candidates.end());
    if (remaining.empty()) {
        trace.stop_reason = StopReason::Exhausted;
        return trace;
    }

    double current_accuracy = detail::fit_and_score(trainer, splits, current).accuracy;
    for (int round = 0;; ++round) {
        if (remaining.empty()) {
            trace.stop_reason = StopReason::Exhausted;
            break;
        }
        if (static_cast<int>(trace.deployed.size()) >= options.budget) {
            trace.stop_reason = StopReason::BudgetReached;
            break;
        }
        const auto accuracies = detail::map_candidates(remaining, options.parallel, [&](const std::string& c) {
            return detail::fit_and_score(trainer, splits, detail::with_feature(current, c)).accuracy;
        });
        SelectionRound r;
        r.round_index = round;
        r.baseline_score = current_accuracy;
        for (std::size_t i = 0; i < remaining.size(); ++i) r.candidate_scores[remaining[i]] = accuracies[i];
        const auto [best, score] = detail::best_candidate(r.candidate_scores);
        r.chosen = best;
        trace.rounds.push_back(std::move(r));
        trace.deployed.push_back(best);
        current.push_back(best);
        current_accuracy = score;
        std::erase(remaining, best);
    }
    return trace;
}

template <Trainer T>
SelectionTrace greedy_evsi_selection(const T& trainer, const DataSplits& splits,
                                     std::span<const std::string> base_features,
                                     std::span<const std::string> candidates, const CostModel& costs,
                                     const SelectionOptions& options = {}) {
    EVSI_REQUIRE(options.budget >= 1, ErrorCode::InvalidArgument, "budget must be >= 1");
    costs.validate();
    detail::require_disjoint(base_features, candidates);

    SelectionTrace trace;
    trace.mode = SelectionMode::GreedyEvsi;
    trace.base_features.assign(base_features.begin(), base_features.end());
    trace.costs = costs;
    std::vector<std::string> current = trace.base_features;
    std::vector<std::string> remaining(candidates.begin(), candidates.end());
    if (remaining.empty()) {
        trace.stop_reason = StopReason::Exhausted;
        return trace;
    }

    const Priors priors = empirical_priors(splits.train.labels(), kNormalClass);
    trace.priors = priors;

    const BinarySensorChannel base_channel =
        detail::channel_for(trainer, splits, current, "base", options.smoothing).channel;
    BinarySensorChannel baseline = base_channel;

    for (int round = 0;; ++round) {
        if (remaining.empty()) {
            trace.stop_reason = StopReason::Exhausted;
            break;
        }
        if (static_cast<int>(trace.deployed.size()) >= options.budget) {
            trace.stop_reason = StopReason::BudgetReached;
            break;
        }
        auto evals = detail::map_candidates(remaining, options.parallel, [&](const std::string& c) {
            return detail::channel_for(trainer, splits, detail::with_feature(current, c), c, options.smoothing);
        });

        SelectionRound r;
        r.round_index = round;
        r.baseline_channel = baseline;
        r.baseline_score = expected_cost_with_sensor(baseline, priors, costs).expected_cost;
        for (auto& ev : evals) {
            const EvsiReport rep = evsi_report(ev.channel, baseline, priors, costs);
            ev.candidate_cost = rep.candidate_cost;
            ev.action_on_signal = rep.action_on_signal;
            ev.action_on_no_signal = rep.action_on_no_signal;
            r.candidate_scores[ev.channel.label] = rep.evsi;
            r.details[ev.channel.label] = ev;
        }
        const auto [best, score] = detail::best_candidate(r.candidate_scores);
        if (!(score > options.tolerance)) {
            trace.rounds.push_back(std::move(r));
            trace.stop_reason = StopReason::NoImprovement;
            break;
        }
        r.chosen = best;
        if (options.baseline_update == BaselineUpdate::Advance) baseline = r.details.at(best).channel;
        trace.rounds.push_back(std::move(r));
        trace.deployed.push_back(best);
        current.push_back(best);
        std::erase(remaining, best);
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json priors_to_json(const Priors& p) { return {{"p_fault", p.p_fault}, {"p_no_fault", p.p_no_fault}}; }

inline nlohmann::json cost_model_to_json(const CostModel& c) {
    return {{"R", c.remediation}, {"P", c.plant_damage}, {"convention", to_wire(c.convention)}};
}

inline nlohmann::json trace_to_json(const SelectionTrace& t) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& r : t.rounds) {
        nlohmann::json jr{{"round_index", r.round_index},
                          {"candidate_scores", r.candidate_scores},
                          {"chosen", r.chosen ? nlohmann::json(*r.chosen) : nlohmann::json(nullptr)},
                          {"baseline_score", r.baseline_score}};
        if (r.baseline_channel) jr["baseline_channel"] = channel_to_json(*r.baseline_channel);
        if (!r.details.empty()) {
            nlohmann::json details = nlohmann::json::object();
            for (const auto& [label, d] : r.details) {
                details[label] = {{"p_signal_given_fault", d.channel.p_signal_given_fault},
                                  {"p_signal_given_no_fault", d.channel.p_signal_given_no_fault},
                                  {"validation_accuracy", d.validation_accuracy},
                                  {"expected_cost", d.candidate_cost},
                                  {"action_signal", to_wire(d.action_on_signal)},
                                  {"action_no_signal", to_wire(d.action_on_no_signal)}};
            }
            jr["details"] = std::move(details);
        }
        rounds.push_back(std::move(jr));
    }
    nlohmann::json j{{"mode", to_wire(t.mode)},
                     {"base_features", t.base_features},
                     {"rounds", std::move(rounds)},
                     {"deployed", t.deployed},
                     {"stop_reason", to_wire(t.stop_reason)}};
    if (t.priors) j["priors"] = priors_to_json(*t.priors);
    if (t.costs) j["cost_model"] = cost_model_to_json(*t.costs);
    return j;
}

inline nlohmann::json importance_to_json(const ImportanceRanking& r) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : r.entries) {
        entries.push_back(
            {{"feature", e.feature}, {"accuracy_delta", e.accuracy_delta}, {"masked_accuracy", e.masked_accuracy}});
    }
    return {{"mode", "mask"}, {"baseline_accuracy", r.baseline_accuracy}, {"entries", std::move(entries)}};
}

}  // namespace evsi
