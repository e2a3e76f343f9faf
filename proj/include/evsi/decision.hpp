#pragma once

// Bayesian expected-cost model for a binary fault detector and the Expected
// Value of Sample Information (EVSI) that ranks candidate sensors.
//
// A sensor (or a model trained with that sensor's data) is abstracted to a
// BinarySensorChannel: Pr(signal | fault) and Pr(signal | no fault). Combined
// with fault priors and the remediation / plant-damage costs R and P, each
// signal branch picks the cheaper of Fix and NoFix; EVSI is the drop in
// expected cost relative to a baseline channel (or to acting on priors alone).

#include "evsi/error.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace evsi {

/// A candidate "improves EVSI" only when its score exceeds this.
inline constexpr double kEvsiTolerance = 1e-9;
inline constexpr double kProbabilitySumTolerance = 1e-12;

inline bool is_probability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

struct Priors {
    double p_fault = 0.5;
    double p_no_fault = 0.5;

    static Priors from_fault_probability(double p_fault) {
        Priors p{p_fault, 1.0 - p_fault};
        p.validate();
        return p;
    }

    void validate() const {
        EVSI_REQUIRE(is_probability(p_fault) && is_probability(p_no_fault),
                     ErrorCode::ProbabilityOutOfRange, "priors must lie in [0,1]");
        EVSI_REQUIRE(std::abs(p_fault + p_no_fault - 1.0) <= kProbabilitySumTolerance,
                     ErrorCode::InvalidArgument, "priors must sum to 1");
    }

    bool operator==(const Priors&) const = default;
};

struct BinarySensorChannel {
    double p_signal_given_fault = 0.0;
    double p_signal_given_no_fault = 0.0;
    std::string label;

    void validate() const {
        EVSI_REQUIRE(is_probability(p_signal_given_fault) && is_probability(p_signal_given_no_fault),
                     ErrorCode::ProbabilityOutOfRange,
                     "channel '" + label + "' probabilities must lie in [0,1]");
    }

    bool operator==(const BinarySensorChannel&) const = default;
};

enum class CostConvention {
    WeightedFix,  // Fix costs R * Pr(no fault | branch)
    FlatFix,     // Fix costs R regardless of ground truth
};

struct CostModel {
    double remediation = 1.0;   // R
    double plant_damage = 8.0;  // P
    CostConvention convention = CostConvention::WeightedFix;

    void validate() const {
        EVSI_REQUIRE(std::isfinite(remediation) && remediation >= 0.0, ErrorCode::InvalidArgument,
                     "remediation cost R must be finite and >= 0");
        EVSI_REQUIRE(std::isfinite(plant_damage) && plant_damage >= 0.0, ErrorCode::InvalidArgument,
                     "plant damage cost P must be finite and >= 0");
    }

    bool operator==(const CostModel&) const = default;
};

enum class Action { Fix, NoFix };

inline std::string_view to_string(Action a) { return a == Action::Fix ? "Fix" : "No Fix"; }
inline std::string_view to_wire(Action a) { return a == Action::Fix ? "fix" : "no_fix"; }

inline std::optional<Action> action_from_wire(std::string_view s) {
    if (s == "fix") return Action::Fix;
    if (s == "no_fix") return Action::NoFix;
    return std::nullopt;
}

inline std::string_view to_wire(CostConvention c) {
    return c == CostConvention::WeightedFix ? "eq4" : "flatfix";
}

inline std::optional<CostConvention> convention_from_wire(std::string_view s) {
    if (s == "eq4") return CostConvention::WeightedFix;
    if (s == "flatfix") return CostConvention::FlatFix;
    return std::nullopt;
}

struct PosteriorReport {
    double p_signal = 0.0;
    double p_no_signal = 0.0;
    double p_fault_given_signal = 0.0;
    double p_no_fault_given_signal = 0.0;
    double p_fault_given_no_signal = 0.0;
    double p_no_fault_given_no_signal = 0.0;
    // Set when the branch has zero probability; its posteriors are then the priors.
    bool degenerate_signal = false;
    bool degenerate_no_signal = false;
};

/// The two operands of one branch's min(); costs are conditional on the branch.
struct BranchCosts {
    double fix = 0.0;
    double no_fix = 0.0;

    // Ties resolve to Fix.
    Action choice() const { return fix <= no_fix ? Action::Fix : Action::NoFix; }
    double chosen() const { return std::min(fix, no_fix); }
};

struct CostBreakdown {
    double expected_cost = 0.0;
    Action action_on_signal = Action::Fix;
    Action action_on_no_signal = Action::Fix;
    BranchCosts signal_branch;
    BranchCosts no_signal_branch;
};

struct EvsiReport {
    std::string sensor_label;
    double evsi = 0.0;
    double baseline_cost = 0.0;
    double candidate_cost = 0.0;
    Action action_on_signal = Action::Fix;
    Action action_on_no_signal = Action::Fix;

    bool operator==(const EvsiReport&) const = default;
};

// Pr(signal)
inline double signal_probability(const BinarySensorChannel& channel, const Priors& priors) {
    return channel.p_signal_given_fault * priors.p_fault +
           channel.p_signal_given_no_fault * priors.p_no_fault;
}

inline PosteriorReport posteriors(const BinarySensorChannel& channel, const Priors& priors) {
    PosteriorReport r;
    r.p_signal = signal_probability(channel, priors);
    r.p_no_signal = (1.0 - channel.p_signal_given_fault) * priors.p_fault +
                    (1.0 - channel.p_signal_given_no_fault) * priors.p_no_fault;

    if (r.p_signal > 0.0) {
        r.p_fault_given_signal = channel.p_signal_given_fault * priors.p_fault / r.p_signal;
        r.p_no_fault_given_signal = channel.p_signal_given_no_fault * priors.p_no_fault / r.p_signal;
    } else {
        r.degenerate_signal = true;
        r.p_fault_given_signal = priors.p_fault;
        r.p_no_fault_given_signal = priors.p_no_fault;
    }

    if (r.p_no_signal > 0.0) {
        r.p_fault_given_no_signal = (1.0 - channel.p_signal_given_fault) * priors.p_fault / r.p_no_signal;
        r.p_no_fault_given_no_signal =
            (1.0 - channel.p_signal_given_no_fault) * priors.p_no_fault / r.p_no_signal;
    } else {
        r.degenerate_no_signal = true;
        r.p_fault_given_no_signal = priors.p_fault;
        r.p_no_fault_given_no_signal = priors.p_no_fault;
    }
    return r;
}

namespace detail {

inline BranchCosts branch_costs(double p_fault, double p_no_fault, const CostModel& costs) {
    BranchCosts b;
    b.fix = costs.convention == CostConvention::WeightedFix ? costs.remediation * p_no_fault
                                                            : costs.remediation;
    b.no_fix = costs.plant_damage * p_fault;
    return b;
}

}  // namespace detail

// Expected cost when acting on the sensor's signal.
inline CostBreakdown expected_cost_with_sensor(const BinarySensorChannel& channel, const Priors& priors,
                                               const CostModel& costs) {
    const PosteriorReport post = posteriors(channel, priors);
    CostBreakdown out;
    out.signal_branch =
        detail::branch_costs(post.p_fault_given_signal, post.p_no_fault_given_signal, costs);
    out.no_signal_branch =
        detail::branch_costs(post.p_fault_given_no_signal, post.p_no_fault_given_no_signal, costs);
    out.action_on_signal = out.signal_branch.choice();
    out.action_on_no_signal = out.no_signal_branch.choice();
    out.expected_cost = post.p_signal * out.signal_branch.chosen() +
                        post.p_no_signal * out.no_signal_branch.chosen();
    return out;
}

/// Acting on the priors alone: one decision, recorded in both branch slots.
inline CostBreakdown baseline_cost_no_signal(const Priors& priors, const CostModel& costs) {
    CostBreakdown out;
    out.signal_branch = detail::branch_costs(priors.p_fault, priors.p_no_fault, costs);
    out.no_signal_branch = out.signal_branch;
    out.action_on_signal = out.signal_branch.choice();
    out.action_on_no_signal = out.action_on_signal;
    out.expected_cost = out.signal_branch.chosen();
    return out;
}

inline CostBreakdown baseline_breakdown(const std::optional<BinarySensorChannel>& baseline,
                                        const Priors& priors, const CostModel& costs) {
    return baseline ? expected_cost_with_sensor(*baseline, priors, costs)
                    : baseline_cost_no_signal(priors, costs);
}

// EVSI = baseline cost - candidate cost.
inline EvsiReport evsi_report(const BinarySensorChannel& candidate,
                       const std::optional<BinarySensorChannel>& baseline, const Priors& priors,
                       const CostModel& costs) {
    const CostBreakdown base = baseline_breakdown(baseline, priors, costs);
    const CostBreakdown cand = expected_cost_with_sensor(candidate, priors, costs);
    EvsiReport r;
    r.sensor_label = candidate.label;
    r.baseline_cost = base.expected_cost;
    r.candidate_cost = cand.expected_cost;
    r.evsi = base.expected_cost - cand.expected_cost;
    r.action_on_signal = cand.action_on_signal;
    r.action_on_no_signal = cand.action_on_no_signal;
    return r;
}

/// EVSI values are compared on a 1e-12 grid so that float noise between
/// analytically equal scores (e.g. saturated Fix/Fix channels) cannot reorder
/// rows; the label breaks the remaining ties.
inline long long ranking_key(double value) { return std::llround(value * 1e12); }

inline void sort_reports(std::vector<EvsiReport>& reports) {
    std::stable_sort(reports.begin(), reports.end(), [](const EvsiReport& a, const EvsiReport& b) {
        const auto ka = ranking_key(a.evsi);
        const auto kb = ranking_key(b.evsi);
        if (ka != kb) return ka > kb;
        return a.sensor_label < b.sensor_label;
    });
}

inline std::vector<EvsiReport> rank_candidates(std::span<const BinarySensorChannel> candidates,
                                               const std::optional<BinarySensorChannel>& baseline,
                                               const Priors& priors, const CostModel& costs) {
    std::vector<EvsiReport> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(evsi_report(c, baseline, priors, costs));
    sort_reports(out);
    return out;
}

struct SweepSection {
    double ratio = 0.0;
    std::vector<EvsiReport> rows;
};

struct SweepTable {
    std::vector<double> ratios;
    std::vector<SweepSection> sections;  // one per ratio, in input order
};

/// Re-evaluates every candidate with P = ratio * R for each requested ratio.
inline SweepTable sensitivity_sweep(std::span<const BinarySensorChannel> candidates,
                                    const std::optional<BinarySensorChannel>& baseline,
                                    const Priors& priors, double remediation,
                                    std::span<const double> ratios,
                                    CostConvention convention = CostConvention::WeightedFix) {
    EVSI_REQUIRE(!ratios.empty(), ErrorCode::InvalidRatio, "at least one P/R ratio is required");
    for (double r : ratios) {
        EVSI_REQUIRE(std::isfinite(r) && r > 0.0, ErrorCode::InvalidRatio,
                     "P/R ratios must be positive, got " + std::to_string(r));
    }
    SweepTable table;
    table.ratios.assign(ratios.begin(), ratios.end());
    for (double r : ratios) {
        CostModel costs{remediation, r * remediation, convention};
        costs.validate();
        table.sections.push_back({r, rank_candidates(candidates, baseline, priors, costs)});
    }
    return table;
}

}  // namespace evsi
