#pragma once

// Operator deployment session: the deployed-sensor set, the current baseline
// channel and its branch actions, EVSI rankings over the remaining
// candidates, and an append-only log of incoming fault signals.
//
// Two backends produce candidate channels:
//   stats - channels supplied up front (optionally per deployed set), instant
//   full  - every rerank retrains the classifier on base + deployed + candidate
//
// All operations here are pure: they take a session by const reference and
// return the next state. Serialization of concurrent access lives in
// SessionStore.

#include "evsi/classifier.hpp"
#include "evsi/data.hpp"
#include "evsi/decision.hpp"
#include "evsi/error.hpp"
#include "evsi/metrics.hpp"
#include "evsi/selection.hpp"

#include "json.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace evsi {

enum class Backend { Stats, Full };
enum class SessionStatus { Idle, Evaluating, AwaitingOperator };

inline std::string_view to_wire(Backend b) { return b == Backend::Stats ? "stats" : "full"; }

inline std::optional<Backend> backend_from_wire(std::string_view s) {
    if (s == "stats") return Backend::Stats;
    if (s == "full") return Backend::Full;
    return std::nullopt;
}

inline std::string_view to_wire(SessionStatus s) {
    switch (s) {
        case SessionStatus::Idle: return "idle";
        case SessionStatus::Evaluating: return "evaluating";
        case SessionStatus::AwaitingOperator: return "awaiting_operator";
    }
    return "idle";
}

inline std::optional<SessionStatus> status_from_wire(std::string_view s) {
    if (s == "idle") return SessionStatus::Idle;
    if (s == "evaluating") return SessionStatus::Evaluating;
    if (s == "awaiting_operator") return SessionStatus::AwaitingOperator;
    return std::nullopt;
}

struct FullSource {
    std::string data_dir;  // holds train.csv and validation.csv
    TrainingConfig training;
    double smoothing = kDefaultSmoothing;

    bool operator==(const FullSource&) const = default;
};

struct SessionSource {
    Backend backend = Backend::Stats;
    ChannelStats stats;  // stats backend
    FullSource full;     // full backend

    bool operator==(const SessionSource&) const = default;
};

struct SignalEvent {
    std::string timestamp;
    std::string sensor_label;
    bool signal = false;
    Action recommended_action = Action::Fix;

    bool operator==(const SignalEvent&) const = default;
};

struct DeploymentSession {
    std::string session_id;
    std::vector<std::string> base_features;
    std::vector<std::string> candidates;  // full candidate pool, original order
    std::vector<std::string> deployed;
    CostModel cost_model;
    Priors priors;
    std::optional<BinarySensorChannel> current_baseline_channel;  // nullopt: act on priors alone
    Action action_on_signal = Action::Fix;
    Action action_on_no_signal = Action::Fix;
    std::vector<EvsiReport> latest_rankings;
    std::vector<BinarySensorChannel> candidate_channels;  // remaining candidates, ranking order
    std::vector<SignalEvent> signal_log;
    SessionStatus status = SessionStatus::Idle;
    SessionSource source;

    // Loaded lazily for the full backend; not serialized.
    std::shared_ptr<const DataSplits> splits_cache;

    std::vector<std::string> remaining() const {
        std::vector<std::string> out;
        for (const auto& c : candidates) {
            if (std::find(deployed.begin(), deployed.end(), c) == deployed.end()) out.push_back(c);
        }
        return out;
    }

    bool is_deployed(std::string_view label) const {
        return std::find(deployed.begin(), deployed.end(), label) != deployed.end();
    }

    std::optional<BinarySensorChannel> channel_of(std::string_view label) const {
        for (const auto& c : candidate_channels) {
            if (c.label == label) return c;
        }
        return std::nullopt;
    }

    /// Field-wise equality of the persisted state (the splits cache is ignored).
    bool operator==(const DeploymentSession& o) const {
        return session_id == o.session_id && base_features == o.base_features && candidates == o.candidates &&
               deployed == o.deployed && cost_model == o.cost_model && priors == o.priors &&
               current_baseline_channel == o.current_baseline_channel && action_on_signal == o.action_on_signal &&
               action_on_no_signal == o.action_on_no_signal && latest_rankings == o.latest_rankings &&
               candidate_channels == o.candidate_channels && signal_log == o.signal_log && status == o.status &&
               source == o.source;
    }

    std::optional<EvsiReport> recommendation() const {
        if (latest_rankings.empty() || !(latest_rankings.front().evsi > kEvsiTolerance)) return std::nullopt;
        return latest_rankings.front();
    }
};

struct SessionConfig {
    std::string session_id = "session";
    std::optional<Priors> priors;  // overrides stats priors (stats backend)
};

namespace detail {

inline std::shared_ptr<const DataSplits> load_splits(const FullSource& src) {
    const std::filesystem::path dir(src.data_dir);
    auto splits = std::make_shared<DataSplits>();
    splits->train = load_csv(dir / "train.csv");
    splits->validation = load_csv(dir / "validation.csv");
    if (std::filesystem::exists(dir / "test.csv")) splits->test = load_csv(dir / "test.csv");
    return splits;
}

inline bool same_set(std::vector<std::string> a, std::vector<std::string> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}

inline const ConditionalStats* conditional_for(const ChannelStats& stats, const std::vector<std::string>& deployed) {
    for (const auto& cs : stats.conditional) {
        if (same_set(cs.deployed, deployed)) return &cs;
    }
    return nullptr;
}

inline const BinarySensorChannel* find_channel(const std::vector<BinarySensorChannel>& list, std::string_view label) {
    for (const auto& c : list) {
        if (c.label == label) return &c;
    }
    return nullptr;
}

/// Channel of each remaining candidate given the session's deployed set.
inline std::vector<BinarySensorChannel> candidate_channels(DeploymentSession& s) {
    const auto remaining = s.remaining();
    std::vector<BinarySensorChannel> out;
    if (s.source.backend == Backend::Stats) {
        const ConditionalStats* cond = conditional_for(s.source.stats, s.deployed);
        for (const auto& label : remaining) {
            const BinarySensorChannel* ch = cond ? find_channel(cond->sensors, label) : nullptr;
            if (!ch) ch = find_channel(s.source.stats.sensors, label);
            EVSI_REQUIRE(ch != nullptr, ErrorCode::UnknownSensor, "no statistics for sensor '" + label + "'");
            out.push_back(*ch);
        }
        return out;
    }
    if (!s.splits_cache) s.splits_cache = load_splits(s.source.full);
    const LogisticTrainer trainer{s.source.full.training};
    std::vector<std::string> current = s.base_features;
    current.insert(current.end(), s.deployed.begin(), s.deployed.end());
    const auto evals = map_candidates(remaining, true, [&](const std::string& c) {
        return channel_for(trainer, *s.splits_cache, with_feature(current, c), c, s.source.full.smoothing);
    });
    for (const auto& e : evals) out.push_back(e.channel);
    return out;
}

/// Recomputes rankings and the baseline's branch actions from the current state.
inline void rerank(DeploymentSession& s) {
    auto channels = candidate_channels(s);
    s.latest_rankings = rank_candidates(channels, s.current_baseline_channel, s.priors, s.cost_model);
    // Keep channels in the same order as the rankings.
    std::vector<BinarySensorChannel> ordered;
    for (const auto& r : s.latest_rankings) ordered.push_back(*find_channel(channels, r.sensor_label));
    s.candidate_channels = std::move(ordered);
    const CostBreakdown base = baseline_breakdown(s.current_baseline_channel, s.priors, s.cost_model);
    s.action_on_signal = base.action_on_signal;
    s.action_on_no_signal = base.action_on_no_signal;
}

}  // namespace detail

/// Builds a session in round 0: nothing deployed, rankings against the base
/// channel (stats baseline / base-feature model) or against priors alone.
inline DeploymentSession create_session(SessionSource source, std::vector<std::string> base_features,
                                        std::vector<std::string> candidates, const CostModel& costs,
                                        const SessionConfig& config = {}) {
    costs.validate();
    detail::require_disjoint(base_features, candidates);
    DeploymentSession s;
    s.session_id = config.session_id;
    s.base_features = std::move(base_features);
    s.candidates = std::move(candidates);
    s.cost_model = costs;
    s.source = std::move(source);

    if (s.source.backend == Backend::Stats) {
        const auto& stats = s.source.stats;
        for (const auto& c : s.candidates) {
            EVSI_REQUIRE(detail::find_channel(stats.sensors, c) != nullptr, ErrorCode::UnknownSensor,
                         "no statistics for sensor '" + c + "'");
        }
        if (config.priors) {
            s.priors = *config.priors;
        } else {
            EVSI_REQUIRE(stats.priors.has_value(), ErrorCode::SchemaViolation,
                         "stats source has no priors and none were given");
            s.priors = *stats.priors;
        }
        s.priors.validate();
        s.current_baseline_channel = stats.baseline;
        if (const auto* cond = detail::conditional_for(stats, {}); cond && cond->baseline) {
            s.current_baseline_channel = cond->baseline;
        }
    } else {
        s.source.full.training.validate();
        s.splits_cache = detail::load_splits(s.source.full);
        s.priors = empirical_priors(s.splits_cache->train.labels(), kNormalClass);
        const LogisticTrainer trainer{s.source.full.training};
        s.current_baseline_channel =
            detail::channel_for(trainer, *s.splits_cache, s.base_features, "base", s.source.full.smoothing).channel;
    }
    detail::rerank(s);
    s.status = SessionStatus::Idle;
    return s;
}

inline void check_deployable(const DeploymentSession& s, const std::string& label) {
    EVSI_REQUIRE(s.status != SessionStatus::Evaluating, ErrorCode::Busy, "session is re-evaluating");
    EVSI_REQUIRE(!s.is_deployed(label), ErrorCode::AlreadyDeployed, "sensor '" + label + "' is already deployed");
    EVSI_REQUIRE(std::find(s.candidates.begin(), s.candidates.end(), label) != s.candidates.end(),
                 ErrorCode::UnknownSensor, "sensor '" + label + "' is not a candidate");
}

/// Deploys `label` (operator may pick any remaining candidate). The sensor's
/// augmented channel becomes the new baseline and the rest are reranked.
inline DeploymentSession deploy(const DeploymentSession& session, const std::string& label) {
    check_deployable(session, label);
    DeploymentSession s = session;
    const auto chosen = s.channel_of(label);
    EVSI_REQUIRE(chosen.has_value(), ErrorCode::UnknownSensor, "no channel for sensor '" + label + "'");
    s.deployed.push_back(label);
    s.current_baseline_channel = *chosen;
    if (s.source.backend == Backend::Stats) {
        if (const auto* cond = detail::conditional_for(s.source.stats, s.deployed); cond && cond->baseline) {
            s.current_baseline_channel = cond->baseline;
            s.current_baseline_channel->label = label;
        }
    }
    detail::rerank(s);
    s.status = SessionStatus::Idle;
    return s;
}

/// Appends a signal event; the recommendation is the current baseline's branch action.
inline std::pair<DeploymentSession, Action> record_signal(const DeploymentSession& session, const std::string& label,
                                                          bool signal, std::string timestamp) {
    EVSI_REQUIRE(session.is_deployed(label), ErrorCode::NotDeployed, "sensor '" + label + "' is not deployed");
    DeploymentSession s = session;
    const Action action = signal ? s.action_on_signal : s.action_on_no_signal;
    s.signal_log.push_back({std::move(timestamp), label, signal, action});
    if (s.status != SessionStatus::Evaluating) {
        s.status = action == Action::Fix ? SessionStatus::AwaitingOperator : SessionStatus::Idle;
    }
    return {std::move(s), action};
}

/// Round-0 state for the same source, pool and costs.
inline DeploymentSession reset_session(const DeploymentSession& s) {
    SessionConfig cfg;
    cfg.session_id = s.session_id;
    if (s.source.backend == Backend::Stats) cfg.priors = s.priors;
    return create_session(s.source, s.base_features, s.candidates, s.cost_model, cfg);
}

/// What-if sweep over the remaining candidates' current channels; does not mutate.
inline SweepTable session_sweep(const DeploymentSession& s, std::span<const double> ratios) {
    return sensitivity_sweep(s.candidate_channels, s.current_baseline_channel, s.priors, s.cost_model.remediation,
                             ratios, s.cost_model.convention);
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json report_to_json(const EvsiReport& r) {
    return {{"label", r.sensor_label},
            {"evsi", r.evsi},
            {"action_signal", to_wire(r.action_on_signal)},
            {"action_no_signal", to_wire(r.action_on_no_signal)},
            {"baseline_cost", r.baseline_cost},
            {"candidate_cost", r.candidate_cost}};
}

inline nlohmann::json sweep_to_json(const SweepTable& t) {
    nlohmann::json sections = nlohmann::json::array();
    for (const auto& sec : t.sections) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : sec.rows) rows.push_back(report_to_json(r));
        sections.push_back({{"ratio", sec.ratio}, {"rows", std::move(rows)}});
    }
    return {{"ratios", t.ratios}, {"sections", std::move(sections)}};
}

inline nlohmann::json session_to_json(const DeploymentSession& s) {
    nlohmann::json rankings = nlohmann::json::array();
    for (const auto& r : s.latest_rankings) {
        auto j = report_to_json(r);
        if (const auto ch = s.channel_of(r.sensor_label)) {
            j["p_signal_given_fault"] = ch->p_signal_given_fault;
            j["p_signal_given_no_fault"] = ch->p_signal_given_no_fault;
        }
        rankings.push_back(std::move(j));
    }
    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : s.signal_log) {
        log.push_back({{"timestamp", e.timestamp},
                       {"sensor_label", e.sensor_label},
                       {"signal", e.signal},
                       {"recommended_action", to_wire(e.recommended_action)}});
    }
    nlohmann::json source{{"backend", to_wire(s.source.backend)}};
    if (s.source.backend == Backend::Stats) {
        source["stats"] = channel_stats_to_json(s.source.stats);
    } else {
        source["data_dir"] = s.source.full.data_dir;
        source["training"] = training_config_to_json(s.source.full.training);
        source["smoothing"] = s.source.full.smoothing;
    }
    const auto rec = s.recommendation();
    return {{"session_id", s.session_id},
            {"base_features", s.base_features},
            {"candidates", s.candidates},
            {"deployed", s.deployed},
            {"cost_model", cost_model_to_json(s.cost_model)},
            {"priors", priors_to_json(s.priors)},
            {"baseline_channel", s.current_baseline_channel ? channel_to_json(*s.current_baseline_channel)
                                                            : nlohmann::json(nullptr)},
            {"current_actions",
             {{"action_signal", to_wire(s.action_on_signal)}, {"action_no_signal", to_wire(s.action_on_no_signal)}}},
            {"recommended_sensor", rec ? nlohmann::json(rec->sensor_label) : nlohmann::json(nullptr)},
            {"rankings", std::move(rankings)},
            {"signal_log", std::move(log)},
            {"status", to_wire(s.status)},
            {"source", std::move(source)}};
}

namespace detail {

inline Action parse_action(const nlohmann::json& j) {
    const auto a = action_from_wire(j.get<std::string>());
    EVSI_REQUIRE(a.has_value(), ErrorCode::SchemaViolation, "unknown action '" + j.get<std::string>() + "'");
    return *a;
}

}  // namespace detail

inline DeploymentSession session_from_json(const nlohmann::json& j) {
    DeploymentSession s;
    try {
        s.session_id = j.at("session_id").get<std::string>();
        s.base_features = j.at("base_features").get<std::vector<std::string>>();
        s.candidates = j.at("candidates").get<std::vector<std::string>>();
        s.deployed = j.at("deployed").get<std::vector<std::string>>();

        const auto& cm = j.at("cost_model");
        s.cost_model.remediation = cm.at("R").get<double>();
        s.cost_model.plant_damage = cm.at("P").get<double>();
        const auto conv = convention_from_wire(cm.at("convention").get<std::string>());
        EVSI_REQUIRE(conv.has_value(), ErrorCode::SchemaViolation, "unknown cost convention");
        s.cost_model.convention = *conv;
        s.cost_model.validate();

        s.priors.p_fault = j.at("priors").at("p_fault").get<double>();
        s.priors.p_no_fault = j.at("priors").at("p_no_fault").get<double>();
        s.priors.validate();

        if (!j.at("baseline_channel").is_null()) {
            s.current_baseline_channel = detail::parse_channel(j.at("baseline_channel"), "baseline_channel", false);
        }
        s.action_on_signal = detail::parse_action(j.at("current_actions").at("action_signal"));
        s.action_on_no_signal = detail::parse_action(j.at("current_actions").at("action_no_signal"));

        for (const auto& r : j.at("rankings")) {
            EvsiReport rep;
            rep.sensor_label = r.at("label").get<std::string>();
            rep.evsi = r.at("evsi").get<double>();
            rep.action_on_signal = detail::parse_action(r.at("action_signal"));
            rep.action_on_no_signal = detail::parse_action(r.at("action_no_signal"));
            rep.baseline_cost = r.at("baseline_cost").get<double>();
            rep.candidate_cost = r.at("candidate_cost").get<double>();
            BinarySensorChannel ch;
            ch.label = rep.sensor_label;
            ch.p_signal_given_fault = r.at("p_signal_given_fault").get<double>();
            ch.p_signal_given_no_fault = r.at("p_signal_given_no_fault").get<double>();
            ch.validate();
            s.latest_rankings.push_back(std::move(rep));
            s.candidate_channels.push_back(std::move(ch));
        }
        for (const auto& e : j.at("signal_log")) {
            s.signal_log.push_back({e.at("timestamp").get<std::string>(), e.at("sensor_label").get<std::string>(),
                                    e.at("signal").get<bool>(), detail::parse_action(e.at("recommended_action"))});
        }
        const auto status = status_from_wire(j.at("status").get<std::string>());
        EVSI_REQUIRE(status.has_value(), ErrorCode::SchemaViolation, "unknown session status");
        s.status = *status;

        const auto& src = j.at("source");
        const auto backend = backend_from_wire(src.at("backend").get<std::string>());
        EVSI_REQUIRE(backend.has_value(), ErrorCode::SchemaViolation, "unknown backend");
        s.source.backend = *backend;
        if (*backend == Backend::Stats) {
            s.source.stats = parse_channel_stats(src.at("stats"));
        } else {
            s.source.full.data_dir = src.at("data_dir").get<std::string>();
            s.source.full.training = training_config_from_json(src.at("training"));
            s.source.full.smoothing = src.at("smoothing").get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("session: ") + e.what());
    }
    for (const auto& d : s.deployed) {
        EVSI_REQUIRE(std::find(s.candidates.begin(), s.candidates.end(), d) != s.candidates.end(),
                     ErrorCode::SchemaViolation, "deployed sensor '" + d + "' is not a candidate");
    }
    // A process that died mid-evaluation leaves nothing in flight.
    if (s.status == SessionStatus::Evaluating) s.status = SessionStatus::Idle;
    return s;
}

inline void save_session(const DeploymentSession& s, const std::filesystem::path& path) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        EVSI_REQUIRE(out.good(), ErrorCode::IoError, "cannot write " + tmp);
        out << session_to_json(s).dump(2) << '\n';
        EVSI_REQUIRE(out.good(), ErrorCode::IoError, "write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    EVSI_REQUIRE(!ec, ErrorCode::IoError, "cannot replace " + path.string() + ": " + ec.message());
}

inline DeploymentSession load_session(const std::filesystem::path& path) {
    std::ifstream in(path);
    EVSI_REQUIRE(in.good(), ErrorCode::IoError, "cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }
    return session_from_json(j);
}

// ---------------------------------------------------------------------------
// Single-writer access

/// Serializes mutations in arrival order and hands out consistent snapshots.
/// Full-backend reranking runs outside the lock with status Evaluating, during
/// which further mutations fail with Busy.
class SessionStore {
public:
    explicit SessionStore(DeploymentSession initial, std::optional<std::filesystem::path> persist_to = std::nullopt)
        : session_(std::move(initial)), persist_to_(std::move(persist_to)) {}

    DeploymentSession snapshot() const {
        std::lock_guard lock(mutex_);
        return session_;
    }

    DeploymentSession deploy(const std::string& label) {
        std::unique_lock lock(mutex_);
        check_deployable(session_, label);
        if (session_.source.backend == Backend::Stats) {
            commit(evsi::deploy(session_, label));
            return session_;
        }
        DeploymentSession work = session_;
        session_.status = SessionStatus::Evaluating;
        lock.unlock();
        DeploymentSession next;
        try {
            next = evsi::deploy(work, label);
        } catch (...) {
            lock.lock();
            session_.status = work.status;
            throw;
        }
        lock.lock();
        commit(std::move(next));
        return session_;
    }

    std::pair<DeploymentSession, Action> record_signal(const std::string& label, bool signal, std::string timestamp) {
        std::lock_guard lock(mutex_);
        EVSI_REQUIRE(session_.status != SessionStatus::Evaluating, ErrorCode::Busy, "session is re-evaluating");
        auto [next, action] = evsi::record_signal(session_, label, signal, std::move(timestamp));
        commit(std::move(next));
        return {session_, action};
    }

    DeploymentSession reset() {
        std::unique_lock lock(mutex_);
        EVSI_REQUIRE(session_.status != SessionStatus::Evaluating, ErrorCode::Busy, "session is re-evaluating");
        if (session_.source.backend == Backend::Stats) {
            commit(reset_session(session_));
            return session_;
        }
        DeploymentSession work = session_;
        session_.status = SessionStatus::Evaluating;
        lock.unlock();
        DeploymentSession next;
        try {
            next = reset_session(work);
        } catch (...) {
            lock.lock();
            session_.status = work.status;
            throw;
        }
        lock.lock();
        commit(std::move(next));
        return session_;
    }

private:
    void commit(DeploymentSession next) {
        session_ = std::move(next);
        if (persist_to_) save_session(session_, *persist_to_);
    }

    mutable std::mutex mutex_;
    DeploymentSession session_;
    std::optional<std::filesystem::path> persist_to_;
};

}  // namespace evsi
