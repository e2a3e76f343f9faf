#pragma once

// Fault-labelled process data in the TE layout: one row per sample, keyed by
// (simulation_id, fault_class, sample_index), with class 0 meaning normal
// operation. Also: the simulation-indexed train/validation/test sampling, a
// seeded planted-signal generator, and ingestion of externally computed
// channel statistics.

#include "evsi/decision.hpp"
#include "evsi/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace evsi {

inline constexpr int kNormalClass = 0;

struct SimRecord {
    int simulation_id = 0;
    int fault_class = 0;
    int sample_index = 0;
    std::vector<double> values;

    bool operator==(const SimRecord&) const = default;
};

struct SimDataset {
    std::vector<std::string> feature_names;
    std::vector<SimRecord> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }

    std::optional<std::size_t> feature_index(std::string_view name) const {
        const auto it = std::find(feature_names.begin(), feature_names.end(), name);
        if (it == feature_names.end()) return std::nullopt;
        return static_cast<std::size_t>(it - feature_names.begin());
    }

    std::vector<int> labels() const {
        std::vector<int> out;
        out.reserve(records.size());
        for (const auto& r : records) out.push_back(r.fault_class);
        return out;
    }

    /// Checks row width, class sign and key uniqueness.
    void validate() const {
        std::set<std::tuple<int, int, int>> keys;
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& r = records[i];
            EVSI_REQUIRE(r.values.size() == feature_names.size(), ErrorCode::SchemaViolation,
                         "row " + std::to_string(i) + " has " + std::to_string(r.values.size()) +
                             " values, expected " + std::to_string(feature_names.size()));
            EVSI_REQUIRE(r.fault_class >= 0, ErrorCode::SchemaViolation,
                         "row " + std::to_string(i) + " has a negative fault_class");
            EVSI_REQUIRE(keys.emplace(r.simulation_id, r.fault_class, r.sample_index).second,
                         ErrorCode::DuplicateKey,
                         "duplicate (simulation_id, fault_class, sample_index) at row " + std::to_string(i));
        }
    }

    bool operator==(const SimDataset&) const = default;
};

struct DataSplits {
    SimDataset train;
    SimDataset validation;
    SimDataset test;
};

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    T value{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(value)) return std::nullopt;
    }
    return value;
}

/// "2,4,8,16" -> {2, 4, 8, 16}; nullopt on any malformed entry.
inline std::optional<std::vector<double>> parse_double_list(std::string_view text) {
    std::vector<double> out;
    if (trim(text).empty()) return out;
    for (const auto field : split_fields(text)) {
        const auto v = parse_number<double>(field);
        if (!v) return std::nullopt;
        out.push_back(*v);
    }
    return out;
}

inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace detail

inline constexpr std::string_view kCsvKeyColumns[] = {"simulation_id", "fault_class", "sample_index"};

inline SimDataset parse_csv(std::istream& in) {
    std::string line;
    EVSI_REQUIRE(static_cast<bool>(std::getline(in, line)), ErrorCode::MalformedHeader, "empty file");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = detail::split_fields(line);
    EVSI_REQUIRE(header.size() >= 3, ErrorCode::MalformedHeader,
                 "header must start with simulation_id,fault_class,sample_index");
    for (std::size_t i = 0; i < 3; ++i) {
        EVSI_REQUIRE(detail::trim(header[i]) == kCsvKeyColumns[i], ErrorCode::MalformedHeader,
                     "header column " + std::to_string(i + 1) + " must be '" +
                         std::string(kCsvKeyColumns[i]) + "'");
    }
    SimDataset ds;
    std::set<std::string, std::less<>> seen;
    for (std::size_t i = 3; i < header.size(); ++i) {
        std::string name(detail::trim(header[i]));
        EVSI_REQUIRE(!name.empty(), ErrorCode::MalformedHeader, "empty feature name in header");
        EVSI_REQUIRE(seen.insert(name).second, ErrorCode::MalformedHeader, "duplicate feature '" + name + "'");
        ds.feature_names.push_back(std::move(name));
    }

    std::set<std::tuple<int, int, int>> keys;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_fields(line);
        EVSI_REQUIRE(fields.size() == header.size(), ErrorCode::SchemaViolation,
                     "row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                         " fields, expected " + std::to_string(header.size()));
        SimRecord rec;
        int* keys_out[] = {&rec.simulation_id, &rec.fault_class, &rec.sample_index};
        for (std::size_t c = 0; c < 3; ++c) {
            const auto v = detail::parse_number<int>(fields[c]);
            EVSI_REQUIRE(v.has_value(), ErrorCode::NonNumericValue,
                         "row " + std::to_string(row) + ", column " + std::to_string(c + 1));
            *keys_out[c] = *v;
        }
        EVSI_REQUIRE(rec.fault_class >= 0, ErrorCode::SchemaViolation,
                     "row " + std::to_string(row) + ": fault_class must be >= 0");
        rec.values.reserve(fields.size() - 3);
        for (std::size_t c = 3; c < fields.size(); ++c) {
            const auto v = detail::parse_number<double>(fields[c]);
            EVSI_REQUIRE(v.has_value(), ErrorCode::NonNumericValue,
                         "row " + std::to_string(row) + ", column " + std::to_string(c + 1));
            rec.values.push_back(*v);
        }
        EVSI_REQUIRE(keys.emplace(rec.simulation_id, rec.fault_class, rec.sample_index).second,
                     ErrorCode::DuplicateKey, "row " + std::to_string(row) + " repeats an earlier key");
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

inline SimDataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    EVSI_REQUIRE(in.good(), ErrorCode::IoError, "cannot open " + path.string());
    return parse_csv(in);
}

inline void write_csv(std::ostream& out, const SimDataset& ds) {
    out << "simulation_id,fault_class,sample_index";
    for (const auto& f : ds.feature_names) out << ',' << f;
    out << '\n';
    for (const auto& r : ds.records) {
        out << r.simulation_id << ',' << r.fault_class << ',' << r.sample_index;
        for (double v : r.values) out << ',' << detail::format_double(v);
        out << '\n';
    }
}

inline void save_csv(const SimDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    EVSI_REQUIRE(out.good(), ErrorCode::IoError, "cannot write " + path.string());
    write_csv(out, ds);
    EVSI_REQUIRE(out.good(), ErrorCode::IoError, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Simulation-indexed sampling

struct SplitSpec {
    int train_normal_sims = 40;
    int train_fault_sims = 25;
    int val_normal_sims = 20;
    int val_fault_sims = 10;
    int test_normal_sims = 2;
    int test_fault_sims = 10;

    void validate() const {
        for (int v : {train_normal_sims, train_fault_sims, val_normal_sims, val_fault_sims, test_normal_sims,
                      test_fault_sims}) {
            EVSI_REQUIRE(v >= 0, ErrorCode::InvalidArgument, "split counts must be >= 0");
        }
    }

    bool operator==(const SplitSpec&) const = default;
};

namespace detail {

/// Distinct simulation ids per class, ascending.
inline std::map<int, std::vector<int>> simulation_ids_by_class(const SimDataset& ds) {
    std::map<int, std::set<int>> ids;
    for (const auto& r : ds.records) ids[r.fault_class].insert(r.simulation_id);
    std::map<int, std::vector<int>> out;
    for (auto& [cls, set] : ids) out[cls].assign(set.begin(), set.end());
    return out;
}

/// Keeps the rows whose (class, simulation) pair was selected, in dataset order.
inline SimDataset select_rows(const SimDataset& ds, const std::set<std::pair<int, int>>& chosen) {
    SimDataset out;
    out.feature_names = ds.feature_names;
    for (const auto& r : ds.records) {
        if (chosen.count({r.fault_class, r.simulation_id})) out.records.push_back(r);
    }
    return out;
}

}  // namespace detail

/// Training takes the first train_* simulation ids of each class (ascending
/// id), validation the next val_* ids, and test the first test_* ids of the
/// testing dataset. Without a testing dataset the test split is empty.
inline DataSplits simulation_split(const SimDataset& training, const std::optional<SimDataset>& testing,
                                   const SplitSpec& spec = {}) {
    spec.validate();
    std::set<std::pair<int, int>> train_keys, val_keys, test_keys;

    for (const auto& [cls, ids] : detail::simulation_ids_by_class(training)) {
        const bool normal = cls == kNormalClass;
        const int n_train = normal ? spec.train_normal_sims : spec.train_fault_sims;
        const int n_val = normal ? spec.val_normal_sims : spec.val_fault_sims;
        const auto needed = static_cast<std::size_t>(n_train + n_val);
        EVSI_REQUIRE(ids.size() >= needed, ErrorCode::InsufficientSimulations,
                     "class " + std::to_string(cls) + " needs " + std::to_string(needed) +
                         " simulations, has " + std::to_string(ids.size()));
        for (int k = 0; k < n_train; ++k) train_keys.emplace(cls, ids[k]);
        for (int k = n_train; k < n_train + n_val; ++k) val_keys.emplace(cls, ids[k]);
    }

    DataSplits out;
    out.train = detail::select_rows(training, train_keys);
    out.validation = detail::select_rows(training, val_keys);
    if (testing) {
        for (const auto& [cls, ids] : detail::simulation_ids_by_class(*testing)) {
            const bool normal = cls == kNormalClass;
            const int n_test = normal ? spec.test_normal_sims : spec.test_fault_sims;
            EVSI_REQUIRE(ids.size() >= static_cast<std::size_t>(n_test), ErrorCode::InsufficientSimulations,
                         "testing class " + std::to_string(cls) + " needs " + std::to_string(n_test) +
                             " simulations, has " + std::to_string(ids.size()));
            for (int k = 0; k < n_test; ++k) test_keys.emplace(cls, ids[k]);
        }
        out.test = detail::select_rows(*testing, test_keys);
    } else {
        out.test.feature_names = training.feature_names;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Planted-signal generator

struct SynthConfig {
    int num_features = 10;
    int num_manipulated = 0;  // trailing features are named M1..Mm instead of X..
    int num_fault_classes = 3;
    int sims_per_class = 10;
    int normal_sims = 0;  // 0: same as sims_per_class
    int samples_per_sim = 20;
    std::vector<std::string> informative_features{"X1"};
    double shift_magnitude = 3.0;
    double noise_std = 1.0;
    std::uint64_t seed = 42;
};

inline std::vector<std::string> synth_feature_names(int num_features, int num_manipulated) {
    std::vector<std::string> names;
    const int measured = num_features - num_manipulated;
    for (int i = 1; i <= measured; ++i) names.push_back("X" + std::to_string(i));
    for (int i = 1; i <= num_manipulated; ++i) names.push_back("M" + std::to_string(i));
    return names;
}

/// Class c shifts every informative feature's mean by c * shift_magnitude;
/// all features carry N(0, noise_std^2) noise. Fully determined by the seed.
inline SimDataset synth_generate(const SynthConfig& cfg) {
    EVSI_REQUIRE(cfg.num_features >= 1, ErrorCode::InvalidConfig, "num_features must be >= 1");
    EVSI_REQUIRE(cfg.num_manipulated >= 0 && cfg.num_manipulated <= cfg.num_features, ErrorCode::InvalidConfig,
                 "num_manipulated must be in [0, num_features]");
    EVSI_REQUIRE(cfg.num_fault_classes >= 0, ErrorCode::InvalidConfig, "num_fault_classes must be >= 0");
    EVSI_REQUIRE(cfg.sims_per_class >= 1 && cfg.samples_per_sim >= 1 && cfg.normal_sims >= 0,
                 ErrorCode::InvalidConfig, "simulation and sample counts must be >= 1");
    EVSI_REQUIRE(std::isfinite(cfg.noise_std) && cfg.noise_std > 0.0, ErrorCode::InvalidConfig,
                 "noise_std must be positive");
    EVSI_REQUIRE(std::isfinite(cfg.shift_magnitude), ErrorCode::InvalidConfig, "shift must be finite");

    SimDataset ds;
    ds.feature_names = synth_feature_names(cfg.num_features, cfg.num_manipulated);
    std::vector<bool> informative(ds.feature_names.size(), false);
    for (const auto& f : cfg.informative_features) {
        const auto idx = ds.feature_index(f);
        EVSI_REQUIRE(idx.has_value(), ErrorCode::InvalidConfig, "informative feature '" + f + "' not generated");
        informative[*idx] = true;
    }

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> noise(0.0, cfg.noise_std);
    for (int cls = 0; cls <= cfg.num_fault_classes; ++cls) {
        const int sims = (cls == kNormalClass && cfg.normal_sims > 0) ? cfg.normal_sims : cfg.sims_per_class;
        const double offset = cls * cfg.shift_magnitude;
        for (int sim = 1; sim <= sims; ++sim) {
            for (int s = 0; s < cfg.samples_per_sim; ++s) {
                SimRecord rec{sim, cls, s, {}};
                rec.values.resize(ds.feature_names.size());
                for (std::size_t f = 0; f < rec.values.size(); ++f) {
                    rec.values[f] = noise(rng) + (informative[f] ? offset : 0.0);
                }
                ds.records.push_back(std::move(rec));
            }
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Externally computed channel statistics

/// Channels measured for a specific deployed set, e.g. from a model retrained
/// with base + {M10} + candidate. Used by the stats backend to rerank.
struct ConditionalStats {
    std::vector<std::string> deployed;
    std::optional<BinarySensorChannel> baseline;
    std::vector<BinarySensorChannel> sensors;

    bool operator==(const ConditionalStats&) const = default;
};

struct ChannelStats {
    std::optional<Priors> priors;
    std::optional<BinarySensorChannel> baseline;
    std::vector<BinarySensorChannel> sensors;
    std::vector<ConditionalStats> conditional;

    bool operator==(const ChannelStats&) const = default;
};

namespace detail {

inline double require_probability(const nlohmann::json& j, const char* key, const std::string& where) {
    EVSI_REQUIRE(j.is_object() && j.contains(key), ErrorCode::SchemaViolation,
                 where + ": missing '" + key + "'");
    EVSI_REQUIRE(j.at(key).is_number(), ErrorCode::SchemaViolation, where + ": '" + key + "' must be a number");
    const double v = j.at(key).get<double>();
    EVSI_REQUIRE(is_probability(v), ErrorCode::ProbabilityOutOfRange,
                 where + ": '" + key + "' = " + std::to_string(v) + " is not in [0,1]");
    return v;
}

inline BinarySensorChannel parse_channel(const nlohmann::json& j, const std::string& where,
                                         bool label_required = true) {
    EVSI_REQUIRE(j.is_object(), ErrorCode::SchemaViolation, where + " must be an object");
    BinarySensorChannel ch;
    if (j.contains("label")) {
        EVSI_REQUIRE(j.at("label").is_string(), ErrorCode::SchemaViolation, where + ": label must be a string");
        ch.label = j.at("label").get<std::string>();
    } else {
        EVSI_REQUIRE(!label_required, ErrorCode::SchemaViolation, where + ": missing 'label'");
    }
    ch.p_signal_given_fault = require_probability(j, "p_signal_given_fault", where);
    ch.p_signal_given_no_fault = require_probability(j, "p_signal_given_no_fault", where);
    return ch;
}

inline std::vector<BinarySensorChannel> parse_sensor_list(const nlohmann::json& j, const std::string& where) {
    EVSI_REQUIRE(j.is_array(), ErrorCode::SchemaViolation, where + " must be an array");
    std::vector<BinarySensorChannel> out;
    std::set<std::string> labels;
    for (std::size_t i = 0; i < j.size(); ++i) {
        auto ch = parse_channel(j[i], where + "[" + std::to_string(i) + "]");
        EVSI_REQUIRE(labels.insert(ch.label).second, ErrorCode::SchemaViolation,
                     where + ": duplicate label '" + ch.label + "'");
        out.push_back(std::move(ch));
    }
    return out;
}

}  // namespace detail

inline ChannelStats parse_channel_stats(const nlohmann::json& j) {
    EVSI_REQUIRE(j.is_object(), ErrorCode::SchemaViolation, "stats document must be an object");
    ChannelStats stats;
    if (j.contains("priors") && !j.at("priors").is_null()) {
        const double p = detail::require_probability(j.at("priors"), "p_fault", "priors");
        stats.priors = Priors{p, 1.0 - p};
    }
    if (j.contains("baseline") && !j.at("baseline").is_null()) {
        stats.baseline = detail::parse_channel(j.at("baseline"), "baseline", false);
        if (stats.baseline->label.empty()) stats.baseline->label = "baseline";
    }
    EVSI_REQUIRE(j.contains("sensors"), ErrorCode::SchemaViolation, "missing 'sensors'");
    stats.sensors = detail::parse_sensor_list(j.at("sensors"), "sensors");
    if (j.contains("conditional")) {
        const auto& cond = j.at("conditional");
        EVSI_REQUIRE(cond.is_array(), ErrorCode::SchemaViolation, "'conditional' must be an array");
        for (std::size_t i = 0; i < cond.size(); ++i) {
            const std::string where = "conditional[" + std::to_string(i) + "]";
            const auto& entry = cond[i];
            EVSI_REQUIRE(entry.is_object() && entry.contains("deployed") && entry.at("deployed").is_array(),
                         ErrorCode::SchemaViolation, where + ": 'deployed' must be an array of labels");
            ConditionalStats cs;
            for (const auto& d : entry.at("deployed")) {
                EVSI_REQUIRE(d.is_string(), ErrorCode::SchemaViolation, where + ": deployed labels must be strings");
                cs.deployed.push_back(d.get<std::string>());
            }
            if (entry.contains("baseline") && !entry.at("baseline").is_null()) {
                cs.baseline = detail::parse_channel(entry.at("baseline"), where + ".baseline", false);
            }
            EVSI_REQUIRE(entry.contains("sensors"), ErrorCode::SchemaViolation, where + ": missing 'sensors'");
            cs.sensors = detail::parse_sensor_list(entry.at("sensors"), where + ".sensors");
            stats.conditional.push_back(std::move(cs));
        }
    }
    return stats;
}

inline ChannelStats ingest_channel_stats(const std::filesystem::path& path) {
    std::ifstream in(path);
    EVSI_REQUIRE(in.good(), ErrorCode::IoError, "cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }
    return parse_channel_stats(j);
}

inline nlohmann::json channel_to_json(const BinarySensorChannel& ch) {
    return {{"label", ch.label},
            {"p_signal_given_fault", ch.p_signal_given_fault},
            {"p_signal_given_no_fault", ch.p_signal_given_no_fault}};
}

inline nlohmann::json channel_stats_to_json(const ChannelStats& s) {
    nlohmann::json j = nlohmann::json::object();
    if (s.priors) j["priors"] = {{"p_fault", s.priors->p_fault}};
    if (s.baseline) j["baseline"] = channel_to_json(*s.baseline);
    j["sensors"] = nlohmann::json::array();
    for (const auto& c : s.sensors) j["sensors"].push_back(channel_to_json(c));
    if (!s.conditional.empty()) {
        j["conditional"] = nlohmann::json::array();
        for (const auto& cs : s.conditional) {
            nlohmann::json e{{"deployed", cs.deployed}, {"sensors", nlohmann::json::array()}};
            if (cs.baseline) e["baseline"] = channel_to_json(*cs.baseline);
            for (const auto& c : cs.sensors) e["sensors"].push_back(channel_to_json(c));
            j["conditional"].push_back(std::move(e));
        }
    }
    return j;
}

}  // namespace evsi
