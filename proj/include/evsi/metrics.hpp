#pragma once

// Confusion matrices, precision/recall/F1/accuracy, support-weighted averages,
// empirical fault priors, and the "any fault predicted" collapse that turns a
// multi-class classifier into a binary sensor channel.

#include "evsi/decision.hpp"
#include "evsi/error.hpp"

#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace evsi {

class ConfusionMatrix {
public:
    ConfusionMatrix() = default;

    explicit ConfusionMatrix(int num_classes) : n_(num_classes) {
        EVSI_REQUIRE(num_classes > 0, ErrorCode::InvalidArgument, "num_classes must be positive");
        counts_.assign(static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_), 0);
    }

    /// Rows are true classes, columns predicted classes.
    static ConfusionMatrix from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
        ConfusionMatrix m(static_cast<int>(rows.size()));
        for (int i = 0; i < m.n_; ++i) {
            EVSI_REQUIRE(static_cast<int>(rows[i].size()) == m.n_, ErrorCode::InvalidArgument,
                         "confusion matrix must be square");
            for (int j = 0; j < m.n_; ++j) {
                EVSI_REQUIRE(rows[i][j] >= 0, ErrorCode::InvalidArgument, "negative count");
                m.at(i, j) = rows[i][j];
            }
        }
        return m;
    }

    int num_classes() const { return n_; }

    std::int64_t& at(int true_class, int predicted) { return counts_[index(true_class, predicted)]; }
    std::int64_t at(int true_class, int predicted) const { return counts_[index(true_class, predicted)]; }

    std::int64_t total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

    std::int64_t trace() const {
        std::int64_t t = 0;
        for (int i = 0; i < n_; ++i) t += at(i, i);
        return t;
    }

    std::int64_t row_sum(int i) const {
        std::int64_t s = 0;
        for (int j = 0; j < n_; ++j) s += at(i, j);
        return s;
    }

    std::int64_t col_sum(int j) const {
        std::int64_t s = 0;
        for (int i = 0; i < n_; ++i) s += at(i, j);
        return s;
    }

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t index(int i, int j) const {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(j);
    }

    int n_ = 0;
    std::vector<std::int64_t> counts_;
};

struct ConfusionCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;

    std::int64_t total() const { return tp + fp + fn + tn; }
    bool operator==(const ConfusionCounts&) const = default;
};

struct ClassMetrics {
    int class_index = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::int64_t support = 0;
};

struct MetricsReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
};

inline ConfusionMatrix confusion_matrix(std::span<const int> true_labels, std::span<const int> predicted,
                                        int num_classes) {
    EVSI_REQUIRE(true_labels.size() == predicted.size(), ErrorCode::LengthMismatch,
                 "true and predicted label sequences differ in length");
    EVSI_REQUIRE(!true_labels.empty(), ErrorCode::LengthMismatch, "label sequences are empty");
    ConfusionMatrix m(num_classes);
    for (std::size_t k = 0; k < true_labels.size(); ++k) {
        const int t = true_labels[k];
        const int p = predicted[k];
        EVSI_REQUIRE(t >= 0 && t < num_classes && p >= 0 && p < num_classes, ErrorCode::LabelOutOfRange,
                     "label out of range at position " + std::to_string(k));
        ++m.at(t, p);
    }
    return m;
}

namespace detail {

// 0 / 0 is reported as 0.
inline double ratio_or_zero(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace detail

// Binary precision, recall, F1 and accuracy from one-vs-rest counts.
inline MetricsReport binary_metrics(const ConfusionCounts& c) {
    EVSI_REQUIRE(c.tp >= 0 && c.fp >= 0 && c.fn >= 0 && c.tn >= 0, ErrorCode::InvalidArgument,
                 "negative confusion count");
    EVSI_REQUIRE(c.total() > 0, ErrorCode::EmptyCounts, "confusion counts are all zero");
    const auto tp = static_cast<double>(c.tp);
    const auto fp = static_cast<double>(c.fp);
    const auto fn = static_cast<double>(c.fn);
    const auto tn = static_cast<double>(c.tn);
    MetricsReport r;
    r.precision = detail::ratio_or_zero(tp, tp + fp);
    r.recall = detail::ratio_or_zero(tp, tp + fn);
    r.f1 = detail::ratio_or_zero(tp, tp + 0.5 * (fp + fn));
    r.accuracy = (tp + tn) / (tp + tn + fp + fn);
    return r;
}

/// One-vs-rest counts for a single class of a multi-class matrix.
inline ConfusionCounts one_vs_rest(const ConfusionMatrix& m, int cls) {
    ConfusionCounts c;
    c.tp = m.at(cls, cls);
    c.fn = m.row_sum(cls) - c.tp;
    c.fp = m.col_sum(cls) - c.tp;
    c.tn = m.total() - c.tp - c.fn - c.fp;
    return c;
}

/// Per-class one-vs-rest metrics averaged with true-class support as weights.
inline MetricsReport weighted_metrics(const ConfusionMatrix& m) {
    const std::int64_t total = m.total();
    EVSI_REQUIRE(total > 0, ErrorCode::EmptyCounts, "confusion matrix is empty");
    MetricsReport r;
    for (int k = 0; k < m.num_classes(); ++k) {
        const MetricsReport cls = binary_metrics(one_vs_rest(m, k));
        const std::int64_t support = m.row_sum(k);
        r.per_class.push_back({k, cls.precision, cls.recall, cls.f1, support});
        const double w = static_cast<double>(support) / static_cast<double>(total);
        r.precision += w * cls.precision;
        r.recall += w * cls.recall;
        r.f1 += w * cls.f1;
    }
    r.accuracy = static_cast<double>(m.trace()) / static_cast<double>(total);
    return r;
}

/// Positive = "any fault": predicting any non-normal class counts as a signal.
inline ConfusionCounts collapse_to_binary(const ConfusionMatrix& m, int normal_class) {
    EVSI_REQUIRE(normal_class >= 0 && normal_class < m.num_classes(), ErrorCode::LabelOutOfRange,
                 "normal class out of range");
    ConfusionCounts c;
    for (int i = 0; i < m.num_classes(); ++i) {
        for (int j = 0; j < m.num_classes(); ++j) {
            const bool fault = i != normal_class;
            const bool signal = j != normal_class;
            if (fault && signal) c.tp += m.at(i, j);
            else if (fault) c.fn += m.at(i, j);
            else if (signal) c.fp += m.at(i, j);
            else c.tn += m.at(i, j);
        }
    }
    return c;
}

inline constexpr double kDefaultSmoothing = 1.0;

inline BinarySensorChannel channel_from_counts(const ConfusionCounts& c, double smoothing,
                                               std::string label) {
    EVSI_REQUIRE(std::isfinite(smoothing) && smoothing >= 0.0, ErrorCode::InvalidArgument,
                 "smoothing must be >= 0");
    const double fault_rows = static_cast<double>(c.tp + c.fn) + 2.0 * smoothing;
    const double normal_rows = static_cast<double>(c.fp + c.tn) + 2.0 * smoothing;
    EVSI_REQUIRE(fault_rows > 0.0 && normal_rows > 0.0, ErrorCode::DegenerateCounts,
                 "no fault or no normal samples and no smoothing");
    BinarySensorChannel ch;
    ch.p_signal_given_fault = (static_cast<double>(c.tp) + smoothing) / fault_rows;
    ch.p_signal_given_no_fault = (static_cast<double>(c.fp) + smoothing) / normal_rows;
    ch.label = std::move(label);
    return ch;
}

inline Priors empirical_priors(std::span<const int> labels, int normal_class) {
    EVSI_REQUIRE(!labels.empty(), ErrorCode::EmptySequence, "no labels to estimate priors from");
    std::size_t faults = 0;
    for (int l : labels) faults += l != normal_class ? 1 : 0;
    const double p = static_cast<double>(faults) / static_cast<double>(labels.size());
    return Priors{p, 1.0 - p};
}

/// Row-major CSV; header lists predicted-class indices, first column the true class.
inline void write_confusion_csv(std::ostream& os, const ConfusionMatrix& m) {
    os << "true\\predicted";
    for (int j = 0; j < m.num_classes(); ++j) os << ',' << j;
    os << '\n';
    for (int i = 0; i < m.num_classes(); ++i) {
        os << i;
        for (int j = 0; j < m.num_classes(); ++j) os << ',' << m.at(i, j);
        os << '\n';
    }
}

}  // namespace evsi
