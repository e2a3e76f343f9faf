#include "evsi/metrics.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>
#include <vector>

using namespace evsi;

TEST(Metrics, ConfusionMatrixCounts) {
    const std::vector<int> t{0, 0, 1}, p{0, 1, 1};
    EXPECT_EQ(confusion_matrix(t, p, 2), ConfusionMatrix::from_rows({{1, 1}, {0, 1}}));
}

TEST(Metrics, ConfusionMatrixErrors) {
    const std::vector<int> a{0, 1}, b{0};
    try {
        confusion_matrix(a, b, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
    }
    const std::vector<int> c{0, 3};
    try {
        confusion_matrix(a, c, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::LabelOutOfRange);
    }
    const std::vector<int> empty;
    EXPECT_THROW(confusion_matrix(empty, empty, 2), Error);
}

TEST(Metrics, BinaryExamples) {
    const auto r = binary_metrics({8, 2, 2, 88});
    EXPECT_DOUBLE_EQ(r.precision, 0.8);
    EXPECT_DOUBLE_EQ(r.recall, 0.8);
    EXPECT_DOUBLE_EQ(r.f1, 0.8);
    EXPECT_DOUBLE_EQ(r.accuracy, 0.96);

    const auto none = binary_metrics({0, 0, 0, 10});
    EXPECT_EQ(none.precision, 0.0);
    EXPECT_EQ(none.recall, 0.0);
    EXPECT_EQ(none.f1, 0.0);
    EXPECT_EQ(none.accuracy, 1.0);

    const auto perfect = binary_metrics({5, 0, 0, 7});
    EXPECT_EQ(perfect.precision, 1.0);
    EXPECT_EQ(perfect.recall, 1.0);
    EXPECT_EQ(perfect.f1, 1.0);
    EXPECT_EQ(perfect.accuracy, 1.0);

    EXPECT_THROW(binary_metrics({0, 0, 0, 0}), Error);
}

TEST(Metrics, WeightedAverages) {
    const auto diag = weighted_metrics(ConfusionMatrix::from_rows({{3, 0, 0}, {0, 2, 0}, {0, 0, 5}}));
    EXPECT_EQ(diag.precision, 1.0);
    EXPECT_EQ(diag.recall, 1.0);
    EXPECT_EQ(diag.f1, 1.0);
    EXPECT_EQ(diag.accuracy, 1.0);

    // [[1,1],[0,1]]: class 0 P=1 R=.5 F=2/3 (support 2); class 1 P=.5 R=1 F=2/3 (support 1).
    const auto r = weighted_metrics(ConfusionMatrix::from_rows({{1, 1}, {0, 1}}));
    EXPECT_NEAR(r.accuracy, 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(r.precision, (2.0 * 1.0 + 1.0 * 0.5) / 3.0, 1e-15);
    EXPECT_NEAR(r.recall, (2.0 * 0.5 + 1.0 * 1.0) / 3.0, 1e-15);
    EXPECT_NEAR(r.f1, 2.0 / 3.0, 1e-15);
    ASSERT_EQ(r.per_class.size(), 2u);
    EXPECT_EQ(r.per_class[0].support, 2);
}

TEST(Metrics, CollapseToBinary) {
    const auto m = ConfusionMatrix::from_rows({{5, 1, 0}, {0, 3, 1}, {1, 0, 4}});
    EXPECT_EQ(collapse_to_binary(m, 0), (ConfusionCounts{8, 1, 1, 5}));
    const auto two = ConfusionMatrix::from_rows({{4, 2}, {3, 6}});
    EXPECT_EQ(collapse_to_binary(two, 0), (ConfusionCounts{6, 2, 3, 4}));
    const auto blind = ConfusionMatrix::from_rows({{0, 0}, {7, 0}});
    const auto c = collapse_to_binary(blind, 0);
    EXPECT_EQ(c.tp, 0);
    EXPECT_EQ(c.fn, 7);
}

TEST(Metrics, ChannelFromCounts) {
    const auto a = channel_from_counts({9, 1, 1, 9}, 0.0, "A");
    EXPECT_DOUBLE_EQ(a.p_signal_given_fault, 0.9);
    EXPECT_DOUBLE_EQ(a.p_signal_given_no_fault, 0.1);
    EXPECT_EQ(a.label, "A");

    const auto b = channel_from_counts({0, 0, 0, 10}, 1.0, "B");
    EXPECT_DOUBLE_EQ(b.p_signal_given_fault, 0.5);
    EXPECT_DOUBLE_EQ(b.p_signal_given_no_fault, 1.0 / 12.0);

    const auto c = channel_from_counts({5, 0, 0, 5}, 0.0, "C");
    EXPECT_EQ(c.p_signal_given_fault, 1.0);
    EXPECT_EQ(c.p_signal_given_no_fault, 0.0);

    try {
        channel_from_counts({0, 0, 0, 10}, 0.0, "D");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateCounts);
    }
}

TEST(Metrics, EmpiricalPriors) {
    const std::vector<int> mix{0, 0, 1, 2}, normal{0, 0}, fault{1, 3};
    EXPECT_DOUBLE_EQ(empirical_priors(mix, 0).p_fault, 0.5);
    EXPECT_DOUBLE_EQ(empirical_priors(normal, 0).p_fault, 0.0);
    EXPECT_DOUBLE_EQ(empirical_priors(fault, 0).p_fault, 1.0);
    EXPECT_THROW(empirical_priors(std::vector<int>{}, 0), Error);
}

TEST(Metrics, ConfusionCsv) {
    std::ostringstream os;
    write_confusion_csv(os, ConfusionMatrix::from_rows({{1, 1}, {0, 1}}));
    EXPECT_EQ(os.str(), "true\\predicted,0,1\n0,1,1\n1,0,1\n");
}

// Brute-force oracle: per-class metrics counted directly from label pairs.
TEST(MetricsProperty, MatchesBruteForceCounting) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 4);
        const int n = 1 + static_cast<int>(rng() % 30);
        std::vector<int> t(n), p(n);
        for (int i = 0; i < n; ++i) {
            t[i] = static_cast<int>(rng() % k);
            p[i] = static_cast<int>(rng() % k);
        }
        const auto m = confusion_matrix(t, p, k);
        const auto rep = weighted_metrics(m);
        double wp = 0, wr = 0, wf = 0;
        int correct = 0;
        for (int i = 0; i < n; ++i) correct += t[i] == p[i];
        for (int c = 0; c < k; ++c) {
            long tp = 0, fp = 0, fn = 0, tn = 0;
            for (int i = 0; i < n; ++i) {
                const bool at = t[i] == c, ap = p[i] == c;
                tp += at && ap;
                fp += !at && ap;
                fn += at && !ap;
                tn += !at && !ap;
            }
            const double prec = tp + fp ? double(tp) / double(tp + fp) : 0.0;
            const double rec = tp + fn ? double(tp) / double(tp + fn) : 0.0;
            const double f1 = 2 * tp + fp + fn ? double(2 * tp) / double(2 * tp + fp + fn) : 0.0;
            const auto bin = binary_metrics({tp, fp, fn, tn});
            ASSERT_EQ(bin.precision, prec);
            ASSERT_EQ(bin.recall, rec);
            ASSERT_NEAR(bin.f1, f1, 1e-15);
            const double w = double(tp + fn) / n;
            wp += w * prec;
            wr += w * rec;
            wf += w * f1;
        }
        ASSERT_EQ(rep.accuracy, double(correct) / n);
        ASSERT_NEAR(rep.precision, wp, 1e-12);
        ASSERT_NEAR(rep.recall, wr, 1e-12);
        ASSERT_NEAR(rep.f1, wf, 1e-12);
        const auto bin = collapse_to_binary(m, 0);
        EXPECT_EQ(bin.total(), n);
    }
}
