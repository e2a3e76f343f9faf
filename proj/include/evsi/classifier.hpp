#pragma once

// Multinomial logistic regression trained by batch gradient descent on
// standardized features, plus k-fold cross-validation over the inverse
// regularization strength C. Any type satisfying `Trainer` can stand in for
// it in the selection procedures.

#include "evsi/data.hpp"
#include "evsi/error.hpp"
#include "evsi/metrics.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace evsi {

/// Per-feature values substituted for every row at inference time (masking).
using FeatureOverrides = std::map<std::string, double, std::less<>>;

/// A stateless fit/predict pair. Identical inputs must give identical models.
template <typename T>
concept Trainer = requires(const T& t, const SimDataset& ds, std::span<const std::string> features,
                           const typename T::model_type& m, const FeatureOverrides& overrides) {
    { t.fit(ds, features) } -> std::same_as<typename T::model_type>;
    { t.predict(m, ds, overrides) } -> std::same_as<std::vector<int>>;
};

struct TrainingConfig {
    double inverse_regularization = 1000.0;  // C
    int max_iterations = 500;
    double learning_rate = 0.1;
    double convergence_tolerance = 1e-6;
    std::uint64_t seed = 42;

    void validate() const {
        EVSI_REQUIRE(std::isfinite(inverse_regularization) && inverse_regularization > 0.0,
                     ErrorCode::InvalidConfig, "C must be positive");
        EVSI_REQUIRE(max_iterations > 0, ErrorCode::InvalidConfig, "max_iterations must be positive");
        EVSI_REQUIRE(std::isfinite(learning_rate) && learning_rate > 0.0, ErrorCode::InvalidConfig,
                     "learning_rate must be positive");
        EVSI_REQUIRE(std::isfinite(convergence_tolerance) && convergence_tolerance > 0.0,
                     ErrorCode::InvalidConfig, "convergence_tolerance must be positive");
    }

    bool operator==(const TrainingConfig&) const = default;
};

struct Model {
    std::vector<std::string> feature_set;
    std::vector<int> classes;  // ascending; row k of `weights` scores classes[k]
    Eigen::MatrixXd weights;   // classes x (features + 1), bias in the last column
    std::vector<double> mean;
    std::vector<double> stddev;
    TrainingConfig config;
    int iterations = 0;
    std::vector<double> loss_history;  // one entry per iteration, starting at the zero model

    bool operator==(const Model& o) const {
        return feature_set == o.feature_set && classes == o.classes && weights == o.weights && mean == o.mean &&
               stddev == o.stddev && config == o.config && iterations == o.iterations;
    }
};

namespace detail {

inline std::vector<std::size_t> resolve_columns(const SimDataset& ds, std::span<const std::string> features) {
    std::vector<std::size_t> cols;
    cols.reserve(features.size());
    for (const auto& f : features) {
        const auto idx = ds.feature_index(f);
        EVSI_REQUIRE(idx.has_value(), ErrorCode::UnknownFeature, "dataset has no feature '" + f + "'");
        cols.push_back(*idx);
    }
    return cols;
}

/// n x (d + 1) design matrix; last column is the constant 1.
inline Eigen::MatrixXd design_matrix(const SimDataset& ds, std::span<const std::string> features,
                                     std::span<const double> mean, std::span<const double> stddev,
                                     const FeatureOverrides& overrides = {}) {
    const auto cols = resolve_columns(ds, features);
    const auto n = static_cast<Eigen::Index>(ds.size());
    const auto d = static_cast<Eigen::Index>(cols.size());
    Eigen::MatrixXd x(n, d + 1);
    for (Eigen::Index j = 0; j < d; ++j) {
        const auto ov = overrides.find(features[static_cast<std::size_t>(j)]);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double raw = ov != overrides.end() ? ov->second : ds.records[static_cast<std::size_t>(i)].values[cols[j]];
            x(i, j) = (raw - mean[static_cast<std::size_t>(j)]) / stddev[static_cast<std::size_t>(j)];
        }
    }
    x.col(d).setOnes();
    return x;
}

inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& scores) {
    Eigen::MatrixXd p = scores;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

}  // namespace detail

/// Regularized mean cross-entropy,
///   L(W) = -(1/n) sum_i log softmax(W x_i)[y_i] + (1 / (2 C n)) * ||W without bias||^2,
/// and its gradient. `x` carries the bias column last; `y_onehot` is n x K.
struct LossAndGradient {
    double loss = 0.0;
    Eigen::MatrixXd gradient;
};

inline LossAndGradient logistic_loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y_onehot,
                                                  const Eigen::MatrixXd& weights, double inverse_regularization) {
    const auto n = static_cast<double>(x.rows());
    const Eigen::Index d = x.cols() - 1;
    const Eigen::MatrixXd scores = x * weights.transpose();
    LossAndGradient out;
    double nll = 0.0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const double mx = scores.row(i).maxCoeff();
        const double lse = mx + std::log((scores.row(i).array() - mx).exp().sum());
        nll += lse - scores.row(i).dot(y_onehot.row(i));
    }
    const double reg_scale = 1.0 / (inverse_regularization * n);
    const auto w_no_bias = weights.leftCols(d);
    out.loss = nll / n + 0.5 * reg_scale * w_no_bias.squaredNorm();
    const Eigen::MatrixXd probs = detail::softmax_rows(scores);
    out.gradient = (probs - y_onehot).transpose() * x / n;
    out.gradient.leftCols(d) += reg_scale * w_no_bias;
    return out;
}

inline Model train(const SimDataset& ds, std::span<const std::string> features, const TrainingConfig& config) {
    config.validate();
    EVSI_REQUIRE(!ds.empty(), ErrorCode::EmptyDataset, "training split is empty");
    const auto cols = detail::resolve_columns(ds, features);

    Model m;
    m.feature_set.assign(features.begin(), features.end());
    m.config = config;
    {
        auto labels = ds.labels();
        std::sort(labels.begin(), labels.end());
        labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
        m.classes = std::move(labels);
    }
    EVSI_REQUIRE(m.classes.size() >= 2, ErrorCode::SingleClassData, "training split contains a single class");

    const auto n = ds.size();
    m.mean.assign(cols.size(), 0.0);
    m.stddev.assign(cols.size(), 1.0);
    for (std::size_t j = 0; j < cols.size(); ++j) {
        double sum = 0.0;
        for (const auto& r : ds.records) sum += r.values[cols[j]];
        const double mu = sum / static_cast<double>(n);
        double sq = 0.0;
        for (const auto& r : ds.records) sq += (r.values[cols[j]] - mu) * (r.values[cols[j]] - mu);
        const double sd = std::sqrt(sq / static_cast<double>(n));
        m.mean[j] = mu;
        // Constant columns keep std = 1.
        m.stddev[j] = sd > 1e-12 * std::max(1.0, std::abs(mu)) ? sd : 1.0;
    }

    const Eigen::MatrixXd x = detail::design_matrix(ds, features, m.mean, m.stddev);
    const auto k = static_cast<Eigen::Index>(m.classes.size());
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), k);
    for (std::size_t i = 0; i < n; ++i) {
        const auto it = std::lower_bound(m.classes.begin(), m.classes.end(), ds.records[i].fault_class);
        y(static_cast<Eigen::Index>(i), it - m.classes.begin()) = 1.0;
    }

    m.weights = Eigen::MatrixXd::Zero(k, x.cols());
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < config.max_iterations; ++it) {
        const auto lg = logistic_loss_and_gradient(x, y, m.weights, config.inverse_regularization);
        m.loss_history.push_back(lg.loss);
        if (std::abs(prev - lg.loss) < config.convergence_tolerance) break;
        prev = lg.loss;
        m.weights -= config.learning_rate * lg.gradient;
        m.iterations = it + 1;
    }
    return m;
}

namespace detail {

// Highest score wins; ties go to the lowest class index.
inline int argmax_class(const Eigen::RowVectorXd& scores, const std::vector<int>& classes) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.size(); ++j) {
        if (scores(j) > scores(best)) best = j;
    }
    return classes[static_cast<std::size_t>(best)];
}

}  // namespace detail

inline std::vector<int> predict_dataset(const Model& m, const SimDataset& ds, const FeatureOverrides& overrides = {}) {
    if (ds.empty()) return {};
    const Eigen::MatrixXd x = detail::design_matrix(ds, m.feature_set, m.mean, m.stddev, overrides);
    const Eigen::MatrixXd scores = x * m.weights.transpose();
    std::vector<int> out(ds.size());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = detail::argmax_class(scores.row(i), m.classes);
    }
    return out;
}

inline int predict(const Model& m, const std::map<std::string, double, std::less<>>& features) {
    Eigen::RowVectorXd x(static_cast<Eigen::Index>(m.feature_set.size() + 1));
    for (std::size_t j = 0; j < m.feature_set.size(); ++j) {
        const auto it = features.find(m.feature_set[j]);
        EVSI_REQUIRE(it != features.end(), ErrorCode::MissingFeature,
                     "input lacks feature '" + m.feature_set[j] + "'");
        x(static_cast<Eigen::Index>(j)) = (it->second - m.mean[j]) / m.stddev[j];
    }
    x(x.size() - 1) = 1.0;
    return detail::argmax_class(x * m.weights.transpose(), m.classes);
}

struct Evaluation {
    std::vector<int> predictions;
    double accuracy = 0.0;
    ConfusionMatrix matrix;
};

/// Accuracy is read off the returned matrix (trace / total).
inline Evaluation evaluate_predictions(std::span<const int> truth, std::vector<int> predictions,
                                       int min_classes = 0) {
    EVSI_REQUIRE(!truth.empty(), ErrorCode::EmptyDataset, "evaluation split is empty");
    int num_classes = min_classes;
    for (int t : truth) num_classes = std::max(num_classes, t + 1);
    for (int p : predictions) num_classes = std::max(num_classes, p + 1);
    Evaluation e;
    e.matrix = confusion_matrix(truth, predictions, num_classes);
    e.accuracy = static_cast<double>(e.matrix.trace()) / static_cast<double>(e.matrix.total());
    e.predictions = std::move(predictions);
    return e;
}

inline Evaluation evaluate(const Model& m, const SimDataset& ds, const FeatureOverrides& overrides = {}) {
    EVSI_REQUIRE(!ds.empty(), ErrorCode::EmptyDataset, "evaluation split is empty");
    const auto truth = ds.labels();
    const int min_classes = m.classes.empty() ? 0 : m.classes.back() + 1;
    return evaluate_predictions(truth, predict_dataset(m, ds, overrides), min_classes);
}

/// The in-tree trainer, satisfying `Trainer`.
struct LogisticTrainer {
    using model_type = Model;
    TrainingConfig config;

    Model fit(const SimDataset& ds, std::span<const std::string> features) const { return train(ds, features, config); }

    std::vector<int> predict(const Model& m, const SimDataset& ds, const FeatureOverrides& overrides) const {
        return predict_dataset(m, ds, overrides);
    }
};

static_assert(Trainer<LogisticTrainer>);

// ---------------------------------------------------------------------------
// Cross-validation

inline const std::vector<double>& default_c_grid() {
    static const std::vector<double> grid{0.1, 1.0, 10.0, 100.0, 1000.0};
    return grid;
}

struct CvResult {
    double best_c = 0.0;
    std::vector<std::pair<double, double>> mean_accuracy;  // (C, mean validation accuracy), input order
};

/// Seeded shuffle, then k contiguous folds. Ties in mean accuracy go to the smaller C.
inline CvResult cross_validate(const SimDataset& ds, std::span<const std::string> features,
                               std::span<const double> candidate_cs, int k, const TrainingConfig& base) {
    EVSI_REQUIRE(!candidate_cs.empty(), ErrorCode::InvalidArgument, "no candidate C values");
    EVSI_REQUIRE(k >= 2, ErrorCode::InvalidArgument, "k must be >= 2");
    EVSI_REQUIRE(ds.size() >= static_cast<std::size_t>(k), ErrorCode::TooFewSamples,
                 "dataset has " + std::to_string(ds.size()) + " samples, fewer than k = " + std::to_string(k));

    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(base.seed);
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t n = ds.size();
    std::vector<std::pair<SimDataset, SimDataset>> folds;
    for (int f = 0; f < k; ++f) {
        const std::size_t lo = n * static_cast<std::size_t>(f) / static_cast<std::size_t>(k);
        const std::size_t hi = n * static_cast<std::size_t>(f + 1) / static_cast<std::size_t>(k);
        SimDataset tr, va;
        tr.feature_names = va.feature_names = ds.feature_names;
        for (std::size_t i = 0; i < n; ++i) {
            (i >= lo && i < hi ? va : tr).records.push_back(ds.records[order[i]]);
        }
        folds.emplace_back(std::move(tr), std::move(va));
    }

    CvResult result;
    double best_acc = -1.0;
    for (double c : candidate_cs) {
        TrainingConfig cfg = base;
        cfg.inverse_regularization = c;
        double acc_sum = 0.0;
        for (const auto& [tr, va] : folds) acc_sum += evaluate(train(tr, features, cfg), va).accuracy;
        const double mean_acc = acc_sum / static_cast<double>(k);
        result.mean_accuracy.emplace_back(c, mean_acc);
        if (mean_acc > best_acc || (mean_acc == best_acc && c < result.best_c)) {
            best_acc = mean_acc;
            result.best_c = c;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json training_config_to_json(const TrainingConfig& c) {
    return {{"inverse_regularization_c", c.inverse_regularization},
            {"max_iterations", c.max_iterations},
            {"learning_rate", c.learning_rate},
            {"convergence_tolerance", c.convergence_tolerance},
            {"seed", c.seed}};
}

inline TrainingConfig training_config_from_json(const nlohmann::json& j) {
    TrainingConfig c;
    try {
        c.inverse_regularization = j.at("inverse_regularization_c").get<double>();
        c.max_iterations = j.at("max_iterations").get<int>();
        c.learning_rate = j.at("learning_rate").get<double>();
        c.convergence_tolerance = j.at("convergence_tolerance").get<double>();
        c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("training config: ") + e.what());
    }
    c.validate();
    return c;
}

inline nlohmann::json model_to_json(const Model& m) {
    nlohmann::json weights = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.weights.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.weights.cols()));
        for (Eigen::Index c = 0; c < m.weights.cols(); ++c) row[static_cast<std::size_t>(c)] = m.weights(r, c);
        weights.push_back(row);
    }
    return {{"feature_set", m.feature_set},
            {"classes", m.classes},
            {"weights", weights},
            {"standardization", {{"mean", m.mean}, {"std", m.stddev}}},
            {"config", training_config_to_json(m.config)},
            {"iterations", m.iterations}};
}

inline Model model_from_json(const nlohmann::json& j) {
    Model m;
    try {
        m.feature_set = j.at("feature_set").get<std::vector<std::string>>();
        m.classes = j.at("classes").get<std::vector<int>>();
        m.mean = j.at("standardization").at("mean").get<std::vector<double>>();
        m.stddev = j.at("standardization").at("std").get<std::vector<double>>();
        m.config = training_config_from_json(j.at("config"));
        m.iterations = j.value("iterations", 0);
        const auto rows = j.at("weights").get<std::vector<std::vector<double>>>();
        const std::size_t d = m.feature_set.size();
        EVSI_REQUIRE(rows.size() == m.classes.size() && m.mean.size() == d && m.stddev.size() == d,
                     ErrorCode::SchemaViolation, "model dimensions disagree");
        m.weights.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d + 1));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            EVSI_REQUIRE(rows[r].size() == d + 1, ErrorCode::SchemaViolation,
                         "weight row length must be |feature_set| + 1");
            for (std::size_t c = 0; c <= d; ++c) {
                m.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
            }
        }
        for (double s : m.stddev) EVSI_REQUIRE(s > 0.0, ErrorCode::SchemaViolation, "std values must be > 0");
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("model: ") + e.what());
    }
    return m;
}

}  // namespace evsi
