#pragma once

// Command-line front end. `run` takes argv (without the program name) and
// writes to the given streams so tests can drive it in-process.
//
// Exit codes: 0 success, 1 module error, 2 usage error.

#include "evsi/classifier.hpp"
#include "evsi/data.hpp"
#include "evsi/decision.hpp"
#include "evsi/error.hpp"
#include "evsi/metrics.hpp"
#include "evsi/selection.hpp"
#include "evsi/service.hpp"
#include "evsi/session.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace evsi::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;

inline std::uint64_t default_seed() {
    if (const char* env = std::getenv("EVSI_SEED")) {
        if (const auto v = detail::parse_number<std::uint64_t>(env)) return *v;
    }
    return 42;
}

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    if (detail::trim(text).empty()) return out;
    for (const auto f : detail::split_fields(text)) {
        const auto t = detail::trim(f);
        EVSI_REQUIRE(!t.empty(), ErrorCode::InvalidArgument, "empty entry in list '" + text + "'");
        out.emplace_back(t);
    }
    return out;
}

inline std::string fmt_fixed(double v, int precision = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

inline void render_reports(std::ostream& out, const std::vector<EvsiReport>& rows, const std::string& evsi_header) {
    out << std::left << std::setw(10) << "Sensor" << std::right << std::setw(12) << evsi_header << "  "
        << std::left << std::setw(16) << "Action (Signal)" << "Action (No Signal)\n";
    for (const auto& r : rows) {
        out << std::left << std::setw(10) << r.sensor_label << std::right << std::setw(12) << fmt_fixed(r.evsi)
            << "  " << std::left << std::setw(16) << to_string(r.action_on_signal) << to_string(r.action_on_no_signal)
            << '\n';
    }
}

inline void render_reports_csv(std::ostream& out, const std::vector<EvsiReport>& rows, const std::string& ratio) {
    for (const auto& r : rows) {
        out << ratio << (ratio.empty() ? "" : ",") << r.sensor_label << ',' << detail::format_double(r.evsi) << ','
            << to_wire(r.action_on_signal) << ',' << to_wire(r.action_on_no_signal) << '\n';
    }
}

inline nlohmann::json reports_to_json(const std::vector<EvsiReport>& rows) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : rows) a.push_back(report_to_json(r));
    return a;
}

inline void render_trace_table(std::ostream& out, const SelectionTrace& t) {
    const bool evsi_mode = t.mode == SelectionMode::GreedyEvsi;
    for (const auto& r : t.rounds) {
        out << "Round " << r.round_index + 1 << " (baseline " << (evsi_mode ? "cost " : "accuracy ")
            << fmt_fixed(r.baseline_score) << ")\n";
        out << std::left << std::setw(10) << "Sensor" << std::right << std::setw(12) << (evsi_mode ? "EVSI" : "Accuracy");
        if (evsi_mode) out << "  " << std::left << std::setw(16) << "Action (Signal)" << "Action (No Signal)";
        out << '\n';
        for (const auto& [label, score] : r.ranked()) {
            out << std::left << std::setw(10) << label << std::right << std::setw(12) << fmt_fixed(score);
            if (evsi_mode) {
                const auto& d = r.details.at(label);
                out << "  " << std::left << std::setw(16) << to_string(d.action_on_signal)
                    << to_string(d.action_on_no_signal);
            }
            out << (r.chosen && *r.chosen == label ? "  <- chosen" : "") << '\n';
        }
        out << '\n';
    }
    out << "Deployed:";
    for (const auto& d : t.deployed) out << ' ' << d;
    out << "\nStop reason: " << to_wire(t.stop_reason) << '\n';
}

inline DataSplits load_split_dir(const std::filesystem::path& dir) {
    DataSplits s;
    s.train = load_csv(dir / "train.csv");
    s.validation = load_csv(dir / "validation.csv");
    if (std::filesystem::exists(dir / "test.csv")) s.test = load_csv(dir / "test.csv");
    return s;
}

inline Priors stats_priors(const ChannelStats& stats, const std::optional<double>& p_fault) {
    if (p_fault) return Priors::from_fault_probability(*p_fault);
    EVSI_REQUIRE(stats.priors.has_value(), ErrorCode::SchemaViolation,
                 "stats file has no priors; pass --p-fault");
    return *stats.priors;
}

inline CostConvention parse_convention(const std::string& s) {
    const auto c = convention_from_wire(s);
    EVSI_REQUIRE(c.has_value(), ErrorCode::InvalidArgument, "convention must be eq4 or flatfix");
    return *c;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sensor deployment by expected value of sample information", "evsi"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Expand all help");

    std::string output_format = "table";
    const auto add_format = [&](CLI::App* sub) {
        sub->add_option("--output-format", output_format, "table, json or csv")
            ->check(CLI::IsMember({"table", "json", "csv"}));
    };

    // rank
    std::string stats_path;
    double cost_r = 1.0, cost_p = 8.0;
    std::string convention = "eq4";
    std::optional<double> p_fault;
    auto* rank = app.add_subcommand("rank", "Rank sensors by EVSI from channel statistics");
    rank->add_option("--stats", stats_path, "channel statistics JSON")->required();
    rank->add_option("--cost-r", cost_r, "remediation cost R")->required();
    rank->add_option("--cost-p", cost_p, "plant damage cost P")->required();
    rank->add_option("--convention", convention, "eq4 or flatfix")->check(CLI::IsMember({"eq4", "flatfix"}));
    rank->add_option("--p-fault", p_fault, "fault prior (overrides the stats file)");
    add_format(rank);

    // sweep
    std::string ratios_text = "2,4,8,16";
    auto* sweep = app.add_subcommand("sweep", "EVSI and actions across P/R ratios");
    sweep->add_option("--stats", stats_path, "channel statistics JSON")->required();
    sweep->add_option("--cost-r", cost_r, "remediation cost R")->required();
    sweep->add_option("--ratios", ratios_text, "comma-separated P/R ratios");
    sweep->add_option("--convention", convention, "eq4 or flatfix")->check(CLI::IsMember({"eq4", "flatfix"}));
    sweep->add_option("--p-fault", p_fault, "fault prior (overrides the stats file)");
    add_format(sweep);

    // gen
    SynthConfig synth;
    int total_classes = 4;
    std::string informative = "X1";
    std::string out_path;
    std::uint64_t seed = default_seed();
    auto* gen = app.add_subcommand("gen", "Generate a synthetic planted-signal dataset");
    gen->add_option("--features", synth.num_features, "number of features")->required();
    gen->add_option("--manipulated", synth.num_manipulated, "trailing features named M1..Mm");
    gen->add_option("--classes", total_classes, "number of classes including the normal class 0")->required();
    gen->add_option("--sims", synth.sims_per_class, "simulations per class")->required();
    gen->add_option("--normal-sims", synth.normal_sims, "simulations of the normal class (default: --sims)");
    gen->add_option("--samples", synth.samples_per_sim, "samples per simulation")->required();
    gen->add_option("--informative", informative, "comma-separated informative feature ids")->required();
    gen->add_option("--shift", synth.shift_magnitude, "per-class mean shift of informative features");
    gen->add_option("--noise", synth.noise_std, "noise standard deviation");
    gen->add_option("--seed", seed, "RNG seed (default: $EVSI_SEED or 42)");
    gen->add_option("--out", out_path, "output CSV")->required();

    // split
    std::string train_path, test_path, spec_text = "40,25,20,10,2,10", out_dir;
    auto* split = app.add_subcommand("split", "Simulation-indexed train/validation/test sampling");
    split->add_option("--train", train_path, "training-files CSV")->required();
    split->add_option("--test", test_path, "testing-files CSV");
    split->add_option("--spec", spec_text, "train_normal,train_fault,val_normal,val_fault,test_normal,test_fault");
    split->add_option("--out-dir", out_dir, "directory for train/validation/test CSVs")->required();

    // train
    std::string data_dir, features_text;
    bool use_cv = false;
    TrainingConfig training;
    std::string model_out, confusion_out;
    auto* trn = app.add_subcommand("train", "Train the logistic-regression classifier");
    trn->add_option("--data", data_dir, "directory with train.csv and validation.csv")->required();
    trn->add_option("--features", features_text, "comma-separated features (default: all)");
    trn->add_flag("--cv", use_cv, "5-fold cross-validation over C in {0.1,1,10,100,1000}");
    trn->add_option("--c", training.inverse_regularization, "inverse regularization strength");
    trn->add_option("--max-iter", training.max_iterations, "gradient-descent iterations");
    trn->add_option("--learning-rate", training.learning_rate, "gradient-descent step");
    trn->add_option("--seed", seed, "seed for the cross-validation shuffle");
    trn->add_option("--model-out", model_out, "write the model JSON here");
    trn->add_option("--confusion-out", confusion_out, "write the validation confusion matrix CSV here");

    // select
    std::string base_text, candidates_text;
    int budget = 10;
    std::string masking = "mean", baseline_update = "advance", trace_out;
    auto* sel = app.add_subcommand("select", "Masking, forward-stepwise or greedy EVSI selection");
    std::string select_mode;
    sel->add_option("mode", select_mode, "mask | forward | evsi")
        ->required()
        ->check(CLI::IsMember({"mask", "forward", "evsi"}));
    sel->add_option("--data", data_dir, "directory with train.csv and validation.csv")->required();
    sel->add_option("--base", base_text, "comma-separated base features");
    sel->add_option("--candidates", candidates_text, "comma-separated candidate features");
    sel->add_option("--cost-r", cost_r, "remediation cost R (evsi)");
    sel->add_option("--cost-p", cost_p, "plant damage cost P (evsi)");
    sel->add_option("--convention", convention, "eq4 or flatfix")->check(CLI::IsMember({"eq4", "flatfix"}));
    sel->add_option("--budget", budget, "maximum number of deployments");
    sel->add_option("--seed", seed, "seed (default: $EVSI_SEED or 42)");
    sel->add_option("--masking", masking, "mean or retrain")->check(CLI::IsMember({"mean", "retrain"}));
    sel->add_option("--baseline", baseline_update, "advance or fixed")->check(CLI::IsMember({"advance", "fixed"}));
    sel->add_option("--c", training.inverse_regularization, "inverse regularization strength");
    sel->add_option("--max-iter", training.max_iterations, "gradient-descent iterations");
    sel->add_option("--trace-out", trace_out, "also write the JSON trace here");
    add_format(sel);

    // serve
    int port = 8080;
    std::string host = "0.0.0.0", session_path, backend = "stats";
    auto* serve = app.add_subcommand("serve", "Serve a deployment session over HTTP");
    serve->add_option("--port", port, "TCP port")->required();
    serve->add_option("--host", host, "bind address");
    serve->add_option("--session", session_path, "session JSON (created if missing)")->required();
    serve->add_option("--backend", backend, "stats or full")->check(CLI::IsMember({"stats", "full"}));
    serve->add_option("--stats", stats_path, "channel statistics JSON (new stats session)");
    serve->add_option("--data", data_dir, "split directory (new full session)");
    serve->add_option("--base", base_text, "comma-separated base features");
    serve->add_option("--candidates", candidates_text, "comma-separated candidates (default: all stats sensors)");
    serve->add_option("--cost-r", cost_r, "remediation cost R");
    serve->add_option("--cost-p", cost_p, "plant damage cost P");
    serve->add_option("--convention", convention, "eq4 or flatfix")->check(CLI::IsMember({"eq4", "flatfix"}));
    serve->add_option("--p-fault", p_fault, "fault prior (overrides the stats file)");

    if (args.empty()) {
        err << app.help();
        return kExitUsage;
    }
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (rank->parsed()) {
            const ChannelStats stats = ingest_channel_stats(stats_path);
            const CostModel costs{cost_r, cost_p, parse_convention(convention)};
            costs.validate();
            const auto rows = rank_candidates(stats.sensors, stats.baseline, stats_priors(stats, p_fault), costs);
            if (output_format == "json") {
                out << nlohmann::json{{"cost_model", cost_model_to_json(costs)}, {"rankings", reports_to_json(rows)}}
                           .dump(2)
                    << '\n';
            } else if (output_format == "csv") {
                out << "sensor,evsi,action_signal,action_no_signal\n";
                render_reports_csv(out, rows, "");
            } else {
                render_reports(out, rows, "EVSI");
            }
            return kExitOk;
        }

        if (sweep->parsed()) {
            const ChannelStats stats = ingest_channel_stats(stats_path);
            const auto ratios = detail::parse_double_list(ratios_text);
            EVSI_REQUIRE(ratios.has_value(), ErrorCode::InvalidRatio, "ratios must be a comma-separated list");
            EVSI_REQUIRE(std::isfinite(cost_r) && cost_r >= 0.0, ErrorCode::InvalidArgument, "R must be >= 0");
            const auto table = sensitivity_sweep(stats.sensors, stats.baseline, stats_priors(stats, p_fault), cost_r,
                                                 *ratios, parse_convention(convention));
            if (output_format == "json") {
                out << sweep_to_json(table).dump(2) << '\n';
            } else if (output_format == "csv") {
                out << "ratio,sensor,evsi,action_signal,action_no_signal\n";
                for (const auto& sec : table.sections) render_reports_csv(out, sec.rows, detail::format_double(sec.ratio));
            } else {
                for (std::size_t i = 0; i < table.sections.size(); ++i) {
                    const auto& sec = table.sections[i];
                    if (i) out << '\n';
                    out << "P/R = " << detail::format_double(sec.ratio) << '\n';
                    render_reports(out, sec.rows, "EVSI");
                }
            }
            return kExitOk;
        }

        if (gen->parsed()) {
            EVSI_REQUIRE(total_classes >= 1, ErrorCode::InvalidConfig, "--classes must be >= 1");
            synth.num_fault_classes = total_classes - 1;
            synth.informative_features = split_list(informative);
            synth.seed = seed;
            const SimDataset ds = synth_generate(synth);
            save_csv(ds, out_path);
            out << "wrote " << ds.size() << " rows x " << ds.feature_names.size() << " features to " << out_path
                << '\n';
            return kExitOk;
        }

        if (split->parsed()) {
            const auto counts = detail::parse_double_list(spec_text);
            EVSI_REQUIRE(counts && counts->size() == 6, ErrorCode::InvalidArgument, "--spec needs six integers");
            for (double c : *counts) {
                EVSI_REQUIRE(c >= 0 && c == std::floor(c), ErrorCode::InvalidArgument, "--spec entries must be integers >= 0");
            }
            const auto& c = *counts;
            const SplitSpec spec{static_cast<int>(c[0]), static_cast<int>(c[1]), static_cast<int>(c[2]),
                                 static_cast<int>(c[3]), static_cast<int>(c[4]), static_cast<int>(c[5])};
            const SimDataset training_ds = load_csv(train_path);
            std::optional<SimDataset> testing_ds;
            if (!test_path.empty()) testing_ds = load_csv(test_path);
            const DataSplits splits = simulation_split(training_ds, testing_ds, spec);
            const std::filesystem::path dir(out_dir);
            std::filesystem::create_directories(dir);
            save_csv(splits.train, dir / "train.csv");
            save_csv(splits.validation, dir / "validation.csv");
            save_csv(splits.test, dir / "test.csv");
            out << "train " << splits.train.size() << " rows, validation " << splits.validation.size()
                << " rows, test " << splits.test.size() << " rows -> " << out_dir << '\n';
            return kExitOk;
        }

        if (trn->parsed()) {
            const DataSplits splits = load_split_dir(data_dir);
            const auto features = features_text.empty() ? splits.train.feature_names : split_list(features_text);
            training.seed = seed;
            if (use_cv) {
                const auto cv = cross_validate(splits.train, features, default_c_grid(), 5, training);
                for (const auto& [c, acc] : cv.mean_accuracy) {
                    out << "cv C=" << detail::format_double(c) << " mean_accuracy=" << fmt_fixed(acc) << '\n';
                }
                out << "best C=" << detail::format_double(cv.best_c) << '\n';
                training.inverse_regularization = cv.best_c;
            }
            const Model model = train(splits.train, features, training);
            const Evaluation val = evaluate(model, splits.validation);
            const MetricsReport m = weighted_metrics(val.matrix);
            out << "validation accuracy=" << fmt_fixed(val.accuracy) << " precision=" << fmt_fixed(m.precision)
                << " recall=" << fmt_fixed(m.recall) << " f1=" << fmt_fixed(m.f1) << '\n';
            if (!splits.test.empty()) {
                const Evaluation test = evaluate(model, splits.test);
                const MetricsReport tm = weighted_metrics(test.matrix);
                out << "test accuracy=" << fmt_fixed(test.accuracy) << " precision=" << fmt_fixed(tm.precision)
                    << " recall=" << fmt_fixed(tm.recall) << " f1=" << fmt_fixed(tm.f1) << '\n';
            }
            out << "validation confusion matrix:\n";
            write_confusion_csv(out, val.matrix);
            if (!confusion_out.empty()) {
                std::ofstream f(confusion_out);
                EVSI_REQUIRE(f.good(), ErrorCode::IoError, "cannot write " + confusion_out);
                write_confusion_csv(f, val.matrix);
            }
            if (!model_out.empty()) {
                std::ofstream f(model_out);
                EVSI_REQUIRE(f.good(), ErrorCode::IoError, "cannot write " + model_out);
                f << model_to_json(model).dump(2) << '\n';
            }
            return kExitOk;
        }

        if (sel->parsed()) {
            const DataSplits splits = load_split_dir(data_dir);
            training.seed = seed;
            const LogisticTrainer trainer{training};
            SelectionOptions opts;
            opts.budget = budget;
            opts.masking = masking == "retrain" ? MaskingMode::Retrain : MaskingMode::MeanSubstitute;
            opts.baseline_update = baseline_update == "fixed" ? BaselineUpdate::FixedBase : BaselineUpdate::Advance;
            const auto base = split_list(base_text);
            const auto candidates = split_list(candidates_text);

            nlohmann::json doc;
            std::ostringstream table;
            if (select_mode == "mask") {
                std::vector<std::string> all = base;
                all.insert(all.end(), candidates.begin(), candidates.end());
                if (all.empty()) all = splits.train.feature_names;
                const auto ranking = mask_importance(trainer, splits, all, opts);
                doc = importance_to_json(ranking);
                table << "Baseline accuracy " << fmt_fixed(ranking.baseline_accuracy) << '\n'
                      << std::left << std::setw(10) << "Feature" << std::right << std::setw(12) << "Delta"
                      << std::setw(12) << "Masked" << '\n';
                for (const auto& e : ranking.entries) {
                    table << std::left << std::setw(10) << e.feature << std::right << std::setw(12)
                          << fmt_fixed(e.accuracy_delta) << std::setw(12) << fmt_fixed(e.masked_accuracy) << '\n';
                }
            } else {
                SelectionTrace trace;
                if (select_mode == "forward") {
                    trace = forward_stepwise(trainer, splits, base, candidates, opts);
                } else {
                    const CostModel costs{cost_r, cost_p, parse_convention(convention)};
                    trace = greedy_evsi_selection(trainer, splits, base, candidates, costs, opts);
                }
                doc = trace_to_json(trace);
                render_trace_table(table, trace);
            }
            const std::string json_text = doc.dump(2);
            if (!trace_out.empty()) {
                std::ofstream f(trace_out);
                EVSI_REQUIRE(f.good(), ErrorCode::IoError, "cannot write " + trace_out);
                f << json_text << '\n';
            }
            if (output_format == "json") {
                out << json_text << '\n';
            } else {
                out << table.str() << '\n' << json_text << '\n';
            }
            return kExitOk;
        }

        if (serve->parsed()) {
            DeploymentSession session;
            if (std::filesystem::exists(session_path)) {
                session = load_session(session_path);
            } else {
                const CostModel costs{cost_r, cost_p, parse_convention(convention)};
                SessionConfig cfg;
                cfg.session_id = std::filesystem::path(session_path).stem().string();
                SessionSource src;
                std::vector<std::string> candidates = split_list(candidates_text);
                if (backend == "stats") {
                    EVSI_REQUIRE(!stats_path.empty(), ErrorCode::InvalidArgument,
                                 "a new stats session needs --stats FILE");
                    src.backend = Backend::Stats;
                    src.stats = ingest_channel_stats(stats_path);
                    if (p_fault) cfg.priors = Priors::from_fault_probability(*p_fault);
                    if (candidates.empty()) {
                        for (const auto& s : src.stats.sensors) candidates.push_back(s.label);
                    }
                } else {
                    EVSI_REQUIRE(!data_dir.empty(), ErrorCode::InvalidArgument, "a new full session needs --data DIR");
                    src.backend = Backend::Full;
                    src.full.data_dir = std::filesystem::absolute(data_dir).string();
                    src.full.training = training;
                }
                session = create_session(std::move(src), split_list(base_text), std::move(candidates), costs, cfg);
                save_session(session, session_path);
            }
            SessionStore store(std::move(session), std::filesystem::path(session_path));
            err << "serving session '" << store.snapshot().session_id << "' on " << host << ':' << port << '\n';
            if (!run_service(store, host, port)) {
                err << "error: cannot listen on " << host << ':' << port << '\n';
                return kExitError;
            }
            return kExitOk;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitError;
    }
    err << app.help();
    return kExitUsage;
}

}  // namespace evsi::cli
