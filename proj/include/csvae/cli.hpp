#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "csvae/bench.hpp"
#include "csvae/channel.hpp"
#include "csvae/checkpoint.hpp"
#include "csvae/cs_vae.hpp"
#include "csvae/data_model.hpp"
#include "csvae/error.hpp"
#include "csvae/lasso.hpp"
#include "csvae/sensing.hpp"

namespace csvae::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// Bad config file contents; reported like a command-line usage error.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

using csvae::detail::require;

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

}  // namespace detail

/// Flat key=value config: blank lines and lines starting with # or ; are skipped.
inline std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    for (int line_no = 1; std::getline(in, line); ++line_no) {
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw UsageError(path + ":" + std::to_string(line_no) + ": expected key=value");
        std::string key = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        while (!key.empty() && key[0] == '-') key.erase(0, 1);
        if (key.empty() || value.empty())
            throw UsageError(path + ":" + std::to_string(line_no) + ": empty key or value");
        if (key == "config") throw UsageError(path + ":" + std::to_string(line_no) + ": nested config not allowed");
        out.emplace_back(key, value);
    }
    return out;
}

/// Splices `--config FILE` entries into the argument list as `--key=value`
/// right after the subcommand, skipping keys already given as flags.
/// Unknown keys then fail parsing exactly like unknown flags.
inline std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return args;
    const auto sub = std::find_if(args.begin(), args.end(), [](const std::string& a) { return a.empty() || a[0] != '-'; });
    if (sub == args.end()) return args;
    std::vector<std::string> injected;
    for (const auto& [key, value] : read_config(path))
        if (!detail::has_flag(args, "--" + key)) injected.push_back("--" + key + "=" + value);
    std::vector<std::string> out(args.begin(), sub + 1);
    out.insert(out.end(), injected.begin(), injected.end());
    out.insert(out.end(), sub + 1, args.end());
    return out;
}

namespace detail {

inline void emit(std::ostream& out, const nlohmann::json& doc, const std::string& path) {
    const std::string text = doc.dump(2) + "\n";
    out << text;
    if (!path.empty()) bench::write_text(path, text);
}

/// Frames on the normalized scale. Raw files are normalized with `stats` when
/// given, otherwise fitted on themselves.
inline FrameSet normalized(FrameSet set, const std::optional<NormStats>& stats = std::nullopt) {
    if (set.normalized) return set;
    const NormStats s = stats ? *stats : normalize_fit(set);
    return normalize_apply(set, s);
}

inline MeasurementMatrix build_matrix(const std::string& kind, Eigen::Index m, Eigen::Index n, double pt, double d,
                                      std::uint64_t seed, const std::vector<std::uint32_t>& sensors,
                                      const FrameSet* data) {
    if (kind == "proposition") {
        require(data != nullptr, "matrix: the proposition kind needs --data for source statistics");
        return build_proposition_matrix(m, n, pt, d, source_stats(*data), seed);
    }
    if (kind == "unconstrained") return build_unconstrained_matrix(m, n, seed);
    if (kind == "selection") {
        if (!sensors.empty()) return build_selection_matrix(sensors, bench::kFeaturesPerSensor, n);
        require(m % bench::kFeaturesPerSensor == 0, "matrix: selection needs m divisible by 12 or explicit --sensors");
        return build_selection_matrix(bench::dip_sensors(m), bench::kFeaturesPerSensor, n);
    }
    throw DataError("unknown matrix kind '" + kind + "' (expected proposition, unconstrained or selection)");
}

/// Deployment matrix for a checkpoint: an explicit file wins, else the embedded descriptor.
inline MeasurementMatrix model_matrix(const nlohmann::json& checkpoint, const std::string& matrix_path) {
    if (!matrix_path.empty()) return load_matrix(matrix_path);
    auto embedded = checkpoint_matrix(checkpoint);
    if (!embedded) throw DataError("checkpoint has no embedded matrix; pass --matrix");
    return *embedded;
}

inline nlohmann::json losses_json(const LossTerms& t) {
    return {{"total", t.total}, {"recon", t.recon}, {"l1", t.l1}, {"kl", t.kl}};
}

}  // namespace detail

struct BenchOptions {
    std::vector<std::string> methods{"CsVae", "Lasso", "LassoNoPt", "Dip"};
    std::vector<Eigen::Index> m_list;
    std::vector<double> sigma_list;
    std::vector<Eigen::Index> samples_list;
    std::vector<std::uint64_t> seeds;
    std::string data, test_data, out, csv;
    bool quiet = false;
};

inline int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Compressive sensing with a generative decoder: data, matrices, training, recovery, benchmarks",
                 "csvae"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    std::string config;
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config, "Flat key=value file; command-line flags win");
    };

    // gen
    auto* gen = app.add_subcommand("gen", "Generate synthetic nearly-sparse frames, or import a CSV");
    Eigen::Index gen_frames = 0, gen_features = bench::kFeatures, gen_sparsity = 10;
    std::uint64_t seed = 0;
    std::string out_path, from_csv;
    gen->add_option("--frames", gen_frames, "Number of frames");
    gen->add_option("--features", gen_features, "Features per frame")->capture_default_str();
    gen->add_option("--sparsity", gen_sparsity, "Dominant DCT coefficients per frame")->capture_default_str();
    gen->add_option("--seed", seed, "Random seed")->capture_default_str();
    gen->add_option("--from-csv", from_csv, "Import this CSV (normalized on itself) instead of generating");
    gen->add_option("--out", out_path, "Output frame file")->required();
    add_config(gen);

    // stats
    auto* stats = app.add_subcommand("stats", "Source statistics of a frame file");
    std::string data_path;
    stats->add_option("--data", data_path, "Frame file")->required();
    stats->add_option("--out", out_path, "Also write the JSON summary here");
    add_config(stats);

    // matrix
    auto* matrix = app.add_subcommand("matrix", "Build and save a measurement matrix");
    std::string kind = "proposition";
    Eigen::Index m = 0, n = bench::kFeatures;
    double pt = 0.1, d = 2.0;
    std::vector<std::uint32_t> sensors;
    matrix->add_option("--kind", kind, "proposition | unconstrained | selection")->capture_default_str();
    matrix->add_option("--m", m, "Measurements per frame");
    matrix->add_option("--n", n, "Source dimension")->capture_default_str();
    matrix->add_option("--data", data_path, "Training frames (source statistics for the proposition kind)");
    matrix->add_option("--pt", pt, "Transmit power budget P_T")->capture_default_str();
    matrix->add_option("--d", d, "Chebyshev width d")->capture_default_str();
    matrix->add_option("--sensors", sensors, "Selection kind: sensor block indices")->delimiter(',');
    matrix->add_option("--seed", seed, "Random seed")->capture_default_str();
    matrix->add_option("--out", out_path, "Output matrix file")->required();
    add_config(matrix);

    // check-matrix
    auto* check = app.add_subcommand("check-matrix", "Power-constraint fraction and S-REC check for a matrix");
    std::string matrix_path, model_path;
    std::optional<double> gamma;
    Eigen::Index pairs = 1000;
    double target = 0.99;
    std::optional<double> check_pt;
    check->add_option("--matrix", matrix_path, "Matrix file")->required();
    check->add_option("--data", data_path, "Frame file for the power check")->required();
    check->add_option("--model", model_path, "Checkpoint; S-REC pairs come from its decoder, else from data frames");
    check->add_option("--pt", check_pt, "Power budget (default: from the matrix, else 0.1)");
    check->add_option("--gamma", gamma, "S-REC scale (default: half the RMS column norm)");
    check->add_option("--pairs", pairs, "Number of S-REC pairs")->capture_default_str();
    check->add_option("--target", target, "Satisfied fraction the fitted kappa must reach")->capture_default_str();
    check->add_option("--seed", seed, "Random seed")->capture_default_str();
    check->add_option("--out", out_path, "Also write the JSON summary here");
    add_config(check);

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the generative decoder on noisy measurements");
    TrainConfig tc;
    double sigma_n = 0.0;
    std::string history_path, matrix_out;
    train_cmd->add_option("--data", data_path, "Training frame file")->required();
    train_cmd->add_option("--matrix", matrix_path, "Use this matrix instead of building one");
    train_cmd->add_option("--kind", kind, "Matrix kind when building: proposition | unconstrained | selection")
        ->capture_default_str();
    train_cmd->add_option("--m", m, "Measurements per frame (when building the matrix)");
    train_cmd->add_option("--sigma-n", sigma_n, "Channel noise std")->capture_default_str();
    train_cmd->add_option("--epochs", tc.epochs, "Epochs")->capture_default_str();
    train_cmd->add_option("--batch", tc.batch_size, "Batch size")->capture_default_str();
    train_cmd->add_option("--lr", tc.lr, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--lambda", tc.lambda_l1, "l1 weight")->capture_default_str();
    train_cmd->add_option("--kl-weight", tc.kl_weight, "KL weight")->capture_default_str();
    train_cmd->add_option("--pt", pt, "Transmit power budget P_T")->capture_default_str();
    train_cmd->add_option("--d", d, "Chebyshev width d")->capture_default_str();
    train_cmd->add_option("--seed", seed, "Seed for matrix, init, noise and shuffling")->capture_default_str();
    train_cmd->add_option("--matrix-out", matrix_out, "Also save the matrix here");
    train_cmd->add_option("--history", history_path, "Per-epoch loss CSV");
    train_cmd->add_option("--out", out_path, "Checkpoint path")->required();
    add_config(train_cmd);

    // eval
    auto* eval = app.add_subcommand("eval", "Recover a frame set and report MSE");
    std::string method = "CsVae", recon_out;
    std::optional<double> eval_sigma;
    Eigen::Index eval_frames = 0;
    LassoConfig lc;
    eval->add_option("--method", method, "CsVae | Dip (need --model) or Lasso | LassoNoPt (need --matrix)")
        ->capture_default_str();
    eval->add_option("--model", model_path, "Checkpoint");
    eval->add_option("--matrix", matrix_path, "Matrix file (default: the checkpoint's)");
    eval->add_option("--data", data_path, "Test frame file")->required();
    eval->add_option("--sigma-n", eval_sigma, "Channel noise std (default: the model's)");
    eval->add_option("--frames", eval_frames, "Evaluate only the first N frames (0 = all)")->capture_default_str();
    eval->add_option("--lambda", lc.lambda, "Lasso l1 weight")->capture_default_str();
    eval->add_option("--max-iter", lc.max_iter, "Lasso iteration cap")->capture_default_str();
    eval->add_option("--tol", lc.tol, "Lasso relative objective tolerance")->capture_default_str();
    eval->add_option("--seed", seed, "Channel seed")->capture_default_str();
    eval->add_option("--recon-out", recon_out, "Write recovered frames here");
    eval->add_option("--out", out_path, "Also write the JSON summary here");
    add_config(eval);

    // interp
    auto* interp = app.add_subcommand("interp", "Decode a straight latent path between two frames");
    Eigen::Index frame_a = 0, frame_b = 1;
    int steps = 8;
    interp->add_option("--model", model_path, "Checkpoint")->required();
    interp->add_option("--data", data_path, "Frame file holding the endpoints")->required();
    interp->add_option("--matrix", matrix_path, "Matrix file (default: the checkpoint's)");
    interp->add_option("--frame-a", frame_a, "Index of the first endpoint")->required();
    interp->add_option("--frame-b", frame_b, "Index of the second endpoint")->required();
    interp->add_option("--steps", steps, "Frames along the path, endpoints included")->capture_default_str();
    interp->add_option("--sigma-n", sigma_n, "Channel noise std on the endpoint measurements")->capture_default_str();
    interp->add_option("--seed", seed, "Channel seed")->capture_default_str();
    interp->add_option("--out", out_path, "Write the path as a frame file");
    add_config(interp);

    // benches
    bench::ExperimentSpec spec;
    BenchOptions bo;
    auto add_bench = [&](const std::string& name, const std::string& help) {
        auto* b = app.add_subcommand(name, help);
        b->add_option("--method", bo.methods, "Methods, comma separated")->delimiter(',')->capture_default_str();
        b->add_option("--m-list", bo.m_list, "Measurement counts, comma separated")->delimiter(',');
        b->add_option("--sigma-list", bo.sigma_list, "Noise levels, comma separated")->delimiter(',');
        b->add_option("--samples-list", bo.samples_list, "Latency input-sample counts, comma separated")->delimiter(',');
        b->add_option("--seeds", bo.seeds, "Run seeds, comma separated")->delimiter(',');
        b->add_option("--seed", spec.data_seed, "Synthetic data seed")->capture_default_str();
        b->add_option("--m", spec.fixed_m, "m held fixed by bench-noise and bench-latency")->capture_default_str();
        b->add_option("--sigma-n", spec.fixed_sigma, "sigma_n held fixed by bench-m and bench-latency")
            ->capture_default_str();
        b->add_option("--epochs", spec.train.epochs, "Epochs")->capture_default_str();
        b->add_option("--batch", spec.train.batch_size, "Batch size")->capture_default_str();
        b->add_option("--lr", spec.train.lr, "Adam learning rate")->capture_default_str();
        b->add_option("--lambda", spec.train.lambda_l1, "l1 weight (training and Lasso)")->capture_default_str();
        b->add_option("--kl-weight", spec.train.kl_weight, "KL weight")->capture_default_str();
        b->add_option("--pt", spec.power_budget, "Transmit power budget P_T")->capture_default_str();
        b->add_option("--d", spec.d, "Chebyshev width d")->capture_default_str();
        b->add_option("--train-frames", spec.n_train, "Synthetic training frames")->capture_default_str();
        b->add_option("--test-frames", spec.n_test, "Synthetic test frames")->capture_default_str();
        b->add_option("--sparsity", spec.sparsity, "Synthetic sparsity k")->capture_default_str();
        b->add_option("--lasso-frames", spec.lasso_eval_frames, "Test frames scored for Lasso methods (0 = all)")
            ->capture_default_str();
        b->add_option("--max-iter", spec.lasso.max_iter, "Lasso iteration cap")->capture_default_str();
        b->add_option("--tol", spec.lasso.tol, "Lasso relative objective tolerance")->capture_default_str();
        b->add_option("--reps", spec.repetitions, "Latency repetitions (median reported)")->capture_default_str();
        b->add_option("--data", bo.data, "Training frame file instead of synthetic data");
        b->add_option("--test-data", bo.test_data, "Test frame file (with --data)");
        b->add_option("--out", bo.out, "Report JSON path")->required();
        b->add_option("--csv", bo.csv, "Report CSV path");
        b->add_flag("--quiet", bo.quiet, "No progress lines on stderr");
        add_config(b);
        return b;
    };
    auto* bench_m = add_bench("bench-m", "MSE versus measurement count");
    auto* bench_noise = add_bench("bench-noise", "MSE versus channel noise");
    auto* bench_latency = add_bench("bench-latency", "Decode wall time versus input-sample count");

    try {
        std::vector<std::string> args = expand_config(raw_args);
        std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        err << "run with --help for usage\n";
        return kUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kData;
    }

    try {
        if (gen->parsed()) {
            FrameSet set;
            if (!from_csv.empty()) {
                set = detail::normalized(drop_nonfinite(load_csv(from_csv)));
            } else {
                detail::require(gen_frames > 0, "gen: --frames must be positive (or use --from-csv)");
                set = gen_synthetic(gen_frames, gen_features, gen_sparsity, seed);
            }
            save_frames(set, out_path);
            out << "wrote " << set.n_frames() << " frames x " << set.n_features() << " features to " << out_path
                << "\n";
        } else if (stats->parsed()) {
            const FrameSet set = load_frames(data_path);
            nlohmann::json doc{{"path", data_path},
                               {"n_frames", set.n_frames()},
                               {"n_features", set.n_features()},
                               {"normalized", set.normalized}};
            if (set.n_frames() > 0) {
                const FrameSet norm = detail::normalized(set);
                const SourceStats s = source_stats(norm);
                doc["mu_x"] = s.mu_x;
                doc["sigma_x"] = s.sigma_x;
                doc["min"] = norm.frames.minCoeff();
                doc["max"] = norm.frames.maxCoeff();
            }
            detail::emit(out, doc, out_path);
        } else if (matrix->parsed()) {
            std::optional<FrameSet> data;
            if (!data_path.empty()) data = detail::normalized(load_frames(data_path));
            if (data) n = data->n_features();
            const MeasurementMatrix A =
                detail::build_matrix(kind, m, n, pt, d, seed, sensors, data ? &*data : nullptr);
            save_matrix(A, out_path);
            detail::emit(out, matrix_descriptor(A), "");
        } else if (check->parsed()) {
            const MeasurementMatrix A = load_matrix(matrix_path);
            const FrameSet data = detail::normalized(load_frames(data_path));
            const double budget = check_pt ? *check_pt : (A.meta.power_budget > 0.0 ? A.meta.power_budget : 0.1);
            nlohmann::json doc{{"matrix", matrix_descriptor(A)}, {"power_budget", budget},
                               {"power_satisfied_fraction", power_check(A, data, budget)}};
            if (A.kind == MatrixKind::Proposition) doc["chebyshev_floor"] = 1.0 - 1.0 / (A.meta.d * A.meta.d);

            RowMatrix first, second;
            if (!model_path.empty()) {
                const VaeModel model = load_checkpoint(model_path);
                detail::require(model.n() == A.n(), "check-matrix: model output size does not match matrix n");
                auto sampled = sample_generator_pairs(model, pairs, seed);
                first = std::move(sampled.first);
                second = std::move(sampled.second);
                doc["pair_source"] = "decoder";
            } else {
                detail::require(data.n_frames() >= 2, "check-matrix: need at least two frames for pairs");
                first.resize(pairs, data.n_features());
                second.resize(pairs, data.n_features());
                auto engine = rng::stream(seed, rng::Purpose::Pairs);
                std::uniform_int_distribution<Eigen::Index> pick(0, data.n_frames() - 1);
                for (Eigen::Index i = 0; i < pairs; ++i) {
                    first.row(i) = data.frames.row(pick(engine));
                    second.row(i) = data.frames.row(pick(engine));
                }
                doc["pair_source"] = "data";
            }
            const SRecReport r = fit_s_rec_kappa(A, first, second, gamma ? *gamma : default_s_rec_gamma(A), target);
            doc["s_rec"] = {{"gamma", r.gamma},
                            {"kappa", r.kappa},
                            {"satisfied_fraction", r.satisfied_fraction},
                            {"pair_count", r.pair_count},
                            {"target", target}};
            detail::emit(out, doc, out_path);
        } else if (train_cmd->parsed()) {
            const FrameSet data = detail::normalized(load_frames(data_path));
            MeasurementMatrix A = matrix_path.empty()
                                      ? detail::build_matrix(kind, m, data.n_features(), pt, d, seed, {}, &data)
                                      : load_matrix(matrix_path);
            if (!matrix_out.empty()) save_matrix(A, matrix_out);
            tc.seed = seed;
            const MeasurementMode mode{A.kind == MatrixKind::Selection, pt};
            const TrainResult result = train(data, A, ChannelConfig{sigma_n, seed}, tc, mode);
            save_checkpoint(result.model, out_path, &A);
            if (!history_path.empty()) {
                std::ostringstream csv;
                csv << std::setprecision(17) << "epoch,total,recon,l1,kl\n";
                for (std::size_t e = 0; e < result.history.epochs.size(); ++e) {
                    const auto& t = result.history.epochs[e];
                    csv << e + 1 << ',' << t.total << ',' << t.recon << ',' << t.l1 << ',' << t.kl << '\n';
                }
                bench::write_text(history_path, csv.str());
            }
            nlohmann::json doc{{"checkpoint", out_path},
                               {"matrix", matrix_descriptor(A)},
                               {"sigma_n", sigma_n},
                               {"train_config", train_config_json(tc)},
                               {"frames", data.n_frames()},
                               {"train_seconds", result.history.wall_seconds}};
            if (!result.history.epochs.empty()) doc["final_loss"] = detail::losses_json(result.history.epochs.back());
            detail::emit(out, doc, "");
        } else if (eval->parsed()) {
            const bench::Method meth = bench::method_from_string(method);
            std::optional<VaeModel> model;
            MeasurementMatrix A;
            if (bench::uses_network(meth)) {
                detail::require(!model_path.empty(), "eval: method " + method + " needs --model");
                const nlohmann::json doc = read_checkpoint_json(model_path);
                model = model_from_checkpoint(doc);
                A = detail::model_matrix(doc, matrix_path);
            } else {
                detail::require(!matrix_path.empty(), "eval: method " + method + " needs --matrix");
                A = load_matrix(matrix_path);
            }
            FrameSet data = load_frames(data_path);
            if (!data.normalized) {
                detail::require(model && model->norm_stats, "eval: raw frames need a model with normalization stats");
                data = normalize_apply(data, *model->norm_stats);
            }
            if (eval_frames > 0) data = data.slice(0, std::min(eval_frames, data.n_frames()));
            const double sigma = eval_sigma ? *eval_sigma : (model ? model->sigma_n : 0.0);
            const bool power_norm = model ? model->mode.power_normalize : false;
            const double budget = model ? model->mode.power_budget : 0.0;
            const RowMatrix y_hat = awgn_all(measure_all(A, data, power_norm, budget), ChannelConfig{sigma, seed});

            const auto start = std::chrono::steady_clock::now();
            const RowMatrix x_hat = model ? recover(*model, A, y_hat) : fista_solve_batch(A.entries, y_hat, lc).x_hat;
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            const bench::MseSummary score = bench::mse(x_hat, data.frames);
            if (!recon_out.empty()) {
                FrameSet rec{x_hat.cwiseMax(-1.0).cwiseMin(1.0), true, data.stats};
                save_frames(rec, recon_out);
            }
            detail::emit(out,
                         {{"method", method},
                          {"m", A.m()},
                          {"sigma_n", sigma},
                          {"seed", seed},
                          {"frames", data.n_frames()},
                          {"matrix_digest", A.digest()},
                          {"mse_mean", score.mean},
                          {"mse_std", score.std},
                          {"decode_seconds", secs}},
                         out_path);
        } else if (interp->parsed()) {
            const nlohmann::json doc = read_checkpoint_json(model_path);
            const VaeModel model = model_from_checkpoint(doc);
            const MeasurementMatrix A = detail::model_matrix(doc, matrix_path);
            FrameSet data = load_frames(data_path);
            if (!data.normalized) {
                detail::require(model.norm_stats.has_value(), "interp: raw frames need a model with normalization stats");
                data = normalize_apply(data, *model.norm_stats);
            }
            detail::require(frame_a >= 0 && frame_a < data.n_frames() && frame_b >= 0 && frame_b < data.n_frames(),
                            "interp: frame index out of range (file has " + std::to_string(data.n_frames()) + " frames)");
            const ChannelConfig ch{sigma_n, seed};
            const auto endpoint = [&](Eigen::Index i) {
                return awgn(measure(A, data.frames.row(i).transpose(), model.mode.power_normalize,
                                    model.mode.power_budget),
                            ch, static_cast<std::uint64_t>(i));
            };
            const RowMatrix path = interpolate(model, endpoint(frame_a), endpoint(frame_b), steps);
            double max_step = 0.0;
            for (Eigen::Index s = 1; s < path.rows(); ++s)
                max_step = std::max(max_step, (path.row(s) - path.row(s - 1)).norm());
            if (!out_path.empty()) save_frames(FrameSet{path, true, model.norm_stats}, out_path);
            detail::emit(out,
                         {{"steps", steps},
                          {"frame_a", frame_a},
                          {"frame_b", frame_b},
                          {"endpoint_distance", (path.row(path.rows() - 1) - path.row(0)).norm()},
                          {"max_adjacent_distance", max_step},
                          {"path_file", out_path}},
                         "");
        } else {
            if (!bo.m_list.empty()) spec.m_list = bo.m_list;
            if (!bo.sigma_list.empty()) spec.sigma_list = bo.sigma_list;
            if (!bo.samples_list.empty()) spec.sample_counts = bo.samples_list;
            if (!bo.seeds.empty()) spec.seeds = bo.seeds;
            spec.methods.clear();
            for (const auto& name : bo.methods) spec.methods.push_back(bench::method_from_string(name));
            spec.lasso.lambda = spec.train.lambda_l1;

            bench::DataSplits data;
            if (!bo.data.empty()) {
                detail::require(!bo.test_data.empty(), "bench: --data needs --test-data");
                FrameSet train_set = load_frames(bo.data);
                std::optional<NormStats> fitted;
                if (!train_set.normalized) {
                    fitted = normalize_fit(train_set);
                    train_set = normalize_apply(train_set, *fitted);
                }
                data.train = std::move(train_set);
                data.test = detail::normalized(load_frames(bo.test_data), fitted ? fitted : data.train.stats);
                spec.n_features = data.train.n_features();
                spec.n_train = data.train.n_frames();
                spec.n_test = data.test.n_frames();
            } else {
                data = bench::make_splits(spec);
            }
            bench::Logger log;
            if (!bo.quiet) log = [&err](const std::string& line) { err << line << std::endl; };

            bench::ExperimentReport report;
            if (bench_m->parsed()) {
                report = bench::run_mse_vs_m(spec, data, log);
            } else if (bench_noise->parsed()) {
                report = bench::run_mse_vs_noise(spec, data, log);
            } else if (bench_latency->parsed()) {
                const std::uint64_t run_seed = spec.seeds.front();
                const auto inputs = bench::pretrain_for_latency(spec, data, run_seed, log);
                report = bench::run_latency(spec, inputs, run_seed);
            }
            bench::write_report(report, bo.out, bo.csv);
            out << "wrote " << report.rows.size() << " rows to " << bo.out << (bo.csv.empty() ? "" : " and " + bo.csv)
                << "\n";
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kData;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kData;
    }
    return kOk;
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace csvae::cli
