#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "csvae/channel.hpp"
#include "csvae/checkpoint.hpp"
#include "csvae/cs_vae.hpp"
#include "csvae/data_model.hpp"
#include "csvae/error.hpp"
#include "csvae/lasso.hpp"
#include "csvae/sensing.hpp"

namespace csvae::bench {

enum class Method { CsVae, Lasso, LassoNoPt, Dip };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::CsVae: return "CsVae";
        case Method::Lasso: return "Lasso";
        case Method::LassoNoPt: return "LassoNoPt";
        case Method::Dip: return "Dip";
    }
    return "?";
}

inline Method method_from_string(const std::string& name) {
    for (Method m : {Method::CsVae, Method::Lasso, Method::LassoNoPt, Method::Dip})
        if (name == to_string(m)) return m;
    throw DataError("unknown method '" + name + "' (expected CsVae, Lasso, LassoNoPt or Dip)");
}

inline constexpr Eigen::Index kFeatures = 204;
inline constexpr Eigen::Index kFeaturesPerSensor = 12;

struct ExperimentSpec {
    std::vector<Method> methods{Method::CsVae, Method::Lasso, Method::LassoNoPt, Method::Dip};
    std::vector<Eigen::Index> m_list{48, 72, 96, 120, 144, 168, 192};
    std::vector<double> sigma_list{1e-4, 10e-4, 100e-4, 500e-4};
    std::vector<Eigen::Index> sample_counts{10000, 30000, 50000, 70000};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    double power_budget = 0.1;
    double d = 2.0;

    double fixed_sigma = 10e-4;  // sigma_n held fixed while m varies
    Eigen::Index fixed_m = 168;  // m held fixed while sigma_n varies, and for latency

    // synthetic source
    Eigen::Index n_features = kFeatures;
    Eigen::Index n_train = 20000;
    Eigen::Index n_test = 5000;
    Eigen::Index sparsity = 10;
    std::uint64_t data_seed = 1;

    // Lasso methods are scored on the first lasso_eval_frames test frames (0 = all)
    Eigen::Index lasso_eval_frames = 1000;

    TrainConfig train;
    LassoConfig lasso;

    int repetitions = 5;
    Eigen::Index latency_batch = 60;
};

struct ReportRow {
    Method method = Method::CsVae;
    Eigen::Index m = 0;
    double sigma_n = 0.0;
    std::uint64_t seed = 0;
    double mse_mean = 0.0;
    double mse_std = 0.0;
    double decode_seconds = 0.0;
    double train_seconds = 0.0;
    Eigen::Index samples = 0;      // latency rows only
    Eigen::Index eval_frames = 0;  // test frames the MSE was computed on
};

struct Environment {
    std::string timestamp;
    std::string hardware;
};

struct ExperimentReport {
    std::string experiment;
    ExperimentSpec spec;
    std::vector<ReportRow> rows;
    Environment environment;
};

struct DataSplits {
    FrameSet train;
    FrameSet test;
};

using Logger = std::function<void(const std::string&)>;

// ---------------------------------------------------------------------------

struct MseSummary {
    double mean = 0.0;
    double std = 0.0;
};

/// Per-frame (1/n) sum_j (x_hat_j - x_j)^2, then mean and population std over frames.
inline MseSummary mse(const RowMatrix& x_hat, const RowMatrix& x_star) {
    detail::require(x_hat.rows() == x_star.rows() && x_hat.cols() == x_star.cols(),
                    "mse: shape mismatch " + std::to_string(x_hat.rows()) + "x" + std::to_string(x_hat.cols()) +
                        " vs " + std::to_string(x_star.rows()) + "x" + std::to_string(x_star.cols()));
    detail::require(x_hat.rows() > 0 && x_hat.cols() > 0, "mse: empty input");
    const Eigen::VectorXd per_frame = (x_hat - x_star).array().square().rowwise().mean();
    const double mean = per_frame.mean();
    const double var = (per_frame.array() - mean).square().mean();
    return {mean, std::sqrt(var)};
}

inline MseSummary mse(const FrameSet& x_hat, const FrameSet& x_star) { return mse(x_hat.frames, x_star.frames); }

inline DataSplits make_splits(const ExperimentSpec& spec) {
    detail::require(spec.n_train > 0 && spec.n_test > 0, "bench: train and test sizes must be positive");
    const FrameSet all = gen_synthetic(spec.n_train + spec.n_test, spec.n_features, spec.sparsity, spec.data_seed);
    return {all.slice(0, spec.n_train), all.slice(spec.n_train, spec.n_test)};
}

inline std::vector<std::uint32_t> dip_sensors(Eigen::Index m) {
    std::vector<std::uint32_t> sensors;
    const Eigen::Index count = (m + kFeaturesPerSensor - 1) / kFeaturesPerSensor;
    for (Eigen::Index s = 0; s < count; ++s) sensors.push_back(static_cast<std::uint32_t>(s));
    return sensors;
}

inline bool uses_network(Method m) { return m == Method::CsVae || m == Method::Dip; }

inline void validate(const ExperimentSpec& spec) {
    detail::require(!spec.methods.empty(), "bench: method list is empty");
    detail::require(!spec.m_list.empty(), "bench: m list is empty");
    detail::require(!spec.sigma_list.empty(), "bench: sigma list is empty");
    detail::require(!spec.sample_counts.empty(), "bench: sample count list is empty");
    detail::require(!spec.seeds.empty(), "bench: seed list is empty");
    detail::require(spec.power_budget > 0.0 && spec.d > 0.0, "bench: P_T and d must be positive");
    detail::require(spec.lasso_eval_frames >= 0, "bench: lasso_eval_frames must be non-negative");
    const bool dip = std::find(spec.methods.begin(), spec.methods.end(), Method::Dip) != spec.methods.end();
    for (Eigen::Index m : spec.m_list) {
        detail::require(m >= 1 && m < spec.n_features,
                        "bench: m = " + std::to_string(m) + " must lie in [1, " + std::to_string(spec.n_features) + ")");
        if (dip)
            detail::require(m % kFeaturesPerSensor == 0,
                            "bench: Dip needs m divisible by 12, got " + std::to_string(m));
    }
    for (double s : spec.sigma_list) detail::require(std::isfinite(s) && s >= 0.0, "bench: sigma_n must be >= 0");
    for (Eigen::Index s : spec.sample_counts) detail::require(s > 0, "bench: sample counts must be positive");
}

inline Environment current_environment() {
    Environment env;
    const std::time_t now = std::time(nullptr);
    std::tm utc{};
    gmtime_r(&now, &utc);
    std::ostringstream ts;
    ts << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ");
    env.timestamp = ts.str();

    std::string cpu = "unknown cpu";
    std::ifstream info("/proc/cpuinfo");
    for (std::string line; std::getline(info, line);) {
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) cpu = line.substr(line.find_first_not_of(' ', colon + 1));
            break;
        }
    }
    env.hardware = cpu + ", " + std::to_string(std::thread::hardware_concurrency()) + " hw threads";
    return env;
}

// ---------------------------------------------------------------------------

namespace detail {

using csvae::detail::require;

inline double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline MeasurementMatrix matrix_for(Method method, Eigen::Index m, const ExperimentSpec& spec, const SourceStats& stats,
                                    std::uint64_t seed) {
    switch (method) {
        case Method::CsVae:
        case Method::Lasso:
            return build_proposition_matrix(m, spec.n_features, spec.power_budget, spec.d, stats, seed);
        case Method::LassoNoPt: return build_unconstrained_matrix(m, spec.n_features, seed);
        case Method::Dip: return build_selection_matrix(dip_sensors(m), kFeaturesPerSensor, spec.n_features);
    }
    throw DataError("bench: unknown method");
}

inline MeasurementMode mode_for(Method method, const ExperimentSpec& spec) {
    return MeasurementMode{method == Method::Dip, spec.power_budget};
}

/// One (method, m, sigma, seed) configuration: build, train if needed, recover the test set, score.
inline ReportRow run_one(Method method, Eigen::Index m, double sigma, std::uint64_t seed, const ExperimentSpec& spec,
                         const DataSplits& data, const SourceStats& stats, const Logger& log) {
    const MeasurementMatrix A = matrix_for(method, m, spec, stats, seed);
    const MeasurementMode mode = mode_for(method, spec);
    const ChannelConfig channel{sigma, seed};
    ReportRow row{method, m, sigma, seed};

    const bool network = uses_network(method);
    Eigen::Index frames = data.test.n_frames();
    if (!network && spec.lasso_eval_frames > 0) frames = std::min(frames, spec.lasso_eval_frames);
    const FrameSet test = data.test.slice(0, frames);
    const RowMatrix y_hat = awgn_all(measure_all(A, test, mode.power_normalize, mode.power_budget), channel);

    RowMatrix x_hat;
    if (network) {
        TrainConfig cfg = spec.train;
        cfg.seed = seed;
        const TrainResult trained = train(data.train, A, channel, cfg, mode);
        row.train_seconds = trained.history.wall_seconds;
        const auto start = std::chrono::steady_clock::now();
        x_hat = recover(trained.model, A, y_hat);
        row.decode_seconds = seconds_since(start);
    } else {
        const auto start = std::chrono::steady_clock::now();
        x_hat = fista_solve_batch(A.entries, y_hat, spec.lasso).x_hat;
        row.decode_seconds = seconds_since(start);
    }
    const MseSummary score = mse(x_hat, test.frames);
    row.mse_mean = score.mean;
    row.mse_std = score.std;
    row.eval_frames = frames;
    if (log) {
        std::ostringstream msg;
        msg << to_string(method) << " m=" << m << " sigma_n=" << sigma << " seed=" << seed << " mse=" << score.mean;
        log(msg.str());
    }
    return row;
}

}  // namespace detail

inline ExperimentReport run_mse_vs_m(const ExperimentSpec& spec, const DataSplits& data, const Logger& log = {}) {
    validate(spec);
    detail::require(data.train.n_features() == spec.n_features && data.test.n_features() == spec.n_features,
                    "bench: data splits do not match n_features");
    ExperimentReport report{"mse_vs_m", spec, {}, current_environment()};
    const SourceStats stats = source_stats(data.train);
    for (Method method : spec.methods)
        for (Eigen::Index m : spec.m_list)
            for (std::uint64_t seed : spec.seeds)
                report.rows.push_back(detail::run_one(method, m, spec.fixed_sigma, seed, spec, data, stats, log));
    return report;
}

inline ExperimentReport run_mse_vs_noise(const ExperimentSpec& spec, const DataSplits& data, const Logger& log = {}) {
    ExperimentSpec fixed = spec;
    fixed.m_list = {spec.fixed_m};
    validate(fixed);
    detail::require(data.train.n_features() == spec.n_features && data.test.n_features() == spec.n_features,
                    "bench: data splits do not match n_features");
    ExperimentReport report{"mse_vs_noise", fixed, {}, current_environment()};
    const SourceStats stats = source_stats(data.train);
    for (Method method : spec.methods)
        for (double sigma : spec.sigma_list)
            for (std::uint64_t seed : spec.seeds)
                report.rows.push_back(detail::run_one(method, spec.fixed_m, sigma, seed, spec, data, stats, log));
    return report;
}

/// Mean over seeds of the per-seed test-set means for one configuration.
inline MseSummary seed_mean(const ExperimentReport& report, Method method, Eigen::Index m, double sigma_n) {
    std::vector<double> values;
    for (const auto& r : report.rows)
        if (r.method == method && r.m == m && r.sigma_n == sigma_n && r.samples == 0) values.push_back(r.mse_mean);
    detail::require(!values.empty(), std::string("seed_mean: no rows for ") + to_string(method) +
                                         " m=" + std::to_string(m));
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

// ---------------------------------------------------------------------------
// Latency

/// A pretrained decoder with the matrix it was trained against.
struct PretrainedModel {
    VaeModel model;
    MeasurementMatrix matrix;
    double train_seconds = 0.0;
};

struct LatencyInputs {
    std::optional<PretrainedModel> cs_vae;
    std::optional<PretrainedModel> dip;
    const FrameSet* test = nullptr;
    SourceStats stats;
};

/// Trains the networks a latency run needs at (spec.fixed_m, spec.fixed_sigma), one seed.
inline LatencyInputs pretrain_for_latency(const ExperimentSpec& spec, const DataSplits& data, std::uint64_t seed,
                                          const Logger& log = {}) {
    LatencyInputs in;
    in.test = &data.test;
    in.stats = source_stats(data.train);
    for (Method method : spec.methods) {
        if (!uses_network(method)) continue;
        const MeasurementMatrix A = detail::matrix_for(method, spec.fixed_m, spec, in.stats, seed);
        TrainConfig cfg = spec.train;
        cfg.seed = seed;
        TrainResult trained = train(data.train, A, ChannelConfig{spec.fixed_sigma, seed}, cfg,
                                    detail::mode_for(method, spec));
        if (log) log(std::string("trained ") + to_string(method) + " for latency in " +
                     std::to_string(trained.history.wall_seconds) + " s");
        PretrainedModel pm{std::move(trained.model), A, trained.history.wall_seconds};
        (method == Method::CsVae ? in.cs_vae : in.dip) = std::move(pm);
    }
    return in;
}

namespace detail {

/// Median of `reps` timings of `work`. Each timing must span at least 100 clock ticks.
template <typename Work>
double median_seconds(int reps, Work&& work) {
    using clock = std::chrono::steady_clock;
    std::vector<double> times;
    for (int r = 0; r < reps; ++r) {
        const auto start = clock::now();
        work();
        const auto ticks = (clock::now() - start).count();
        if (ticks < 100)
            throw NumericalError("latency: measurement spans " + std::to_string(ticks) +
                                 " clock ticks, below the 100-tick resolution floor");
        times.push_back(std::chrono::duration<double>(clock::duration(ticks)).count());
    }
    std::sort(times.begin(), times.end());
    const std::size_t mid = times.size() / 2;
    return times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
}

}  // namespace detail

/// Decode wall time per method and input-sample count. Samples = m x frames, with
/// frames = ceil(samples / m). Only the per-request recovery is timed; matrices,
/// models and the solver's Lipschitz constant are prepared beforehand.
inline ExperimentReport run_latency(const ExperimentSpec& spec, const LatencyInputs& in, std::uint64_t seed) {
    ExperimentSpec fixed = spec;
    fixed.m_list = {spec.fixed_m};
    validate(fixed);
    detail::require(spec.repetitions >= 5, "latency: need at least 5 repetitions, got " +
                                               std::to_string(spec.repetitions));
    detail::require(in.test != nullptr && in.test->n_frames() > 0, "latency: no test frames");
    const Eigen::Index m = spec.fixed_m;
    ExperimentReport report{"latency", fixed, {}, current_environment()};

    for (Method method : spec.methods) {
        const PretrainedModel* pm = nullptr;
        if (method == Method::CsVae) pm = in.cs_vae ? &*in.cs_vae : nullptr;
        if (method == Method::Dip) pm = in.dip ? &*in.dip : nullptr;
        if (uses_network(method)) {
            if (!pm) throw DataError(std::string("latency: missing pretrained model for ") + to_string(method));
            detail::require(pm->model.m() == m, "latency: pretrained model has m = " + std::to_string(pm->model.m()) +
                                                    ", expected " + std::to_string(m));
        }
        const MeasurementMatrix A = pm ? pm->matrix : detail::matrix_for(method, m, spec, in.stats, seed);
        const MeasurementMode mode = detail::mode_for(method, spec);
        const double lipschitz = uses_network(method) ? 0.0 : lipschitz_estimate(A.entries);

        for (Eigen::Index samples : spec.sample_counts) {
            const Eigen::Index frames = (samples + m - 1) / m;
            FrameSet batch{RowMatrix(frames, spec.n_features), true, std::nullopt};
            for (Eigen::Index i = 0; i < frames; ++i) batch.frames.row(i) = in.test->frames.row(i % in.test->n_frames());
            const RowMatrix y_hat =
                awgn_all(measure_all(A, batch, mode.power_normalize, mode.power_budget), ChannelConfig{spec.fixed_sigma, seed});

            RowMatrix x_hat;
            double secs = 0.0;
            if (pm) {
                secs = detail::median_seconds(spec.repetitions, [&] { x_hat = recover(pm->model, A, y_hat); });
            } else {
                secs = detail::median_seconds(spec.repetitions,
                                              [&] { x_hat = fista_solve_batch(A.entries, y_hat, spec.lasso, lipschitz).x_hat; });
            }
            const MseSummary score = mse(x_hat, batch.frames);
            ReportRow row{method, m, spec.fixed_sigma, seed, score.mean, score.std, secs,
                          pm ? pm->train_seconds : 0.0, m * frames, frames};
            report.rows.push_back(row);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report output

inline nlohmann::json spec_json(const ExperimentSpec& spec) {
    std::vector<std::string> methods;
    for (Method m : spec.methods) methods.emplace_back(to_string(m));
    return {{"methods", methods},
            {"m_list", spec.m_list},
            {"sigma_list", spec.sigma_list},
            {"sample_counts", spec.sample_counts},
            {"seeds", spec.seeds},
            {"power_budget", spec.power_budget},
            {"d", spec.d},
            {"fixed_sigma", spec.fixed_sigma},
            {"fixed_m", spec.fixed_m},
            {"n_features", spec.n_features},
            {"n_train", spec.n_train},
            {"n_test", spec.n_test},
            {"sparsity", spec.sparsity},
            {"data_seed", spec.data_seed},
            {"lasso_eval_frames", spec.lasso_eval_frames},
            {"train", train_config_json(spec.train)},
            {"lasso", {{"lambda", spec.lasso.lambda}, {"max_iter", spec.lasso.max_iter}, {"tol", spec.lasso.tol}}},
            {"repetitions", spec.repetitions},
            {"latency_batch", spec.latency_batch}};
}

inline nlohmann::json report_json(const ExperimentReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        nlohmann::json row{{"method", to_string(r.method)},
                           {"m", r.m},
                           {"sigma_n", r.sigma_n},
                           {"seed", r.seed},
                           {"mse_mean", r.mse_mean},
                           {"mse_std", r.mse_std},
                           {"eval_frames", r.eval_frames},
                           {"decode_seconds", r.decode_seconds},
                           {"train_seconds", r.train_seconds}};
        if (r.samples > 0) row["samples"] = r.samples;
        rows.push_back(std::move(row));
    }
    return {{"experiment", report.experiment},
            {"spec", spec_json(report.spec)},
            {"rows", rows},
            {"environment", {{"timestamp", report.environment.timestamp}, {"hardware", report.environment.hardware}}}};
}

/// Fields that depend on the clock or the machine rather than on (spec, seeds).
inline const std::vector<std::string>& timing_fields() {
    static const std::vector<std::string> fields{"decode_seconds", "train_seconds", "timestamp", "hardware"};
    return fields;
}

/// Copy of a report document with every timing field removed.
inline nlohmann::json mask_timing(nlohmann::json doc) {
    if (doc.is_object()) {
        for (const auto& f : timing_fields()) doc.erase(f);
        for (auto& [key, value] : doc.items()) value = mask_timing(value);
    } else if (doc.is_array()) {
        for (auto& value : doc) value = mask_timing(value);
    }
    return doc;
}

inline std::string report_csv(const ExperimentReport& report) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "method,m,sigma_n,seed,mse_mean,mse_std,decode_seconds,train_seconds,samples\n";
    for (const auto& r : report.rows)
        out << to_string(r.method) << ',' << r.m << ',' << r.sigma_n << ',' << r.seed << ',' << r.mse_mean << ','
            << r.mse_std << ',' << r.decode_seconds << ',' << r.train_seconds << ',' << r.samples << '\n';
    return out.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << text;
    if (!out) throw DataError("write failed: " + path);
}

inline void write_report(const ExperimentReport& report, const std::string& json_path, const std::string& csv_path) {
    if (!json_path.empty()) write_text(json_path, report_json(report).dump(2) + "\n");
    if (!csv_path.empty()) write_text(csv_path, report_csv(report));
}

}  // namespace csvae::bench
