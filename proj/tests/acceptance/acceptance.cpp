// One PASS/FAIL line per acceptance criterion; exit status is the failure count.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/QR>
#include <unistd.h>

#include "csvae/bench.hpp"
#include "csvae/checkpoint.hpp"
#include "csvae/cli.hpp"

using namespace csvae;
using bench::Method;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
    if (!pass) ++failures;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << detail << std::endl;
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = g(gen);
    return out;
}

bench::Logger progress() {
    return [](const std::string& line) { std::cerr << "  " << line << std::endl; };
}

void gradient_check() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 gen(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index m = 12 + 6 * (trial % 4), n = 30 + 12 * (trial % 3);
        const VaeModel model = make_vae(m, n, 100 + static_cast<std::uint64_t>(trial));
        const Eigen::MatrixXd A = gaussian(m, n, gen, 1.0 / std::sqrt(static_cast<double>(m)));
        const Eigen::MatrixXd y = gaussian(m, 3, gen, 0.5);
        const Eigen::MatrixXd eps = gaussian(model.latent_dim, 3, gen);
        TrainConfig cfg;
        cfg.lambda_l1 = trial % 2 ? 1e-5 : 0.05;
        cfg.kl_weight = trial % 2 ? 1e-5 : 0.1;
        worst = std::max(worst, loss_grad_check(model, A, y, eps, cfg, 1e-4).max_relative_error);
    }
    const double secs = seconds_since(t0);
    report(1, worst <= 1e-4 && secs < 60.0,
           "max relative gradient error " + fmt(worst) + " over 10 instances in " + fmt(secs) + " s");
}

void lasso_oracles() {
    std::mt19937_64 gen(7);
    const Eigen::Index n = 40;
    const Eigen::VectorXd y = gaussian(n, 1, gen);
    LassoConfig cfg{0.2, 100000, 1e-30};
    const auto sol = fista_solve(Eigen::MatrixXd::Identity(n, n), y, cfg);
    // argmin ||x - y||^2 + 0.2 ||x||_1 is soft thresholding at 0.1
    Eigen::VectorXd expect(n);
    for (Eigen::Index i = 0; i < n; ++i)
        expect[i] = std::copysign(std::max(std::abs(y[i]) - 0.1, 0.0), y[i]);
    const double e1 = (sol.x_hat - expect).cwiseAbs().maxCoeff();

    const Eigen::MatrixXd A = gaussian(60, 25, gen, 1.0 / std::sqrt(60.0));
    const Eigen::VectorXd b = gaussian(60, 1, gen);
    const Eigen::VectorXd ls = A.colPivHouseholderQr().solve(b);
    const auto sol0 = fista_solve(A, b, LassoConfig{0.0, 100000, 1e-30});
    const double e2 = (sol0.x_hat - ls).cwiseAbs().maxCoeff();
    report(2, e1 <= 1e-6 && e2 <= 1e-6,
           "soft-threshold error " + fmt(e1) + ", least-squares error " + fmt(e2));
}

void power_bound() {
    const FrameSet frames = gen_synthetic(10000, 204, 10, 2);
    const auto A = build_proposition_matrix(168, 204, 0.1, 2.0, source_stats(frames), 11);
    const double fraction = power_check(A, frames, 0.1);
    report(3, fraction >= 0.75, "fraction within P_T over 10^4 frames " + fmt(fraction) + " (floor 0.75)");
}

void awgn_moments() {
    const RowMatrix noise = awgn_all(RowMatrix::Zero(1000, 1000), ChannelConfig{0.05, 5});
    const double count = static_cast<double>(noise.size());
    const double mean = noise.mean();
    const double var = (noise.array() - mean).square().sum() / (count - 1.0);
    const double se = std::sqrt(var / count);
    report(4, std::abs(mean) <= 3.0 * se && std::abs(var - 2.5e-3) <= 0.01 * 2.5e-3,
           "mean " + fmt(mean) + " (3 SE = " + fmt(3.0 * se) + "), variance " + fmt(var));
}

void mse_vs_m(const bench::DataSplits& data) {
    bench::ExperimentSpec spec;
    spec.methods = {Method::CsVae, Method::Lasso, Method::LassoNoPt};
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = bench::run_mse_vs_m(spec, data, progress());
    const double secs = seconds_since(t0);
    const double lo = bench::seed_mean(rep, Method::CsVae, 48, spec.fixed_sigma).mean;
    const double hi = bench::seed_mean(rep, Method::CsVae, 192, spec.fixed_sigma).mean;
    bool ratios_ok = true;
    std::string ratios;
    for (Eigen::Index m : spec.m_list) {
        const double r = bench::seed_mean(rep, Method::Lasso, m, spec.fixed_sigma).mean /
                         bench::seed_mean(rep, Method::LassoNoPt, m, spec.fixed_sigma).mean;
        ratios_ok = ratios_ok && r >= 2.0;
        ratios += " m" + std::to_string(m) + "=" + fmt(r);
    }
    report(5, hi < lo && ratios_ok,
           "CsVae MSE m=192 " + fmt(hi) + " vs m=48 " + fmt(lo) + "; Lasso/LassoNoPt ratio" + ratios + " (need >= 2); " +
               fmt(secs) + " s");
}

void mse_vs_noise(const bench::DataSplits& data) {
    bench::ExperimentSpec spec;
    const auto rep = bench::run_mse_vs_noise(spec, data, progress());
    const double quiet = bench::seed_mean(rep, Method::CsVae, spec.fixed_m, 1e-4).mean;
    const double loud = bench::seed_mean(rep, Method::CsVae, spec.fixed_m, 500e-4).mean;
    bool lasso_min = true;
    std::string detail;
    for (double s : spec.sigma_list) {
        const double base = bench::seed_mean(rep, Method::LassoNoPt, spec.fixed_m, s).mean;
        detail += " sigma=" + fmt(s) + ":";
        for (Method meth : spec.methods) {
            const double v = bench::seed_mean(rep, meth, spec.fixed_m, s).mean;
            detail += std::string(" ") + bench::to_string(meth) + "=" + fmt(v);
            if (meth != Method::LassoNoPt && v < base) lasso_min = false;
        }
    }
    report(6, loud > quiet && lasso_min,
           "CsVae MSE sigma=5e-2 " + fmt(loud) + " vs 1e-4 " + fmt(quiet) + "; per-sigma means" + detail);
}

struct Trained {
    VaeModel model;
    MeasurementMatrix matrix;
};

Trained latency(const bench::DataSplits& data) {
    bench::ExperimentSpec spec;
    spec.methods = {Method::CsVae, Method::LassoNoPt};
    spec.sample_counts = {10080};
    spec.lasso.tol = 1e-6;
    const auto inputs = bench::pretrain_for_latency(spec, data, 1, progress());
    const auto rep = bench::run_latency(spec, inputs, 1);
    double vae = 0.0, lasso = 0.0;
    for (const auto& r : rep.rows) (r.method == Method::CsVae ? vae : lasso) = r.decode_seconds;
    report(7, vae * 10.0 <= lasso,
           "decode time for 10080 samples: CsVae " + fmt(vae) + " s, LassoNoPt " + fmt(lasso) + " s, speedup " +
               fmt(lasso / vae) + "x (need >= 10x)");
    return {inputs.cs_vae->model, inputs.cs_vae->matrix};
}

void s_rec(const Trained& t) {
    const auto pairs = sample_generator_pairs(t.model, 1000, 3);
    const auto r = fit_s_rec_kappa(t.matrix, pairs.first, pairs.second, default_s_rec_gamma(t.matrix), 0.99);
    report(8, r.gamma > 0.0 && r.satisfied_fraction >= 0.99 && r.pair_count == 1000,
           "gamma " + fmt(r.gamma) + ", kappa " + fmt(r.kappa) + ", satisfied fraction " + fmt(r.satisfied_fraction));
}

void interpolation(const Trained& t, const bench::DataSplits& data) {
    const ChannelConfig ch{1e-3, 9};
    const Eigen::VectorXd y1 = awgn(measure(t.matrix, data.test.frames.row(0).transpose()), ch, 0);
    const Eigen::VectorXd y2 = awgn(measure(t.matrix, data.test.frames.row(1).transpose()), ch, 1);
    const RowMatrix path = interpolate(t.model, y1, y2, 8);
    const Eigen::VectorXd a = path.row(0).transpose(), b = path.row(7).transpose();
    const bool ends = a == recover(t.model, t.matrix, y1) && b == recover(t.model, t.matrix, y2);
    double step = 0.0;
    for (Eigen::Index s = 1; s < path.rows(); ++s) step = std::max(step, (path.row(s) - path.row(s - 1)).norm());
    const double span = (b - a).norm();
    report(9, ends && step <= span,
           std::string("endpoints bitwise ") + (ends ? "equal" : "differ") + ", max adjacent " + fmt(step) +
               ", endpoint distance " + fmt(span));
}

void determinism() {
    const auto dir = std::filesystem::temp_directory_path() / ("csvae_accept_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    const auto f = [&](const std::string& name) { return (dir / name).string(); };
    std::ostringstream sink;
    const auto run = [&](std::vector<std::string> args) { return cli::run(args, sink, sink); };
    const auto slurp = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    const auto masked = [&](const std::string& path) { return bench::mask_timing(nlohmann::json::parse(slurp(path))); };

    bool ok = run({"gen", "--frames", "2000", "--seed", "4", "--out", f("d.csf")}) == 0;
    for (const char* tag : {"1", "2"}) {
        ok = ok && run({"train", "--data", f("d.csf"), "--m", "96", "--epochs", "3", "--sigma-n", "0.001", "--seed", "5",
                        "--out", f(std::string("model") + tag + ".json")}) == 0;
        ok = ok && run({"eval", "--model", f("model1.json"), "--data", f("d.csf"), "--seed", "6", "--recon-out",
                        f(std::string("rec") + tag + ".csf"), "--out", f(std::string("eval") + tag + ".json")}) == 0;
        ok = ok && run({"bench-noise", "--method", "CsVae,Lasso,LassoNoPt,Dip", "--m", "96", "--sigma-list",
                        "0.001,0.01", "--seeds", "1,2", "--train-frames", "400", "--test-frames", "100", "--epochs",
                        "2", "--lasso-frames", "20", "--quiet", "--out", f(std::string("bench") + tag + ".json"),
                        "--csv", f(std::string("bench") + tag + ".csv")}) == 0;
    }
    const bool same_model = slurp(f("model1.json")) == slurp(f("model2.json"));
    const bool same_eval = masked(f("eval1.json")) == masked(f("eval2.json")) &&
                           slurp(f("rec1.csf")) == slurp(f("rec2.csf"));
    const bool same_bench = masked(f("bench1.json")) == masked(f("bench2.json"));
    std::filesystem::remove_all(dir);
    report(10, ok && same_model && same_eval && same_bench,
           std::string("commands ") + (ok ? "succeeded" : "failed") + "; checkpoint " +
               (same_model ? "identical" : "differs") + ", eval " + (same_eval ? "identical" : "differs") +
               ", bench report " + (same_bench ? "identical" : "differs"));
}

}  // namespace

int main() {
    try {
        gradient_check();
        lasso_oracles();
        power_bound();
        awgn_moments();
        const bench::DataSplits data = bench::make_splits(bench::ExperimentSpec{});
        mse_vs_m(data);
        mse_vs_noise(data);
        const Trained t = latency(data);
        s_rec(t);
        interpolation(t, data);
        determinism();
    } catch (const std::exception& e) {
        std::cout << "FAIL aborted: " << e.what() << std::endl;
        return 100;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures;
}
