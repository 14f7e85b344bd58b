#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "csvae/data_model.hpp"
#include "csvae/error.hpp"
#include "csvae/rng.hpp"
#include "csvae/sensing.hpp"

namespace csvae {

struct LassoConfig {
    double lambda = 1e-5;
    int max_iter = 2000;
    double tol = 1e-6;  // relative objective change
};

struct LassoSolution {
    Eigen::VectorXd x_hat;
    int iterations = 0;
    double objective = 0.0;  // ||Ax - y||^2 + lambda ||x||_1
    bool converged = false;
};

struct LassoBatchSolution {
    RowMatrix x_hat;  // one recovered frame per row
    std::vector<int> iterations;
    std::vector<double> objective;
    std::vector<bool> converged;
};

namespace detail {

inline void validate(const LassoConfig& cfg) {
    require(cfg.lambda >= 0.0, "lasso: lambda must be non-negative");
    require(cfg.tol > 0.0, "lasso: tol must be positive");
    require(cfg.max_iter >= 1, "lasso: max_iter must be at least 1");
}

template <typename Derived>
auto soft_threshold_expr(const Eigen::MatrixBase<Derived>& v, double tau) {
    return (v.array().sign() * (v.array().abs() - tau).max(0.0)).matrix();
}

}  // namespace detail

/// Proximal operator of tau ||.||_1.
inline Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double tau) {
    detail::require(tau >= 0.0, "soft_threshold: tau must be non-negative");
    return detail::soft_threshold_expr(v, tau);
}

/// Lipschitz constant of the gradient 2A^T(Ax - y), i.e. 2 lambda_max(A^T A),
/// by power iteration until the Rayleigh quotient changes by less than `tol` (relative).
inline double lipschitz_estimate(const Eigen::MatrixXd& A, double tol = 1e-6, int max_iter = 100000) {
    detail::require(A.size() > 0 && A.cwiseAbs().maxCoeff() > 0.0, "lipschitz_estimate: zero matrix");
    auto engine = rng::stream(0x5eed, rng::Purpose::Power);
    Eigen::VectorXd v(A.cols());
    rng::fill_normal(v, engine);
    v.normalize();
    double estimate = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd u = A.transpose() * (A * v);
        const double next = v.dot(u);
        const double norm = u.norm();
        if (norm == 0.0) {
            // start vector fell in the null space; restart from a basis direction
            v = Eigen::VectorXd::Unit(A.cols(), it % A.cols());
            continue;
        }
        v = u / norm;
        if (it > 0 && std::abs(next - estimate) <= tol * std::abs(next)) {
            estimate = next;
            break;
        }
        estimate = next;
    }
    return 2.0 * estimate;
}

inline double lipschitz_estimate(const MeasurementMatrix& A) { return lipschitz_estimate(A.entries); }

inline double lasso_objective(const Eigen::MatrixXd& A, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                              double lambda) {
    return (A * x - y).squaredNorm() + lambda * x.lpNorm<1>();
}

/// Monotone FISTA on ||Ax - y||^2 + lambda ||x||_1 for every row of `Y`
/// independently. Each frame stops on its own once the relative objective
/// change drops below cfg.tol; frames keep the iterate with the lowest
/// objective seen, so the accepted objective sequence never increases.
inline LassoBatchSolution fista_solve_batch(const Eigen::MatrixXd& A, const RowMatrix& Y, const LassoConfig& cfg,
                                            std::optional<double> lipschitz = std::nullopt,
                                            const RowMatrix* x0 = nullptr) {
    detail::validate(cfg);
    detail::require(Y.cols() == A.rows(), "fista: measurement dimension " + std::to_string(Y.cols()) +
                                              " does not match matrix m = " + std::to_string(A.rows()));
    if (x0) detail::require(x0->rows() == Y.rows() && x0->cols() == A.cols(), "fista: initial iterate shape mismatch");
    if (!Y.allFinite()) throw NumericalError("fista: non-finite measurements");

    const Eigen::Index n = A.cols();
    const Eigen::Index frames = Y.rows();
    const double L = lipschitz ? *lipschitz : lipschitz_estimate(A);
    detail::require(L > 0.0, "fista: Lipschitz constant must be positive");
    const double step = 1.0 / L;
    const double tau = cfg.lambda / L;

    LassoBatchSolution out{RowMatrix::Zero(frames, n), std::vector<int>(frames, 0), std::vector<double>(frames, 0.0),
                           std::vector<bool>(frames, false)};

    constexpr Eigen::Index kChunk = 1024;
    for (Eigen::Index begin = 0; begin < frames; begin += kChunk) {
        const Eigen::Index width = std::min(kChunk, frames - begin);
        // Column-major working state, one column per still-active frame.
        Eigen::MatrixXd y = Y.middleRows(begin, width).transpose();
        Eigen::MatrixXd x = x0 ? Eigen::MatrixXd(x0->middleRows(begin, width).transpose())
                               : Eigen::MatrixXd::Zero(n, width);
        Eigen::MatrixXd ax = A * x;
        Eigen::MatrixXd x_prev = x, ax_prev = ax, w = x, aw = ax;
        Eigen::VectorXd f_x(width);
        for (Eigen::Index c = 0; c < width; ++c)
            f_x[c] = (ax.col(c) - y.col(c)).squaredNorm() + cfg.lambda * x.col(c).lpNorm<1>();
        std::vector<Eigen::Index> owner(width);
        for (Eigen::Index c = 0; c < width; ++c) owner[c] = begin + c;
        double t = 1.0;

        auto retire = [&](Eigen::Index c, int iterations, bool converged) {
            const Eigen::Index frame = owner[c];
            out.x_hat.row(frame) = x.col(c).transpose();
            out.iterations[frame] = iterations;
            out.objective[frame] = lasso_objective(A, x.col(c), y.col(c), cfg.lambda);
            out.converged[frame] = converged;
            const Eigen::Index last = x.cols() - 1;
            if (c != last) {
                for (Eigen::MatrixXd* mat : {&y, &x, &ax, &x_prev, &ax_prev, &w, &aw}) mat->col(c) = mat->col(last);
                f_x[c] = f_x[last];
                owner[c] = owner[last];
            }
            for (Eigen::MatrixXd* mat : {&y, &x, &ax, &x_prev, &ax_prev, &w, &aw})
                mat->conservativeResize(Eigen::NoChange, last);
            f_x.conservativeResize(last);
            owner.pop_back();
        };

        for (int it = 1; it <= cfg.max_iter && x.cols() > 0; ++it) {
            const Eigen::MatrixXd grad = 2.0 * (A.transpose() * (aw - y));
            const Eigen::MatrixXd z = detail::soft_threshold_expr(w - step * grad, tau);
            // Objective change from the step itself: comparing two full objectives
            // loses it in roundoff long before the iterate stops moving.
            const Eigen::MatrixXd ad = A * (z - x);
            if (!z.allFinite() || !ad.allFinite()) throw NumericalError("fista: non-finite iterate");
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            const double keep = t / t_next;
            const double momentum = (t - 1.0) / t_next;

            std::vector<char> done(static_cast<std::size_t>(x.cols()), 0);
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                const double f_old = f_x[c];
                const double delta = ad.col(c).dot(ad.col(c) + 2.0 * (ax.col(c) - y.col(c))) +
                                     cfg.lambda * (z.col(c).lpNorm<1>() - x.col(c).lpNorm<1>());
                done[c] = std::abs(delta) <= cfg.tol * f_old;
                const Eigen::VectorXd az = ax.col(c) + ad.col(c);
                x_prev.col(c) = x.col(c);
                ax_prev.col(c) = ax.col(c);
                if (delta <= 0.0) {
                    x.col(c) = z.col(c);
                    ax.col(c) = az;
                    f_x[c] = f_old + delta;
                }
                w.col(c) = x.col(c) + keep * (z.col(c) - x.col(c)) + momentum * (x.col(c) - x_prev.col(c));
                aw.col(c) = ax.col(c) + keep * (az - ax.col(c)) + momentum * (ax.col(c) - ax_prev.col(c));
            }
            t = t_next;
            for (Eigen::Index c = x.cols() - 1; c >= 0; --c)
                if (done[c] || it == cfg.max_iter) retire(c, it, done[c] != 0);
        }
    }
    return out;
}

inline LassoSolution fista_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& y, const LassoConfig& cfg,
                                 const std::optional<Eigen::VectorXd>& x0 = std::nullopt) {
    detail::require(y.size() == A.rows(), "fista: measurement dimension does not match matrix m");
    RowMatrix Y = y.transpose();
    std::optional<RowMatrix> start;
    if (x0) {
        detail::require(x0->size() == A.cols(), "fista: initial iterate dimension mismatch");
        start = RowMatrix(x0->transpose());
    }
    auto batch = fista_solve_batch(A, Y, cfg, std::nullopt, start ? &*start : nullptr);
    return LassoSolution{batch.x_hat.row(0).transpose(), batch.iterations[0], batch.objective[0], batch.converged[0]};
}

inline LassoSolution fista_solve(const MeasurementMatrix& A, const Eigen::VectorXd& y, const LassoConfig& cfg) {
    return fista_solve(A.entries, y, cfg);
}

}  // namespace csvae
