#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "csvae/channel.hpp"
#include "csvae/data_model.hpp"
#include "csvae/error.hpp"
#include "csvae/nn.hpp"
#include "csvae/rng.hpp"
#include "csvae/sensing.hpp"

namespace csvae {

struct TrainConfig {
    int epochs = 50;
    int batch_size = 60;
    double lr = 1e-4;
    double lambda_l1 = 1e-5;
    double kl_weight = 1e-5;
    std::uint64_t seed = 0;
};

/// How the transmitter forms y from x. The DIP-style baseline rescales each
/// measurement vector to exactly P_T. The receiver never sees that gain: the
/// training loss is the same ||A G(z) - y_hat||^2 in both modes.
struct MeasurementMode {
    bool power_normalize = false;
    double power_budget = 0.1;
};

/// Encoder m -> hidden -> (mu | log_var) and generator latent -> hidden -> hidden -> n.
/// The two encoder heads share one 2*latent output layer, split in half.
struct VaeModel {
    nn::Mlp encoder;
    nn::Mlp decoder;
    Eigen::Index latent_dim = 10;
    std::string matrix_digest;

    // provenance, carried into checkpoints
    double sigma_n = 0.0;
    MeasurementMode mode;
    TrainConfig train_config;
    std::optional<NormStats> norm_stats;

    Eigen::Index m() const { return encoder.in_dim(); }
    Eigen::Index n() const { return decoder.out_dim(); }
};

inline VaeModel make_vae(Eigen::Index m, Eigen::Index n, std::uint64_t seed, Eigen::Index latent_dim = 10,
                         Eigen::Index hidden = 64) {
    using nn::Activation;
    VaeModel model;
    model.latent_dim = latent_dim;
    model.encoder = nn::make_mlp({m, hidden, 2 * latent_dim}, {Activation::ReLU, Activation::Identity}, seed);
    model.decoder = nn::make_mlp({latent_dim, hidden, hidden, n},
                                 {Activation::ReLU, Activation::ReLU, Activation::Tanh}, seed ^ 0xdec0de);
    return model;
}

struct Posterior {
    Eigen::MatrixXd mu;       // latent x batch
    Eigen::MatrixXd log_var;  // latent x batch
};

/// Columns of `y_hat` are noisy measurement vectors.
inline Posterior encode(const VaeModel& model, const Eigen::MatrixXd& y_hat) {
    detail::require(y_hat.rows() == model.m(), "encode: measurement dimension " + std::to_string(y_hat.rows()) +
                                                   " does not match model m = " + std::to_string(model.m()));
    const Eigen::MatrixXd heads = nn::predict(model.encoder, y_hat);
    return Posterior{heads.topRows(model.latent_dim), heads.bottomRows(model.latent_dim)};
}

/// z = mu + exp(log_var / 2) * epsilon, elementwise.
inline Eigen::MatrixXd reparameterize(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& log_var,
                                      const Eigen::MatrixXd& epsilon) {
    detail::require(mu.rows() == log_var.rows() && mu.cols() == log_var.cols() && mu.rows() == epsilon.rows() &&
                        mu.cols() == epsilon.cols(),
                    "reparameterize: shape mismatch");
    if (!mu.allFinite() || !log_var.allFinite() || !epsilon.allFinite())
        throw NumericalError("reparameterize: non-finite input");
    return mu + (0.5 * log_var.array()).exp().matrix().cwiseProduct(epsilon);
}

/// Generator output, bounded to [-1, 1] by the Tanh output layer.
inline Eigen::MatrixXd decode(const VaeModel& model, const Eigen::MatrixXd& z) {
    detail::require(z.rows() == model.latent_dim, "decode: latent dimension mismatch");
    return nn::predict(model.decoder, z);
}

struct LossTerms {
    double total = 0.0;
    double recon = 0.0;
    double l1 = 0.0;
    double kl = 0.0;
};

/// ||A x_hat - y_hat||^2 + lambda ||x_hat||_1 + beta KL(N(mu, exp(log_var)) || N(0, I)) for one frame.
inline LossTerms loss(const Eigen::MatrixXd& A, const Eigen::VectorXd& y_hat, const Eigen::VectorXd& x_hat,
                      const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var, const TrainConfig& cfg) {
    detail::require(A.rows() == y_hat.size() && A.cols() == x_hat.size(), "loss: dimension mismatch with A");
    detail::require(mu.size() == log_var.size(), "loss: latent shape mismatch");
    LossTerms t;
    t.recon = (A * x_hat - y_hat).squaredNorm();
    t.l1 = cfg.lambda_l1 * x_hat.lpNorm<1>();
    t.kl = cfg.kl_weight * 0.5 *
           (mu.array().square() + log_var.array().exp() - log_var.array() - 1.0).sum();
    t.total = t.recon + t.l1 + t.kl;
    return t;
}

struct StepResult {
    LossTerms mean;  // batch means
    nn::Gradients encoder;
    nn::Gradients decoder;
};

/// Mean loss over the batch columns and its gradients w.r.t. every parameter.
/// `epsilon` holds the standard-normal draws used for reparameterization.
inline StepResult loss_and_gradients(const VaeModel& model, const Eigen::MatrixXd& A, const Eigen::MatrixXd& y_hat,
                                     const Eigen::MatrixXd& epsilon, const TrainConfig& cfg) {
    const Eigen::Index batch = y_hat.cols();
    detail::require(batch > 0, "loss: empty batch");
    detail::require(A.rows() == model.m() && A.cols() == model.n(), "loss: matrix shape does not match the model");
    detail::require(epsilon.rows() == model.latent_dim && epsilon.cols() == batch, "loss: epsilon shape mismatch");
    const double inv_batch = 1.0 / static_cast<double>(batch);
    const Eigen::Index k = model.latent_dim;

    auto enc = nn::forward(model.encoder, y_hat);
    const Eigen::MatrixXd mu = enc.output.topRows(k);
    const Eigen::MatrixXd log_var = enc.output.bottomRows(k);
    const Eigen::MatrixXd sigma = (0.5 * log_var.array()).exp().matrix();
    const Eigen::MatrixXd z = mu + sigma.cwiseProduct(epsilon);
    auto dec = nn::forward(model.decoder, z);
    const Eigen::MatrixXd& x_hat = dec.output;

    const Eigen::MatrixXd residual = A * x_hat - y_hat;
    StepResult out;
    out.mean.recon = residual.colwise().squaredNorm().sum() * inv_batch;
    out.mean.l1 = cfg.lambda_l1 * x_hat.cwiseAbs().sum() * inv_batch;
    const Eigen::ArrayXXd var = log_var.array().exp();
    out.mean.kl = cfg.kl_weight * 0.5 * (mu.array().square() + var - log_var.array() - 1.0).sum() * inv_batch;
    out.mean.total = out.mean.recon + out.mean.l1 + out.mean.kl;
    if (!std::isfinite(out.mean.total)) throw NumericalError("training loss became non-finite");

    const Eigen::MatrixXd d_xhat =
        inv_batch * (2.0 * (A.transpose() * residual) +
                     cfg.lambda_l1 * x_hat.array().sign().matrix());
    out.decoder = nn::backward(model.decoder, dec.cache, d_xhat);
    const Eigen::MatrixXd& d_z = out.decoder.input;

    Eigen::MatrixXd d_heads(2 * k, batch);
    d_heads.topRows(k) = d_z + (cfg.kl_weight * inv_batch) * mu;
    d_heads.bottomRows(k) = (d_z.array() * epsilon.array() * 0.5 * sigma.array()).matrix() +
                            (cfg.kl_weight * inv_batch * 0.5) * (var - 1.0).matrix();
    out.encoder = nn::backward(model.encoder, enc.cache, d_heads);
    return out;
}

/// Flat (encoder, decoder) parameter vector.
inline Eigen::VectorXd flatten(const VaeModel& model) {
    const Eigen::VectorXd e = nn::flatten(model.encoder);
    const Eigen::VectorXd d = nn::flatten(model.decoder);
    Eigen::VectorXd flat(e.size() + d.size());
    flat << e, d;
    return flat;
}

inline void unflatten(VaeModel& model, const Eigen::VectorXd& flat) {
    const Eigen::Index ne = model.encoder.parameter_count();
    detail::require(flat.size() == ne + model.decoder.parameter_count(), "unflatten: parameter count mismatch");
    nn::unflatten(model.encoder, flat.head(ne));
    nn::unflatten(model.decoder, flat.tail(flat.size() - ne));
}

/// Backprop gradient of the full training loss against central differences.
inline nn::GradCheckResult loss_grad_check(const VaeModel& model, const Eigen::MatrixXd& A,
                                           const Eigen::MatrixXd& y_hat, const Eigen::MatrixXd& epsilon,
                                           const TrainConfig& cfg, double tolerance,
                                           double h = 1e-5) {
    const StepResult step = loss_and_gradients(model, A, y_hat, epsilon, cfg);
    Eigen::VectorXd analytic(flatten(model).size());
    analytic << nn::flatten(step.encoder), nn::flatten(step.decoder);
    auto eval = [&](const Eigen::VectorXd& params) {
        VaeModel probe = model;
        unflatten(probe, params);
        return loss_and_gradients(probe, A, y_hat, epsilon, cfg).mean.total;
    };
    return nn::compare_gradients(analytic, nn::finite_difference(eval, flatten(model), h), tolerance);
}

struct TrainHistory {
    std::vector<LossTerms> epochs;  // per-epoch means over frames
    double wall_seconds = 0.0;
};

struct TrainResult {
    VaeModel model;
    TrainHistory history;
};

/// Trains a fresh model on noisy compressed measurements of `data`.
/// Each step: pick a batch of frames, form y = A x (power-normalized in DIP mode),
/// add channel noise, encode, reparameterize, decode, take an Adam step on the
/// mean batch loss. Frames are reshuffled every epoch; the last partial batch is kept.
/// Channel noise and epsilon draws are keyed by (seed, epoch, frame).
inline TrainResult train(const FrameSet& data, const MeasurementMatrix& A, const ChannelConfig& channel,
                         const TrainConfig& cfg, const MeasurementMode& mode = {}) {
    detail::require(data.n_frames() > 0, "train: empty training set");
    detail::require(data.normalized, "train: training frames must be normalized");
    detail::require(data.n_features() == A.n(), "train: frame dimension " + std::to_string(data.n_features()) +
                                                    " does not match matrix n = " + std::to_string(A.n()));
    detail::require(cfg.epochs >= 0 && cfg.batch_size >= 1 && cfg.lr > 0.0 && cfg.lambda_l1 >= 0.0 &&
                        cfg.kl_weight >= 0.0,
                    "train: invalid training configuration");
    detail::require(channel.sigma_n >= 0.0, "train: sigma_n must be non-negative");
    if (mode.power_normalize) detail::require(mode.power_budget > 0.0, "train: P_T must be positive");

    const auto start = std::chrono::steady_clock::now();
    TrainResult result;
    VaeModel& model = result.model;
    model = make_vae(A.m(), A.n(), cfg.seed);
    model.matrix_digest = A.digest();
    model.sigma_n = channel.sigma_n;
    model.mode = mode;
    model.train_config = cfg;
    model.norm_stats = data.stats;

    const Eigen::Index frames = data.n_frames();
    const RowMatrix clean = measure_all(A, data, mode.power_normalize, mode.power_budget);
    const Eigen::Index m = A.m();
    const Eigen::Index k = model.latent_dim;

    nn::AdamState enc_opt = nn::make_adam(model.encoder, cfg.lr);
    nn::AdamState dec_opt = nn::make_adam(model.decoder, cfg.lr);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(frames));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        auto shuffle_engine = rng::stream(cfg.seed, rng::Purpose::Shuffle, static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle_engine);

        LossTerms sum;
        for (Eigen::Index begin = 0; begin < frames; begin += cfg.batch_size) {
            const Eigen::Index batch = std::min<Eigen::Index>(cfg.batch_size, frames - begin);
            Eigen::MatrixXd y_hat(m, batch);
            Eigen::MatrixXd epsilon(k, batch);
            std::normal_distribution<double> normal(0.0, 1.0);
            for (Eigen::Index c = 0; c < batch; ++c) {
                const Eigen::Index frame = order[static_cast<std::size_t>(begin + c)];
                const auto key = static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(frames) +
                                 static_cast<std::uint64_t>(frame);
                y_hat.col(c) = awgn(clean.row(frame).transpose(), channel, key, rng::Purpose::TrainChannel);
                auto eps_engine = rng::stream(cfg.seed, rng::Purpose::Epsilon, key);
                normal.reset();
                for (Eigen::Index j = 0; j < k; ++j) epsilon(j, c) = normal(eps_engine);
            }
            const StepResult step = loss_and_gradients(model, A.entries, y_hat, epsilon, cfg);
            nn::adam_step(model.encoder, step.encoder, enc_opt);
            nn::adam_step(model.decoder, step.decoder, dec_opt);

            const double w = static_cast<double>(batch);
            sum.total += step.mean.total * w;
            sum.recon += step.mean.recon * w;
            sum.l1 += step.mean.l1 * w;
            sum.kl += step.mean.kl * w;
        }
        const double inv = 1.0 / static_cast<double>(frames);
        result.history.epochs.push_back(LossTerms{sum.total * inv, sum.recon * inv, sum.l1 * inv, sum.kl * inv});
    }
    result.history.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

namespace detail {

inline void require_matching_matrix(const VaeModel& model, const MeasurementMatrix& A) {
    if (A.digest() != model.matrix_digest)
        throw DataError("model was trained against matrix " + model.matrix_digest + " but deployment matrix is " +
                        A.digest());
}

}  // namespace detail

/// Posterior-mean reconstruction G(mu(y_hat)) for each row of `y_hat`.
inline RowMatrix recover(const VaeModel& model, const MeasurementMatrix& A, const RowMatrix& y_hat) {
    detail::require_matching_matrix(model, A);
    const Eigen::MatrixXd columns = y_hat.transpose();
    return decode(model, encode(model, columns).mu).transpose();
}

inline Eigen::VectorXd recover(const VaeModel& model, const MeasurementMatrix& A, const Eigen::VectorXd& y_hat) {
    detail::require_matching_matrix(model, A);
    return decode(model, encode(model, y_hat).mu);
}

/// Frames decoded along the straight latent path between the posterior means
/// of two measurements, rho = 0, 1/(steps-1), ..., 1. Each latent is decoded on
/// its own so the endpoints match single-frame recovery bit for bit.
inline RowMatrix interpolate(const VaeModel& model, const Eigen::VectorXd& y_hat_1, const Eigen::VectorXd& y_hat_2,
                             int steps) {
    detail::require(steps >= 2, "interpolate: steps must be at least 2");
    detail::require(y_hat_1.size() == model.m() && y_hat_2.size() == model.m(), "interpolate: dimension mismatch");
    const Eigen::VectorXd z1 = encode(model, y_hat_1).mu;
    const Eigen::VectorXd z2 = encode(model, y_hat_2).mu;
    RowMatrix path(steps, model.n());
    for (int s = 0; s < steps; ++s) {
        const double rho = static_cast<double>(s) / static_cast<double>(steps - 1);
        const Eigen::VectorXd z = rho * z2 + (1.0 - rho) * z1;
        path.row(s) = decode(model, z).transpose();
    }
    return path;
}

/// Decoder outputs for `count` independent latent pairs z1, z2 ~ N(0, I).
struct GeneratorPairs {
    RowMatrix first;
    RowMatrix second;
};

inline GeneratorPairs sample_generator_pairs(const VaeModel& model, Eigen::Index count, std::uint64_t seed) {
    detail::require(count > 0, "sample_generator_pairs: count must be positive");
    auto engine = rng::stream(seed, rng::Purpose::Pairs);
    Eigen::MatrixXd z1(model.latent_dim, count), z2(model.latent_dim, count);
    rng::fill_normal(z1, engine);
    rng::fill_normal(z2, engine);
    return {decode(model, z1).transpose(), decode(model, z2).transpose()};
}

/// Per-frame ||G(z*) - x*|| next to the channel noise norm ||eta||, for logging
/// against the reconstruction-error bound.
struct RecoveryDiagnostic {
    double error_norm = 0.0;
    double noise_norm = 0.0;
};

inline std::vector<RecoveryDiagnostic> recovery_diagnostics(const RowMatrix& x_hat, const RowMatrix& x_star,
                                                            const RowMatrix& noise) {
    detail::require(x_hat.rows() == x_star.rows() && x_hat.cols() == x_star.cols() && noise.rows() == x_hat.rows(),
                    "recovery_diagnostics: shape mismatch");
    std::vector<RecoveryDiagnostic> out;
    out.reserve(static_cast<std::size_t>(x_hat.rows()));
    for (Eigen::Index i = 0; i < x_hat.rows(); ++i)
        out.push_back(RecoveryDiagnostic{(x_hat.row(i) - x_star.row(i)).norm(), noise.row(i).norm()});
    return out;
}

}  // namespace csvae
