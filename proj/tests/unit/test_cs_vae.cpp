#include <cmath>
#include <random>

#include <Eigen/SVD>
#include <gtest/gtest.h>

#include "csvae/cs_vae.hpp"

using namespace csvae;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, unsigned seed, double scale = 1.0) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> g(0.0, scale);
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = g(gen);
    return out;
}

VaeModel zero_model(Eigen::Index m, Eigen::Index n) {
    VaeModel model = make_vae(m, n, 1);
    model.encoder = nn::zeros_like(model.encoder);
    model.decoder = nn::zeros_like(model.decoder);
    return model;
}

double spectral_norm(const Eigen::MatrixXd& w) {
    return Eigen::JacobiSVD<Eigen::MatrixXd>(w).singularValues()(0);
}

// encoder: mu = y (10 -> 64 -> 20 with identity blocks); decoder output tanh(z)
VaeModel transparent_model() {
    VaeModel model = zero_model(10, 10);
    auto& e = model.encoder.layers;
    e[0].weight.topRows(10).setIdentity();
    e[0].weight.middleRows(10, 10) = -Eigen::MatrixXd::Identity(10, 10);
    e[1].weight.leftCols(10).setIdentity();
    e[1].weight.middleCols(10, 10).topRows(10) = -Eigen::MatrixXd::Identity(10, 10);
    auto& d = model.decoder.layers;
    d[0].weight.topRows(10).setIdentity();
    d[0].bias.head(10).setConstant(5.0);
    d[1].weight.topLeftCorner(10, 10).setIdentity();
    d[2].weight.leftCols(10).setIdentity();
    d[2].bias.setConstant(-5.0);
    return model;
}

}  // namespace

TEST(Encode, ZeroNetworkGivesStandardPosterior) {
    const auto p = encode(zero_model(12, 30), gaussian(12, 3, 1));
    EXPECT_EQ(p.mu, Eigen::MatrixXd::Zero(10, 3));
    EXPECT_EQ(p.log_var, Eigen::MatrixXd::Zero(10, 3));
}

TEST(Encode, DeterministicAndDimensionChecked) {
    const VaeModel model = make_vae(12, 30, 2);
    const Eigen::MatrixXd y = gaussian(12, 2, 3);
    EXPECT_EQ(encode(model, y).mu, encode(model, y).mu);
    EXPECT_THROW(encode(model, gaussian(11, 1, 1)), DataError);
}

TEST(Encode, PerturbationBoundedByLayerNormProduct) {
    const VaeModel model = make_vae(24, 60, 5);
    double bound = 1.0;
    for (const auto& l : model.encoder.layers) bound *= spectral_norm(l.weight);
    for (unsigned probe = 0; probe < 20; ++probe) {
        const Eigen::VectorXd y = gaussian(24, 1, 100 + probe);
        const Eigen::VectorXd delta = gaussian(24, 1, 200 + probe, 1e-3);
        const Eigen::VectorXd a = nn::predict(model.encoder, y), b = nn::predict(model.encoder, y + delta);
        EXPECT_LE((a - b).norm(), bound * delta.norm() * (1.0 + 1e-12));
    }
}

TEST(Reparameterize, ZeroNoiseAndUnitSigma) {
    const Eigen::MatrixXd mu = gaussian(10, 1, 1);
    EXPECT_EQ(reparameterize(mu, gaussian(10, 1, 2), Eigen::MatrixXd::Zero(10, 1)), mu);
    EXPECT_DOUBLE_EQ(reparameterize(Eigen::MatrixXd::Constant(1, 1, 0.5), Eigen::MatrixXd::Zero(1, 1),
                                    Eigen::MatrixXd::Constant(1, 1, 2.0))(0, 0),
                     2.5);
}

TEST(Reparameterize, MonteCarloMoments) {
    const Eigen::Index draws = 100000;
    const double mu = 1.5, log_var = std::log(0.25);
    const Eigen::MatrixXd z = reparameterize(Eigen::MatrixXd::Constant(1, draws, mu),
                                             Eigen::MatrixXd::Constant(1, draws, log_var), gaussian(1, draws, 7));
    const double mean = z.mean();
    const double var = (z.array() - mean).square().sum() / static_cast<double>(draws - 1);
    EXPECT_NEAR(mean, mu, 0.02 * mu);
    EXPECT_NEAR(var, 0.25, 0.02 * 0.25);
}

TEST(Reparameterize, RejectsBadShapesAndNonFinite) {
    EXPECT_THROW(reparameterize(Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Zero(3, 1), Eigen::MatrixXd::Zero(2, 1)),
                 DataError);
    EXPECT_THROW(reparameterize(Eigen::MatrixXd::Constant(1, 1, NAN), Eigen::MatrixXd::Zero(1, 1),
                                Eigen::MatrixXd::Zero(1, 1)),
                 NumericalError);
}

TEST(Decode, ZeroDecoderAndOutputBound) {
    EXPECT_EQ(decode(zero_model(12, 30), gaussian(10, 4, 1)), Eigen::MatrixXd::Zero(30, 4));
    const VaeModel model = make_vae(12, 30, 3);
    const Eigen::MatrixXd x = decode(model, gaussian(10, 50, 2, 100.0));
    EXPECT_LE(x.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_EQ(decode(model, gaussian(10, 1, 9)), decode(model, gaussian(10, 1, 9)));
    EXPECT_THROW(decode(model, gaussian(9, 1, 1)), DataError);
}

TEST(Loss, AllTermsVanish) {
    const auto t = loss(gaussian(5, 8, 1), Eigen::VectorXd::Zero(5), Eigen::VectorXd::Zero(8),
                        Eigen::VectorXd::Zero(10), Eigen::VectorXd::Zero(10), TrainConfig{});
    EXPECT_EQ(t.total, 0.0);
}

TEST(Loss, ClosedFormGaussianKl) {
    TrainConfig cfg;
    cfg.kl_weight = 1.0;
    const auto t = loss(gaussian(5, 8, 1), Eigen::VectorXd::Zero(5), Eigen::VectorXd::Zero(8),
                        Eigen::VectorXd::Unit(10, 0), Eigen::VectorXd::Zero(10), cfg);
    EXPECT_DOUBLE_EQ(t.kl, 0.5);
}

TEST(Loss, ComponentsNonNegativeAndSumExactly) {
    TrainConfig cfg;
    cfg.lambda_l1 = 0.3;
    cfg.kl_weight = 0.2;
    const auto t = loss(gaussian(5, 8, 1), gaussian(5, 1, 2), gaussian(8, 1, 3), gaussian(10, 1, 4),
                        gaussian(10, 1, 5), cfg);
    EXPECT_GE(t.recon, 0.0);
    EXPECT_GE(t.l1, 0.0);
    EXPECT_GE(t.kl, 0.0);
    EXPECT_EQ(t.total, t.recon + t.l1 + t.kl);
}

TEST(Loss, BatchMeanMatchesPerFrameLoss) {
    const VaeModel model = make_vae(12, 30, 4);
    const Eigen::MatrixXd A = gaussian(12, 30, 5, 0.2);
    const Eigen::MatrixXd y = gaussian(12, 4, 6, 0.3);
    const Eigen::MatrixXd eps = gaussian(10, 4, 7);
    TrainConfig cfg;
    cfg.lambda_l1 = 0.01;
    cfg.kl_weight = 0.1;
    const auto step = loss_and_gradients(model, A, y, eps, cfg);
    const auto post = encode(model, y);
    const Eigen::MatrixXd x = decode(model, reparameterize(post.mu, post.log_var, eps));
    double total = 0.0;
    for (Eigen::Index c = 0; c < 4; ++c)
        total += loss(A, y.col(c), x.col(c), post.mu.col(c), post.log_var.col(c), cfg).total;
    EXPECT_NEAR(step.mean.total, total / 4.0, 1e-12 * (1.0 + total));
}

TEST(Loss, GradientsMatchFiniteDifferences) {
    for (unsigned trial = 0; trial < 3; ++trial) {
        const VaeModel model = make_vae(16, 40, 30 + trial);
        const Eigen::MatrixXd A = gaussian(16, 40, 40 + trial, 0.2);
        const Eigen::MatrixXd y = gaussian(16, 3, 50 + trial, 0.5);
        const Eigen::MatrixXd eps = gaussian(10, 3, 60 + trial);
        TrainConfig cfg;
        cfg.lambda_l1 = 0.05;
        cfg.kl_weight = 0.1;
        const auto r = loss_grad_check(model, A, y, eps, cfg, 1e-4);
        EXPECT_TRUE(r.passed) << "trial " << trial << " error " << r.max_relative_error;
    }
}

namespace {

struct Fixture {
    FrameSet train_set = gen_synthetic(5000, 204, 10, 1);
    MeasurementMatrix A = build_proposition_matrix(168, 204, 0.1, 2.0, source_stats(train_set), 7);
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

}  // namespace

TEST(Train, LossHalvesOverFiftyEpochs) {
    const auto& f = fixture();
    TrainConfig cfg;
    cfg.seed = 3;
    const auto result = train(f.train_set, f.A, ChannelConfig{1e-3, 3}, cfg);
    ASSERT_EQ(result.history.epochs.size(), 50u);
    EXPECT_LE(result.history.epochs.back().total, 0.5 * result.history.epochs.front().total);
    EXPECT_GT(result.history.wall_seconds, 0.0);
}

TEST(Train, IdenticalSeedsBitIdentical) {
    const auto& f = fixture();
    const FrameSet small = f.train_set.slice(0, 300);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 5;
    const auto a = train(small, f.A, ChannelConfig{1e-2, 5}, cfg);
    const auto b = train(small, f.A, ChannelConfig{1e-2, 5}, cfg);
    EXPECT_EQ(flatten(a.model), flatten(b.model));
    cfg.seed = 6;
    EXPECT_NE(flatten(train(small, f.A, ChannelConfig{1e-2, 5}, cfg).model), flatten(a.model));
}

TEST(Train, ZeroEpochsReturnsInitialization) {
    const auto& f = fixture();
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 9;
    const auto r = train(f.train_set.slice(0, 10), f.A, ChannelConfig{}, cfg);
    EXPECT_TRUE(r.history.epochs.empty());
    EXPECT_EQ(flatten(r.model), flatten(make_vae(168, 204, 9)));
    EXPECT_EQ(r.model.matrix_digest, f.A.digest());
}

TEST(Train, RejectsEmptyRawAndMismatchedData) {
    const auto& f = fixture();
    EXPECT_THROW(train(f.train_set.slice(0, 0), f.A, ChannelConfig{}, TrainConfig{}), DataError);
    FrameSet raw = f.train_set.slice(0, 5);
    raw.normalized = false;
    EXPECT_THROW(train(raw, f.A, ChannelConfig{}, TrainConfig{}), DataError);
    const auto B = build_unconstrained_matrix(20, 100, 1);
    EXPECT_THROW(train(f.train_set.slice(0, 5), B, ChannelConfig{}, TrainConfig{}), DataError);
}

TEST(Recover, TrainedModelBeatsZeroPredictorOnHeldOutFrames) {
    const auto& f = fixture();
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.seed = 2;
    const auto r = train(f.train_set, f.A, ChannelConfig{1e-3, 2}, cfg);
    const FrameSet test = gen_synthetic(6000, 204, 10, 1).slice(5000, 1000);
    const RowMatrix y = awgn_all(measure_all(f.A, test), ChannelConfig{1e-3, 99});
    const RowMatrix x = recover(r.model, f.A, y);
    const double err = (x - test.frames).array().square().mean();
    EXPECT_LT(err, test.frames.array().square().mean());
    for (const auto& d : recovery_diagnostics(x, test.frames, y - measure_all(f.A, test))) {
        EXPECT_TRUE(std::isfinite(d.error_norm));
        EXPECT_GE(d.noise_norm, 0.0);
    }
}

TEST(Recover, ZeroModelDeterminismAndDigestGuard) {
    const auto& f = fixture();
    VaeModel model = zero_model(168, 204);
    model.matrix_digest = f.A.digest();
    const RowMatrix y = gaussian(3, 168, 1);
    EXPECT_EQ(recover(model, f.A, y), RowMatrix::Zero(3, 204));
    const VaeModel random = [&] {
        VaeModel m = make_vae(168, 204, 4);
        m.matrix_digest = f.A.digest();
        return m;
    }();
    EXPECT_EQ(recover(random, f.A, y), recover(random, f.A, y));
    const Eigen::VectorXd single = recover(random, f.A, Eigen::VectorXd(y.row(1).transpose()));
    EXPECT_LT((single - recover(random, f.A, y).row(1).transpose()).norm(), 1e-12);
    const auto other = build_proposition_matrix(168, 204, 0.1, 2.0, source_stats(f.train_set), 8);
    EXPECT_THROW(recover(random, other, y), DataError);
}

TEST(Interpolate, EndpointsAreBitwiseReconstructions) {
    VaeModel model = make_vae(12, 30, 4);
    const auto A = build_unconstrained_matrix(12, 30, 1);
    model.matrix_digest = A.digest();
    const Eigen::VectorXd y1 = gaussian(12, 1, 1), y2 = gaussian(12, 1, 2);
    const RowMatrix path = interpolate(model, y1, y2, 8);
    ASSERT_EQ(path.rows(), 8);
    EXPECT_EQ(Eigen::VectorXd(path.row(0).transpose()), recover(model, A, y1));
    EXPECT_EQ(Eigen::VectorXd(path.row(7).transpose()), recover(model, A, y2));
}

TEST(Interpolate, MidpointLatentArithmetic) {
    const VaeModel model = transparent_model();
    Eigen::VectorXd y1 = Eigen::VectorXd::Zero(10), y2 = Eigen::VectorXd::Zero(10);
    y1[1] = 2.0;
    y2[0] = 2.0;
    ASSERT_LT((encode(model, y1).mu - y1).norm(), 1e-15);
    const RowMatrix path = interpolate(model, y1, y2, 3);
    EXPECT_NEAR(path(1, 0), std::tanh(1.0), 1e-12);
    EXPECT_NEAR(path(1, 1), std::tanh(1.0), 1e-12);
    EXPECT_NEAR(path(1, 2), 0.0, 1e-12);
}

TEST(Interpolate, RejectsTooFewStepsAndBadDimensions) {
    const VaeModel model = make_vae(12, 30, 4);
    EXPECT_THROW(interpolate(model, Eigen::VectorXd::Zero(12), Eigen::VectorXd::Zero(12), 1), DataError);
    EXPECT_THROW(interpolate(model, Eigen::VectorXd::Zero(11), Eigen::VectorXd::Zero(12), 4), DataError);
}

TEST(GeneratorPairs, InRangeAndDeterministic) {
    const VaeModel model = make_vae(12, 30, 4);
    const auto a = sample_generator_pairs(model, 50, 3);
    const auto b = sample_generator_pairs(model, 50, 3);
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
    EXPECT_NE(a.first, a.second);
    EXPECT_LE(a.first.cwiseAbs().maxCoeff(), 1.0);
}
