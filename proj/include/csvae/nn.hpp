#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "csvae/error.hpp"
#include "csvae/rng.hpp"

namespace csvae::nn {

enum class Activation { ReLU, Tanh, Identity };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::ReLU: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    return "unknown";
}

inline Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::ReLU;
    if (name == "tanh") return Activation::Tanh;
    if (name == "identity") return Activation::Identity;
    throw DataError("unknown activation: " + name);
}

struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
    Activation activation = Activation::Identity;

    Eigen::Index in_dim() const { return weight.cols(); }
    Eigen::Index out_dim() const { return weight.rows(); }
};

/// Fully-connected network. Samples are columns throughout.
struct Mlp {
    std::vector<Layer> layers;

    Eigen::Index in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
    Eigen::Index out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

    Eigen::Index parameter_count() const {
        Eigen::Index total = 0;
        for (const auto& l : layers) total += l.weight.size() + l.bias.size();
        return total;
    }
};

/// Layer sizes `dims` (length L+1) with one activation per layer.
/// ReLU layers draw U(+-sqrt(6/fan_in)); Tanh/Identity layers draw
/// U(+-sqrt(6/(fan_in+fan_out))); biases start at zero.
inline Mlp make_mlp(const std::vector<Eigen::Index>& dims, const std::vector<Activation>& activations,
                    std::uint64_t seed) {
    detail::require(dims.size() >= 2 && activations.size() == dims.size() - 1, "make_mlp: inconsistent layer spec");
    Mlp net;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        detail::require(dims[i] > 0 && dims[i + 1] > 0, "make_mlp: layer sizes must be positive");
        const double fan_in = static_cast<double>(dims[i]);
        const double fan_out = static_cast<double>(dims[i + 1]);
        const double limit = activations[i] == Activation::ReLU ? std::sqrt(6.0 / fan_in)
                                                                : std::sqrt(6.0 / (fan_in + fan_out));
        auto engine = rng::stream(seed, rng::Purpose::Init, i);
        std::uniform_real_distribution<double> uniform(-limit, limit);
        Layer layer{Eigen::MatrixXd(dims[i + 1], dims[i]), Eigen::VectorXd::Zero(dims[i + 1]), activations[i]};
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = uniform(engine);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

/// Same shapes as `net`, every parameter zero.
inline Mlp zeros_like(const Mlp& net) {
    Mlp out = net;
    for (auto& l : out.layers) {
        l.weight.setZero();
        l.bias.setZero();
    }
    return out;
}

namespace impl {

inline void activate(Eigen::MatrixXd& z, Activation a) {
    switch (a) {
        case Activation::ReLU: z = z.cwiseMax(0.0); break;
        case Activation::Tanh: z = z.array().tanh().matrix(); break;
        case Activation::Identity: break;
    }
}

}  // namespace impl

/// Per-layer inputs and post-activation outputs from one forward pass.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> inputs;
    std::vector<Eigen::MatrixXd> outputs;
};

struct ForwardResult {
    Eigen::MatrixXd output;
    ForwardCache cache;
};

inline ForwardResult forward(const Mlp& net, const Eigen::MatrixXd& input) {
    csvae::detail::require(!net.layers.empty(), "forward: empty network");
    csvae::detail::require(input.rows() == net.in_dim(), "forward: input dimension " + std::to_string(input.rows()) +
                                                             " does not match network input " +
                                                             std::to_string(net.in_dim()));
    ForwardResult result;
    Eigen::MatrixXd current = input;
    for (const auto& layer : net.layers) {
        result.cache.inputs.push_back(current);
        Eigen::MatrixXd z = layer.weight * current;
        z.colwise() += layer.bias;
        impl::activate(z, layer.activation);
        result.cache.outputs.push_back(z);
        current = std::move(z);
    }
    if (!current.allFinite()) throw NumericalError("forward: non-finite output");
    result.output = std::move(current);
    return result;
}

/// Forward pass without keeping the cache.
inline Eigen::MatrixXd predict(const Mlp& net, const Eigen::MatrixXd& input) {
    csvae::detail::require(!net.layers.empty(), "predict: empty network");
    csvae::detail::require(input.rows() == net.in_dim(), "predict: input dimension mismatch");
    Eigen::MatrixXd current = input;
    for (const auto& layer : net.layers) {
        Eigen::MatrixXd z = layer.weight * current;
        z.colwise() += layer.bias;
        impl::activate(z, layer.activation);
        current = std::move(z);
    }
    if (!current.allFinite()) throw NumericalError("predict: non-finite output");
    return current;
}

struct LayerGrad {
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;
};

struct Gradients {
    std::vector<LayerGrad> layers;
    Eigen::MatrixXd input;  // d loss / d input, one column per sample
};

/// Reverse-mode pass. Parameter gradients are summed over the batch columns.
/// ReLU passes gradient only where the pre-activation was strictly positive.
inline Gradients backward(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& output_grad) {
    const std::size_t count = net.layers.size();
    csvae::detail::require(cache.inputs.size() == count && cache.outputs.size() == count,
                           "backward: cache does not match network depth");
    for (std::size_t i = 0; i < count; ++i) {
        csvae::detail::require(cache.inputs[i].rows() == net.layers[i].in_dim() &&
                                   cache.outputs[i].rows() == net.layers[i].out_dim() &&
                                   cache.outputs[i].cols() == output_grad.cols(),
                               "backward: stale or mismatched cache");
    }
    csvae::detail::require(output_grad.rows() == net.out_dim(), "backward: output gradient dimension mismatch");

    Gradients grads;
    grads.layers.resize(count);
    Eigen::MatrixXd delta = output_grad;
    for (std::size_t k = count; k-- > 0;) {
        const Layer& layer = net.layers[k];
        const Eigen::MatrixXd& out = cache.outputs[k];
        switch (layer.activation) {
            case Activation::ReLU: delta = (out.array() > 0.0).select(delta, 0.0); break;
            case Activation::Tanh: delta = (delta.array() * (1.0 - out.array().square())).matrix(); break;
            case Activation::Identity: break;
        }
        grads.layers[k].weight = delta * cache.inputs[k].transpose();
        grads.layers[k].bias = delta.rowwise().sum();
        delta = layer.weight.transpose() * delta;
    }
    grads.input = std::move(delta);
    return grads;
}

// ---------------------------------------------------------------------------
// Flat parameter views (layer order, weight column-major then bias).

inline Eigen::VectorXd flatten(const Mlp& net) {
    Eigen::VectorXd flat(net.parameter_count());
    Eigen::Index at = 0;
    for (const auto& l : net.layers) {
        flat.segment(at, l.weight.size()) = l.weight.reshaped();
        at += l.weight.size();
        flat.segment(at, l.bias.size()) = l.bias;
        at += l.bias.size();
    }
    return flat;
}

inline Eigen::VectorXd flatten(const Gradients& grads) {
    Eigen::Index total = 0;
    for (const auto& g : grads.layers) total += g.weight.size() + g.bias.size();
    Eigen::VectorXd flat(total);
    Eigen::Index at = 0;
    for (const auto& g : grads.layers) {
        flat.segment(at, g.weight.size()) = g.weight.reshaped();
        at += g.weight.size();
        flat.segment(at, g.bias.size()) = g.bias;
        at += g.bias.size();
    }
    return flat;
}

inline void unflatten(Mlp& net, const Eigen::VectorXd& flat) {
    csvae::detail::require(flat.size() == net.parameter_count(), "unflatten: parameter count mismatch");
    Eigen::Index at = 0;
    for (auto& l : net.layers) {
        l.weight.reshaped() = flat.segment(at, l.weight.size());
        at += l.weight.size();
        l.bias = flat.segment(at, l.bias.size());
        at += l.bias.size();
    }
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
    std::vector<LayerGrad> first_moment;
    std::vector<LayerGrad> second_moment;
    long step_count = 0;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

inline AdamState make_adam(const Mlp& net, double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
                           double epsilon = 1e-8) {
    AdamState state;
    state.lr = lr;
    state.beta1 = beta1;
    state.beta2 = beta2;
    state.epsilon = epsilon;
    for (const auto& l : net.layers) {
        LayerGrad zero{Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())};
        state.first_moment.push_back(zero);
        state.second_moment.push_back(zero);
    }
    return state;
}

/// One bias-corrected Adam update of `net` in place.
inline void adam_step(Mlp& net, const Gradients& grads, AdamState& state) {
    const std::size_t count = net.layers.size();
    csvae::detail::require(grads.layers.size() == count && state.first_moment.size() == count,
                           "adam_step: layer count mismatch");
    for (std::size_t k = 0; k < count; ++k) {
        csvae::detail::require(grads.layers[k].weight.rows() == net.layers[k].weight.rows() &&
                                   grads.layers[k].weight.cols() == net.layers[k].weight.cols() &&
                                   grads.layers[k].bias.size() == net.layers[k].bias.size(),
                               "adam_step: gradient shape mismatch in layer " + std::to_string(k));
        if (!grads.layers[k].weight.allFinite() || !grads.layers[k].bias.allFinite())
            throw NumericalError("adam_step: non-finite gradient in layer " + std::to_string(k));
    }
    state.step_count += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));

    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        m = state.beta1 * m + (1.0 - state.beta1) * grad;
        v = state.beta2 * v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
        param.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
    };
    for (std::size_t k = 0; k < count; ++k) {
        update(net.layers[k].weight, grads.layers[k].weight, state.first_moment[k].weight,
               state.second_moment[k].weight);
        update(net.layers[k].bias, grads.layers[k].bias, state.first_moment[k].bias, state.second_moment[k].bias);
    }
}

// ---------------------------------------------------------------------------
// Finite-difference checking

/// Central differences of `loss` around `params` with step h.
inline Eigen::VectorXd finite_difference(const std::function<double(const Eigen::VectorXd&)>& loss,
                                         const Eigen::VectorXd& params, double h = 1e-5) {
    Eigen::VectorXd probe = params;
    Eigen::VectorXd grad(params.size());
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + h;
        const double plus = loss(probe);
        probe[i] = saved - h;
        const double minus = loss(probe);
        probe[i] = saved;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    return grad;
}

/// Central differences at h = 1e-5 resolve a gradient entry only to about 1e-8
/// absolute (loss roundoff / 2h), so entries smaller than this are compared on
/// an absolute basis.
inline constexpr double kRelativeErrorFloor = 1e-5;

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, kRelativeErrorFloor)
inline double max_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
    csvae::detail::require(analytic.size() == numeric.size(), "gradient size mismatch");
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), kRelativeErrorFloor});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
    }
    return worst;
}

/// Scalar loss of the network output; fills d loss / d output when asked.
using OutputLoss = std::function<double(const Eigen::MatrixXd& output, Eigen::MatrixXd* output_grad)>;

struct GradCheckResult {
    double max_relative_error = 0.0;
    bool passed = false;
};

inline GradCheckResult compare_gradients(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                                         double tolerance) {
    const double err = max_relative_error(analytic, numeric);
    return GradCheckResult{err, err <= tolerance};
}

/// Backprop gradients of `loss(net(input))` against central differences.
inline GradCheckResult grad_check(const Mlp& net, const OutputLoss& loss, const Eigen::MatrixXd& input,
                                  double tolerance, double h = 1e-5) {
    auto eval = [&](const Eigen::VectorXd& params) {
        Mlp probe = net;
        unflatten(probe, params);
        return loss(predict(probe, input), nullptr);
    };
    const Eigen::VectorXd base = flatten(net);
    if (eval(base) != eval(base)) throw NumericalError("grad_check: loss function is not deterministic");

    auto fwd = forward(net, input);
    Eigen::MatrixXd out_grad;
    loss(fwd.output, &out_grad);
    const Eigen::VectorXd analytic = flatten(backward(net, fwd.cache, out_grad));
    return compare_gradients(analytic, finite_difference(eval, base, h), tolerance);
}

}  // namespace csvae::nn
