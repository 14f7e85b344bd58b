#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "csvae/cs_vae.hpp"
#include "csvae/error.hpp"
#include "csvae/nn.hpp"
#include "csvae/sensing.hpp"

namespace csvae {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kArchitecture =
    "encoder:m-64(relu)-2x10(identity,mu|log_var);decoder:10-64(relu)-64(relu)-n(tanh)";

namespace detail {

inline nlohmann::json to_json(const nn::Mlp& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers) {
        const Eigen::VectorXd w = l.weight.reshaped();
        layers.push_back({{"in", l.in_dim()},
                          {"out", l.out_dim()},
                          {"activation", nn::to_string(l.activation)},
                          {"weight", std::vector<double>(w.data(), w.data() + w.size())},
                          {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
    }
    return layers;
}

inline nn::Mlp mlp_from_json(const nlohmann::json& layers) {
    nn::Mlp net;
    for (const auto& j : layers) {
        const auto in = j.at("in").get<Eigen::Index>();
        const auto out = j.at("out").get<Eigen::Index>();
        const auto w = j.at("weight").get<std::vector<double>>();
        const auto b = j.at("bias").get<std::vector<double>>();
        require(in > 0 && out > 0 && static_cast<Eigen::Index>(w.size()) == in * out &&
                    static_cast<Eigen::Index>(b.size()) == out,
                "checkpoint: layer shape does not match its parameter arrays");
        nn::Layer layer{Eigen::Map<const Eigen::MatrixXd>(w.data(), out, in),
                        Eigen::Map<const Eigen::VectorXd>(b.data(), out),
                        nn::activation_from_string(j.at("activation").get<std::string>())};
        if (!net.layers.empty()) require(net.layers.back().out_dim() == in, "checkpoint: incompatible adjacent layers");
        net.layers.push_back(std::move(layer));
    }
    require(!net.layers.empty(), "checkpoint: network has no layers");
    return net;
}

inline std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

inline nlohmann::json train_config_json(const TrainConfig& cfg) {
    return {{"epochs", cfg.epochs},       {"batch_size", cfg.batch_size}, {"lr", cfg.lr},
            {"lambda_l1", cfg.lambda_l1}, {"kl_weight", cfg.kl_weight},   {"seed", cfg.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.epochs = j.at("epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.lr = j.at("lr").get<double>();
    cfg.lambda_l1 = j.at("lambda_l1").get<double>();
    cfg.kl_weight = j.at("kl_weight").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

/// Enough to rebuild a matrix bit for bit without storing its entries.
inline nlohmann::json matrix_descriptor(const MeasurementMatrix& A) {
    return {{"kind", to_string(A.kind)},
            {"m", A.m()},
            {"n", A.n()},
            {"power_budget", A.meta.power_budget},
            {"d", A.meta.d},
            {"mu_x", A.meta.mu_x},
            {"sigma_x", A.meta.sigma_x},
            {"sigma_a", A.meta.sigma_a},
            {"seed", A.meta.seed},
            {"selected_features", A.selected_features},
            {"digest", A.digest()}};
}

inline MeasurementMatrix matrix_from_descriptor(const nlohmann::json& j, Eigen::Index features_per_sensor = 12) {
    try {
        const auto kind = j.at("kind").get<std::string>();
        const auto m = j.at("m").get<Eigen::Index>();
        const auto n = j.at("n").get<Eigen::Index>();
        MeasurementMatrix A;
        if (kind == "proposition") {
            A = build_proposition_matrix(m, n, j.at("power_budget").get<double>(), j.at("d").get<double>(),
                                         SourceStats{j.at("mu_x").get<double>(), j.at("sigma_x").get<double>()},
                                         j.at("seed").get<std::uint64_t>());
        } else if (kind == "unconstrained") {
            A = build_unconstrained_matrix(m, n, j.at("seed").get<std::uint64_t>());
        } else if (kind == "selection") {
            const auto features = j.at("selected_features").get<std::vector<std::uint32_t>>();
            std::vector<std::uint32_t> sensors;
            for (std::size_t i = 0; i < features.size(); i += static_cast<std::size_t>(features_per_sensor))
                sensors.push_back(features[i] / static_cast<std::uint32_t>(features_per_sensor));
            A = build_selection_matrix(sensors, features_per_sensor, n);
        } else {
            throw DataError("matrix descriptor: unknown kind '" + kind + "'");
        }
        if (j.contains("digest") && j["digest"].get<std::string>() != A.digest())
            throw DataError("matrix descriptor: rebuilt matrix does not reproduce digest " +
                            j["digest"].get<std::string>());
        return A;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("matrix descriptor: malformed: ") + e.what());
    }
}

/// Checkpoint document. `matrix`, when given, is embedded as a descriptor so the
/// deployment matrix can be rebuilt from the checkpoint alone.
inline nlohmann::json checkpoint_json(const VaeModel& model, const MeasurementMatrix* matrix = nullptr) {
    nlohmann::json j;
    j["format"] = "csvae-checkpoint";
    j["version"] = kCheckpointVersion;
    j["architecture"] = kArchitecture;
    j["latent_dim"] = model.latent_dim;
    j["m"] = model.m();
    j["n"] = model.n();
    j["matrix_digest"] = model.matrix_digest;
    j["sigma_n"] = model.sigma_n;
    j["power_normalize"] = model.mode.power_normalize;
    j["power_budget"] = model.mode.power_budget;
    j["seed"] = model.train_config.seed;
    j["train_config"] = train_config_json(model.train_config);
    if (model.norm_stats)
        j["normalization"] = {{"min", detail::to_vector(model.norm_stats->per_feature_min)},
                              {"max", detail::to_vector(model.norm_stats->per_feature_max)}};
    else
        j["normalization"] = nullptr;
    j["encoder"] = detail::to_json(model.encoder);
    j["decoder"] = detail::to_json(model.decoder);
    if (matrix) {
        detail::require(matrix->digest() == model.matrix_digest, "checkpoint: matrix does not match the model digest");
        j["matrix"] = matrix_descriptor(*matrix);
    }
    return j;
}

inline VaeModel model_from_checkpoint(const nlohmann::json& j) {
    try {
        detail::require(j.at("format").get<std::string>() == "csvae-checkpoint", "checkpoint: unknown format tag");
        detail::require(j.at("version").get<int>() == kCheckpointVersion, "checkpoint: unsupported version");
        VaeModel model;
        model.latent_dim = j.at("latent_dim").get<Eigen::Index>();
        model.matrix_digest = j.at("matrix_digest").get<std::string>();
        model.sigma_n = j.at("sigma_n").get<double>();
        model.mode.power_normalize = j.at("power_normalize").get<bool>();
        model.mode.power_budget = j.at("power_budget").get<double>();
        model.train_config = train_config_from_json(j.at("train_config"));
        if (!j.at("normalization").is_null()) {
            const auto lo = j["normalization"].at("min").get<std::vector<double>>();
            const auto hi = j["normalization"].at("max").get<std::vector<double>>();
            detail::require(lo.size() == hi.size(), "checkpoint: normalization arrays differ in length");
            model.norm_stats = NormStats{Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size())),
                                         Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()))};
        }
        model.encoder = detail::mlp_from_json(j.at("encoder"));
        model.decoder = detail::mlp_from_json(j.at("decoder"));
        detail::require(model.encoder.out_dim() == 2 * model.latent_dim && model.decoder.in_dim() == model.latent_dim,
                        "checkpoint: latent dimension inconsistent with layer shapes");
        detail::require(model.m() == j.at("m").get<Eigen::Index>() && model.n() == j.at("n").get<Eigen::Index>(),
                        "checkpoint: m/n inconsistent with layer shapes");
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: malformed document: ") + e.what());
    }
}

inline void save_checkpoint(const VaeModel& model, const std::string& path, const MeasurementMatrix* matrix = nullptr) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << checkpoint_json(model, matrix).dump(1) << '\n';
    if (!out) throw DataError("write failed: " + path);
}

inline nlohmann::json read_checkpoint_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint " + path + ": " + e.what());
    }
}

inline VaeModel load_checkpoint(const std::string& path) { return model_from_checkpoint(read_checkpoint_json(path)); }

/// The matrix embedded in a checkpoint document, if any.
inline std::optional<MeasurementMatrix> checkpoint_matrix(const nlohmann::json& j) {
    if (!j.contains("matrix")) return std::nullopt;
    return matrix_from_descriptor(j["matrix"]);
}

}  // namespace csvae
