#include "mmloc/tinynn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "mmloc/errors.hpp"

namespace mmloc {

std::array<int, 5> build_architecture(int n_input, double kappa) {
    if (n_input < 1) throw ConfigError("n_input must be >= 1");
    if (!(kappa > 0.0 && kappa <= 1.0)) throw ConfigError("kappa must be in (0, 1]");
    // The 1e-9 slack keeps ceil stable when kappa*n_input lands on an
    // integer up to floating-point error.
    const int h1 = static_cast<int>(std::ceil(kappa * n_input - 1e-9));
    const int h3 = (h1 + 1) / 2;
    return {n_input, h1, h1, h3, 2};
}

MlpModel MlpModel::create(const MlpConfig& cfg) {
    if (!(cfg.dropout_p >= 0.0 && cfg.dropout_p < 1.0))
        throw ConfigError("dropout_p must be in [0, 1)");
    if (!(cfg.batch_fraction > 0.0 && cfg.batch_fraction <= 1.0))
        throw ConfigError("batch_fraction must be in (0, 1]");
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");

    MlpModel m;
    m.layer_sizes_ = build_architecture(cfg.n_input, cfg.kappa);
    m.config_ = cfg;
    std::mt19937_64 rng(cfg.seed);
    for (int l = 0; l < 4; ++l) {
        const int fan_in = m.layer_sizes()[static_cast<std::size_t>(l)];
        const int fan_out = m.layer_sizes()[static_cast<std::size_t>(l) + 1];
        const double bound = std::sqrt(6.0 / fan_in);
        std::uniform_real_distribution<double> u(-bound, bound);
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int i = 0; i < fan_out; ++i)
            for (int j = 0; j < fan_in; ++j) w(i, j) = u(rng);
        m.weights_.push_back(std::move(w));
        m.biases_.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return m;
}

MlpModel MlpModel::from_parts(const MlpConfig& cfg, std::array<int, 5> layer_sizes,
                              std::vector<Eigen::MatrixXd> weights,
                              std::vector<Eigen::VectorXd> biases, bool trained,
                              std::string scene_fingerprint) {
    if (weights.size() != 4 || biases.size() != 4)
        throw ShapeError("MLP checkpoint must carry 4 weight matrices and 4 bias vectors");
    for (int l = 0; l < 4; ++l) {
        const auto& w = weights[static_cast<std::size_t>(l)];
        const auto& b = biases[static_cast<std::size_t>(l)];
        if (w.rows() != layer_sizes[static_cast<std::size_t>(l) + 1] ||
            w.cols() != layer_sizes[static_cast<std::size_t>(l)] ||
            b.size() != layer_sizes[static_cast<std::size_t>(l) + 1])
            throw ShapeError("MLP checkpoint shapes do not match layer sizes");
    }
    MlpModel m;
    m.config_ = cfg;
    m.layer_sizes_ = layer_sizes;
    m.weights_ = std::move(weights);
    m.biases_ = std::move(biases);
    m.trained_ = trained;
    m.scene_fingerprint_ = std::move(scene_fingerprint);
    return m;
}

Eigen::Matrix2Xd forward_batch(const MlpModel& m, const Eigen::MatrixXd& inputs) {
    if (inputs.rows() != m.layer_sizes()[0])
        throw ShapeError("MLP input has " + std::to_string(inputs.rows()) + " rows, expected " +
                         std::to_string(m.layer_sizes()[0]));
    Eigen::MatrixXd a = inputs;
    for (int l = 0; l < 3; ++l) {
        a = ((m.weights()[static_cast<std::size_t>(l)] * a).colwise() +
             m.biases()[static_cast<std::size_t>(l)])
                .cwiseMax(0.0);
    }
    return (m.weights()[3] * a).colwise() + m.biases()[3];
}

Point2 forward(const MlpModel& m, const Eigen::VectorXd& input) {
    const Eigen::Matrix2Xd out = forward_batch(m, input);
    return Point2{out(0, 0), out(1, 0)};
}

AdamState AdamState::zeros_like(const std::vector<Eigen::MatrixXd>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
        s.m.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
        s.v.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    }
    return s;
}

void adam_step(std::vector<Eigen::MatrixXd>& params, const std::vector<Eigen::MatrixXd>& grads,
               AdamState& state, const AdamHyper& hyper) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adam_step shape mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].rows() != grads[i].rows() || params[i].cols() != grads[i].cols())
            throw ShapeError("adam_step parameter/gradient shape mismatch");
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grads[i];
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grads[i].cwiseProduct(grads[i]);
        const Eigen::MatrixXd m_hat = state.m[i] / bc1;
        const Eigen::MatrixXd v_hat = state.v[i] / bc2;
        params[i] -= hyper.lr * (m_hat.array() / (v_hat.array().sqrt() + hyper.eps)).matrix();
    }
}

Gradients backprop(const MlpModel& m, const Eigen::MatrixXd& inputs,
                   const Eigen::Matrix2Xd& labels,
                   const std::vector<Eigen::MatrixXd>* dropout_masks) {
    const auto batch = inputs.cols();
    if (labels.cols() != batch) throw ShapeError("backprop input/label batch mismatch");
    if (inputs.rows() != m.layer_sizes()[0]) throw ShapeError("backprop input width mismatch");

    // Forward, keeping pre-activations and (possibly dropped) activations.
    std::vector<Eigen::MatrixXd> zs(4);
    std::vector<Eigen::MatrixXd> as(4);  // as[l] = activation fed into layer l+1
    Eigen::MatrixXd a = inputs;
    for (int l = 0; l < 4; ++l) {
        zs[static_cast<std::size_t>(l)] =
            (m.weights()[static_cast<std::size_t>(l)] * a).colwise() +
            m.biases()[static_cast<std::size_t>(l)];
        if (l < 3) {
            a = zs[static_cast<std::size_t>(l)].cwiseMax(0.0);
            if (dropout_masks)
                a = a.cwiseProduct((*dropout_masks)[static_cast<std::size_t>(l)]);
        } else {
            a = zs[3];
        }
        as[static_cast<std::size_t>(l)] = a;
    }

    const Eigen::MatrixXd diff = as[3] - labels;
    Gradients g;
    g.loss = diff.squaredNorm() / static_cast<double>(batch);
    g.d_weights.resize(4);
    g.d_biases.resize(4);

    Eigen::MatrixXd dz = (2.0 / static_cast<double>(batch)) * diff;
    for (int l = 3; l >= 0; --l) {
        const Eigen::MatrixXd& a_prev = (l == 0) ? inputs : as[static_cast<std::size_t>(l) - 1];
        g.d_weights[static_cast<std::size_t>(l)] = dz * a_prev.transpose();
        g.d_biases[static_cast<std::size_t>(l)] = dz.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd da = m.weights()[static_cast<std::size_t>(l)].transpose() * dz;
            if (dropout_masks)
                da = da.cwiseProduct((*dropout_masks)[static_cast<std::size_t>(l) - 1]);
            dz = da.cwiseProduct(
                (zs[static_cast<std::size_t>(l) - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    return g;
}

TrainReport train(MlpModel& m, const std::vector<TrainSample>& data, const MlpConfig& cfg) {
    if (data.empty()) throw InsufficientDataError("MLP training data is empty");
    for (const TrainSample& s : data) {
        if (s.input.size() != m.layer_sizes()[0])
            throw ShapeError("training sample width mismatch");
        if (!std::isfinite(s.label.x) || !std::isfinite(s.label.y))
            throw InsufficientDataError("training label is not finite");
    }

    const auto t_start = std::chrono::steady_clock::now();
    TrainReport report;
    if (cfg.epochs <= 0) return report;

    const int n = static_cast<int>(data.size());
    const int batch_size = static_cast<int>(
        std::ceil(cfg.batch_fraction * static_cast<double>(n) - 1e-9));

    Eigen::MatrixXd all_inputs(m.layer_sizes()[0], n);
    Eigen::Matrix2Xd all_labels(2, n);
    for (int i = 0; i < n; ++i) {
        all_inputs.col(i) = data[static_cast<std::size_t>(i)].input;
        all_labels(0, i) = data[static_cast<std::size_t>(i)].label.x;
        all_labels(1, i) = data[static_cast<std::size_t>(i)].label.y;
    }

    // Canonical parameter list: 4 weight matrices then 4 biases as columns.
    std::vector<Eigen::MatrixXd> params;
    for (int l = 0; l < 4; ++l) params.push_back(m.weights()[static_cast<std::size_t>(l)]);
    for (int l = 0; l < 4; ++l) params.push_back(m.biases()[static_cast<std::size_t>(l)]);
    AdamState adam = AdamState::zeros_like(params);
    const AdamHyper hyper{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};

    std::mt19937_64 rng(mix_seed(cfg.seed, 0x7261696eULL));
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    const auto sync_model = [&]() {
        for (int l = 0; l < 4; ++l) {
            m.mutable_weights()[static_cast<std::size_t>(l)] = params[static_cast<std::size_t>(l)];
            m.mutable_biases()[static_cast<std::size_t>(l)] = params[static_cast<std::size_t>(l) + 4];
        }
    };

    double best_mse = std::numeric_limits<double>::infinity();
    int stall = 0;
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (int start = 0; start < n; start += batch_size) {
            const int bs = std::min(batch_size, n - start);
            Eigen::MatrixXd batch_in(m.layer_sizes()[0], bs);
            Eigen::Matrix2Xd batch_lab(2, bs);
            for (int i = 0; i < bs; ++i) {
                batch_in.col(i) = all_inputs.col(order[static_cast<std::size_t>(start + i)]);
                batch_lab.col(i) = all_labels.col(order[static_cast<std::size_t>(start + i)]);
            }

            std::vector<Eigen::MatrixXd> masks;
            const std::vector<Eigen::MatrixXd>* masks_ptr = nullptr;
            if (cfg.dropout_p > 0.0) {
                const double keep = 1.0 - cfg.dropout_p;
                masks.reserve(3);
                for (int l = 1; l <= 3; ++l) {
                    Eigen::MatrixXd mask(m.layer_sizes()[static_cast<std::size_t>(l)], bs);
                    for (Eigen::Index c = 0; c < mask.cols(); ++c)
                        for (Eigen::Index r = 0; r < mask.rows(); ++r)
                            mask(r, c) = unit(rng) < keep ? 1.0 / keep : 0.0;
                    masks.push_back(std::move(mask));
                }
                masks_ptr = &masks;
            }

            sync_model();
            const Gradients g = backprop(m, batch_in, batch_lab, masks_ptr);
            if (!std::isfinite(g.loss))
                throw TrainingDivergedError(
                    "training loss is not finite at epoch " + std::to_string(epoch), epoch);
            epoch_loss += g.loss * bs;

            std::vector<Eigen::MatrixXd> grads;
            grads.reserve(8);
            for (int l = 0; l < 4; ++l) grads.push_back(g.d_weights[static_cast<std::size_t>(l)]);
            for (int l = 0; l < 4; ++l) grads.push_back(g.d_biases[static_cast<std::size_t>(l)]);
            adam_step(params, grads, adam, hyper);
        }
        const double epoch_mse = epoch_loss / static_cast<double>(n);
        report.epoch_mse.push_back(epoch_mse);
        report.epochs_run = epoch + 1;

        if (epoch_mse < best_mse - cfg.early_stop_delta) {
            best_mse = epoch_mse;
            stall = 0;
        } else if (++stall >= cfg.early_stop_window) {
            break;
        }
    }

    sync_model();
    m.mark_trained();
    report.final_mse = report.epoch_mse.back();
    report.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

void save_model(const MlpModel& m, const std::string& path) {
    nlohmann::json j;
    j["layer_sizes"] = m.layer_sizes();
    const MlpConfig& c = m.config();
    j["config"] = {{"n_input", c.n_input},
                   {"kappa", c.kappa},
                   {"dropout_p", c.dropout_p},
                   {"learning_rate", c.learning_rate},
                   {"batch_fraction", c.batch_fraction},
                   {"epochs", c.epochs},
                   {"seed", c.seed},
                   {"adam_beta1", c.adam_beta1},
                   {"adam_beta2", c.adam_beta2},
                   {"adam_eps", c.adam_eps},
                   {"early_stop_delta", c.early_stop_delta},
                   {"early_stop_window", c.early_stop_window}};
    j["trained"] = m.trained();
    j["scene_fingerprint"] = m.scene_fingerprint();
    nlohmann::json weights = nlohmann::json::array();
    nlohmann::json biases = nlohmann::json::array();
    for (int l = 0; l < 4; ++l) {
        const Eigen::MatrixXd& w = m.weights()[static_cast<std::size_t>(l)];
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index cidx = 0; cidx < w.cols(); ++cidx) row.push_back(w(r, cidx));
            rows.push_back(std::move(row));
        }
        weights.push_back(std::move(rows));
        const Eigen::VectorXd& b = m.biases()[static_cast<std::size_t>(l)];
        nlohmann::json bj = nlohmann::json::array();
        for (Eigen::Index r = 0; r < b.size(); ++r) bj.push_back(b(r));
        biases.push_back(std::move(bj));
    }
    j["weights"] = std::move(weights);
    j["biases"] = std::move(biases);

    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open model file for writing: " + path);
    out << j.dump(1) << '\n';
}

MlpModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open model file: " + path);
    nlohmann::json j;
    in >> j;

    MlpConfig c;
    const nlohmann::json& cj = j.at("config");
    c.n_input = cj.at("n_input").get<int>();
    c.kappa = cj.at("kappa").get<double>();
    c.dropout_p = cj.at("dropout_p").get<double>();
    c.learning_rate = cj.at("learning_rate").get<double>();
    c.batch_fraction = cj.at("batch_fraction").get<double>();
    c.epochs = cj.at("epochs").get<int>();
    c.seed = cj.at("seed").get<std::uint64_t>();
    c.adam_beta1 = cj.at("adam_beta1").get<double>();
    c.adam_beta2 = cj.at("adam_beta2").get<double>();
    c.adam_eps = cj.at("adam_eps").get<double>();
    c.early_stop_delta = cj.at("early_stop_delta").get<double>();
    c.early_stop_window = cj.at("early_stop_window").get<int>();

    std::array<int, 5> sizes{};
    const auto& sj = j.at("layer_sizes");
    for (std::size_t i = 0; i < 5; ++i) sizes[i] = sj.at(i).get<int>();

    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    for (int l = 0; l < 4; ++l) {
        const auto& wj = j.at("weights").at(static_cast<std::size_t>(l));
        Eigen::MatrixXd w(sizes[static_cast<std::size_t>(l) + 1], sizes[static_cast<std::size_t>(l)]);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index cidx = 0; cidx < w.cols(); ++cidx)
                w(r, cidx) = wj.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(cidx)).get<double>();
        weights.push_back(std::move(w));
        const auto& bj = j.at("biases").at(static_cast<std::size_t>(l));
        Eigen::VectorXd b(sizes[static_cast<std::size_t>(l) + 1]);
        for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = bj.at(static_cast<std::size_t>(r)).get<double>();
        biases.push_back(std::move(b));
    }

    return MlpModel::from_parts(c, sizes, std::move(weights), std::move(biases),
                                j.at("trained").get<bool>(),
                                j.at("scene_fingerprint").get<std::string>());
}

}  // namespace mmloc
