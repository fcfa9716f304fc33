#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mmloc/common.hpp"

namespace mmloc {

struct MlpConfig {
    int n_input{0};
    double kappa{0.9};
    double dropout_p{0.1};
    double learning_rate{0.003};
    double batch_fraction{0.5};
    int epochs{2000};
    std::uint64_t seed{1};
    double adam_beta1{0.9};
    double adam_beta2{0.999};
    double adam_eps{1e-8};
    // Stop early when the best epoch MSE improves by less than
    // early_stop_delta over early_stop_window consecutive epochs.
    double early_stop_delta{1e-6};
    int early_stop_window{100};
};

// (N_i, ceil(kappa*N_i), ceil(kappa*N_i), ceil(ceil(kappa*N_i)/2), 2)
std::array<int, 5> build_architecture(int n_input, double kappa);

struct TrainSample {
    Eigen::VectorXd input;
    Point2 label;
};

struct TrainReport {
    std::vector<double> epoch_mse;
    double final_mse{0.0};
    double wall_clock_s{0.0};
    int epochs_run{0};
};

// Three ReLU hidden layers and a linear 2-output head. Weights are
// (out x in) matrices; layer_sizes comes from build_architecture.
class MlpModel {
  public:
    MlpModel() = default;

    // He-style uniform init (bound sqrt(6/fan_in)), seeded from cfg.seed.
    static MlpModel create(const MlpConfig& cfg);

    const std::array<int, 5>& layer_sizes() const { return layer_sizes_; }
    const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
    const std::vector<Eigen::VectorXd>& biases() const { return biases_; }
    const MlpConfig& config() const { return config_; }
    bool trained() const { return trained_; }
    const std::string& scene_fingerprint() const { return scene_fingerprint_; }
    void set_scene_fingerprint(std::string fp) { scene_fingerprint_ = std::move(fp); }

    // Restore a model from raw parts (checkpoint loading).
    static MlpModel from_parts(const MlpConfig& cfg, std::array<int, 5> layer_sizes,
                               std::vector<Eigen::MatrixXd> weights,
                               std::vector<Eigen::VectorXd> biases, bool trained,
                               std::string scene_fingerprint);

    // Training-side access; everyone else reads through the const accessors.
    std::vector<Eigen::MatrixXd>& mutable_weights() { return weights_; }
    std::vector<Eigen::VectorXd>& mutable_biases() { return biases_; }
    void mark_trained() { trained_ = true; }

  private:
    std::array<int, 5> layer_sizes_{};
    std::vector<Eigen::MatrixXd> weights_;  // 4 matrices
    std::vector<Eigen::VectorXd> biases_;   // 4 vectors
    MlpConfig config_{};
    bool trained_{false};
    std::string scene_fingerprint_;
};

// Inference pass, dropout disabled. Deterministic.
Point2 forward(const MlpModel& m, const Eigen::VectorXd& input);

// Columns are samples; returns one (x, y) column per input column.
Eigen::Matrix2Xd forward_batch(const MlpModel& m, const Eigen::MatrixXd& inputs);

// Mini-batch Adam with inverted dropout on the hidden activations. The loss
// is the batch mean of the squared Euclidean error over the 2 outputs.
TrainReport train(MlpModel& m, const std::vector<TrainSample>& data, const MlpConfig& cfg);

struct AdamHyper {
    double lr{0.001};
    double beta1{0.9};
    double beta2{0.999};
    double eps{1e-8};
};

struct AdamState {
    std::vector<Eigen::MatrixXd> m;
    std::vector<Eigen::MatrixXd> v;
    long t{0};

    static AdamState zeros_like(const std::vector<Eigen::MatrixXd>& params);
};

// Standard bias-corrected Adam update applied in place.
void adam_step(std::vector<Eigen::MatrixXd>& params, const std::vector<Eigen::MatrixXd>& grads,
               AdamState& state, const AdamHyper& hyper);

// Analytic loss gradients for a batch, exposed for the finite-difference
// check. Returns d(loss)/d(weights) and d(loss)/d(biases); dropout masks of
// all ones reproduce plain backprop.
struct Gradients {
    std::vector<Eigen::MatrixXd> d_weights;
    std::vector<Eigen::VectorXd> d_biases;
    double loss{0.0};
};

Gradients backprop(const MlpModel& m, const Eigen::MatrixXd& inputs,
                   const Eigen::Matrix2Xd& labels,
                   const std::vector<Eigen::MatrixXd>* dropout_masks = nullptr);

void save_model(const MlpModel& m, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace mmloc
