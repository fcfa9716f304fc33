#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "mmloc/common.hpp"

namespace mmloc {

struct KfConfig {
    double dt{1.0};
    double process_noise_q{0.5};  // white-acceleration intensity, m^2/s^3
    Eigen::Matrix2d obs_noise_v{0.25 * Eigen::Matrix2d::Identity()};
};

// State ordering [x, xdot, y, ydot].
struct KalmanState {
    Eigen::Vector4d s{Eigen::Vector4d::Zero()};
    Eigen::Matrix4d P{Eigen::Matrix4d::Identity()};
    int t{0};
};

struct InnovationRecord {
    Eigen::Vector2d y_hat{Eigen::Vector2d::Zero()};
    Eigen::Matrix2d G{Eigen::Matrix2d::Identity()};
    Eigen::Matrix<double, 4, 2> K{Eigen::Matrix<double, 4, 2>::Zero()};
    double beta{0.0};
    double delta{0.0};
};

Eigen::Matrix4d kf_transition(double dt);
Eigen::Matrix4d kf_process_noise(double dt, double q);
Eigen::Matrix<double, 2, 4> kf_observation();

// s0 = [x, 0, y, 0] from the first position estimate, P0 = I.
KalmanState kf_init(const Point2& first_estimate);

KalmanState predict(const KalmanState& state, const KfConfig& cfg);

// Measurement update from a predicted state. Throws FilterDegenerateError
// when the innovation covariance is numerically singular.
std::pair<KalmanState, InnovationRecord> update(const KalmanState& predicted, const Point2& meas,
                                                const KfConfig& cfg);

// Mean NIS over the records; 2 for a consistent filter.
double nis_consistency(const std::vector<InnovationRecord>& records);

}  // namespace mmloc
