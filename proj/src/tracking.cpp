#include "mmloc/tracking.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "mmloc/errors.hpp"

namespace mmloc {

Eigen::Matrix4d kf_transition(double dt) {
    Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
    f(0, 1) = dt;
    f(2, 3) = dt;
    return f;
}

Eigen::Matrix4d kf_process_noise(double dt, double q) {
    // White-acceleration CV discretization per axis:
    // q * [dt^3/3, dt^2/2; dt^2/2, dt].
    Eigen::Matrix4d qm = Eigen::Matrix4d::Zero();
    const double d3 = dt * dt * dt / 3.0;
    const double d2 = dt * dt / 2.0;
    for (int axis = 0; axis < 2; ++axis) {
        const int i = 2 * axis;
        qm(i, i) = q * d3;
        qm(i, i + 1) = q * d2;
        qm(i + 1, i) = q * d2;
        qm(i + 1, i + 1) = q * dt;
    }
    return qm;
}

Eigen::Matrix<double, 2, 4> kf_observation() {
    Eigen::Matrix<double, 2, 4> h = Eigen::Matrix<double, 2, 4>::Zero();
    h(0, 0) = 1.0;
    h(1, 2) = 1.0;
    return h;
}

KalmanState kf_init(const Point2& first_estimate) {
    KalmanState st;
    st.s << first_estimate.x, 0.0, first_estimate.y, 0.0;
    st.P = Eigen::Matrix4d::Identity();
    st.t = 0;
    return st;
}

KalmanState predict(const KalmanState& state, const KfConfig& cfg) {
    const Eigen::Matrix4d f = kf_transition(cfg.dt);
    KalmanState out;
    out.s = f * state.s;
    out.P = f * state.P * f.transpose() + kf_process_noise(cfg.dt, cfg.process_noise_q);
    out.P = 0.5 * (out.P + out.P.transpose().eval());
    out.t = state.t + 1;
    return out;
}

std::pair<KalmanState, InnovationRecord> update(const KalmanState& predicted, const Point2& meas,
                                                const KfConfig& cfg) {
    const Eigen::Matrix<double, 2, 4> h = kf_observation();
    const Eigen::Vector2d z(meas.x, meas.y);

    InnovationRecord rec;
    rec.y_hat = z - h * predicted.s;
    rec.G = h * predicted.P * h.transpose() + cfg.obs_noise_v;
    rec.G = 0.5 * (rec.G + rec.G.transpose().eval());

    const Eigen::LLT<Eigen::Matrix2d> llt(rec.G);
    if (llt.info() != Eigen::Success || rec.G.determinant() < 1e-300)
        throw FilterDegenerateError("innovation covariance is numerically singular");

    const Eigen::Vector2d g_inv_y = llt.solve(rec.y_hat);
    rec.beta = rec.y_hat.dot(g_inv_y);
    rec.delta = rec.y_hat.norm();
    rec.K = predicted.P * h.transpose() * llt.solve(Eigen::Matrix2d::Identity());

    KalmanState out;
    out.s = predicted.s + rec.K * rec.y_hat;
    out.P = (Eigen::Matrix4d::Identity() - rec.K * h) * predicted.P;
    out.P = 0.5 * (out.P + out.P.transpose().eval());
    out.t = predicted.t;
    return {out, rec};
}

double nis_consistency(const std::vector<InnovationRecord>& records) {
    if (records.empty()) throw InsufficientDataError("NIS consistency needs at least one record");
    double sum = 0.0;
    for (const InnovationRecord& r : records) sum += r.beta;
    return sum / static_cast<double>(records.size());
}

}  // namespace mmloc
