#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "mmloc/errors.hpp"
#include "mmloc/tracking.hpp"

using namespace mmloc;

namespace {

// Independent per-axis 2-state reference filter in plain doubles.
struct ScalarKf {
    double s[2]{0, 0};
    double p[2][2]{{1, 0}, {0, 1}};

    void predict(double dt, double q) {
        const double s0 = s[0] + dt * s[1];
        const double s1 = s[1];
        s[0] = s0;
        s[1] = s1;
        double f[2][2] = {{1, dt}, {0, 1}};
        double fp[2][2];
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) fp[i][j] = f[i][0] * p[0][j] + f[i][1] * p[1][j];
        double newp[2][2];
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) newp[i][j] = fp[i][0] * f[j][0] + fp[i][1] * f[j][1];
        newp[0][0] += q * dt * dt * dt / 3.0;
        newp[0][1] += q * dt * dt / 2.0;
        newp[1][0] += q * dt * dt / 2.0;
        newp[1][1] += q * dt;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) p[i][j] = newp[i][j];
    }

    // returns the per-axis NIS contribution
    double update(double z, double v) {
        const double y = z - s[0];
        const double g = p[0][0] + v;
        const double k0 = p[0][0] / g;
        const double k1 = p[1][0] / g;
        s[0] += k0 * y;
        s[1] += k1 * y;
        const double p00 = (1 - k0) * p[0][0];
        const double p01 = (1 - k0) * p[0][1];
        const double p10 = p[1][0] - k1 * p[0][0];
        const double p11 = p[1][1] - k1 * p[0][1];
        p[0][0] = p00;
        p[0][1] = p01;
        p[1][0] = p10;
        p[1][1] = p11;
        return y * y / g;
    }
};

}  // namespace

TEST_CASE("prediction follows constant-velocity kinematics") {
    KalmanState st;
    st.s << 0, 1, 0, 2;
    const KfConfig cfg{1.0, 0.0, Eigen::Matrix2d::Identity()};
    const KalmanState out = predict(st, cfg);
    CHECK(out.s(0) == doctest::Approx(1.0));
    CHECK(out.s(2) == doctest::Approx(2.0));
    CHECK(out.t == 1);
}

TEST_CASE("zero velocity keeps the position") {
    KalmanState st;
    st.s << 4, 0, -3, 0;
    const KalmanState out = predict(st, KfConfig{});
    CHECK(out.s(0) == doctest::Approx(4.0));
    CHECK(out.s(2) == doctest::Approx(-3.0));
}

TEST_CASE("transition matrix matches the kronecker block form") {
    const Eigen::Matrix4d f = kf_transition(1.0);
    // I2 kron [[1,1],[0,1]] over the [x, xdot, y, ydot] ordering
    Eigen::Matrix4d expect;
    expect << 1, 1, 0, 0,
              0, 1, 0, 0,
              0, 0, 1, 1,
              0, 0, 0, 1;
    CHECK((f - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("measuring the prediction exactly is a fixed point") {
    KalmanState st = kf_init({2, 5});
    st.s(1) = 1.0;
    const KfConfig cfg{1.0, 0.1, 0.04 * Eigen::Matrix2d::Identity()};
    const KalmanState pred = predict(st, cfg);
    const Point2 meas{pred.s(0), pred.s(2)};
    const auto [post, rec] = update(pred, meas, cfg);
    CHECK(rec.beta == doctest::Approx(0.0));
    CHECK(rec.delta == doctest::Approx(0.0));
    CHECK(post.s(0) == doctest::Approx(pred.s(0)));
    CHECK(post.s(2) == doctest::Approx(pred.s(2)));
}

TEST_CASE("identity innovation covariance reduces beta to the squared norm") {
    KalmanState pred;
    pred.s << 0, 0, 0, 0;
    pred.P.setZero();
    pred.P(0, 0) = 0.5;
    pred.P(2, 2) = 0.5;
    const KfConfig cfg{1.0, 0.0, 0.5 * Eigen::Matrix2d::Identity()};
    const auto [post, rec] = update(pred, {3, 4}, cfg);
    CHECK(rec.G(0, 0) == doctest::Approx(1.0));
    CHECK(rec.G(1, 1) == doctest::Approx(1.0));
    CHECK(rec.beta == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(rec.delta == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("five scripted steps match the scalar reference per axis") {
    const double q = 0.3;
    const double vx = 0.2, vy = 0.35;
    Eigen::Matrix2d v = Eigen::Matrix2d::Zero();
    v(0, 0) = vx;
    v(1, 1) = vy;
    const KfConfig cfg{1.0, q, v};

    const Point2 z[5] = {{1.1, 2.2}, {2.05, 3.9}, {3.2, 6.1}, {3.9, 8.05}, {5.1, 9.9}};

    KalmanState st = kf_init({1.0, 2.0});
    ScalarKf rx, ry;
    rx.s[0] = 1.0;
    ry.s[0] = 2.0;

    for (int k = 0; k < 5; ++k) {
        const KalmanState pred = predict(st, cfg);
        rx.predict(1.0, q);
        ry.predict(1.0, q);
        const auto [post, rec] = update(pred, z[k], cfg);
        const double nis = rx.update(z[k].x, vx) + ry.update(z[k].y, vy);

        CHECK(post.s(0) == doctest::Approx(rx.s[0]).epsilon(1e-9));
        CHECK(post.s(1) == doctest::Approx(rx.s[1]).epsilon(1e-9));
        CHECK(post.s(2) == doctest::Approx(ry.s[0]).epsilon(1e-9));
        CHECK(post.s(3) == doctest::Approx(ry.s[1]).epsilon(1e-9));
        CHECK(std::abs(post.P(0, 0) - rx.p[0][0]) < 1e-9);
        CHECK(std::abs(post.P(1, 1) - rx.p[1][1]) < 1e-9);
        CHECK(std::abs(post.P(2, 2) - ry.p[0][0]) < 1e-9);
        CHECK(std::abs(post.P(3, 3) - ry.p[1][1]) < 1e-9);
        CHECK(rec.beta == doctest::Approx(nis).epsilon(1e-9));
        st = post;
    }
}

TEST_CASE("nis over model-matched simulation averages to two") {
    const double q = 0.2;
    const Eigen::Matrix2d v = 0.09 * Eigen::Matrix2d::Identity();
    const KfConfig cfg{1.0, q, v};

    std::mt19937_64 rng(314);
    std::normal_distribution<double> n01(0.0, 1.0);

    // Truth follows the same CV model with matching process noise.
    Eigen::Vector4d truth;
    truth << 0, 1, 0, 0.5;
    const Eigen::Matrix4d f = kf_transition(1.0);
    const Eigen::Matrix4d qm = kf_process_noise(1.0, q);
    const Eigen::Matrix4d l = qm.llt().matrixL();

    KalmanState st = kf_init({truth(0), truth(2)});
    std::vector<InnovationRecord> records;
    for (int k = 0; k < 1000; ++k) {
        Eigen::Vector4d w;
        for (int i = 0; i < 4; ++i) w(i) = n01(rng);
        truth = f * truth + l * w;
        const Point2 meas{truth(0) + 0.3 * n01(rng), truth(2) + 0.3 * n01(rng)};
        const KalmanState pred = predict(st, cfg);
        const auto [post, rec] = update(pred, meas, cfg);
        records.push_back(rec);
        st = post;

        // covariance stays symmetric PSD
        CHECK((post.P - post.P.transpose()).cwiseAbs().maxCoeff() <= 1e-9);
        const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(post.P);
        CHECK(es.eigenvalues().minCoeff() >= -1e-9);

        // delta is the innovation norm by construction
        CHECK(std::abs(rec.delta - rec.y_hat.norm()) <= 1e-12);
    }
    const double mean_beta = nis_consistency(records);
    CHECK(mean_beta > 1.5);
    CHECK(mean_beta < 2.5);
}

TEST_CASE("mean nis helpers") {
    InnovationRecord a;
    a.beta = 2.0;
    InnovationRecord b;
    b.beta = 2.0;
    CHECK(nis_consistency({a, b}) == doctest::Approx(2.0));
    InnovationRecord c;
    c.beta = 0.7;
    CHECK(nis_consistency({c}) == doctest::Approx(0.7));
    CHECK_THROWS_AS(nis_consistency({}), InsufficientDataError);
}

TEST_CASE("degenerate innovation covariance is reported") {
    KalmanState pred;
    pred.P.setZero();
    const KfConfig cfg{1.0, 0.0, Eigen::Matrix2d::Zero()};
    CHECK_THROWS_AS(update(pred, {0, 0}, cfg), FilterDegenerateError);
}
