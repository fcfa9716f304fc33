#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "mmloc/bootstrap.hpp"
#include "mmloc/errors.hpp"
#include "mmloc/measurements.hpp"
#include "test_helpers.hpp"

using namespace mmloc;
using mmloc::testing::box;
using mmloc::testing::random_interior_point;
using mmloc::testing::u_room;

namespace {

AdoaVector noiseless_adoa(const RoomPolygon& room, const std::vector<Anchor>& anchors,
                          const Point2& client) {
    const AoaSet aoas = make_aoa_set(visible_anchors(room, anchors, client));
    return compute_adoa(aoas, anchors.size());
}

LabelSet labels_at(std::initializer_list<Point2> pts) {
    LabelSet ls;
    ls.section_id = 0;
    int i = 0;
    for (const Point2& p : pts) ls.labels.push_back(Label{p, 0.0, i++});
    return ls;
}

}  // namespace

TEST_CASE("objective vanishes at the true position") {
    const RoomPolygon room = box(10, 8);
    const auto anchors = generate_virtual_anchors(room, {{2, 2}, {8, 6}});
    std::mt19937_64 rng(21);
    for (int i = 0; i < 50; ++i) {
        const Point2 truth = random_interior_point(room, rng);
        const AdoaVector v = noiseless_adoa(room, anchors, truth);
        if (v.visible_count() < 3) continue;
        CHECK(adoa_objective(truth, v, anchors) < 1e-10);
    }
}

TEST_CASE("noiseless localization recovers the position within 1 cm") {
    const RoomPolygon room = box(10, 8);
    const auto anchors = generate_virtual_anchors(room, {{2, 2}, {8, 6}});
    std::mt19937_64 rng(22);
    for (int i = 0; i < 30; ++i) {
        const Point2 truth = random_interior_point(room, rng);
        const AdoaVector v = noiseless_adoa(room, anchors, truth);
        if (v.visible_count() < 3) continue;
        const LocalizeResult r = adoa_localize(v, anchors, room);
        CHECK(distance(r.position, truth) < 0.01);
        CHECK_FALSE(r.degraded);
    }
}

TEST_CASE("refinement matches a 1 cm brute-force grid") {
    const RoomPolygon room = box(10, 8);
    const auto anchors = generate_virtual_anchors(room, {{3, 2}, {8, 6}, {5.5, 1.2}});
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const Point2 truth = random_interior_point(room, rng);
        const AdoaVector v = noiseless_adoa(room, anchors, truth);
        if (v.visible_count() < 3) continue;

        Point2 best{};
        double best_val = std::numeric_limits<double>::infinity();
        for (double y = 0.01; y < 8.0; y += 0.01) {
            for (double x = 0.01; x < 10.0; x += 0.01) {
                const double val = adoa_objective({x, y}, v, anchors);
                if (val < best_val) {
                    best_val = val;
                    best = {x, y};
                }
            }
        }
        const LocalizeResult r = adoa_localize(v, anchors, room);
        CHECK(distance(r.position, best) < 0.02);
    }
}

TEST_CASE("too few adoa entries fail") {
    const RoomPolygon room = box(10, 8);
    const auto anchors = generate_virtual_anchors(room, {{3, 2}});
    AdoaVector v;
    v.values.assign(anchors.size(), 0.0);
    v.mask.assign(anchors.size(), 0);
    v.reference_anchor = 0;
    v.mask[1] = 1;
    v.mask[2] = 1;
    CHECK_THROWS_AS(adoa_localize(v, anchors, room), InsufficientMeasurementsError);
}

TEST_CASE("noisy localization never leaves the room") {
    const RoomPolygon room = u_room();
    const auto anchors = generate_virtual_anchors(
        room, {{2.5, 16.5}, {1.0, 9.0}, {2.5, 1.0}, {9.5, 2.5}, {13.5, 1.0}, {17.0, 1.0}, {17.0, 16.5}});
    std::mt19937_64 rng(24);
    const NoiseConfig noise{deg2rad(5.0), 0};
    for (int i = 0; i < 40; ++i) {
        const Point2 truth = random_interior_point(room, rng);
        const AoaSet aoas = make_aoa_set(visible_anchors(room, anchors, truth));
        if (aoas.entries.size() < 4) continue;
        const AoaSet noisy = perturb_aoa(aoas, noise, rng);
        const LocalizeResult r = adoa_localize(compute_adoa(noisy, anchors.size()), anchors, room);
        CHECK(room.contains(r.position));
    }
}

TEST_CASE("label set construction keeps one label per usable point") {
    const RoomPolygon room = box(10, 8);
    const auto anchors = generate_virtual_anchors(room, {{2, 2}, {8, 6}});
    std::mt19937_64 rng(25);
    std::vector<AdoaVector> data;
    for (int i = 0; i < 24; ++i)
        data.push_back(noiseless_adoa(room, anchors, random_interior_point(room, rng)));
    const LabelSet ls = build_label_set(3, data, anchors, room);
    CHECK(ls.section_id == 3);
    CHECK(ls.labels.size() == data.size());
    CHECK(ls.dropped == 0);

    // parallel fan-out must not change anything
    const LabelSet par = build_label_set(3, data, anchors, room, {}, 4);
    REQUIRE(par.labels.size() == ls.labels.size());
    for (std::size_t i = 0; i < ls.labels.size(); ++i) {
        CHECK(par.labels[i].point_index == ls.labels[i].point_index);
        CHECK(distance(par.labels[i].position, ls.labels[i].position) == 0.0);
        CHECK(par.labels[i].residual == ls.labels[i].residual);
    }
}

TEST_CASE("a section of starved measurements fails the bootstrap") {
    const RoomPolygon room = box(10, 8);
    const auto anchors = generate_virtual_anchors(room, {{2, 2}});
    AdoaVector starved;
    starved.values.assign(anchors.size(), 0.0);
    starved.mask.assign(anchors.size(), 0);
    starved.reference_anchor = 0;
    starved.mask[1] = 1;
    starved.values[1] = 0.4;
    starved.mask[2] = 1;
    starved.values[2] = -0.2;
    std::vector<AdoaVector> data(10, starved);
    CHECK_THROWS_AS(build_label_set(0, data, anchors, room), BootstrapFailureError);
}

TEST_CASE("degenerate labels regularize to epsilon identity") {
    const LabelSet ls = labels_at({{2, 3}, {2, 3}, {2, 3}, {2, 3}});
    const LabelStats st = compute_label_stats(ls);
    CHECK(st.mu(0) == doctest::Approx(2.0));
    CHECK(st.mu(1) == doctest::Approx(3.0));
    CHECK(st.sigma(0, 0) == doctest::Approx(kStatsEpsilon));
    CHECK(st.sigma(1, 1) == doctest::Approx(kStatsEpsilon));
    CHECK(st.sigma(0, 1) == doctest::Approx(0.0));
    CHECK(mahalanobis({2, 3}, st) == doctest::Approx(0.0));
}

TEST_CASE("uniform rectangle labels match the analytic covariance") {
    std::mt19937_64 rng(26);
    const double a = 6.0, b = 2.0;
    std::uniform_real_distribution<double> ux(0.0, a), uy(0.0, b);
    LabelSet ls;
    ls.section_id = 0;
    for (int i = 0; i < 10000; ++i)
        ls.labels.push_back(Label{{ux(rng), uy(rng)}, 0.0, i});
    const LabelStats st = compute_label_stats(ls);
    CHECK(st.sigma(0, 0) == doctest::Approx(a * a / 12.0).epsilon(0.05));
    CHECK(st.sigma(1, 1) == doctest::Approx(b * b / 12.0).epsilon(0.05));
}

TEST_CASE("stats are invariant to label order") {
    LabelSet ls = labels_at({{1, 1}, {4, 2}, {2, 5}, {0, 3}, {3, 0}});
    const LabelStats st1 = compute_label_stats(ls);
    std::reverse(ls.labels.begin(), ls.labels.end());
    const LabelStats st2 = compute_label_stats(ls);
    CHECK(st1.mu(0) == doctest::Approx(st2.mu(0)).epsilon(1e-12));
    CHECK(st1.sigma(0, 0) == doctest::Approx(st2.sigma(0, 0)).epsilon(1e-12));
    CHECK(st1.sigma(0, 1) == doctest::Approx(st2.sigma(0, 1)).epsilon(1e-12));
}

TEST_CASE("too few labels fail") {
    const LabelSet ls = labels_at({{1, 1}, {2, 2}});
    CHECK_THROWS_AS(compute_label_stats(ls), InsufficientDataError);
}

TEST_CASE("stats sigma stays invertible and centered") {
    std::mt19937_64 rng(27);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
        LabelSet ls;
        ls.section_id = 0;
        const int n = 3 + static_cast<int>(rng() % 40);
        for (int i = 0; i < n; ++i) ls.labels.push_back(Label{{u(rng), u(rng)}, 0.0, i});
        const LabelStats st = compute_label_stats(ls);
        CHECK(st.sigma.determinant() > 0.0);
        CHECK(mahalanobis({st.mu(0), st.mu(1)}, st) == doctest::Approx(0.0));
    }
}
