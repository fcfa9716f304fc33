#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mmloc/errors.hpp"
#include "mmloc/measurements.hpp"

using namespace mmloc;

namespace {

AoaSet set_from(std::initializer_list<AoaEntry> entries) {
    AoaSet s;
    s.entries = entries;
    return s;
}

}  // namespace

TEST_CASE("zero sigma leaves angles untouched") {
    const AoaSet in = set_from({{0, 0.1}, {3, -2.0}, {7, 3.0}});
    std::mt19937_64 rng(1);
    const AoaSet out = perturb_aoa(in, NoiseConfig{0.0, 0}, rng);
    REQUIRE(out.entries.size() == in.entries.size());
    for (std::size_t i = 0; i < in.entries.size(); ++i) {
        CHECK(out.entries[i].anchor_id == in.entries[i].anchor_id);
        CHECK(out.entries[i].angle == in.entries[i].angle);
    }
}

TEST_CASE("noise sample std matches 5 degrees") {
    const double sigma = deg2rad(5.0);
    std::mt19937_64 rng(99);
    const AoaSet in = set_from({{0, 0.0}});
    double sum = 0.0, sum2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const AoaSet out = perturb_aoa(in, NoiseConfig{sigma, 0}, rng);
        const double d = wrap_angle(out.entries[0].angle - in.entries[0].angle);
        sum += d;
        sum2 += d * d;
    }
    const double mean = sum / n;
    const double std_dev = std::sqrt(sum2 / n - mean * mean);
    CHECK(std_dev > deg2rad(4.9));
    CHECK(std_dev < deg2rad(5.1));
}

TEST_CASE("fixed seed reproduces noise bit for bit") {
    const AoaSet in = set_from({{0, 0.3}, {1, -1.2}, {5, 2.9}});
    std::mt19937_64 rng_a(1234), rng_b(1234);
    const AoaSet a = perturb_aoa(in, NoiseConfig{deg2rad(5.0), 0}, rng_a);
    const AoaSet b = perturb_aoa(in, NoiseConfig{deg2rad(5.0), 0}, rng_b);
    for (std::size_t i = 0; i < a.entries.size(); ++i)
        CHECK(a.entries[i].angle == b.entries[i].angle);
}

TEST_CASE("adoa subtraction with lowest-id reference") {
    const AoaSet in = set_from({{0, deg2rad(10)}, {1, deg2rad(30)}, {2, deg2rad(75)}});
    const AdoaVector v = compute_adoa(in, 3);
    CHECK(v.reference_anchor == 0);
    CHECK_FALSE(v.mask[0]);
    CHECK(v.values[1] == doctest::Approx(deg2rad(20)).epsilon(1e-12));
    CHECK(v.values[2] == doctest::Approx(deg2rad(65)).epsilon(1e-12));
}

TEST_CASE("adoa is invariant to a global rotation") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ua(-kPi, kPi);
    for (int trial = 0; trial < 200; ++trial) {
        AoaSet base;
        const int n = 2 + static_cast<int>(rng() % 6);
        for (int i = 0; i < n; ++i) base.entries.push_back({i, ua(rng)});
        const double c = ua(rng);
        AoaSet rotated = base;
        for (AoaEntry& e : rotated.entries) e.angle = wrap_angle(e.angle + c);

        const AdoaVector v0 = compute_adoa(base, static_cast<std::size_t>(n));
        const AdoaVector v1 = compute_adoa(rotated, static_cast<std::size_t>(n));
        REQUIRE(v0.size() == v1.size());
        for (std::size_t i = 0; i < v0.size(); ++i) {
            CHECK(v0.mask[i] == v1.mask[i]);
            if (v0.mask[i])
                CHECK(std::abs(wrap_angle(v0.values[i] - v1.values[i])) < 1e-12);
        }
    }
}

TEST_CASE("wrap case near the pi boundary") {
    const AoaSet in = set_from({{0, deg2rad(-179)}, {1, deg2rad(179)}});
    const AdoaVector v = compute_adoa(in, 2);
    // 179 - (-179) = 358 wraps to -2 degrees
    CHECK(v.values[1] == doctest::Approx(deg2rad(-2)).epsilon(1e-9));
}

TEST_CASE("wrap convention covers the full circle") {
    for (double theta : {kPi, -kPi, 3 * kPi, -3 * kPi, 0.0, 6.5, -6.5}) {
        const double w = wrap_angle(theta);
        CHECK(w > -kPi);
        CHECK(w <= kPi);
    }
    CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
    CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
}

TEST_CASE("fewer than two anchors is an error") {
    const AoaSet one = set_from({{0, 0.5}});
    CHECK_THROWS_AS(compute_adoa(one, 4), InsufficientMeasurementsError);
}

TEST_CASE("mask and values stay consistent") {
    const AoaSet in = set_from({{1, 0.5}, {4, 1.0}});
    const AdoaVector v = compute_adoa(in, 6);
    CHECK(v.visible_count() == 1);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v.mask[i]) CHECK(v.values[i] == 0.0);
    }
    AdoaVector bad = v;
    bad.values[0] = 0.3;  // masked slot must stay sentinel
    CHECK_THROWS_AS(validate_adoa(bad), ShapeError);
}

TEST_CASE("encoding: all-masked is all-zero, visible values pass through") {
    AdoaVector v;
    v.values.assign(5, 0.0);
    v.mask.assign(5, 0);
    v.reference_anchor = 0;
    const std::vector<double> zero = encode_input(v);
    for (double x : zero) CHECK(x == 0.0);

    const AoaSet in = set_from({{0, 0.2}, {2, 1.4}, {3, -0.7}});
    const AdoaVector w = compute_adoa(in, 5);
    const std::vector<double> enc = encode_input(w);
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w.mask[i])
            CHECK(std::abs(enc[i] - w.values[i]) < 1e-12);
        else
            CHECK(enc[i] == 0.0);
    }
}
