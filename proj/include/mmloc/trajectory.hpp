#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mmloc/common.hpp"
#include "mmloc/geometry.hpp"

namespace mmloc {

struct TrackSample {
    double t{0.0};
    Point2 position{};
};

struct Trajectory {
    std::vector<TrackSample> points;
    double dt{1.0};
};

// n points uniform over section.bounds intersected with the room interior.
std::vector<Point2> generate_training_locations(const Section& section, const RoomPolygon& room,
                                                int n, std::mt19937_64& rng);

// Constant-speed interpolation along the waypoint polyline, one sample every
// dt seconds. speed_jitter_std > 0 scales each step by a truncated Gaussian
// factor in [0.05, 1], so steps only get shorter and the speed bound holds.
Trajectory generate_test_track(const std::vector<Point2>& waypoints, double speed, double dt,
                               const RoomPolygon& room, double speed_jitter_std = 0.0,
                               std::uint64_t jitter_seed = 0);

}  // namespace mmloc
