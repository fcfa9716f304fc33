#include "mmloc/trajectory.hpp"

#include <algorithm>
#include <cmath>

#include "mmloc/errors.hpp"

namespace mmloc {

std::vector<Point2> generate_training_locations(const Section& section, const RoomPolygon& room,
                                                int n, std::mt19937_64& rng) {
    if (n < 1) throw InvalidSceneError("training location count must be >= 1");
    const Rect& b = section.bounds;
    if (b.width() <= 0.0 || b.height() <= 0.0)
        throw InvalidSceneError("section " + std::to_string(section.id) + " has empty bounds");

    std::uniform_real_distribution<double> ux(b.min.x, b.max.x);
    std::uniform_real_distribution<double> uy(b.min.y, b.max.y);
    std::vector<Point2> out;
    out.reserve(static_cast<std::size_t>(n));
    const long max_attempts = 10000L * n + 10000L;
    long attempts = 0;
    while (static_cast<int>(out.size()) < n) {
        if (++attempts > max_attempts)
            throw InvalidSceneError("section " + std::to_string(section.id) +
                                    " does not intersect the room interior");
        const Point2 p{ux(rng), uy(rng)};
        if (room.strictly_inside(p)) out.push_back(p);
    }
    return out;
}

Trajectory generate_test_track(const std::vector<Point2>& waypoints, double speed, double dt,
                               const RoomPolygon& room, double speed_jitter_std,
                               std::uint64_t jitter_seed) {
    if (waypoints.empty()) throw InvalidTrackError("track needs at least one waypoint");
    if (speed <= 0.0) throw InvalidTrackError("track speed must be positive");
    if (dt <= 0.0) throw InvalidTrackError("track dt must be positive");
    for (const Point2& w : waypoints) {
        if (!room.contains(w)) throw InvalidTrackError("waypoint outside the room");
    }
    for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
        if (!line_of_sight(room, waypoints[i], waypoints[i + 1]))
            throw InvalidTrackError("waypoints " + std::to_string(i) + " and " +
                                    std::to_string(i + 1) + " are blocked by a wall");
    }

    std::vector<double> cumlen(waypoints.size(), 0.0);
    for (std::size_t i = 1; i < waypoints.size(); ++i) {
        cumlen[i] = cumlen[i - 1] + distance(waypoints[i - 1], waypoints[i]);
    }
    const double total = cumlen.back();

    const auto point_at = [&](double s) -> Point2 {
        s = std::clamp(s, 0.0, total);
        const auto it = std::upper_bound(cumlen.begin(), cumlen.end(), s);
        std::size_t i = static_cast<std::size_t>(std::distance(cumlen.begin(), it));
        if (i == 0) return waypoints.front();
        if (i >= waypoints.size()) return waypoints.back();
        const double seg = cumlen[i] - cumlen[i - 1];
        const double f = seg > 0.0 ? (s - cumlen[i - 1]) / seg : 0.0;
        return waypoints[i - 1] + f * (waypoints[i] - waypoints[i - 1]);
    };

    std::mt19937_64 rng(jitter_seed);
    std::normal_distribution<double> jitter(1.0, speed_jitter_std);

    Trajectory traj;
    traj.dt = dt;
    double s = 0.0;
    int k = 0;
    while (s <= total + 1e-9) {
        traj.points.push_back(TrackSample{k * dt, point_at(s)});
        double factor = 1.0;
        // Lower clamp keeps the walk advancing; upper clamp keeps the speed bound.
        if (speed_jitter_std > 0.0) factor = std::clamp(jitter(rng), 0.05, 1.0);
        s += speed * dt * factor;
        ++k;
        if (total == 0.0) break;
    }
    return traj;
}

}  // namespace mmloc
