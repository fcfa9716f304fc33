#pragma once

#include <random>
#include <vector>

#include "mmloc/common.hpp"
#include "mmloc/geometry.hpp"

namespace mmloc::testing {

// U-shaped room: 5 m and 6 m wide vertical arms of height 18 joined by a
// 20 m wide, 5 m tall base. 8 walls.
inline RoomPolygon u_room() {
    return RoomPolygon({{0, 0},
                        {20, 0},
                        {20, 18},
                        {14, 18},
                        {14, 5},
                        {5, 5},
                        {5, 18},
                        {0, 18}});
}

inline RoomPolygon unit_square() {
    return RoomPolygon({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
}

inline RoomPolygon box(double w, double h) {
    return RoomPolygon({{0, 0}, {w, 0}, {w, h}, {0, h}});
}

inline Point2 random_interior_point(const RoomPolygon& room, std::mt19937_64& rng) {
    const Rect b = room.bounding_box();
    std::uniform_real_distribution<double> ux(b.min.x, b.max.x);
    std::uniform_real_distribution<double> uy(b.min.y, b.max.y);
    for (;;) {
        const Point2 p{ux(rng), uy(rng)};
        if (room.strictly_inside(p)) return p;
    }
}

}  // namespace mmloc::testing
