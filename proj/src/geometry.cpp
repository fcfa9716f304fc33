#include "mmloc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mmloc/errors.hpp"

namespace mmloc {

namespace {

constexpr double kParamTol = 1e-12;

double point_segment_distance(const Point2& p, const Point2& a, const Point2& b) {
    const Point2 d = b - a;
    const double len2 = dot(d, d);
    if (len2 == 0.0) return distance(p, a);
    const double t = std::clamp(dot(p - a, d) / len2, 0.0, 1.0);
    return distance(p, a + t * d);
}

// Parameters t on (a1,a2) where the segment touches (b1,b2). Collinear
// overlaps contribute both overlap endpoints.
void collect_contact_params(const Point2& a1, const Point2& a2, const Point2& b1,
                            const Point2& b2, std::vector<double>& out) {
    const Point2 d1 = a2 - a1;
    const Point2 d2 = b2 - b1;
    const double denom = cross(d1, d2);
    const double scale = std::max({1.0, norm(d1), norm(d2)});
    if (std::abs(denom) > kParamTol * scale * scale) {
        const Point2 w = b1 - a1;
        const double t = cross(w, d2) / denom;
        const double u = cross(w, d1) / denom;
        if (t >= -kParamTol && t <= 1.0 + kParamTol && u >= -kParamTol && u <= 1.0 + kParamTol) {
            out.push_back(std::clamp(t, 0.0, 1.0));
        }
        return;
    }
    // Parallel; only collinear segments can touch.
    if (std::abs(cross(b1 - a1, d1)) > kParamTol * scale * scale) return;
    const double len2 = dot(d1, d1);
    if (len2 == 0.0) return;
    double t0 = dot(b1 - a1, d1) / len2;
    double t1 = dot(b2 - a1, d1) / len2;
    if (t0 > t1) std::swap(t0, t1);
    t0 = std::max(t0, 0.0);
    t1 = std::min(t1, 1.0);
    if (t0 <= t1 + kParamTol) {
        out.push_back(std::clamp(t0, 0.0, 1.0));
        out.push_back(std::clamp(t1, 0.0, 1.0));
    }
}

bool segments_properly_cross(const Point2& a1, const Point2& a2, const Point2& b1,
                             const Point2& b2) {
    const Point2 d1 = a2 - a1;
    const Point2 d2 = b2 - b1;
    const double denom = cross(d1, d2);
    const double scale = std::max({1.0, norm(d1), norm(d2)});
    if (std::abs(denom) <= kParamTol * scale * scale) return false;
    const Point2 w = b1 - a1;
    const double t = cross(w, d2) / denom;
    const double u = cross(w, d1) / denom;
    return t > kParamTol && t < 1.0 - kParamTol && u > kParamTol && u < 1.0 - kParamTol;
}

bool segments_collinear_overlap(const Point2& a1, const Point2& a2, const Point2& b1,
                                const Point2& b2) {
    const Point2 d1 = a2 - a1;
    const double scale = std::max({1.0, norm(d1), norm(b2 - b1)});
    if (std::abs(cross(d1, b2 - b1)) > kParamTol * scale * scale) return false;
    if (std::abs(cross(b1 - a1, d1)) > kParamTol * scale * scale) return false;
    const double len2 = dot(d1, d1);
    if (len2 == 0.0) return false;
    double t0 = dot(b1 - a1, d1) / len2;
    double t1 = dot(b2 - a1, d1) / len2;
    if (t0 > t1) std::swap(t0, t1);
    return t0 < 1.0 - kParamTol && t1 > kParamTol;
}

}  // namespace

RoomPolygon::RoomPolygon(std::vector<Point2> vertices) : vertices_(std::move(vertices)) {
    const std::size_t n = vertices_.size();
    if (n < 3) throw InvalidGeometryError("room polygon needs at least 3 vertices");
    for (const Point2& v : vertices_) {
        if (!std::isfinite(v.x) || !std::isfinite(v.y))
            throw InvalidGeometryError("room polygon vertex is not finite");
    }

    walls_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Point2& a = vertices_[i];
        const Point2& b = vertices_[(i + 1) % n];
        if (a.x == b.x && a.y == b.y)
            throw InvalidGeometryError("room polygon has a zero-length wall");
        walls_.push_back(Wall{a, b, static_cast<int>(i)});
    }

    double twice_area = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        twice_area += cross(vertices_[i], vertices_[(i + 1) % n]);
    }
    area_ = 0.5 * twice_area;
    if (area_ <= 0.0)
        throw InvalidGeometryError("room polygon vertices must be counterclockwise");

    // Simplicity: non-adjacent walls must not cross or overlap.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
            if (adjacent) continue;
            const Wall& wi = walls_[i];
            const Wall& wj = walls_[j];
            if (segments_properly_cross(wi.a, wi.b, wj.a, wj.b) ||
                segments_collinear_overlap(wi.a, wi.b, wj.a, wj.b))
                throw InvalidGeometryError("room polygon is self-intersecting");
        }
    }

    bbox_.min = bbox_.max = vertices_[0];
    for (const Point2& v : vertices_) {
        bbox_.min.x = std::min(bbox_.min.x, v.x);
        bbox_.min.y = std::min(bbox_.min.y, v.y);
        bbox_.max.x = std::max(bbox_.max.x, v.x);
        bbox_.max.y = std::max(bbox_.max.y, v.y);
    }
}

double RoomPolygon::distance_to_boundary(const Point2& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const Wall& w : walls_) {
        best = std::min(best, point_segment_distance(p, w.a, w.b));
    }
    return best;
}

bool RoomPolygon::contains(const Point2& p) const {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
    if (p.x < bbox_.min.x - kBoundaryTol || p.x > bbox_.max.x + kBoundaryTol ||
        p.y < bbox_.min.y - kBoundaryTol || p.y > bbox_.max.y + kBoundaryTol)
        return false;
    if (distance_to_boundary(p) <= kBoundaryTol) return true;
    bool inside = false;
    const std::size_t n = vertices_.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point2& vi = vertices_[i];
        const Point2& vj = vertices_[j];
        if ((vi.y > p.y) != (vj.y > p.y)) {
            const double xint = vi.x + (p.y - vi.y) * (vj.x - vi.x) / (vj.y - vi.y);
            if (p.x < xint) inside = !inside;
        }
    }
    return inside;
}

bool RoomPolygon::strictly_inside(const Point2& p) const {
    return contains(p) && distance_to_boundary(p) > kBoundaryTol;
}

Point2 mirror_point(const Point2& p, const Wall& w) {
    const Point2 d = w.b - w.a;
    const double len2 = dot(d, d);
    if (len2 == 0.0) throw InvalidGeometryError("cannot mirror across a zero-length wall");
    const double t = dot(p - w.a, d) / len2;
    const Point2 foot = w.a + t * d;
    return foot + (foot - p);
}

std::vector<Anchor> generate_virtual_anchors(const RoomPolygon& room,
                                             const std::vector<Point2>& aps) {
    for (std::size_t i = 0; i < aps.size(); ++i) {
        if (!room.strictly_inside(aps[i]))
            throw InvalidSceneError("AP " + std::to_string(i) + " is not strictly inside the room");
    }
    std::vector<Anchor> anchors;
    anchors.reserve(aps.size() * (1 + room.walls().size()));
    int next_id = 0;
    for (std::size_t i = 0; i < aps.size(); ++i) {
        anchors.push_back(Anchor{next_id++, AnchorKind::Physical, aps[i],
                                 static_cast<int>(i), std::nullopt});
    }
    for (std::size_t i = 0; i < aps.size(); ++i) {
        for (const Wall& w : room.walls()) {
            anchors.push_back(Anchor{next_id++, AnchorKind::Virtual, mirror_point(aps[i], w),
                                     static_cast<int>(i), w.id});
        }
    }
    return anchors;
}

bool line_of_sight(const RoomPolygon& room, const Point2& a, const Point2& b) {
    if (!std::isfinite(a.x) || !std::isfinite(a.y) || !std::isfinite(b.x) || !std::isfinite(b.y))
        return false;
    if (!room.contains(a) || !room.contains(b)) return false;
    if (a.x == b.x && a.y == b.y) return true;

    // Split the segment at every wall contact and require each piece's
    // midpoint to stay inside.
    std::vector<double> ts{0.0, 1.0};
    for (const Wall& w : room.walls()) {
        collect_contact_params(a, b, w.a, w.b, ts);
    }
    std::sort(ts.begin(), ts.end());
    const Point2 d = b - a;
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        if (ts[i + 1] - ts[i] < kParamTol) continue;
        const double tm = 0.5 * (ts[i] + ts[i + 1]);
        if (!room.contains(a + tm * d)) return false;
    }
    return true;
}

std::optional<Point2> segment_intersection(const Point2& a1, const Point2& a2,
                                           const Point2& b1, const Point2& b2) {
    std::vector<double> ts;
    collect_contact_params(a1, a2, b1, b2, ts);
    if (ts.empty()) return std::nullopt;
    return a1 + ts.front() * (a2 - a1);
}

std::optional<Point2> reflection_point(const RoomPolygon& room, const Anchor& va,
                                       const std::vector<Anchor>& anchors,
                                       const Point2& client) {
    if (va.kind != AnchorKind::Virtual || !va.mirror_wall.has_value()) return std::nullopt;
    const Wall& wall = room.walls().at(static_cast<std::size_t>(*va.mirror_wall));
    const Point2& ap = anchors.at(static_cast<std::size_t>(va.parent_ap)).position;

    const Point2 d = va.position - client;
    const Point2 dw = wall.b - wall.a;
    const double denom = cross(d, dw);
    const double scale = std::max({1.0, norm(d), norm(dw)});
    if (std::abs(denom) <= kParamTol * scale * scale) return std::nullopt;
    const Point2 w0 = wall.a - client;
    const double t = cross(w0, dw) / denom;  // along client -> VA
    const double u = cross(w0, d) / denom;   // along the wall
    if (t <= kParamTol || t >= 1.0 - kParamTol) return std::nullopt;
    if (u < -kParamTol || u > 1.0 + kParamTol) return std::nullopt;
    const Point2 q = wall.a + std::clamp(u, 0.0, 1.0) * dw;

    if (!line_of_sight(room, client, q)) return std::nullopt;
    if (!line_of_sight(room, q, ap)) return std::nullopt;
    return q;
}

std::vector<VisibleAnchor> visible_anchors(const RoomPolygon& room,
                                           const std::vector<Anchor>& anchors,
                                           const Point2& client) {
    if (!room.strictly_inside(client))
        throw InvalidQueryError("visibility query for a client outside the room");
    std::vector<VisibleAnchor> out;
    for (const Anchor& anchor : anchors) {
        bool visible = false;
        if (anchor.kind == AnchorKind::Physical) {
            visible = line_of_sight(room, anchor.position, client);
        } else {
            visible = reflection_point(room, anchor, anchors, client).has_value();
        }
        if (visible) {
            const Point2 d = anchor.position - client;
            out.push_back(VisibleAnchor{anchor.id, wrap_angle(std::atan2(d.y, d.x))});
        }
    }
    std::sort(out.begin(), out.end(),
              [](const VisibleAnchor& l, const VisibleAnchor& r) { return l.anchor_id < r.anchor_id; });
    return out;
}

}  // namespace mmloc
