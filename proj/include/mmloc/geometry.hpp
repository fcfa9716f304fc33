#pragma once

#include <optional>
#include <vector>

#include "mmloc/common.hpp"

namespace mmloc {

struct Wall {
    Point2 a{};
    Point2 b{};
    int id{0};
};

// Simple polygon with counterclockwise vertices. Walls are the boundary
// edges in vertex order, including the closing edge. Points within
// kBoundaryTol of a wall count as inside.
class RoomPolygon {
  public:
    static constexpr double kBoundaryTol = 1e-9;

    explicit RoomPolygon(std::vector<Point2> vertices);

    const std::vector<Point2>& vertices() const { return vertices_; }
    const std::vector<Wall>& walls() const { return walls_; }

    // Closed interior (boundary tolerance applies).
    bool contains(const Point2& p) const;
    // Interior points farther than kBoundaryTol from every wall.
    bool strictly_inside(const Point2& p) const;

    double distance_to_boundary(const Point2& p) const;
    Rect bounding_box() const { return bbox_; }
    double area() const { return area_; }

  private:
    std::vector<Point2> vertices_;
    std::vector<Wall> walls_;
    Rect bbox_{};
    double area_{0.0};
};

struct Section {
    int id{0};
    Rect bounds{};
};

enum class AnchorKind { Physical, Virtual };

struct Anchor {
    int id{0};
    AnchorKind kind{AnchorKind::Physical};
    Point2 position{};
    int parent_ap{0};               // self index for physical anchors
    std::optional<int> mirror_wall; // present iff virtual
};

// Reflection of p across the infinite line through w.
Point2 mirror_point(const Point2& p, const Wall& w);

// Physical anchors first (input order), then one virtual anchor per
// (AP, wall) pair ordered by (ap index, wall id). Ids are dense 0..A-1.
std::vector<Anchor> generate_virtual_anchors(const RoomPolygon& room,
                                             const std::vector<Point2>& aps);

// True iff the open segment (a,b) stays in the closed room interior and
// crosses no wall.
bool line_of_sight(const RoomPolygon& room, const Point2& a, const Point2& b);

// Intersection point of segments (a1,a2) and (b1,b2), if any. For collinear
// overlaps an arbitrary point of the overlap is returned.
std::optional<Point2> segment_intersection(const Point2& a1, const Point2& a2,
                                           const Point2& b1, const Point2& b2);

// Point q on the mirroring wall where the reflected path client->q->AP
// bounces, if the image-method geometry is valid for this client.
std::optional<Point2> reflection_point(const RoomPolygon& room, const Anchor& va,
                                       const std::vector<Anchor>& anchors,
                                       const Point2& client);

struct VisibleAnchor {
    int anchor_id{0};
    double aoa{0.0};  // radians in (-pi, pi], global frame
};

// Visible anchors sorted by id. Physical anchors need direct line of sight;
// virtual anchors need a valid first-order reflection off their wall.
std::vector<VisibleAnchor> visible_anchors(const RoomPolygon& room,
                                           const std::vector<Anchor>& anchors,
                                           const Point2& client);

}  // namespace mmloc
