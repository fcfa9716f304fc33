#pragma once

#include <Eigen/Core>
#include <vector>

#include "mmloc/common.hpp"
#include "mmloc/geometry.hpp"
#include "mmloc/measurements.hpp"

namespace mmloc {

struct LocalizeOptions {
    double grid_pitch{0.5};     // meters
    double refine_tol{1e-3};    // simplex convergence step, meters
    int max_refine_iters{400};
};

struct LocalizeResult {
    Point2 position{};
    double residual{0.0};  // radians^2, final objective value
    bool degraded{false};  // refinement left the room, fell back to the grid minimum
};

// Sum of squared wrapped differences between predicted and measured ADoA
// over the unmasked slots, evaluated at candidate position p.
double adoa_objective(const Point2& p, const AdoaVector& v, const std::vector<Anchor>& anchors);

// Angle-difference least squares: coarse grid over the room followed by
// Nelder-Mead refinement.
LocalizeResult adoa_localize(const AdoaVector& v, const std::vector<Anchor>& anchors,
                             const RoomPolygon& room, const LocalizeOptions& opts = {});

struct Label {
    Point2 position{};
    double residual{0.0};
    int point_index{0};  // index into the section's training inputs
};

struct LabelSet {
    int section_id{0};
    std::vector<Label> labels;
    int dropped{0};  // degraded points excluded from the set
};

// One label per training input; degraded localizations are dropped and
// counted. Throws BootstrapFailureError when more than half degrade or fail.
// Per-point localization is pure, so jobs > 1 fans out across locations
// without changing the result.
LabelSet build_label_set(int section_id, const std::vector<AdoaVector>& training_adoa,
                         const std::vector<Anchor>& anchors, const RoomPolygon& room,
                         const LocalizeOptions& opts = {}, int jobs = 1);

struct LabelStats {
    Eigen::Vector2d mu{Eigen::Vector2d::Zero()};
    Eigen::Matrix2d sigma{Eigen::Matrix2d::Identity()};
};

inline constexpr double kStatsEpsilon = 1e-6;  // m^2, covariance regularizer

// Sample mean and covariance of the label positions, regularized so the
// minimum eigenvalue is at least kStatsEpsilon.
LabelStats compute_label_stats(const LabelSet& ls);

double mahalanobis(const Point2& p, const LabelStats& stats);

}  // namespace mmloc
