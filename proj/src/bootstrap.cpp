#include "mmloc/bootstrap.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <thread>

#include "mmloc/errors.hpp"

namespace mmloc {

namespace {

// Nelder-Mead in 2-D. Stops when the simplex diameter drops below tol.
Point2 simplex_minimize(const std::function<double(const Point2&)>& f, const Point2& start,
                        double initial_step, double tol, int max_iters) {
    std::array<Point2, 3> x{start,
                            Point2{start.x + initial_step, start.y},
                            Point2{start.x, start.y + initial_step}};
    std::array<double, 3> fx{f(x[0]), f(x[1]), f(x[2])};

    for (int iter = 0; iter < max_iters; ++iter) {
        // Order best..worst.
        std::array<int, 3> idx{0, 1, 2};
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fx[a] < fx[b]; });
        const std::array<Point2, 3> xs{x[idx[0]], x[idx[1]], x[idx[2]]};
        const std::array<double, 3> fs{fx[idx[0]], fx[idx[1]], fx[idx[2]]};
        x = xs;
        fx = fs;

        const double diam = std::max({distance(x[0], x[1]), distance(x[0], x[2]),
                                      distance(x[1], x[2])});
        if (diam < tol) break;

        const Point2 centroid = 0.5 * (x[0] + x[1]);
        const Point2 refl = centroid + (centroid - x[2]);
        const double f_refl = f(refl);
        if (f_refl < fx[0]) {
            const Point2 expanded = centroid + 2.0 * (centroid - x[2]);
            const double f_exp = f(expanded);
            if (f_exp < f_refl) {
                x[2] = expanded;
                fx[2] = f_exp;
            } else {
                x[2] = refl;
                fx[2] = f_refl;
            }
        } else if (f_refl < fx[1]) {
            x[2] = refl;
            fx[2] = f_refl;
        } else {
            const Point2 contr = centroid + 0.5 * ((f_refl < fx[2] ? refl : x[2]) - centroid);
            const double f_contr = f(contr);
            if (f_contr < std::min(f_refl, fx[2])) {
                x[2] = contr;
                fx[2] = f_contr;
            } else {
                // Shrink toward the best vertex.
                for (int i = 1; i < 3; ++i) {
                    x[i] = x[0] + 0.5 * (x[i] - x[0]);
                    fx[i] = f(x[i]);
                }
            }
        }
    }
    const int best = fx[0] <= fx[1] ? (fx[0] <= fx[2] ? 0 : 2) : (fx[1] <= fx[2] ? 1 : 2);
    return x[best];
}

}  // namespace

double adoa_objective(const Point2& p, const AdoaVector& v, const std::vector<Anchor>& anchors) {
    const Anchor& ref = anchors.at(static_cast<std::size_t>(v.reference_anchor));
    const double ref_angle = std::atan2(ref.position.y - p.y, ref.position.x - p.x);
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v.mask[i]) continue;
        const Anchor& a = anchors.at(i);
        const double angle = std::atan2(a.position.y - p.y, a.position.x - p.x);
        const double err = wrap_angle(wrap_angle(angle - ref_angle) - v.values[i]);
        sum += err * err;
    }
    return sum;
}

LocalizeResult adoa_localize(const AdoaVector& v, const std::vector<Anchor>& anchors,
                             const RoomPolygon& room, const LocalizeOptions& opts) {
    validate_adoa(v);
    if (v.visible_count() < 3)
        throw InsufficientMeasurementsError("ADoA localization needs at least 3 unmasked entries, got " +
                                            std::to_string(v.visible_count()));
    if (v.reference_anchor < 0 ||
        static_cast<std::size_t>(v.reference_anchor) >= anchors.size())
        throw InvalidQueryError("ADoA reference anchor is not part of the scene");

    const auto objective = [&](const Point2& p) { return adoa_objective(p, v, anchors); };

    const Rect bbox = room.bounding_box();
    Point2 best_grid{};
    double best_val = std::numeric_limits<double>::infinity();
    bool found = false;
    for (double y = bbox.min.y + 0.5 * opts.grid_pitch; y < bbox.max.y; y += opts.grid_pitch) {
        for (double x = bbox.min.x + 0.5 * opts.grid_pitch; x < bbox.max.x; x += opts.grid_pitch) {
            const Point2 p{x, y};
            if (!room.strictly_inside(p)) continue;
            const double val = objective(p);
            if (val < best_val) {
                best_val = val;
                best_grid = p;
                found = true;
            }
        }
    }
    if (!found) throw InvalidSceneError("localization grid found no interior points");

    const Point2 refined = simplex_minimize(objective, best_grid, 0.5 * opts.grid_pitch,
                                            opts.refine_tol, opts.max_refine_iters);

    LocalizeResult result;
    if (room.contains(refined)) {
        result.position = refined;
        result.residual = objective(refined);
        result.degraded = false;
    } else {
        result.position = best_grid;
        result.residual = best_val;
        result.degraded = true;
    }
    return result;
}

LabelSet build_label_set(int section_id, const std::vector<AdoaVector>& training_adoa,
                         const std::vector<Anchor>& anchors, const RoomPolygon& room,
                         const LocalizeOptions& opts, int jobs) {
    if (training_adoa.empty())
        throw InsufficientDataError("empty training data for section " + std::to_string(section_id));

    const std::size_t n = training_adoa.size();
    std::vector<LocalizeResult> results(n);
    std::vector<std::uint8_t> usable(n, 1);

    const auto worker = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            try {
                results[i] = adoa_localize(training_adoa[i], anchors, room, opts);
            } catch (const InsufficientMeasurementsError&) {
                usable[i] = 0;
            }
        }
    };
    const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
    if (threads == 1) {
        worker(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + static_cast<std::size_t>(threads) - 1) /
                                  static_cast<std::size_t>(threads);
        for (int t = 0; t < threads; ++t) {
            const std::size_t begin = static_cast<std::size_t>(t) * chunk;
            if (begin >= n) break;
            pool.emplace_back(worker, begin, std::min(n, begin + chunk));
        }
        for (std::thread& th : pool) th.join();
    }

    LabelSet set;
    set.section_id = section_id;
    set.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (usable[i] && !results[i].degraded) {
            set.labels.push_back(Label{results[i].position, results[i].residual,
                                       static_cast<int>(i)});
        } else {
            ++set.dropped;
        }
    }
    if (2 * set.dropped > static_cast<int>(training_adoa.size()))
        throw BootstrapFailureError("section " + std::to_string(section_id) + ": " +
                                    std::to_string(set.dropped) + " of " +
                                    std::to_string(training_adoa.size()) +
                                    " bootstrap localizations degraded");
    return set;
}

LabelStats compute_label_stats(const LabelSet& ls) {
    const std::size_t n = ls.labels.size();
    if (n < 3)
        throw InsufficientDataError("label statistics need at least 3 labels, got " +
                                    std::to_string(n));
    Eigen::Vector2d mu = Eigen::Vector2d::Zero();
    for (const Label& l : ls.labels) mu += Eigen::Vector2d(l.position.x, l.position.y);
    mu /= static_cast<double>(n);

    Eigen::Matrix2d sigma = Eigen::Matrix2d::Zero();
    for (const Label& l : ls.labels) {
        const Eigen::Vector2d d = Eigen::Vector2d(l.position.x, l.position.y) - mu;
        sigma += d * d.transpose();
    }
    sigma /= static_cast<double>(n - 1);
    sigma = 0.5 * (sigma + sigma.transpose().eval());

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(sigma);
    if (es.eigenvalues().minCoeff() < kStatsEpsilon)
        sigma += kStatsEpsilon * Eigen::Matrix2d::Identity();

    return LabelStats{mu, sigma};
}

double mahalanobis(const Point2& p, const LabelStats& stats) {
    const Eigen::Vector2d d = Eigen::Vector2d(p.x, p.y) - stats.mu;
    const Eigen::Vector2d w = stats.sigma.ldlt().solve(d);
    return std::sqrt(std::max(0.0, d.dot(w)));
}

}  // namespace mmloc
