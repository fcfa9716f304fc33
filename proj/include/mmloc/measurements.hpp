#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "mmloc/common.hpp"
#include "mmloc/geometry.hpp"

namespace mmloc {

struct NoiseConfig {
    double sigma{deg2rad(5.0)};  // AoA noise std, radians
    std::uint64_t seed{0};
};

struct AoaEntry {
    int anchor_id{0};
    double angle{0.0};  // radians in (-pi, pi]
};

// Per-location AoA measurements; anchor ids unique and sorted ascending.
struct AoaSet {
    std::vector<AoaEntry> entries;
};

AoaSet make_aoa_set(const std::vector<VisibleAnchor>& visible);

// Independent zero-mean Gaussian offset per angle, re-wrapped to (-pi, pi].
AoaSet perturb_aoa(const AoaSet& aoas, const NoiseConfig& cfg, std::mt19937_64& rng);

// Fixed-length ADoA feature vector. Slot index is the global anchor id, so
// n_slots equals the scene's anchor count; the reference anchor's own slot
// is masked. Masked slots hold the sentinel 0.
struct AdoaVector {
    std::vector<double> values;
    std::vector<std::uint8_t> mask;
    int reference_anchor{-1};

    std::size_t size() const { return values.size(); }
    int visible_count() const;
};

// Must return the id of one of the set's anchors.
using ReferencePolicy = std::function<int(const AoaSet&)>;

int lowest_id_reference(const AoaSet& aoas);

AdoaVector compute_adoa(const AoaSet& aoas, std::size_t n_slots,
                        const ReferencePolicy& policy = {});

// NN input encoding: visible slots carry the wrapped ADoA in radians, masked
// slots the sentinel 0.
std::vector<double> encode_input(const AdoaVector& v);

void validate_adoa(const AdoaVector& v);

}  // namespace mmloc
