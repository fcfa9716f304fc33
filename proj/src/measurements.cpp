#include "mmloc/measurements.hpp"

#include <algorithm>
#include <stdexcept>

#include "mmloc/errors.hpp"

namespace mmloc {

AoaSet make_aoa_set(const std::vector<VisibleAnchor>& visible) {
    AoaSet set;
    set.entries.reserve(visible.size());
    for (const VisibleAnchor& v : visible) {
        set.entries.push_back(AoaEntry{v.anchor_id, wrap_angle(v.aoa)});
    }
    std::sort(set.entries.begin(), set.entries.end(),
              [](const AoaEntry& l, const AoaEntry& r) { return l.anchor_id < r.anchor_id; });
    for (std::size_t i = 0; i + 1 < set.entries.size(); ++i) {
        if (set.entries[i].anchor_id == set.entries[i + 1].anchor_id)
            throw InvalidQueryError("duplicate anchor id in AoA set");
    }
    return set;
}

AoaSet perturb_aoa(const AoaSet& aoas, const NoiseConfig& cfg, std::mt19937_64& rng) {
    if (cfg.sigma < 0.0) throw ConfigError("AoA noise sigma must be nonnegative");
    AoaSet out = aoas;
    if (cfg.sigma == 0.0) return out;
    std::normal_distribution<double> noise(0.0, cfg.sigma);
    for (AoaEntry& e : out.entries) {
        e.angle = wrap_angle(e.angle + noise(rng));
    }
    return out;
}

int AdoaVector::visible_count() const {
    int n = 0;
    for (std::uint8_t m : mask) n += (m != 0);
    return n;
}

int lowest_id_reference(const AoaSet& aoas) {
    if (aoas.entries.empty())
        throw InsufficientMeasurementsError("cannot pick a reference from an empty AoA set");
    return aoas.entries.front().anchor_id;  // entries sorted ascending
}

AdoaVector compute_adoa(const AoaSet& aoas, std::size_t n_slots, const ReferencePolicy& policy) {
    if (aoas.entries.size() < 2)
        throw InsufficientMeasurementsError("ADoA needs at least 2 visible anchors, got " +
                                            std::to_string(aoas.entries.size()));
    const int ref_id = policy ? policy(aoas) : lowest_id_reference(aoas);

    double ref_angle = 0.0;
    bool ref_found = false;
    for (const AoaEntry& e : aoas.entries) {
        if (e.anchor_id == ref_id) {
            ref_angle = e.angle;
            ref_found = true;
            break;
        }
    }
    if (!ref_found) throw InvalidQueryError("reference policy returned an anchor not in the set");

    AdoaVector v;
    v.values.assign(n_slots, 0.0);
    v.mask.assign(n_slots, 0);
    v.reference_anchor = ref_id;
    for (const AoaEntry& e : aoas.entries) {
        if (e.anchor_id == ref_id) continue;
        if (e.anchor_id < 0 || static_cast<std::size_t>(e.anchor_id) >= n_slots)
            throw InvalidQueryError("anchor id " + std::to_string(e.anchor_id) +
                                    " does not fit in " + std::to_string(n_slots) + " slots");
        v.values[static_cast<std::size_t>(e.anchor_id)] = wrap_angle(e.angle - ref_angle);
        v.mask[static_cast<std::size_t>(e.anchor_id)] = 1;
    }
    validate_adoa(v);
    return v;
}

std::vector<double> encode_input(const AdoaVector& v) {
    std::vector<double> out(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v.mask[i]) out[i] = v.values[i];
    }
    return out;
}

void validate_adoa(const AdoaVector& v) {
    if (v.values.size() != v.mask.size())
        throw ShapeError("ADoA values/mask length mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v.mask[i] && v.values[i] != 0.0)
            throw ShapeError("masked ADoA slot holds a non-sentinel value");
        if (v.mask[i] && !(v.values[i] > -kPi - 1e-12 && v.values[i] <= kPi + 1e-12))
            throw ShapeError("ADoA value out of (-pi, pi]");
    }
    if (v.reference_anchor >= 0 && static_cast<std::size_t>(v.reference_anchor) < v.size() &&
        v.mask[static_cast<std::size_t>(v.reference_anchor)])
        throw ShapeError("reference anchor slot must be masked");
}

}  // namespace mmloc
