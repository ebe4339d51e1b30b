#pragma once

#include <vector>

#include "ga/geometry.hpp"
#include "ga/rng.hpp"

namespace ga {

// Uniform random point source on a 2-manifold embedded in 3D.
struct SurfaceSampler {
    virtual ~SurfaceSampler() = default;
    virtual Vec3 sample(Rng& rng) const = 0;
    virtual double area() const = 0;
};

// Sequential dart throwing to near-saturation: a dart is accepted iff it is
// at least `radius` away from every accepted point. Deterministic in rng.
std::vector<Vec3> poisson_dart_throw(const SurfaceSampler& surf, double radius, Rng& rng);

// Greedy weighted sample elimination down to exactly `target` points.
// A point's weight is sum over neighbors within 2*r_weight of
// (1 - d/(2*r_weight))^8; the heaviest point is removed each round
// (ties by lowest index). Returns kept indices in original order.
std::vector<int> eliminate_to_count(const std::vector<Vec3>& pts, int target, double r_weight);

} // namespace ga
