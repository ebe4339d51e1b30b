#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ga/geometry.hpp"
#include "ga/sampling.hpp"

namespace ga {

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    // undirected vertex-index pairs (lo, hi) along tangent-plane discontinuities
    std::vector<std::pair<int, int>> sharp_edges;
};

// Parses v/f records (other records ignored), fan-triangulates polygons,
// drops zero-area faces, then marks edges sharp when the adjacent faces'
// dihedral angle deviates from flat by more than the threshold.
TriMesh load_obj(const std::string& path, double sharp_threshold_deg = 30.0);

Vec3 face_normal(const TriMesh& mesh, int face);
double mesh_bbox_diagonal(const TriMesh& mesh);

// Area-weighted uniform sampler over the mesh surface.
class MeshSurfaceSampler : public SurfaceSampler {
public:
    explicit MeshSurfaceSampler(const TriMesh& mesh);
    Vec3 sample(Rng& rng) const override;
    double area() const override { return total_area_; }

private:
    const TriMesh& mesh_;
    std::vector<double> cumulative_;
    double total_area_ = 0;
};

// Dart-thrown surface samples with min pairwise distance >= 0.75 * spacing
// and mean nearest-neighbor distance near `spacing`.
std::vector<Vec3> poisson_sample_mesh(const TriMesh& mesh, double spacing, uint64_t seed);

// Ground-truth transfer: nearest-face normals (angle-weighted at smooth
// edges/vertices) and sharp flags within one `spacing` of any sharp edge.
// Points farther than 10 * spacing from the surface raise ConsistencyError.
void transfer_labels(const TriMesh& mesh, const std::vector<Vec3>& points, double spacing,
                     std::vector<Vec3>& normals_out, std::vector<uint8_t>& sharp_out);

} // namespace ga
