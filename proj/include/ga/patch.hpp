#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ga/geometry.hpp"
#include "ga/mesh.hpp"

namespace ga {

enum class ShapeKind { plane, wedge, cylinder, sphere_cap };

const char* to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& name); // throws ConfigError

struct ShapeSpec {
    ShapeKind kind = ShapeKind::wedge;
    double dihedral_rad = 1.5707963267948966; // wedge opening angle, (0, pi]
    double radius = 0.5;                      // cylinder
    double cap_angle_rad = 1.0471975511965976; // sphere cap half-angle
    double spacing = 0.05;                    // target sample spacing, shape units
    int n_points = 512;
};

struct PatchMeta {
    std::string kind;   // shape name or "obj"
    std::string source; // OBJ path for mesh patches, else empty
    uint64_t seed = 0;
    std::array<double, 3> centroid{0, 0, 0};
    double scale = 1;
    double spacing = 0.05;
    std::map<std::string, double> params; // kind-specific geometry
};

// Fixed-size labeled point set, unit-ball normalized.
struct PointPatch {
    int n = 0;
    std::vector<float> points;   // n x 3
    std::vector<float> normals;  // n x 3 unit rows; empty when absent
    std::vector<uint8_t> sharp;  // n flags; empty when absent
    PatchMeta meta;

    bool has_normals() const { return !normals.empty(); }
    bool has_sharp() const { return !sharp.empty(); }
};

// Deterministic in (spec, seed): Poisson-sampled surface, analytic normals,
// sharp = within one spacing of the crease, unit-ball normalization.
PointPatch generate_patch(const ShapeSpec& spec, uint64_t seed);

// Same protocol driven by a loaded mesh (labels transferred from the mesh).
PointPatch generate_patch_from_mesh(const TriMesh& mesh, const std::string& source,
                                    double spacing, int n_points, uint64_t seed);

struct NormalizeResult {
    Vec3 centroid;
    double scale = 1;
};
// In place: p <- (p - centroid)/scale, scale = max distance to centroid
// (1 for all-coincident input).
NormalizeResult normalize_points(std::vector<Vec3>& pts);

PointPatch apply_rotation(const PointPatch& patch, const Mat3& rot);
PointPatch augment_rotate(const PointPatch& patch, uint64_t seed);

struct SplitResult {
    std::vector<std::string> train, val, test;
};
// Disjoint 4:1:1 cover, remainder to train, deterministic shuffle in seed.
SplitResult split_dataset(const std::vector<std::string>& ids, uint64_t seed);

// "GAPC" binary patch file (little-endian, see README for the layout).
void write_patch(const std::string& path, const PointPatch& patch);
PointPatch read_patch(const std::string& path);
std::string patch_to_bytes(const PointPatch& patch);
PointPatch patch_from_bytes(const std::string& bytes);

// ASCII PLY with per-vertex float columns for offline inspection.
void write_ply(const std::string& path, int n, const float* points,
               const std::vector<std::pair<std::string, std::vector<float>>>& columns);

// Analytic distance to the wedge crease reconstructed from patch metadata,
// in original (pre-normalization) units. Returns +inf for creaseless kinds.
double crease_distance_original_units(const PatchMeta& meta, const Vec3& point_normalized);

} // namespace ga
