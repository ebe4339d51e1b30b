#include "ga/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "ga/error.hpp"

namespace ga {

namespace {

double face_area(const TriMesh& m, int f) {
    const Vec3& a = m.vertices[m.faces[f][0]];
    const Vec3& b = m.vertices[m.faces[f][1]];
    const Vec3& c = m.vertices[m.faces[f][2]];
    return 0.5 * (b - a).cross(c - a).norm();
}

std::pair<int, int> undirected(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

} // namespace

Vec3 face_normal(const TriMesh& mesh, int face) {
    const Vec3& a = mesh.vertices[mesh.faces[face][0]];
    const Vec3& b = mesh.vertices[mesh.faces[face][1]];
    const Vec3& c = mesh.vertices[mesh.faces[face][2]];
    return (b - a).cross(c - a).normalized();
}

double mesh_bbox_diagonal(const TriMesh& mesh) {
    if (mesh.vertices.empty()) return 0;
    Vec3 lo = mesh.vertices[0], hi = mesh.vertices[0];
    for (const Vec3& v : mesh.vertices) {
        lo.x = std::min(lo.x, v.x); lo.y = std::min(lo.y, v.y); lo.z = std::min(lo.z, v.z);
        hi.x = std::max(hi.x, v.x); hi.y = std::max(hi.y, v.y); hi.z = std::max(hi.z, v.z);
    }
    return (hi - lo).norm();
}

TriMesh load_obj(const std::string& path, double sharp_threshold_deg) {
    std::ifstream in(path);
    if (!in) throw Error("load_obj: cannot open " + path);

    TriMesh mesh;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z)) throw ParseError("load_obj: malformed vertex record", line_no);
            mesh.vertices.push_back({x, y, z});
        } else if (tag == "f") {
            std::vector<int> poly;
            std::string tok;
            while (ls >> tok) {
                // accept v, v/vt, v/vt/vn, v//vn; only the vertex index is used
                size_t slash = tok.find('/');
                std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
                int idx = 0;
                try {
                    idx = std::stoi(head);
                } catch (...) {
                    throw ParseError("load_obj: malformed face index '" + tok + "'", line_no);
                }
                if (idx < 0) idx = int(mesh.vertices.size()) + idx; // relative
                else idx -= 1;                                      // 1-based
                if (idx < 0 || idx >= int(mesh.vertices.size()))
                    throw ParseError("load_obj: face index out of range", line_no);
                poly.push_back(idx);
            }
            if (poly.size() < 3) throw ParseError("load_obj: face needs at least 3 vertices", line_no);
            for (size_t i = 1; i + 1 < poly.size(); ++i)
                mesh.faces.push_back({poly[0], poly[int(i)], poly[int(i) + 1]});
        }
        // every other record type is ignored
    }

    // drop degenerate faces before any adjacency is built
    double diag = mesh_bbox_diagonal(mesh);
    double area_floor = 1e-12 * std::max(diag * diag, 1e-300);
    std::vector<std::array<int, 3>> kept;
    for (int f = 0; f < int(mesh.faces.size()); ++f)
        if (face_area(mesh, f) > area_floor) kept.push_back(mesh.faces[f]);
    mesh.faces = std::move(kept);

    // sharp edges by dihedral deviation from flat
    std::map<std::pair<int, int>, std::vector<int>> edge_faces;
    for (int f = 0; f < int(mesh.faces.size()); ++f)
        for (int e = 0; e < 3; ++e)
            edge_faces[undirected(mesh.faces[f][e], mesh.faces[f][(e + 1) % 3])].push_back(f);

    double cos_thresh = std::cos(sharp_threshold_deg * M_PI / 180.0);
    for (const auto& [edge, faces] : edge_faces) {
        if (faces.size() != 2) continue; // boundary or non-manifold: not sharp
        double c = face_normal(mesh, faces[0]).dot(face_normal(mesh, faces[1]));
        if (c < cos_thresh) mesh.sharp_edges.push_back(edge);
    }
    return mesh;
}

MeshSurfaceSampler::MeshSurfaceSampler(const TriMesh& mesh) : mesh_(mesh) {
    cumulative_.resize(mesh.faces.size());
    double acc = 0;
    for (int f = 0; f < int(mesh.faces.size()); ++f) {
        acc += face_area(mesh, f);
        cumulative_[f] = acc;
    }
    total_area_ = acc;
}

Vec3 MeshSurfaceSampler::sample(Rng& rng) const {
    double r = rng.uniform() * total_area_;
    int f = int(std::lower_bound(cumulative_.begin(), cumulative_.end(), r) - cumulative_.begin());
    f = std::min(f, int(mesh_.faces.size()) - 1);
    const Vec3& a = mesh_.vertices[mesh_.faces[f][0]];
    const Vec3& b = mesh_.vertices[mesh_.faces[f][1]];
    const Vec3& c = mesh_.vertices[mesh_.faces[f][2]];
    double u = std::sqrt(rng.uniform());
    double v = rng.uniform();
    return a * (1 - u) + b * (u * (1 - v)) + c * (u * v);
}

std::vector<Vec3> poisson_sample_mesh(const TriMesh& mesh, double spacing, uint64_t seed) {
    if (mesh.faces.empty()) throw GenerationError("poisson_sample_mesh: empty mesh");
    if (!(spacing > 0)) throw GenerationError("poisson_sample_mesh: spacing must be positive");
    double diag = mesh_bbox_diagonal(mesh);
    if (spacing > 10.0 * diag)
        throw GenerationError("poisson_sample_mesh: spacing larger than mesh extent");

    MeshSurfaceSampler sampler(mesh);
    Rng rng(mix_seed(seed, 0x706f6973736f6eULL)); // "poisson"
    return poisson_dart_throw(sampler, 0.75 * spacing, rng);
}

void transfer_labels(const TriMesh& mesh, const std::vector<Vec3>& points, double spacing,
                     std::vector<Vec3>& normals_out, std::vector<uint8_t>& sharp_out) {
    int n = int(points.size());
    normals_out.assign(n, Vec3{});
    sharp_out.assign(n, 0);

    std::map<std::pair<int, int>, std::vector<int>> edge_faces;
    std::vector<std::vector<int>> vertex_faces(mesh.vertices.size());
    for (int f = 0; f < int(mesh.faces.size()); ++f) {
        for (int e = 0; e < 3; ++e) {
            edge_faces[undirected(mesh.faces[f][e], mesh.faces[f][(e + 1) % 3])].push_back(f);
            vertex_faces[mesh.faces[f][e]].push_back(f);
        }
    }
    std::vector<char> vertex_on_sharp(mesh.vertices.size(), 0);
    for (auto& [a, b] : mesh.sharp_edges) {
        vertex_on_sharp[a] = 1;
        vertex_on_sharp[b] = 1;
    }
    auto edge_is_sharp = [&](std::pair<int, int> e) {
        return std::find(mesh.sharp_edges.begin(), mesh.sharp_edges.end(), e) !=
               mesh.sharp_edges.end();
    };

    auto angle_weighted_vertex_normal = [&](int v) {
        Vec3 acc{};
        for (int f : vertex_faces[v]) {
            const auto& fc = mesh.faces[f];
            int i = fc[0] == v ? 0 : fc[1] == v ? 1 : 2;
            Vec3 e1 = (mesh.vertices[fc[(i + 1) % 3]] - mesh.vertices[v]).normalized();
            Vec3 e2 = (mesh.vertices[fc[(i + 2) % 3]] - mesh.vertices[v]).normalized();
            double ang = std::acos(std::clamp(e1.dot(e2), -1.0, 1.0));
            acc += face_normal(mesh, f) * ang;
        }
        return acc.normalized();
    };

    for (int p = 0; p < n; ++p) {
        double best = 1e300;
        int best_face = -1;
        TriRegion best_region = TriRegion::face;
        for (int f = 0; f < int(mesh.faces.size()); ++f) {
            TriClosest cl = closest_point_triangle(points[p], mesh.vertices[mesh.faces[f][0]],
                                                   mesh.vertices[mesh.faces[f][1]],
                                                   mesh.vertices[mesh.faces[f][2]]);
            if (cl.dist < best) {
                best = cl.dist;
                best_face = f;
                best_region = cl.region;
            }
        }
        if (best > 10.0 * spacing)
            throw ConsistencyError("transfer_labels: point " + std::to_string(p) +
                                   " farther than 10x spacing from the surface");

        const auto& fc = mesh.faces[best_face];
        Vec3 nrm;
        switch (best_region) {
        case TriRegion::face:
            nrm = face_normal(mesh, best_face);
            break;
        case TriRegion::edge01:
        case TriRegion::edge12:
        case TriRegion::edge20: {
            int e = best_region == TriRegion::edge01 ? 0 : best_region == TriRegion::edge12 ? 1 : 2;
            auto key = undirected(fc[e], fc[(e + 1) % 3]);
            const auto& adj = edge_faces[key];
            if (edge_is_sharp(key) || adj.size() != 2) {
                nrm = face_normal(mesh, best_face);
            } else {
                nrm = (face_normal(mesh, adj[0]) + face_normal(mesh, adj[1])).normalized();
            }
            break;
        }
        case TriRegion::vert0:
        case TriRegion::vert1:
        case TriRegion::vert2: {
            int v = fc[best_region == TriRegion::vert0 ? 0 : best_region == TriRegion::vert1 ? 1 : 2];
            nrm = vertex_on_sharp[v] ? face_normal(mesh, best_face)
                                     : angle_weighted_vertex_normal(v);
            break;
        }
        }
        normals_out[p] = nrm;

        for (auto& [a, b] : mesh.sharp_edges) {
            if (point_segment_distance(points[p], mesh.vertices[a], mesh.vertices[b]) <= spacing) {
                sharp_out[p] = 1;
                break;
            }
        }
    }
}

} // namespace ga
