#include "ga/patch.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>

#include <json.hpp>

#include "ga/error.hpp"
#include "ga/sampling.hpp"

namespace ga {

namespace {

constexpr double kPi = 3.14159265358979323846;
// surface area per patch relative to n * spacing^2; keeps dart throwing
// saturated well above the requested point count
constexpr double kAreaFactor = 1.3;

struct FnSampler : SurfaceSampler {
    std::function<Vec3(Rng&)> fn;
    double a = 0;
    Vec3 sample(Rng& rng) const override { return fn(rng); }
    double area() const override { return a; }
};

struct ShapeGeometry {
    FnSampler sampler;
    std::function<Vec3(const Vec3&)> normal_at;
    bool has_crease = false;
    Vec3 crease_a, crease_b;
    std::map<std::string, double> params;
};

ShapeGeometry build_geometry(const ShapeSpec& spec) {
    double area = kAreaFactor * spec.n_points * spec.spacing * spec.spacing;
    ShapeGeometry g;
    switch (spec.kind) {
    case ShapeKind::plane: {
        double side = std::sqrt(area);
        g.sampler.a = area;
        g.sampler.fn = [side](Rng& rng) {
            return Vec3{rng.uniform(-0.5, 0.5) * side, rng.uniform(-0.5, 0.5) * side, 0};
        };
        g.normal_at = [](const Vec3&) { return Vec3{0, 0, 1}; };
        g.params = {{"side", side}};
        break;
    }
    case ShapeKind::wedge: {
        // two half-planes meeting along the y axis; crease twice as long as
        // the face width so short feature lines stay well sampled
        double beta = spec.dihedral_rad;
        double face_w = std::sqrt(area) / 2.0;
        double crease_len = 2.0 * face_w;
        double s = std::sin(beta / 2), c = std::cos(beta / 2);
        Vec3 w1{s, 0, -c}, w2{-s, 0, -c};
        Vec3 n1{c, 0, s}, n2{-c, 0, s};
        g.sampler.a = area;
        g.sampler.fn = [=](Rng& rng) {
            Vec3 w = rng.uniform() < 0.5 ? w1 : w2;
            double t = rng.uniform() * face_w;
            double y = rng.uniform(-0.5, 0.5) * crease_len;
            return Vec3{w.x * t, y, w.z * t};
        };
        g.normal_at = [=](const Vec3& p) { return p.x >= 0 ? n1 : n2; };
        if (beta < kPi - 1e-9) {
            g.has_crease = true;
            g.crease_a = {0, -crease_len / 2, 0};
            g.crease_b = {0, crease_len / 2, 0};
        }
        g.params = {{"dihedral_rad", beta}, {"face_width", face_w}, {"crease_len", crease_len}};
        break;
    }
    case ShapeKind::cylinder: {
        double r = spec.radius;
        double h = area / (2 * kPi * r);
        g.sampler.a = area;
        g.sampler.fn = [=](Rng& rng) {
            double th = rng.uniform() * 2 * kPi;
            return Vec3{r * std::cos(th), r * std::sin(th), rng.uniform(-0.5, 0.5) * h};
        };
        g.normal_at = [](const Vec3& p) { return Vec3{p.x, p.y, 0}.normalized(); };
        g.params = {{"radius", r}, {"height", h}};
        break;
    }
    case ShapeKind::sphere_cap: {
        double alpha = spec.cap_angle_rad;
        double rr = std::sqrt(area / (2 * kPi * (1 - std::cos(alpha))));
        double z_lo = rr * std::cos(alpha);
        g.sampler.a = area;
        g.sampler.fn = [=](Rng& rng) {
            double z = rng.uniform(z_lo, rr); // uniform z is area-uniform on a sphere zone
            double ring = std::sqrt(std::max(rr * rr - z * z, 0.0));
            double th = rng.uniform() * 2 * kPi;
            return Vec3{ring * std::cos(th), ring * std::sin(th), z};
        };
        g.normal_at = [](const Vec3& p) { return p.normalized(); };
        g.params = {{"cap_angle_rad", alpha}, {"sphere_radius", rr}};
        break;
    }
    }
    return g;
}

void validate(const ShapeSpec& spec) {
    if (!(spec.spacing > 0)) throw ConfigError("shape spec: spacing must be positive");
    if (spec.n_points < 16) throw ConfigError("shape spec: n_points must be at least 16");
    if (spec.kind == ShapeKind::wedge &&
        !(spec.dihedral_rad > 0 && spec.dihedral_rad <= kPi))
        throw ConfigError("shape spec: wedge dihedral angle must lie in (0, pi]");
    if (spec.kind == ShapeKind::cylinder && !(spec.radius > 0))
        throw ConfigError("shape spec: cylinder radius must be positive");
    if (spec.kind == ShapeKind::sphere_cap &&
        !(spec.cap_angle_rad > 0 && spec.cap_angle_rad < kPi))
        throw ConfigError("shape spec: cap angle must lie in (0, pi)");
}

PointPatch finish_patch(std::vector<Vec3> pts, const std::vector<Vec3>& normals,
                        std::vector<uint8_t> sharp, PatchMeta meta) {
    NormalizeResult nr = normalize_points(pts);
    meta.centroid = {nr.centroid.x, nr.centroid.y, nr.centroid.z};
    meta.scale = nr.scale;

    PointPatch p;
    p.n = int(pts.size());
    p.points.resize(size_t(p.n) * 3);
    p.normals.resize(size_t(p.n) * 3);
    for (int i = 0; i < p.n; ++i) {
        p.points[size_t(i) * 3 + 0] = float(pts[i].x);
        p.points[size_t(i) * 3 + 1] = float(pts[i].y);
        p.points[size_t(i) * 3 + 2] = float(pts[i].z);
        p.normals[size_t(i) * 3 + 0] = float(normals[i].x);
        p.normals[size_t(i) * 3 + 1] = float(normals[i].y);
        p.normals[size_t(i) * 3 + 2] = float(normals[i].z);
    }
    p.sharp = std::move(sharp);
    p.meta = std::move(meta);
    return p;
}

} // namespace

const char* to_string(ShapeKind kind) {
    switch (kind) {
    case ShapeKind::plane: return "plane";
    case ShapeKind::wedge: return "wedge";
    case ShapeKind::cylinder: return "cylinder";
    case ShapeKind::sphere_cap: return "sphere-cap";
    }
    return "?";
}

ShapeKind shape_kind_from_string(const std::string& name) {
    if (name == "plane") return ShapeKind::plane;
    if (name == "wedge") return ShapeKind::wedge;
    if (name == "cylinder") return ShapeKind::cylinder;
    if (name == "sphere-cap") return ShapeKind::sphere_cap;
    throw ConfigError("unknown shape '" + name + "' (expected plane|wedge|cylinder|sphere-cap)");
}

PointPatch generate_patch(const ShapeSpec& spec, uint64_t seed) {
    validate(spec);
    ShapeGeometry g = build_geometry(spec);

    for (int attempt = 0; attempt < 16; ++attempt) {
        Rng rng(mix_seed(seed, 0xda27ULL + attempt));
        std::vector<Vec3> darts = poisson_dart_throw(g.sampler, 0.75 * spec.spacing, rng);
        if (int(darts.size()) < spec.n_points) continue;

        std::vector<int> keep = eliminate_to_count(darts, spec.n_points, spec.spacing);
        std::vector<Vec3> pts(keep.size());
        for (size_t i = 0; i < keep.size(); ++i) pts[i] = darts[keep[i]];

        std::vector<Vec3> normals(pts.size());
        std::vector<uint8_t> sharp(pts.size(), 0);
        int n_sharp = 0;
        for (size_t i = 0; i < pts.size(); ++i) {
            normals[i] = g.normal_at(pts[i]);
            if (g.has_crease &&
                point_segment_distance(pts[i], g.crease_a, g.crease_b) <= spec.spacing) {
                sharp[i] = 1;
                ++n_sharp;
            }
        }
        // short feature lines need enough supporting samples
        if (g.has_crease && n_sharp < 8) continue;

        PatchMeta meta;
        meta.kind = to_string(spec.kind);
        meta.seed = seed;
        meta.spacing = spec.spacing;
        meta.params = g.params;
        return finish_patch(std::move(pts), normals, std::move(sharp), std::move(meta));
    }
    throw GenerationError("generate_patch: cannot fit " + std::to_string(spec.n_points) +
                          " points at spacing " + std::to_string(spec.spacing));
}

PointPatch generate_patch_from_mesh(const TriMesh& mesh, const std::string& source,
                                    double spacing, int n_points, uint64_t seed) {
    std::vector<Vec3> darts = poisson_sample_mesh(mesh, spacing, seed);
    if (int(darts.size()) < n_points)
        throw GenerationError("generate_patch_from_mesh: mesh supports only " +
                              std::to_string(darts.size()) + " samples at spacing " +
                              std::to_string(spacing) + ", need " + std::to_string(n_points));
    std::vector<int> keep = eliminate_to_count(darts, n_points, spacing);
    std::vector<Vec3> pts(keep.size());
    for (size_t i = 0; i < keep.size(); ++i) pts[i] = darts[keep[i]];

    std::vector<Vec3> normals;
    std::vector<uint8_t> sharp;
    transfer_labels(mesh, pts, spacing, normals, sharp);

    PatchMeta meta;
    meta.kind = "obj";
    meta.source = source;
    meta.seed = seed;
    meta.spacing = spacing;
    return finish_patch(std::move(pts), normals, std::move(sharp), std::move(meta));
}

NormalizeResult normalize_points(std::vector<Vec3>& pts) {
    NormalizeResult r;
    if (pts.empty()) return r;
    Vec3 c{0, 0, 0};
    for (const Vec3& p : pts) c += p;
    c = c / double(pts.size());
    double scale = 0;
    for (const Vec3& p : pts) scale = std::max(scale, (p - c).norm());
    if (scale == 0) scale = 1; // all points coincident
    for (Vec3& p : pts) p = (p - c) / scale;
    r.centroid = c;
    r.scale = scale;
    return r;
}

PointPatch apply_rotation(const PointPatch& patch, const Mat3& rot) {
    PointPatch out = patch;
    for (int i = 0; i < patch.n; ++i) {
        Vec3 p{patch.points[size_t(i) * 3], patch.points[size_t(i) * 3 + 1],
               patch.points[size_t(i) * 3 + 2]};
        Vec3 q = rot.apply(p);
        out.points[size_t(i) * 3] = float(q.x);
        out.points[size_t(i) * 3 + 1] = float(q.y);
        out.points[size_t(i) * 3 + 2] = float(q.z);
        if (patch.has_normals()) {
            Vec3 nv{patch.normals[size_t(i) * 3], patch.normals[size_t(i) * 3 + 1],
                    patch.normals[size_t(i) * 3 + 2]};
            Vec3 qn = rot.apply(nv);
            out.normals[size_t(i) * 3] = float(qn.x);
            out.normals[size_t(i) * 3 + 1] = float(qn.y);
            out.normals[size_t(i) * 3 + 2] = float(qn.z);
        }
    }
    return out;
}

PointPatch augment_rotate(const PointPatch& patch, uint64_t seed) {
    Rng rng(mix_seed(seed, 0x726f74ULL)); // "rot"
    return apply_rotation(patch, random_rotation(rng));
}

SplitResult split_dataset(const std::vector<std::string>& ids, uint64_t seed) {
    int n = int(ids.size());
    if (n < 6) throw ConfigError("split_dataset: need at least 6 patches for a 4:1:1 split");
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix_seed(seed, 0x73706c6974ULL)); // "split"
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(uint64_t(i) + 1)]);

    int n_val = n / 6, n_test = n / 6;
    SplitResult r;
    for (int i = 0; i < n; ++i) {
        const std::string& id = ids[order[i]];
        if (i < n_val) r.val.push_back(id);
        else if (i < n_val + n_test) r.test.push_back(id);
        else r.train.push_back(id);
    }
    return r;
}

// ---------------------------------------------------------------------------
// GAPC binary format
// magic "GAPC" | u32 version=1 | u32 n | u32 flags (bit0 normals, bit1 sharp)
// | points n*3 f32 | normals n*3 f32 if bit0 | sharp n u8 if bit1
// | u32 meta_len | UTF-8 JSON metadata
// All integers and floats little-endian.

namespace {

void put_u32(std::string& out, uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                 char((v >> 24) & 0xff)};
    out.append(b, 4);
}

void put_f32(std::string& out, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(out, u);
}

struct Reader {
    const std::string& buf;
    size_t off = 0;

    void need(size_t bytes, const char* what) const {
        if (off + bytes > buf.size())
            throw FormatError(std::string("truncated patch file while reading ") + what, off);
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = uint32_t(uint8_t(buf[off])) | uint32_t(uint8_t(buf[off + 1])) << 8 |
                     uint32_t(uint8_t(buf[off + 2])) << 16 | uint32_t(uint8_t(buf[off + 3])) << 24;
        off += 4;
        return v;
    }
    float f32(const char* what) {
        uint32_t u = u32(what);
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
};

nlohmann::json meta_to_json(const PatchMeta& m) {
    nlohmann::json j;
    j["centroid"] = {m.centroid[0], m.centroid[1], m.centroid[2]};
    j["kind"] = m.kind;
    j["params"] = m.params;
    j["scale"] = m.scale;
    j["seed"] = m.seed;
    j["source"] = m.source;
    j["spacing"] = m.spacing;
    return j;
}

PatchMeta meta_from_json(const nlohmann::json& j, size_t blob_offset) {
    try {
        PatchMeta m;
        m.kind = j.at("kind").get<std::string>();
        m.source = j.at("source").get<std::string>();
        m.seed = j.at("seed").get<uint64_t>();
        auto c = j.at("centroid");
        m.centroid = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
        m.scale = j.at("scale").get<double>();
        m.spacing = j.at("spacing").get<double>();
        for (auto& [k, v] : j.at("params").items()) m.params[k] = v.get<double>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad patch metadata: ") + e.what(), blob_offset);
    }
}

} // namespace

std::string patch_to_bytes(const PointPatch& patch) {
    std::string out;
    out.append("GAPC", 4);
    put_u32(out, 1);
    put_u32(out, uint32_t(patch.n));
    uint32_t flags = (patch.has_normals() ? 1u : 0u) | (patch.has_sharp() ? 2u : 0u);
    put_u32(out, flags);
    for (float v : patch.points) put_f32(out, v);
    for (float v : patch.normals) put_f32(out, v);
    out.append(reinterpret_cast<const char*>(patch.sharp.data()), patch.sharp.size());
    std::string meta = meta_to_json(patch.meta).dump();
    put_u32(out, uint32_t(meta.size()));
    out.append(meta);
    return out;
}

PointPatch patch_from_bytes(const std::string& bytes) {
    Reader r{bytes};
    r.need(4, "magic");
    if (bytes.compare(0, 4, "GAPC") != 0) throw FormatError("bad magic, expected GAPC", 0);
    r.off = 4;
    uint32_t version = r.u32("version");
    if (version != 1)
        throw FormatError("unsupported patch version " + std::to_string(version), 4);

    PointPatch p;
    uint32_t n = r.u32("point count");
    uint32_t flags = r.u32("flags");
    p.n = int(n);
    p.points.resize(size_t(n) * 3);
    for (auto& v : p.points) v = r.f32("points");
    if (flags & 1) {
        p.normals.resize(size_t(n) * 3);
        for (auto& v : p.normals) v = r.f32("normals");
    }
    if (flags & 2) {
        r.need(n, "sharp flags");
        p.sharp.resize(n);
        std::memcpy(p.sharp.data(), bytes.data() + r.off, n);
        r.off += n;
    }
    uint32_t meta_len = r.u32("metadata length");
    size_t blob_off = r.off;
    r.need(meta_len, "metadata");
    nlohmann::json j = nlohmann::json::parse(bytes.substr(r.off, meta_len), nullptr, false);
    if (j.is_discarded()) throw FormatError("metadata is not valid JSON", blob_off);
    p.meta = meta_from_json(j, blob_off);
    r.off += meta_len;
    if (r.off != bytes.size()) throw FormatError("trailing bytes after patch payload", r.off);
    return p;
}

void write_patch(const std::string& path, const PointPatch& patch) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_patch: cannot open " + path);
    std::string bytes = patch_to_bytes(patch);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw Error("write_patch: short write to " + path);
}

PointPatch read_patch(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("read_patch: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return patch_from_bytes(bytes);
}

void write_ply(const std::string& path, int n, const float* points,
               const std::vector<std::pair<std::string, std::vector<float>>>& columns) {
    for (const auto& [name, col] : columns)
        if (int(col.size()) != n) throw DimensionError("write_ply: column '" + name + "' length");
    std::ofstream out(path);
    if (!out) throw Error("write_ply: cannot open " + path);
    out << "ply\nformat ascii 1.0\nelement vertex " << n << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    for (const auto& [name, col] : columns) out << "property float " << name << "\n";
    out << "end_header\n";
    char buf[64];
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < 3; ++t) {
            snprintf(buf, sizeof buf, "%.9g", double(points[size_t(i) * 3 + t]));
            out << buf << (t < 2 || !columns.empty() ? " " : "");
        }
        for (size_t c = 0; c < columns.size(); ++c) {
            snprintf(buf, sizeof buf, "%.9g", double(columns[c].second[i]));
            out << buf << (c + 1 < columns.size() ? " " : "");
        }
        out << "\n";
    }
    if (!out) throw Error("write_ply: short write to " + path);
}

double crease_distance_original_units(const PatchMeta& meta, const Vec3& point_normalized) {
    auto it = meta.params.find("crease_len");
    auto itd = meta.params.find("dihedral_rad");
    if (meta.kind != "wedge" || it == meta.params.end() || itd == meta.params.end() ||
        itd->second >= kPi - 1e-9)
        return std::numeric_limits<double>::infinity();
    Vec3 orig = point_normalized * meta.scale +
                Vec3{meta.centroid[0], meta.centroid[1], meta.centroid[2]};
    double half = it->second / 2;
    return point_segment_distance(orig, {0, -half, 0}, {0, half, 0});
}

} // namespace ga
