#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "ga/rng.hpp"

namespace ga {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }
    Vec3 normalized() const {
        double n = norm();
        return n > 0 ? *this / n : Vec3{0, 0, 0};
    }
};

// Row-major 3x3
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    Vec3 apply(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }
};

// Unit quaternion (w, x, y, z) to rotation matrix. det is +1 by construction.
inline Mat3 rotation_from_quaternion(double w, double x, double y, double z) {
    double n = std::sqrt(w * w + x * x + y * y + z * z);
    w /= n; x /= n; y /= n; z /= n;
    Mat3 r;
    r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
           2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
           2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
    return r;
}

// Uniform over SO(3): normalized 4-vector of gaussians.
inline Mat3 random_rotation(Rng& rng) {
    double w = rng.normal(), x = rng.normal(), y = rng.normal(), z = rng.normal();
    if (w == 0 && x == 0 && y == 0 && z == 0) w = 1;
    return rotation_from_quaternion(w, x, y, z);
}

inline double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    Vec3 ab = b - a;
    double denom = ab.norm2();
    double t = denom > 0 ? std::clamp((p - a).dot(ab) / denom, 0.0, 1.0) : 0.0;
    return (p - (a + ab * t)).norm();
}

// Closest-feature regions for closest_point_triangle.
enum class TriRegion { face, edge01, edge12, edge20, vert0, vert1, vert2 };

struct TriClosest {
    Vec3 point;
    TriRegion region;
    double dist;
};

// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5).
inline TriClosest closest_point_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                         const Vec3& c) {
    Vec3 ab = b - a, ac = c - a, ap = p - a;
    double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return {a, TriRegion::vert0, (p - a).norm()};

    Vec3 bp = p - b;
    double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return {b, TriRegion::vert1, (p - b).norm()};

    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) {
        double v = d1 / (d1 - d3);
        Vec3 q = a + ab * v;
        return {q, TriRegion::edge01, (p - q).norm()};
    }

    Vec3 cp = p - c;
    double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return {c, TriRegion::vert2, (p - c).norm()};

    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) {
        double w = d2 / (d2 - d6);
        Vec3 q = a + ac * w;
        return {q, TriRegion::edge20, (p - q).norm()};
    }

    double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        Vec3 q = b + (c - b) * w;
        return {q, TriRegion::edge12, (p - q).norm()};
    }

    double denom = 1.0 / (va + vb + vc);
    double v = vb * denom, w = vc * denom;
    Vec3 q = a + ab * v + ac * w;
    return {q, TriRegion::face, (p - q).norm()};
}

} // namespace ga
