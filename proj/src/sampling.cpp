#include "ga/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>

#include "ga/error.hpp"

namespace ga {

namespace {

// hash grid over 3D cells of a fixed size
struct Grid {
    double cell;
    std::unordered_map<uint64_t, std::vector<int>> cells;

    explicit Grid(double cell_size) : cell(cell_size) {}

    static uint64_t key(int64_t x, int64_t y, int64_t z) {
        return uint64_t(x * 73856093LL ^ y * 19349663LL ^ z * 83492791LL);
    }

    void coords(const Vec3& p, int64_t& x, int64_t& y, int64_t& z) const {
        x = int64_t(std::floor(p.x / cell));
        y = int64_t(std::floor(p.y / cell));
        z = int64_t(std::floor(p.z / cell));
    }

    void insert(const Vec3& p, int id) {
        int64_t x, y, z;
        coords(p, x, y, z);
        cells[key(x, y, z)].push_back(id);
    }

    template <typename F>
    void for_neighbors(const Vec3& p, F&& f) const {
        int64_t x, y, z;
        coords(p, x, y, z);
        for (int64_t dx = -1; dx <= 1; ++dx)
            for (int64_t dy = -1; dy <= 1; ++dy)
                for (int64_t dz = -1; dz <= 1; ++dz) {
                    auto it = cells.find(key(x + dx, y + dy, z + dz));
                    if (it == cells.end()) continue;
                    for (int id : it->second) f(id);
                }
    }
};

} // namespace

std::vector<Vec3> poisson_dart_throw(const SurfaceSampler& surf, double radius, Rng& rng) {
    if (!(radius > 0)) throw GenerationError("poisson: radius must be positive");
    double a = surf.area();
    if (!(a > 0)) throw GenerationError("poisson: surface has zero area");

    // tries per disk capacity; 60 gets within a few percent of saturation
    int64_t attempts = int64_t(std::ceil(60.0 * a / (radius * radius)));
    attempts = std::max<int64_t>(attempts, 64);

    std::vector<Vec3> accepted;
    Grid grid(radius);
    double r2 = radius * radius;
    for (int64_t t = 0; t < attempts; ++t) {
        Vec3 c = surf.sample(rng);
        bool ok = true;
        grid.for_neighbors(c, [&](int id) {
            if (ok && (accepted[id] - c).norm2() < r2) ok = false;
        });
        if (!ok) continue;
        grid.insert(c, int(accepted.size()));
        accepted.push_back(c);
    }
    return accepted;
}

std::vector<int> eliminate_to_count(const std::vector<Vec3>& pts, int target, double r_weight) {
    int m = int(pts.size());
    if (target > m) throw GenerationError("eliminate_to_count: fewer samples than target");
    if (target == m) {
        std::vector<int> all(m);
        for (int i = 0; i < m; ++i) all[i] = i;
        return all;
    }

    double r2max = 2.0 * r_weight;
    Grid grid(r2max);
    for (int i = 0; i < m; ++i) grid.insert(pts[i], i);

    // symmetric neighbor lists within 2*r_weight
    std::vector<std::vector<std::pair<int, double>>> nbr(m);
    for (int i = 0; i < m; ++i) {
        grid.for_neighbors(pts[i], [&](int j) {
            if (j == i) return;
            double d = (pts[i] - pts[j]).norm();
            if (d < r2max) nbr[i].push_back({j, d});
        });
    }

    auto contribution = [&](double d) { return std::pow(1.0 - d / r2max, 8.0); };

    std::vector<double> weight(m, 0.0);
    for (int i = 0; i < m; ++i)
        for (auto& [j, d] : nbr[i]) weight[i] += contribution(d);

    std::vector<char> alive(m, 1);
    for (int removed = 0; removed < m - target; ++removed) {
        int worst = -1;
        for (int i = 0; i < m; ++i)
            if (alive[i] && (worst < 0 || weight[i] > weight[worst])) worst = i;
        alive[worst] = 0;
        for (auto& [j, d] : nbr[worst])
            if (alive[j]) weight[j] -= contribution(d);
    }

    std::vector<int> kept;
    kept.reserve(target);
    for (int i = 0; i < m; ++i)
        if (alive[i]) kept.push_back(i);
    return kept;
}

} // namespace ga
