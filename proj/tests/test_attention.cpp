#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ga/attention.hpp"
#include "ga/geometry.hpp"
#include "ga/reference.hpp"
#include "ga/rng.hpp"

using namespace ga;

namespace {

template <typename R>
std::vector<R> randv(Rng& rng, size_t n, double lo = -1, double hi = 1) {
    std::vector<R> v(n);
    for (auto& x : v) x = R(rng.uniform(lo, hi));
    return v;
}

// w1/b1/w2 zero, b2 = row: the MLP emits leaky(b2) for every input row
template <typename R>
MlpRef bias_mlp(Tape<R>& t, int in, int hidden, const std::vector<R>& b2) {
    MlpRef p;
    p.w1 = t.constant({in, hidden}, std::vector<R>(size_t(in) * hidden, R(0)));
    p.b1 = t.constant({hidden}, std::vector<R>(hidden, R(0)));
    p.w2 = t.constant({hidden, int(b2.size())},
                      std::vector<R>(size_t(hidden) * b2.size(), R(0)));
    p.b2 = t.constant({int(b2.size())}, b2);
    return p;
}

template <typename R>
MlpRef random_mlp(Tape<R>& t, Rng& rng, int in, int hidden, int out, bool grad = false) {
    MlpRef p;
    double s1 = 1.0 / std::sqrt(double(in)), s2 = 1.0 / std::sqrt(double(hidden));
    p.w1 = t.leaf({in, hidden}, randv<R>(rng, size_t(in) * hidden, -s1, s1), grad);
    p.b1 = t.leaf({hidden}, randv<R>(rng, hidden, -0.1, 0.1), grad);
    p.w2 = t.leaf({hidden, out}, randv<R>(rng, size_t(hidden) * out, -s2, s2), grad);
    p.b2 = t.leaf({out}, randv<R>(rng, out, -0.1, 0.1), grad);
    return p;
}

} // namespace

TEST_CASE("proximity_matrix analytic examples") {
    Tape<double> t;
    int x = t.constant({3, 3}, {0, 0, 0, 1, 0, 0, 0, 2, 0});
    int pm = proximity_matrix(t, x);
    double s5 = std::sqrt(5.0);
    std::vector<double> expect{0, -1, -2, -1, 0, -s5, -2, -s5, 0};
    for (int i = 0; i < 9; ++i) CHECK(t.value(pm)[i] == doctest::Approx(expect[i]));

    int same = t.constant({3, 2}, {4, 4, 4, 4, 4, 4});
    int pm2 = proximity_matrix(t, same);
    for (double v : t.value(pm2)) CHECK(v == 0.0);

    int one = t.constant({1, 3}, {2, 3, 4});
    CHECK(t.value(proximity_matrix(t, one)) == std::vector<double>{0});
}

TEST_CASE("proximity_matrix symmetry, zero diagonal, rotation invariance") {
    Rng rng(101);
    Tape<float> t;
    int n = 24;
    auto pts = randv<float>(rng, size_t(n) * 3);
    int pm = proximity_matrix(t, t.constant({n, 3}, pts));
    for (int i = 0; i < n; ++i) {
        CHECK(t.value(pm)[size_t(i) * n + i] == 0.0f);
        for (int j = 0; j < n; ++j)
            CHECK(t.value(pm)[size_t(i) * n + j] == t.value(pm)[size_t(j) * n + i]);
    }

    Mat3 rot = random_rotation(rng);
    std::vector<float> rpts(pts.size());
    for (int i = 0; i < n; ++i) {
        Vec3 q = rot.apply({pts[size_t(i) * 3], pts[size_t(i) * 3 + 1], pts[size_t(i) * 3 + 2]});
        rpts[size_t(i) * 3] = float(q.x);
        rpts[size_t(i) * 3 + 1] = float(q.y);
        rpts[size_t(i) * 3 + 2] = float(q.z);
    }
    int pm2 = proximity_matrix(t, t.constant({n, 3}, rpts));
    for (size_t i = 0; i < t.value(pm).size(); ++i)
        CHECK(std::abs(t.value(pm)[i] - t.value(pm2)[i]) < 1e-5f);
}

TEST_CASE("semantic_update examples") {
    Tape<double> t;
    int x = t.constant({2, 3}, {0.5, 0.1, -0.2, 0.9, -0.3, 0.4});

    // forced output rows (3,4,0,0) -> (0.6, 0.8, 0, 0)
    MlpRef forced = bias_mlp<double>(t, 3, 4, {3, 4, 0, 0});
    int f = semantic_update(t, x, -1, forced, 0.01, 1e-12);
    CHECK(t.value(f)[0] == doctest::Approx(0.6));
    CHECK(t.value(f)[1] == doctest::Approx(0.8));
    CHECK(t.value(f)[2] == 0.0);

    // all-zero params -> zero rows through the eps branch
    MlpRef zero = bias_mlp<double>(t, 3, 4, {0, 0, 0, 0});
    int fz = semantic_update(t, x, -1, zero, 0.01, 1e-12);
    for (double v : t.value(fz)) CHECK(v == 0.0);

    // identical inputs produce identical rows
    Rng rng(7);
    Tape<double> t2;
    int xx = t2.constant({2, 3}, {0.3, 0.4, 0.5, 0.3, 0.4, 0.5});
    MlpRef p = random_mlp<double>(t2, rng, 3, 8, 8);
    int ff = semantic_update(t2, xx, -1, p, 0.01, 1e-12);
    for (int j = 0; j < 8; ++j) CHECK(t2.value(ff)[j] == t2.value(ff)[8 + j]);
}

TEST_CASE("semantic_update emits unit rows") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        Tape<float> t;
        int n = 2 + int(rng.uniform_int(14));
        int x = t.constant({n, 3}, randv<float>(rng, size_t(n) * 3));
        MlpRef p = random_mlp<float>(t, rng, 3, 16, 16);
        int f = semantic_update(t, x, -1, p, 0.01f, 1e-12f);
        for (int i = 0; i < n; ++i) {
            float s = 0;
            for (int j = 0; j < 16; ++j) {
                float v = t.value(f)[size_t(i) * 16 + j];
                s += v * v;
            }
            CHECK(std::abs(std::sqrt(s) - 1.0f) < 1e-5f);
        }
    }
}

TEST_CASE("semantic_attention examples and oracle") {
    // q_i = k_j = e1, t = 64 -> every score 1/8
    Tape<double> t;
    int f = t.constant({3, 4}, std::vector<double>(12, 0.25));
    std::vector<double> e1{1, 0, 0, 0};
    MlpRef pq = bias_mlp<double>(t, 4, 4, e1);
    MlpRef pk = bias_mlp<double>(t, 4, 4, e1);
    int sa = semantic_attention(t, f, pq, pk, 64.0, 0.01);
    for (double v : t.value(sa)) CHECK(v == doctest::Approx(1.0 / 8));

    // zero queries -> zero scores
    MlpRef pz = bias_mlp<double>(t, 4, 4, {0, 0, 0, 0});
    int sz = semantic_attention(t, f, pz, pk, 64.0, 0.01);
    for (double v : t.value(sz)) CHECK(v == 0.0);

    // random features against the double-loop reference
    Rng rng(9);
    Tape<double> t2;
    int n = 17, d = 12;
    int ff = t2.constant({n, d}, randv<double>(rng, size_t(n) * d));
    MlpRef rq = random_mlp<double>(t2, rng, d, 16, d);
    MlpRef rk = random_mlp<double>(t2, rng, d, 16, d);
    int sa2 = semantic_attention(t2, ff, rq, rk, double(d), 0.01);
    // reference recomputes from the projected q/k values
    int qn = mlp(t2, ff, rq, 0.01);
    int kn = mlp(t2, ff, rk, 0.01);
    std::vector<double> expect(size_t(n) * n);
    ref::sdp_scores(t2.value(qn).data(), t2.value(kn).data(), expect.data(), n, d, double(d));
    for (size_t i = 0; i < expect.size(); ++i)
        CHECK(std::abs(t2.value(sa2)[i] - expect[i]) < 1e-6);
}

TEST_CASE("geometric_attention fixed points and frozen value") {
    Tape<double> t;
    int z2 = t.constant({2, 2}, {0, 0, 0, 0});
    int ga = geometric_attention(t, z2, z2);
    for (double v : t.value(ga)) CHECK(v == doctest::Approx(0.5));

    int pm = t.constant({2, 2}, {0, -1, -1, 0});
    int ga2 = geometric_attention(t, z2, pm);
    // scalar reference computation of the fusion, frozen:
    // softmax([0,-1]) = [0.73105858, 0.26894142]; halved; final row softmax
    CHECK(t.value(ga2)[0] == doctest::Approx(0.5575093).epsilon(1e-5));
    CHECK(t.value(ga2)[1] == doctest::Approx(0.4424907).epsilon(1e-5));

    std::vector<double> oracle(4);
    ref::attention_fuse(t.value(z2).data(), t.value(pm).data(), oracle.data(), 2);
    CHECK(std::abs(t.value(ga2)[0] - oracle[0]) < 1e-12);
}

TEST_CASE("geometric_attention equals scalar-loop reference, n <= 64") {
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        int n = 2 + int(rng.uniform_int(63));
        auto sa = randv<float>(rng, size_t(n) * n, -2, 2);
        auto pm = randv<float>(rng, size_t(n) * n, -3, 0);
        Tape<float> t;
        int ga = geometric_attention(t, t.constant({n, n}, sa), t.constant({n, n}, pm));

        std::vector<double> sad(sa.begin(), sa.end()), pmd(pm.begin(), pm.end());
        std::vector<double> expect(size_t(n) * n);
        ref::attention_fuse(sad.data(), pmd.data(), expect.data(), n);
        for (size_t i = 0; i < expect.size(); ++i)
            CHECK(std::abs(double(t.value(ga)[i]) - expect[i]) < 1e-6);
    }
}

TEST_CASE("geometric_attention rows are stochastic") {
    Rng rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        int n = 2 + int(rng.uniform_int(7));
        Tape<float> t;
        int ga = geometric_attention(t, t.constant({n, n}, randv<float>(rng, size_t(n) * n, -4, 4)),
                                     t.constant({n, n}, randv<float>(rng, size_t(n) * n, -4, 4)));
        for (int i = 0; i < n; ++i) {
            float sum = 0;
            for (int j = 0; j < n; ++j) {
                float v = t.value(ga)[size_t(i) * n + j];
                CHECK(v >= 0.0f);
                sum += v;
            }
            CHECK(std::abs(sum - 1.0f) < 1e-5f);
        }
    }
}

TEST_CASE("fusion is monotone in pm before the final softmax") {
    Rng rng(12);
    int n = 6;
    auto sa = randv<double>(rng, size_t(n) * n, -2, 2);
    auto pm = randv<double>(rng, size_t(n) * n, -3, 0);
    auto product_at = [&](const std::vector<double>& pmv) {
        Tape<double> t;
        int p = t.mul(t.softmax_rows(t.constant({n, n}, sa)),
                      t.softmax_rows(t.constant({n, n}, pmv)));
        return t.value(p);
    };
    auto base = product_at(pm);
    for (int trial = 0; trial < 10; ++trial) {
        int i = int(rng.uniform_int(n)), j = int(rng.uniform_int(n));
        auto bumped = pm;
        bumped[size_t(i) * n + j] += 0.3;
        auto after = product_at(bumped);
        CHECK(after[size_t(i) * n + j] > base[size_t(i) * n + j]);
    }
}

TEST_CASE("knn_from_scores selection rules") {
    // row 0: self 0.9, then 0.7 and 0.3 -> k=1 picks index 1
    std::vector<float> s{0.9f, 0.7f, 0.3f, 0.1f, 0.8f, 0.2f, 0.5f, 0.1f, 0.6f};
    auto g = knn_from_scores(s, 3, 1);
    CHECK(g.at(0, 0) == 1);

    // all equal scores: ties broken by ascending index
    std::vector<float> eq(16, 1.0f);
    auto g2 = knn_from_scores(eq, 4, 2);
    CHECK(g2.at(0, 0) == 1);
    CHECK(g2.at(0, 1) == 2);
    CHECK(g2.at(1, 0) == 0);
    CHECK(g2.at(1, 1) == 2);

    CHECK_THROWS_AS((void)knn_from_scores(eq, 4, 4), DimensionError);
    CHECK_THROWS_AS((void)knn_from_scores(eq, 4, 0), DimensionError);
}

TEST_CASE("knn_from_scores matches the full-sort oracle") {
    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        int n = 3 + int(rng.uniform_int(40));
        int k = 1 + int(rng.uniform_int(uint64_t(n - 1)));
        auto sf = randv<float>(rng, size_t(n) * n);
        auto g = knn_from_scores(sf, n, k);

        std::vector<double> sd(sf.begin(), sf.end());
        std::vector<int32_t> expect(size_t(n) * k);
        ref::knn_full_sort(sd.data(), expect.data(), n, k);
        CHECK(g.idx == expect);

        for (int i = 0; i < n; ++i)
            for (int s2 = 0; s2 < k; ++s2) {
                CHECK(g.at(i, s2) != i); // no self loops
                if (s2 > 0) {
                    float a = sf[size_t(i) * n + g.at(i, s2 - 1)];
                    float b = sf[size_t(i) * n + g.at(i, s2)];
                    CHECK(a >= b); // descending scores
                }
            }
    }
}

TEST_CASE("edge_conv constant neighborhood and hand computation") {
    // all neighbors equal to x_i with zero weights: output = leaky(b2)
    Tape<double> t;
    int x = t.constant({3, 2}, {5, 5, 5, 5, 5, 5});
    NeighborGraph g{3, 2, {1, 2, 0, 2, 0, 1}};
    MlpRef p = bias_mlp<double>(t, 4, 4, {0.7, -2.0});
    int y = edge_conv(t, x, g, p, 0.1);
    for (int i = 0; i < 3; ++i) {
        CHECK(t.value(y)[size_t(i) * 2 + 0] == doctest::Approx(0.7));
        CHECK(t.value(y)[size_t(i) * 2 + 1] == doctest::Approx(-0.2)); // leaky(-2, 0.1)
    }

    // k = 1, two points, hand-set 2x2 maps on the 1-wide feature
    // edge of point 0: [x_0 | x_1 - x_0] = [1, 2]
    Tape<double> t2;
    int x2 = t2.constant({2, 1}, {1, 3});
    NeighborGraph g1{2, 1, {1, 0}};
    MlpRef hp;
    hp.w1 = t2.constant({2, 2}, {1, -1, 0.5, 0.25}); // h = leaky([1*1+2*0.5, -1*1+2*0.25])
    hp.b1 = t2.constant({2}, {0, 0});
    hp.w2 = t2.constant({2, 2}, {1, 1, 1, -1});
    hp.b2 = t2.constant({2}, {0.1, 0.2});
    int y2 = edge_conv(t2, x2, g1, hp, 0.5);
    // point 0: pre1 = [2, -0.5] -> leaky(0.5) -> [2, -0.25]
    //          pre2 = [2 - 0.25 + 0.1, 2 + 0.25 + 0.2] = [1.85, 2.45] -> same after leaky
    CHECK(t2.value(y2)[0] == doctest::Approx(1.85));
    CHECK(t2.value(y2)[1] == doctest::Approx(2.45));
    // point 1: edge [3, -2]; pre1 = [3 - 1, -3 - 0.5] = [2, -3.5] -> [2, -1.75]
    //          pre2 = [2 - 1.75 + 0.1, 2 + 1.75 + 0.2] = [0.35, 3.95]
    CHECK(t2.value(y2)[2] == doctest::Approx(0.35));
    CHECK(t2.value(y2)[3] == doctest::Approx(3.95));
}

TEST_CASE("edge_conv equals the naive reference") {
    Rng rng(14);
    int n = 20, k = 4, cin = 5, hidden = 7, cout = 6;
    auto x = randv<double>(rng, size_t(n) * cin);
    Tape<double> t;
    int xn = t.constant({n, cin}, x);
    int pmn = proximity_matrix(t, t.constant({n, 3}, randv<double>(rng, size_t(n) * 3)));
    auto g = knn_from_scores(t.value(pmn), n, k);
    MlpRef p = random_mlp<double>(t, rng, 2 * cin, hidden, cout);
    int y = edge_conv(t, xn, g, p, 0.01);

    std::vector<double> expect(size_t(n) * cout);
    ref::edge_conv(x.data(), g.idx.data(), n, k, cin, hidden, cout, t.value(p.w1).data(),
                   t.value(p.b1).data(), t.value(p.w2).data(), t.value(p.b2).data(), 0.01,
                   expect.data());
    for (size_t i = 0; i < expect.size(); ++i) CHECK(std::abs(t.value(y)[i] - expect[i]) < 1e-9);
}

TEST_CASE("edge_conv permutation equivariance is exact with the permuted graph") {
    Rng rng(15);
    int n = 12, k = 3, c = 4;
    auto x = randv<double>(rng, size_t(n) * c);
    Tape<double> t;
    int pmn = proximity_matrix(t, t.constant({n, 3}, randv<double>(rng, size_t(n) * 3)));
    auto g = knn_from_scores(t.value(pmn), n, k);
    MlpRef p = random_mlp<double>(t, rng, 2 * c, 6, 5);
    int y = edge_conv(t, t.constant({n, c}, x), g, p, 0.01);

    // permutation: old i lives at position perm[i]
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(uint64_t(i) + 1)]);

    std::vector<double> px(x.size());
    NeighborGraph pg{n, k, std::vector<int32_t>(size_t(n) * k)};
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) px[size_t(perm[i]) * c + j] = x[size_t(i) * c + j];
        for (int s = 0; s < k; ++s) pg.idx[size_t(perm[i]) * k + s] = perm[g.at(i, s)];
    }
    int y2 = edge_conv(t, t.constant({n, c}, px), pg, p, 0.01);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(t.value(y2)[size_t(perm[i]) * 5 + j] == t.value(y)[size_t(i) * 5 + j]);
}

TEST_CASE("attention pipeline permutation equivariance on generic inputs") {
    Rng rng(16);
    int n = 18;
    auto pts = randv<float>(rng, size_t(n) * 3);

    auto run = [&](const std::vector<float>& coords, std::vector<float>& pm_out,
                   std::vector<float>& sa_out, std::vector<float>& ga_out) {
        Tape<float> t;
        Rng prng(99); // same params both runs
        int x = t.constant({n, 3}, coords);
        MlpRef psem = random_mlp<float>(t, prng, 3, 8, 8);
        MlpRef pq = random_mlp<float>(t, prng, 8, 8, 8);
        MlpRef pk = random_mlp<float>(t, prng, 8, 8, 8);
        int f = semantic_update(t, x, -1, psem, 0.01f, 1e-12f);
        int sa = semantic_attention(t, f, pq, pk, 8.0f, 0.01f);
        int pm = proximity_matrix(t, x);
        int ga = geometric_attention(t, sa, pm);
        pm_out = t.value(pm);
        sa_out = t.value(sa);
        ga_out = t.value(ga);
    };

    std::vector<float> pm0, sa0, ga0;
    run(pts, pm0, sa0, ga0);

    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(uint64_t(i) + 1)]);
    std::vector<float> ppts(pts.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) ppts[size_t(perm[i]) * 3 + j] = pts[size_t(i) * 3 + j];

    std::vector<float> pm1, sa1, ga1;
    run(ppts, pm1, sa1, ga1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            size_t a = size_t(i) * n + j;
            size_t b = size_t(perm[i]) * n + perm[j];
            CHECK(std::abs(pm1[b] - pm0[a]) < 1e-5f);
            CHECK(std::abs(sa1[b] - sa0[a]) < 1e-5f);
            CHECK(std::abs(ga1[b] - ga0[a]) < 1e-5f);
        }
}

TEST_CASE("gradcheck through the fused attention stack") {
    Rng rng(17);
    int n = 6;
    auto pts = randv<double>(rng, size_t(n) * 3);
    // weights as the differentiated input: pack w1 of the semantic MLP
    Tape<double> probe;
    MlpRef fixed_q = random_mlp<double>(probe, rng, 8, 8, 8);
    auto qw1 = probe.value(fixed_q.w1);
    auto qb1 = probe.value(fixed_q.b1);
    auto qw2 = probe.value(fixed_q.w2);
    auto qb2 = probe.value(fixed_q.b2);

    double err = gradcheck<double>(
        [&](Tape<double>& t, int in) {
            int x = t.constant({n, 3}, pts);
            MlpRef psem;
            psem.w1 = in;
            psem.b1 = t.constant({8}, std::vector<double>(8, 0.05));
            psem.w2 = t.constant({8, 8}, qw2);
            psem.b2 = t.constant({8}, qb2);
            MlpRef pq, pk;
            pq.w1 = t.constant({8, 8}, std::vector<double>(64, 0.03));
            pq.b1 = t.constant({8}, qb1);
            pq.w2 = t.constant({8, 8}, qw2);
            pq.b2 = t.constant({8}, qb2);
            pk = pq;
            int f = semantic_update(t, x, -1, psem, 0.01, 1e-12);
            int sa = semantic_attention(t, f, pq, pk, 8.0, 0.01);
            int pm = proximity_matrix(t, x);
            int ga = geometric_attention(t, sa, pm);
            // weighted reduction so every entry matters
            std::vector<double> w(size_t(n) * n);
            Rng wr(5);
            for (auto& v : w) v = wr.uniform(0.5, 1.5);
            return t.mul(ga, t.constant({n, n}, w));
        },
        {3, 8}, randv<double>(rng, 24, -0.5, 0.5), 1e-5);
    CHECK(err < 1e-4);
}
