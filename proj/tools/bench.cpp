// Timing comparison: OpenMP kernels vs the serial reference implementations.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ga/kernels.hpp"
#include "ga/reference.hpp"
#include "ga/rng.hpp"

using ga::Rng;

namespace {

double time_ms(const std::function<void()>& fn) {
    // warm up once, then run until ~200 ms accumulated
    fn();
    int reps = 0;
    auto start = std::chrono::steady_clock::now();
    double elapsed = 0;
    do {
        fn();
        ++reps;
        elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            start)
                      .count();
    } while (elapsed < 200.0 && reps < 1000);
    return elapsed / reps;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

std::vector<double> randv(Rng& rng, size_t n, double lo = -1, double hi = 1) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

void report(const char* name, double serial_ms, double omp_ms, double diff) {
    printf("%-22s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   max|diff| %.3g\n", name,
           serial_ms, omp_ms, serial_ms / omp_ms, diff);
}

} // namespace

int main() {
#ifdef _OPENMP
    printf("threads: %d\n", omp_get_max_threads());
#else
    printf("threads: 1 (no OpenMP)\n");
#endif
    Rng rng(1234);

    { // pairwise negative distances
        int n = 1024, d = 32;
        auto x = randv(rng, size_t(n) * d);
        std::vector<double> a(size_t(n) * n), b(size_t(n) * n);
        double t_ref = time_ms([&] { ga::ref::pairwise_neg_dist(x.data(), a.data(), n, d); });
        double t_omp =
            time_ms([&] { ga::kernels::pairwise_neg_dist(x.data(), b.data(), n, d); });
        report("pairwise_neg_dist", t_ref, t_omp, max_abs_diff(a, b));
    }

    { // dense matmul
        int m = 512, k = 448, n = 256;
        auto a = randv(rng, size_t(m) * k);
        auto b = randv(rng, size_t(k) * n);
        std::vector<double> c1(size_t(m) * n), c2(size_t(m) * n);
        double t_ref = time_ms([&] { ga::ref::matmul(a.data(), b.data(), c1.data(), m, k, n); });
        double t_omp =
            time_ms([&] { ga::kernels::matmul_nn(a.data(), b.data(), c2.data(), m, k, n); });
        report("matmul", t_ref, t_omp, max_abs_diff(c1, c2));
    }

    { // row softmax
        int n = 1024;
        auto x = randv(rng, size_t(n) * n, -4, 4);
        std::vector<double> a(size_t(n) * n), b(size_t(n) * n);
        double t_ref = time_ms([&] { ga::ref::softmax_rows(x.data(), a.data(), n, n); });
        double t_omp = time_ms([&] { ga::kernels::softmax_rows(x.data(), b.data(), n, n); });
        report("softmax_rows", t_ref, t_omp, max_abs_diff(a, b));
    }

    { // attention fusion
        int n = 512;
        auto sa = randv(rng, size_t(n) * n, -2, 2);
        auto pm = randv(rng, size_t(n) * n, -3, 0);
        std::vector<double> a(size_t(n) * n), b(size_t(n) * n);
        double t_ref = time_ms([&] { ga::ref::attention_fuse(sa.data(), pm.data(), a.data(), n); });
        double t_omp = time_ms([&] {
            std::vector<double> s1(size_t(n) * n), s2(size_t(n) * n);
            ga::kernels::softmax_rows(sa.data(), s1.data(), n, n);
            ga::kernels::softmax_rows(pm.data(), s2.data(), n, n);
            for (size_t i = 0; i < s1.size(); ++i) s1[i] *= s2[i];
            ga::kernels::softmax_rows(s1.data(), b.data(), n, n);
        });
        report("attention_fuse", t_ref, t_omp, max_abs_diff(a, b));
    }

    { // k nearest by score
        int n = 1024, k = 20;
        auto s = randv(rng, size_t(n) * n);
        std::vector<int32_t> a(size_t(n) * k), b(size_t(n) * k);
        double t_ref = time_ms([&] { ga::ref::knn_full_sort(s.data(), a.data(), n, k); });
        double t_omp = time_ms([&] { ga::kernels::knn_rows(s.data(), b.data(), n, k); });
        int mism = 0;
        for (size_t i = 0; i < a.size(); ++i) mism += a[i] != b[i];
        report("knn_selection", t_ref, t_omp, double(mism));
    }

    { // edge convolution
        int n = 1024, k = 20, cin = 32, hidden = 32, cout = 32;
        auto x = randv(rng, size_t(n) * cin);
        auto w1 = randv(rng, size_t(2 * cin) * hidden, -0.2, 0.2);
        auto b1 = randv(rng, hidden, -0.1, 0.1);
        auto w2 = randv(rng, size_t(hidden) * cout, -0.2, 0.2);
        auto b2 = randv(rng, cout, -0.1, 0.1);
        std::vector<int32_t> nbr(size_t(n) * k);
        {
            auto pmx = randv(rng, size_t(n) * n);
            ga::kernels::knn_rows(pmx.data(), nbr.data(), n, k);
        }
        std::vector<double> ya(size_t(n) * cout), yb(size_t(n) * cout);
        double t_ref = time_ms([&] {
            ga::ref::edge_conv(x.data(), nbr.data(), n, k, cin, hidden, cout, w1.data(), b1.data(),
                               w2.data(), b2.data(), 0.01, ya.data());
        });
        double t_omp = time_ms([&] {
            std::vector<double> e(size_t(n) * k * 2 * cin);
            ga::kernels::gather_edge_features(x.data(), nbr.data(), e.data(), n, k, cin);
            std::vector<double> h1(size_t(n) * k * hidden), h2(size_t(n) * k * cout);
            ga::kernels::matmul_nn(e.data(), w1.data(), h1.data(), n * k, 2 * cin, hidden);
            ga::kernels::add_row_bias(h1.data(), b1.data(), h1.data(), n * k, hidden);
            ga::kernels::leaky_relu(h1.data(), h1.data(), int64_t(h1.size()), 0.01);
            ga::kernels::matmul_nn(h1.data(), w2.data(), h2.data(), n * k, hidden, cout);
            ga::kernels::add_row_bias(h2.data(), b2.data(), h2.data(), n * k, cout);
            ga::kernels::leaky_relu(h2.data(), h2.data(), int64_t(h2.size()), 0.01);
            std::vector<int32_t> argmax(size_t(n) * cout);
            ga::kernels::slot_max(h2.data(), yb.data(), argmax.data(), n, k, cout);
        });
        report("edge_conv", t_ref, t_omp, max_abs_diff(ya, yb));
    }

    return 0;
}
