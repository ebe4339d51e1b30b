#include "ga/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace ga::kernels {

namespace {

// Fixed-lane dot product. The lane split is part of the kernel definition
// (not thread dependent), so results do not change with the schedule.
template <typename R>
R dot(const R* a, const R* b, int n) {
    constexpr int L = 32 / sizeof(R); // 8 float / 4 double lanes
    R lanes[L] = {};
    int i = 0;
    for (; i + L <= n; i += L)
        for (int l = 0; l < L; ++l) lanes[l] += a[i + l] * b[i + l];
    R tail = 0;
    for (; i < n; ++i) tail += a[i] * b[i];
    R s = tail;
    for (int l = 0; l < L; ++l) s += lanes[l];
    return s;
}

} // namespace

template <typename R>
void matmul_nn(const R* a, const R* b, R* c, int m, int k, int n, bool acc) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        R* ci = c + size_t(i) * n;
        if (!acc) std::fill(ci, ci + n, R(0));
        const R* ai = a + size_t(i) * k;
        for (int p = 0; p < k; ++p) {
            R av = ai[p];
            const R* bp = b + size_t(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

template <typename R>
void matmul_nt(const R* a, const R* b, R* c, int m, int k, int n, bool acc) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const R* ai = a + size_t(i) * k;
        R* ci = c + size_t(i) * n;
        for (int j = 0; j < n; ++j) {
            R v = dot(ai, b + size_t(j) * k, k);
            ci[j] = acc ? ci[j] + v : v;
        }
    }
}

template <typename R>
void matmul_tn(const R* x, const R* y, R* z, int p, int q, int r, bool acc) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < q; ++i) {
        R* zi = z + size_t(i) * r;
        if (!acc) std::fill(zi, zi + r, R(0));
        for (int t = 0; t < p; ++t) {
            R xv = x[size_t(t) * q + i];
            const R* yt = y + size_t(t) * r;
            for (int j = 0; j < r; ++j) zi[j] += xv * yt[j];
        }
    }
}

template <typename R>
void add_row_bias(const R* x, const R* bias, R* y, int n, int c) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const R* xi = x + size_t(i) * c;
        R* yi = y + size_t(i) * c;
        for (int j = 0; j < c; ++j) yi[j] = xi[j] + bias[j];
    }
}

template <typename R>
void leaky_relu(const R* x, R* y, int64_t count, R alpha) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < count; ++i) y[i] = x[i] >= R(0) ? x[i] : alpha * x[i];
}

template <typename R>
void softmax_rows(const R* x, R* y, int n, int c) {
    // The row sum runs over whatever column order the caller chose; a double
    // accumulator keeps the normalized row independent of that order to well
    // below float resolution, so neighbor selection is permutation-stable.
    using Acc = std::conditional_t<std::is_same_v<R, float>, double, R>;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const R* xi = x + size_t(i) * c;
        R* yi = y + size_t(i) * c;
        R mx = xi[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
        Acc sum = 0;
        for (int j = 0; j < c; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            sum += Acc(yi[j]);
        }
        R inv = R(Acc(1) / sum);
        for (int j = 0; j < c; ++j) yi[j] *= inv;
    }
}

template <typename R>
void l2_normalize_rows(const R* x, R* y, int n, int c, R eps, R* saved_norm) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const R* xi = x + size_t(i) * c;
        R* yi = y + size_t(i) * c;
        R nrm = std::sqrt(dot(xi, xi, c));
        if (saved_norm) saved_norm[i] = nrm;
        R inv = R(1) / std::max(nrm, eps);
        for (int j = 0; j < c; ++j) yi[j] = xi[j] * inv;
    }
}

template <typename R>
void pairwise_neg_dist(const R* x, R* pm, int n, int d) {
    // (i,j) and (j,i) run the identical scalar sum, so symmetry is exact.
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const R* xi = x + size_t(i) * d;
        R* row = pm + size_t(i) * n;
        for (int j = 0; j < n; ++j) {
            if (j == i) {
                row[j] = 0;
                continue;
            }
            const R* xj = x + size_t(j) * d;
            R s = 0;
            for (int t = 0; t < d; ++t) {
                R diff = xi[t] - xj[t];
                s += diff * diff;
            }
            row[j] = -std::sqrt(s);
        }
    }
}

template <typename R>
void gather_edge_features(const R* x, const int32_t* nbr, R* e, int n, int k, int c) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const R* xi = x + size_t(i) * c;
        for (int s = 0; s < k; ++s) {
            const R* xj = x + size_t(nbr[size_t(i) * k + s]) * c;
            R* row = e + (size_t(i) * k + s) * (2 * c);
            for (int t = 0; t < c; ++t) {
                row[t] = xi[t];
                row[c + t] = xj[t] - xi[t];
            }
        }
    }
}

template <typename R>
void slot_max(const R* e, R* y, int32_t* argmax, int n, int k, int c) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        R* yi = y + size_t(i) * c;
        int32_t* am = argmax + size_t(i) * c;
        const R* base = e + size_t(i) * k * c;
        for (int t = 0; t < c; ++t) {
            yi[t] = base[t];
            am[t] = 0;
        }
        for (int s = 1; s < k; ++s) {
            const R* row = base + size_t(s) * c;
            for (int t = 0; t < c; ++t) {
                if (row[t] > yi[t]) { // strict: ties keep the lowest slot
                    yi[t] = row[t];
                    am[t] = s;
                }
            }
        }
    }
}

template <typename R>
void colwise_max(const R* x, R* y, int32_t* argmax, int n, int c) {
#pragma omp parallel for schedule(static)
    for (int t = 0; t < c; ++t) {
        R best = x[t];
        int32_t bi = 0;
        for (int i = 1; i < n; ++i) {
            R v = x[size_t(i) * c + t];
            if (v > best) {
                best = v;
                bi = i;
            }
        }
        y[t] = best;
        argmax[t] = bi;
    }
}

template <typename R>
void knn_rows(const R* scores, int32_t* out, int n, int k) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const R* row = scores + size_t(i) * n;
        std::vector<int32_t> idx;
        idx.reserve(n - 1);
        for (int j = 0; j < n; ++j)
            if (j != i) idx.push_back(j);
        auto better = [&](int32_t a, int32_t b) {
            if (row[a] != row[b]) return row[a] > row[b];
            return a < b;
        };
        std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), better);
        std::copy(idx.begin(), idx.begin() + k, out + size_t(i) * k);
    }
}

#define GA_INSTANTIATE(R)                                                                \
    template void matmul_nn<R>(const R*, const R*, R*, int, int, int, bool);             \
    template void matmul_nt<R>(const R*, const R*, R*, int, int, int, bool);             \
    template void matmul_tn<R>(const R*, const R*, R*, int, int, int, bool);             \
    template void add_row_bias<R>(const R*, const R*, R*, int, int);                     \
    template void leaky_relu<R>(const R*, R*, int64_t, R);                               \
    template void softmax_rows<R>(const R*, R*, int, int);                               \
    template void l2_normalize_rows<R>(const R*, R*, int, int, R, R*);                   \
    template void pairwise_neg_dist<R>(const R*, R*, int, int);                          \
    template void gather_edge_features<R>(const R*, const int32_t*, R*, int, int, int);  \
    template void slot_max<R>(const R*, R*, int32_t*, int, int, int);                    \
    template void colwise_max<R>(const R*, R*, int32_t*, int, int);                      \
    template void knn_rows<R>(const R*, int32_t*, int, int);

GA_INSTANTIATE(float)
GA_INSTANTIATE(double)

#undef GA_INSTANTIATE

} // namespace ga::kernels
