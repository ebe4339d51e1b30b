#pragma once

#include <cstdint>
#include <vector>

namespace ga::kernels {

// Row-parallel compute kernels. Every kernel partitions work so that each
// output row (or column, where noted) is produced by one serial scalar loop:
// results are bitwise independent of the OpenMP thread count.
// A naive serial implementation of each lives in ga::ref for testing.

// c[m x n] = a[m x k] * b[k x n]      (+= when acc)
template <typename R>
void matmul_nn(const R* a, const R* b, R* c, int m, int k, int n, bool acc = false);

// c[m x n] = a[m x k] * b[n x k]^T    (+= when acc)
template <typename R>
void matmul_nt(const R* a, const R* b, R* c, int m, int k, int n, bool acc = false);

// z[q x r] = x[p x q]^T * y[p x r]    (+= when acc)
template <typename R>
void matmul_tn(const R* x, const R* y, R* z, int p, int q, int r, bool acc = false);

// y[n x c] = x + broadcast row bias[c]
template <typename R>
void add_row_bias(const R* x, const R* bias, R* y, int n, int c);

template <typename R>
void leaky_relu(const R* x, R* y, int64_t count, R alpha);

// Row-wise softmax with per-row max subtraction.
template <typename R>
void softmax_rows(const R* x, R* y, int n, int c);

// row / max(|row|, eps); saved_norm (size n, nullable) receives the raw norms.
template <typename R>
void l2_normalize_rows(const R* x, R* y, int n, int c, R eps, R* saved_norm);

// pm[i,j] = -|x_i - x_j|, exact zero diagonal, exact symmetry.
template <typename R>
void pairwise_neg_dist(const R* x, R* pm, int n, int d);

// e[(i*k+s), :] = [x_i | x_{nbr(i,s)} - x_i], e is (n*k) x 2c
template <typename R>
void gather_edge_features(const R* x, const int32_t* nbr, R* e, int n, int k, int c);

// y[i,ch] = max over the k slots of e[(i*k+s), ch]; argmax keeps the first
// (lowest) slot index on ties.
template <typename R>
void slot_max(const R* e, R* y, int32_t* argmax, int n, int k, int c);

// y[ch] = max over rows; argmax keeps the first (lowest) row on ties.
template <typename R>
void colwise_max(const R* x, R* y, int32_t* argmax, int n, int c);

// Per row i: the k largest-score columns j != i, descending score, ties by
// ascending index. out is n x k.
template <typename R>
void knn_rows(const R* scores, int32_t* out, int n, int k);

} // namespace ga::kernels
