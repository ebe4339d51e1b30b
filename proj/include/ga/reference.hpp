#pragma once

#include <cstdint>
#include <vector>

#include "ga/geometry.hpp"

namespace ga::ref {

// Naive serial double-precision reference implementations, written straight
// from the math with plain loops. They never call into ga::kernels or the
// tape; tests and the benchmark compare the production path against them.

// triple-loop matrix product, c[m x n] = a[m x k] * b[k x n]
void matmul(const double* a, const double* b, double* c, int m, int k, int n);

void leaky_relu(const double* x, double* y, int64_t count, double alpha);

// plain exp/sum row softmax (no max shift)
void softmax_rows(const double* x, double* y, int n, int c);

void l2_normalize_rows(const double* x, double* y, int n, int c, double eps);

void pairwise_neg_dist(const double* x, double* pm, int n, int d);

// double-loop scaled dot products: sa[i,j] = <q_i, k_j> / sqrt(t)
void sdp_scores(const double* q, const double* kmat, double* sa, int n, int d, double t);

// softmax(sa) elementwise* softmax(pm), then a final row softmax
void attention_fuse(const double* sa, const double* pm, double* out, int n);

// full sort per row: k largest scores, j != i, descending, ties by index
void knn_full_sort(const double* scores, int32_t* out, int n, int k);

// per-point loop edge convolution with a two-affine MLP, LeakyReLU between;
// w1 is [2*cin x hidden], w2 is [hidden x cout]
void edge_conv(const double* x, const int32_t* nbr, int n, int k, int cin, int hidden,
               int cout, const double* w1, const double* b1, const double* w2,
               const double* b2, double alpha, double* y);

// direct formulas
double angular_loss(const double* pred, const double* gt, int n);
double bce_direct(const double* logits, const double* labels, int n); // -[y ln p + (1-y) ln(1-p)]
double rmse(const double* pred, const double* gt, int n, bool flip_sign);
double balanced_accuracy(const double* prob, const uint8_t* labels, int n, double threshold);

// sequential scalar Adam, one parameter, returns value after each step
std::vector<double> adam_scalar_sequence(double w0, const std::vector<double>& grads, double lr,
                                         double beta1, double beta2, double eps);

// unit normal of the best-fit plane through points (smallest-eigenvalue
// eigenvector of the covariance, 3x3 Jacobi sweeps)
Vec3 plane_fit_normal(const std::vector<Vec3>& pts);

} // namespace ga::ref
