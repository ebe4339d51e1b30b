#pragma once

#include <vector>

#include "ga/tensor.hpp"

namespace ga {

// The PM / SA / GA matrices of one layer, retained for inspection.
// sa and ga stay empty for proximity-only (DGCNN) forwards.
struct AttentionState {
    int layer_index = 0;
    int n = 0;
    std::vector<float> pm, sa, ga;
};

// Tape leaf ids of one two-affine MLP. Evaluation is
// affine -> LeakyReLU -> affine -> LeakyReLU.
struct MlpRef {
    int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
};

template <typename Real>
int mlp(Tape<Real>& t, int x, const MlpRef& p, Real alpha);

// PM entry (i,j) = -|x_i - x_j|; symmetric, zero diagonal.
template <typename Real>
int proximity_matrix(Tape<Real>& t, int x);

// f' = l2_normalize_rows(g_phi(concat(x, f_prev))); pass f_prev = -1 for the
// first layer, which sees raw coordinates only.
template <typename Real>
int semantic_update(Tape<Real>& t, int x, int f_prev, const MlpRef& p, Real alpha, Real eps);

// Scaled dot product scores: SA = q k^T / sqrt(t_scale)
template <typename Real>
int semantic_attention(Tape<Real>& t, int f, const MlpRef& pq, const MlpRef& pk, Real t_scale,
                       Real alpha);

// GA = softmax_rows(softmax_rows(sa) (*) softmax_rows(pm))
template <typename Real>
int geometric_attention(Tape<Real>& t, int sa, int pm);

// Same computation with the pre-softmax product exposed. The final softmax
// is strictly increasing per row, so top-k on `product` selects the same
// neighbors as top-k on `ga`; the product keeps full float dynamic range
// where the doubly-normalized ga rows are too compressed to order reliably.
template <typename Real>
struct GaParts {
    int product = -1;
    int ga = -1;
};
template <typename Real>
GaParts<Real> geometric_attention_parts(Tape<Real>& t, int sa, int pm);

// Selection from a score matrix (larger = closer). Not differentiable.
template <typename Real>
NeighborGraph knn_from_scores(const Real* scores, int n, int k);
template <typename Real>
NeighborGraph knn_from_scores(const std::vector<Real>& scores, int n, int k);

// x'_i = max over neighbors of h_theta([x_i | x_j - x_i])
template <typename Real>
int edge_conv(Tape<Real>& t, int x, const NeighborGraph& g, const MlpRef& p, Real alpha);

// Reserved variant: per-edge responses scaled by k * GA[i, j] before the max,
// which gives the semantic branch a gradient path.
template <typename Real>
int edge_conv_weighted(Tape<Real>& t, int x, int ga, const NeighborGraph& g, const MlpRef& p,
                       Real alpha);

} // namespace ga
