#include "ga/attention.hpp"

#include <cmath>

#include "ga/kernels.hpp"

namespace ga {

template <typename Real>
int mlp(Tape<Real>& t, int x, const MlpRef& p, Real alpha) {
    int h = t.leaky_relu(t.add_row_bias(t.matmul(x, p.w1), p.b1), alpha);
    return t.leaky_relu(t.add_row_bias(t.matmul(h, p.w2), p.b2), alpha);
}

template <typename Real>
int proximity_matrix(Tape<Real>& t, int x) {
    return t.pairwise_neg_dist(x);
}

template <typename Real>
int semantic_update(Tape<Real>& t, int x, int f_prev, const MlpRef& p, Real alpha, Real eps) {
    int in = f_prev >= 0 ? t.concat_cols(x, f_prev) : x;
    return t.l2_normalize_rows(mlp(t, in, p, alpha), eps);
}

template <typename Real>
int semantic_attention(Tape<Real>& t, int f, const MlpRef& pq, const MlpRef& pk, Real t_scale,
                       Real alpha) {
    if (!(t_scale > 0)) throw DimensionError("semantic_attention: scaling factor must be positive");
    int q = mlp(t, f, pq, alpha);
    int k = mlp(t, f, pk, alpha);
    return t.axpb(t.matmul_nt(q, k), Real(1) / std::sqrt(t_scale), Real(0));
}

template <typename Real>
GaParts<Real> geometric_attention_parts(Tape<Real>& t, int sa, int pm) {
    if (t.shape(sa) != t.shape(pm))
        throw DimensionError("geometric_attention: sa and pm shapes differ");
    GaParts<Real> parts;
    parts.product = t.mul(t.softmax_rows(sa), t.softmax_rows(pm));
    parts.ga = t.softmax_rows(parts.product);
    return parts;
}

template <typename Real>
int geometric_attention(Tape<Real>& t, int sa, int pm) {
    return geometric_attention_parts(t, sa, pm).ga;
}

template <typename Real>
NeighborGraph knn_from_scores(const Real* scores, int n, int k) {
    if (k < 1 || k > n - 1)
        throw DimensionError("knn_from_scores: k must lie in [1, n-1], got k=" +
                             std::to_string(k) + " n=" + std::to_string(n));
    NeighborGraph g;
    g.n = n;
    g.k = k;
    g.idx.resize(size_t(n) * k);
    kernels::knn_rows(scores, g.idx.data(), n, k);
    return g;
}

template <typename Real>
NeighborGraph knn_from_scores(const std::vector<Real>& scores, int n, int k) {
    if (int64_t(scores.size()) != int64_t(n) * n)
        throw DimensionError("knn_from_scores: score matrix must be n x n");
    return knn_from_scores(scores.data(), n, k);
}

template <typename Real>
int edge_conv(Tape<Real>& t, int x, const NeighborGraph& g, const MlpRef& p, Real alpha) {
    int e = t.edge_features(x, g);
    return t.neighborhood_max(mlp(t, e, p, alpha), g);
}

template <typename Real>
int edge_conv_weighted(Tape<Real>& t, int x, int ga, const NeighborGraph& g, const MlpRef& p,
                       Real alpha) {
    int e = t.edge_features(x, g);
    int h = mlp(t, e, p, alpha);
    // k * GA keeps responses near unit scale when GA rows are ~uniform
    int w = t.axpb(t.gather_edge_scores(ga, g), Real(g.k), Real(0));
    return t.neighborhood_max(t.mul_rows(h, w), g);
}

#define GA_INSTANTIATE(R)                                                                    \
    template int mlp<R>(Tape<R>&, int, const MlpRef&, R);                                    \
    template int proximity_matrix<R>(Tape<R>&, int);                                         \
    template int semantic_update<R>(Tape<R>&, int, int, const MlpRef&, R, R);                \
    template int semantic_attention<R>(Tape<R>&, int, const MlpRef&, const MlpRef&, R, R);   \
    template GaParts<R> geometric_attention_parts<R>(Tape<R>&, int, int);                    \
    template int geometric_attention<R>(Tape<R>&, int, int);                                 \
    template NeighborGraph knn_from_scores<R>(const R*, int, int);                           \
    template NeighborGraph knn_from_scores<R>(const std::vector<R>&, int, int);              \
    template int edge_conv<R>(Tape<R>&, int, const NeighborGraph&, const MlpRef&, R);        \
    template int edge_conv_weighted<R>(Tape<R>&, int, int, const NeighborGraph&, const MlpRef&, R);

GA_INSTANTIATE(float)
GA_INSTANTIATE(double)

#undef GA_INSTANTIATE

} // namespace ga
