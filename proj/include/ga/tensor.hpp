#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ga/error.hpp"

namespace ga {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int e : s) n *= e;
    return n;
}

// Per-point neighbor indices derived from a score matrix.
// Row i: k indices j != i, descending selection score, ties by ascending index.
struct NeighborGraph {
    int n = 0;
    int k = 0;
    std::vector<int32_t> idx; // n*k, row-major

    int32_t at(int i, int s) const { return idx[size_t(i) * k + s]; }
};

// Reverse-mode tape over dense row-major tensors.
//
// Nodes are appended in evaluation order, which is a topological order, so
// backward() is a single reverse sweep. Forward values are validated finite
// after every primitive (NaN/Inf raises NumericError). Gradient buffers are
// allocated on first touch; a node whose gradient was never touched is
// skipped in the sweep, so subgraphs that only feed non-differentiable
// consumers (e.g. neighbor selection) cost nothing in backward.
template <typename Real>
class Tape {
public:
    // --- construction -----------------------------------------------------
    int leaf(Shape shape, std::vector<Real> data, bool requires_grad = false);
    int constant(Shape shape, std::vector<Real> data) { return leaf(std::move(shape), std::move(data), false); }
    int scalar(Real v) { return constant({1}, {v}); }

    // --- primitives --------------------------------------------------------
    int matmul(int a, int b);            // [m,k]x[k,n] -> [m,n]
    int matmul_nt(int a, int b);         // [m,k]x[n,k]^T -> [m,n]
    int add(int a, int b);               // same shape
    int mul(int a, int b);               // elementwise, same shape
    int axpb(int x, Real a, Real b);     // a*x + b
    int add_row_bias(int x, int bias);   // [n,c] + [c]
    int leaky_relu(int x, Real alpha);
    int softmax_rows(int m);
    int l2_normalize_rows(int m, Real eps);
    int pairwise_neg_dist(int x);        // [n,d] -> [n,n], entry -(|x_i-x_j|)
    int concat_cols(int a, int b);       // [n,ca],[n,cb] -> [n,ca+cb]
    int edge_features(int x, const NeighborGraph& g);     // [n,c] -> [n*k, 2c]
    int neighborhood_max(int values, const NeighborGraph& g); // [n*k,c] -> [n,c]
    int gather_edge_scores(int scores, const NeighborGraph& g); // [n,n] -> [n*k, 1]
    int mul_rows(int x, int w);          // [m,c] row-scaled by [m,1]
    int colwise_max(int x);              // [n,c] -> [1,c]
    int broadcast_rows(int row, int n);  // [1,c] -> [n,c]
    int sum_all(int x);                  // -> [1]
    int mean_all(int x);                 // -> [1]

    // fused losses (labels may be constants or taped)
    int angular_loss(int pred, int gt);    // [n,3] unit rows each -> [1]
    int mse_loss(int a, int b);            // mean over all entries -> [1]
    int bce_with_logits(int logits, int labels); // [n] or [n,1] -> [1]

    // --- execution ----------------------------------------------------------
    void backward(int seed); // seed must be scalar

    int size() const { return int(nodes_.size()); }
    const Shape& shape(int id) const { return nodes_[id].shape; }
    const std::vector<Real>& value(int id) const { return nodes_[id].val; }
    bool requires_grad(int id) const { return nodes_[id].requires_grad; }
    // Gradient buffer; empty when the node was never touched by backward.
    const std::vector<Real>& grad(int id) const { return nodes_[id].grad; }
    // Dense gradient (zeros when untouched).
    std::vector<Real> grad_dense(int id) const;

private:
    enum class Op : uint8_t {
        leaf, matmul_nn, matmul_nt, add, mul, axpb, add_row_bias, leaky_relu,
        softmax_rows, l2norm_rows, pairwise_neg_dist, concat_cols, edge_features,
        slot_max, gather_scores, mul_rows, colwise_max, broadcast_rows, sum_all,
        mean_all, angular, mse, bce
    };

    struct Node {
        Op op = Op::leaf;
        int a = -1, b = -1;
        Real p0 = 0, p1 = 0;       // alpha / eps / scalar params
        int n = 0, k = 0, c = 0;   // op-specific extents
        Shape shape;
        std::vector<Real> val;
        std::vector<Real> grad;    // allocated on first touch
        bool requires_grad = false;
        std::vector<int32_t> ia;   // neighbor indices / argmax slots
        std::vector<Real> ra;      // saved reals (norms, dots)
    };

    int push(Node&& nd, const char* opname);
    Real* touch(int id); // grad buffer of id, allocating; nullptr if !requires_grad
    void check_finite(const Node& nd, const char* opname) const;
    const Node& at(int id) const;

    std::vector<Node> nodes_;
};

// Max over input coordinates of |analytic - central difference| /
// max(1, |central difference|). build must produce a node from the input
// leaf; non-scalar outputs are reduced with sum_all.
template <typename Real>
Real gradcheck(const std::function<int(Tape<Real>&, int)>& build, const Shape& in_shape,
               const std::vector<Real>& input, Real h);

extern template class Tape<float>;
extern template class Tape<double>;
extern template float gradcheck<float>(const std::function<int(Tape<float>&, int)>&,
                                       const Shape&, const std::vector<float>&, float);
extern template double gradcheck<double>(const std::function<int(Tape<double>&, int)>&,
                                         const Shape&, const std::vector<double>&, double);

} // namespace ga
