#include "ga/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ga/kernels.hpp"

namespace ga {

namespace {

template <typename Real>
Real sigmoid(Real z) {
    return z >= 0 ? Real(1) / (Real(1) + std::exp(-z)) : std::exp(z) / (Real(1) + std::exp(z));
}

} // namespace

template <typename Real>
const typename Tape<Real>::Node& Tape<Real>::at(int id) const {
    if (id < 0 || id >= int(nodes_.size())) throw DimensionError("tape: node id out of range");
    return nodes_[id];
}

template <typename Real>
void Tape<Real>::check_finite(const Node& nd, const char* opname) const {
    for (Real v : nd.val)
        if (!std::isfinite(v))
            throw NumericError(std::string("non-finite value in output of ") + opname);
}

template <typename Real>
int Tape<Real>::push(Node&& nd, const char* opname) {
    if (int64_t(nd.val.size()) != numel(nd.shape))
        throw DimensionError(std::string(opname) + ": data length does not match shape");
    check_finite(nd, opname);
    nodes_.push_back(std::move(nd));
    return int(nodes_.size()) - 1;
}

template <typename Real>
Real* Tape<Real>::touch(int id) {
    Node& nd = nodes_[id];
    if (!nd.requires_grad) return nullptr;
    if (nd.grad.empty()) nd.grad.assign(nd.val.size(), Real(0));
    return nd.grad.data();
}

template <typename Real>
std::vector<Real> Tape<Real>::grad_dense(int id) const {
    const Node& nd = at(id);
    if (!nd.grad.empty()) return nd.grad;
    return std::vector<Real>(nd.val.size(), Real(0));
}

template <typename Real>
int Tape<Real>::leaf(Shape shape, std::vector<Real> data, bool requires_grad) {
    Node nd;
    nd.op = Op::leaf;
    nd.shape = std::move(shape);
    nd.val = std::move(data);
    nd.requires_grad = requires_grad;
    return push(std::move(nd), "leaf");
}

template <typename Real>
int Tape<Real>::matmul(int a, int b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
        throw DimensionError("matmul: inner extents do not match");
    int m = na.shape[0], k = na.shape[1], n = nb.shape[1];
    Node nd;
    nd.op = Op::matmul_nn;
    nd.a = a;
    nd.b = b;
    nd.shape = {m, n};
    nd.val.resize(size_t(m) * n);
    kernels::matmul_nn(na.val.data(), nb.val.data(), nd.val.data(), m, k, n);
    nd.requires_grad = na.requires_grad || nb.requires_grad;
    return push(std::move(nd), "matmul");
}

template <typename Real>
int Tape<Real>::matmul_nt(int a, int b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[1])
        throw DimensionError("matmul_nt: inner extents do not match");
    int m = na.shape[0], k = na.shape[1], n = nb.shape[0];
    Node nd;
    nd.op = Op::matmul_nt;
    nd.a = a;
    nd.b = b;
    nd.shape = {m, n};
    nd.val.resize(size_t(m) * n);
    kernels::matmul_nt(na.val.data(), nb.val.data(), nd.val.data(), m, k, n);
    nd.requires_grad = na.requires_grad || nb.requires_grad;
    return push(std::move(nd), "matmul_nt");
}

template <typename Real>
int Tape<Real>::add(int a, int b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    if (na.shape != nb.shape) throw DimensionError("add: shape mismatch");
    Node nd;
    nd.op = Op::add;
    nd.a = a;
    nd.b = b;
    nd.shape = na.shape;
    nd.val.resize(na.val.size());
    for (size_t i = 0; i < na.val.size(); ++i) nd.val[i] = na.val[i] + nb.val[i];
    nd.requires_grad = na.requires_grad || nb.requires_grad;
    return push(std::move(nd), "add");
}

template <typename Real>
int Tape<Real>::mul(int a, int b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    if (na.shape != nb.shape) throw DimensionError("mul: shape mismatch");
    Node nd;
    nd.op = Op::mul;
    nd.a = a;
    nd.b = b;
    nd.shape = na.shape;
    nd.val.resize(na.val.size());
    for (size_t i = 0; i < na.val.size(); ++i) nd.val[i] = na.val[i] * nb.val[i];
    nd.requires_grad = na.requires_grad || nb.requires_grad;
    return push(std::move(nd), "mul");
}

template <typename Real>
int Tape<Real>::axpb(int x, Real a, Real b) {
    const Node& nx = at(x);
    Node nd;
    nd.op = Op::axpb;
    nd.a = x;
    nd.p0 = a;
    nd.p1 = b;
    nd.shape = nx.shape;
    nd.val.resize(nx.val.size());
    for (size_t i = 0; i < nx.val.size(); ++i) nd.val[i] = a * nx.val[i] + b;
    nd.requires_grad = nx.requires_grad;
    return push(std::move(nd), "axpb");
}

template <typename Real>
int Tape<Real>::add_row_bias(int x, int bias) {
    const Node& nx = at(x);
    const Node& nb = at(bias);
    if (nx.shape.size() != 2 || numel(nb.shape) != nx.shape[1])
        throw DimensionError("add_row_bias: bias width mismatch");
    int n = nx.shape[0], c = nx.shape[1];
    Node nd;
    nd.op = Op::add_row_bias;
    nd.a = x;
    nd.b = bias;
    nd.shape = nx.shape;
    nd.val.resize(nx.val.size());
    kernels::add_row_bias(nx.val.data(), nb.val.data(), nd.val.data(), n, c);
    nd.requires_grad = nx.requires_grad || nb.requires_grad;
    return push(std::move(nd), "add_row_bias");
}

template <typename Real>
int Tape<Real>::leaky_relu(int x, Real alpha) {
    const Node& nx = at(x);
    Node nd;
    nd.op = Op::leaky_relu;
    nd.a = x;
    nd.p0 = alpha;
    nd.shape = nx.shape;
    nd.val.resize(nx.val.size());
    kernels::leaky_relu(nx.val.data(), nd.val.data(), int64_t(nx.val.size()), alpha);
    nd.requires_grad = nx.requires_grad;
    return push(std::move(nd), "leaky_relu");
}

template <typename Real>
int Tape<Real>::softmax_rows(int m) {
    const Node& nm = at(m);
    if (nm.shape.size() != 2) throw DimensionError("softmax_rows: expects a matrix");
    Node nd;
    nd.op = Op::softmax_rows;
    nd.a = m;
    nd.shape = nm.shape;
    nd.val.resize(nm.val.size());
    kernels::softmax_rows(nm.val.data(), nd.val.data(), nm.shape[0], nm.shape[1]);
    nd.requires_grad = nm.requires_grad;
    return push(std::move(nd), "softmax_rows");
}

template <typename Real>
int Tape<Real>::l2_normalize_rows(int m, Real eps) {
    const Node& nm = at(m);
    if (nm.shape.size() != 2) throw DimensionError("l2_normalize_rows: expects a matrix");
    if (!(eps > 0)) throw DimensionError("l2_normalize_rows: eps must be positive");
    int n = nm.shape[0], c = nm.shape[1];
    Node nd;
    nd.op = Op::l2norm_rows;
    nd.a = m;
    nd.p0 = eps;
    nd.shape = nm.shape;
    nd.val.resize(nm.val.size());
    nd.ra.resize(n);
    kernels::l2_normalize_rows(nm.val.data(), nd.val.data(), n, c, eps, nd.ra.data());
    nd.requires_grad = nm.requires_grad;
    return push(std::move(nd), "l2_normalize_rows");
}

template <typename Real>
int Tape<Real>::pairwise_neg_dist(int x) {
    const Node& nx = at(x);
    if (nx.shape.size() != 2 || nx.shape[1] < 1)
        throw DimensionError("pairwise_neg_dist: expects [n,d] with d >= 1");
    int n = nx.shape[0], d = nx.shape[1];
    Node nd;
    nd.op = Op::pairwise_neg_dist;
    nd.a = x;
    nd.shape = {n, n};
    nd.val.resize(size_t(n) * n);
    kernels::pairwise_neg_dist(nx.val.data(), nd.val.data(), n, d);
    nd.requires_grad = nx.requires_grad;
    return push(std::move(nd), "pairwise_neg_dist");
}

template <typename Real>
int Tape<Real>::concat_cols(int a, int b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[0] != nb.shape[0])
        throw DimensionError("concat_cols: row counts differ");
    int n = na.shape[0], ca = na.shape[1], cb = nb.shape[1];
    Node nd;
    nd.op = Op::concat_cols;
    nd.a = a;
    nd.b = b;
    nd.shape = {n, ca + cb};
    nd.val.resize(size_t(n) * (ca + cb));
    for (int i = 0; i < n; ++i) {
        std::memcpy(nd.val.data() + size_t(i) * (ca + cb), na.val.data() + size_t(i) * ca,
                    sizeof(Real) * ca);
        std::memcpy(nd.val.data() + size_t(i) * (ca + cb) + ca, nb.val.data() + size_t(i) * cb,
                    sizeof(Real) * cb);
    }
    nd.requires_grad = na.requires_grad || nb.requires_grad;
    return push(std::move(nd), "concat_cols");
}

template <typename Real>
int Tape<Real>::edge_features(int x, const NeighborGraph& g) {
    const Node& nx = at(x);
    if (nx.shape.size() != 2 || nx.shape[0] != g.n)
        throw DimensionError("edge_features: graph does not match feature rows");
    if (g.k < 1) throw DimensionError("edge_features: empty neighbor list");
    int n = g.n, k = g.k, c = nx.shape[1];
    Node nd;
    nd.op = Op::edge_features;
    nd.a = x;
    nd.n = n;
    nd.k = k;
    nd.c = c;
    nd.shape = {n * k, 2 * c};
    nd.val.resize(size_t(n) * k * 2 * c);
    nd.ia = g.idx;
    kernels::gather_edge_features(nx.val.data(), nd.ia.data(), nd.val.data(), n, k, c);
    nd.requires_grad = nx.requires_grad;
    return push(std::move(nd), "edge_features");
}

template <typename Real>
int Tape<Real>::neighborhood_max(int values, const NeighborGraph& g) {
    const Node& nv = at(values);
    if (g.k < 1) throw DimensionError("neighborhood_max: empty neighbor list");
    if (nv.shape.size() != 2 || nv.shape[0] != g.n * g.k)
        throw DimensionError("neighborhood_max: values do not match graph (n*k rows expected)");
    int n = g.n, k = g.k, c = nv.shape[1];
    Node nd;
    nd.op = Op::slot_max;
    nd.a = values;
    nd.n = n;
    nd.k = k;
    nd.c = c;
    nd.shape = {n, c};
    nd.val.resize(size_t(n) * c);
    nd.ia.resize(size_t(n) * c);
    kernels::slot_max(nv.val.data(), nd.val.data(), nd.ia.data(), n, k, c);
    nd.requires_grad = nv.requires_grad;
    return push(std::move(nd), "neighborhood_max");
}

template <typename Real>
int Tape<Real>::gather_edge_scores(int scores, const NeighborGraph& g) {
    const Node& ns = at(scores);
    if (ns.shape.size() != 2 || ns.shape[0] != g.n || ns.shape[1] != g.n)
        throw DimensionError("gather_edge_scores: score matrix does not match graph");
    int n = g.n, k = g.k;
    Node nd;
    nd.op = Op::gather_scores;
    nd.a = scores;
    nd.n = n;
    nd.k = k;
    nd.shape = {n * k, 1};
    nd.val.resize(size_t(n) * k);
    nd.ia = g.idx;
    for (int i = 0; i < n; ++i)
        for (int s = 0; s < k; ++s)
            nd.val[size_t(i) * k + s] = ns.val[size_t(i) * n + nd.ia[size_t(i) * k + s]];
    nd.requires_grad = ns.requires_grad;
    return push(std::move(nd), "gather_edge_scores");
}

template <typename Real>
int Tape<Real>::mul_rows(int x, int w) {
    const Node& nx = at(x);
    const Node& nw = at(w);
    if (nx.shape.size() != 2 || numel(nw.shape) != nx.shape[0])
        throw DimensionError("mul_rows: weight length does not match rows");
    int m = nx.shape[0], c = nx.shape[1];
    Node nd;
    nd.op = Op::mul_rows;
    nd.a = x;
    nd.b = w;
    nd.shape = nx.shape;
    nd.val.resize(nx.val.size());
    for (int i = 0; i < m; ++i) {
        Real wv = nw.val[i];
        for (int j = 0; j < c; ++j) nd.val[size_t(i) * c + j] = nx.val[size_t(i) * c + j] * wv;
    }
    nd.requires_grad = nx.requires_grad || nw.requires_grad;
    return push(std::move(nd), "mul_rows");
}

template <typename Real>
int Tape<Real>::colwise_max(int x) {
    const Node& nx = at(x);
    if (nx.shape.size() != 2 || nx.shape[0] < 1) throw DimensionError("colwise_max: expects [n,c]");
    int n = nx.shape[0], c = nx.shape[1];
    Node nd;
    nd.op = Op::colwise_max;
    nd.a = x;
    nd.n = n;
    nd.c = c;
    nd.shape = {1, c};
    nd.val.resize(c);
    nd.ia.resize(c);
    kernels::colwise_max(nx.val.data(), nd.val.data(), nd.ia.data(), n, c);
    nd.requires_grad = nx.requires_grad;
    return push(std::move(nd), "colwise_max");
}

template <typename Real>
int Tape<Real>::broadcast_rows(int row, int n) {
    const Node& nr = at(row);
    if (nr.shape.size() != 2 || nr.shape[0] != 1)
        throw DimensionError("broadcast_rows: expects a [1,c] row");
    int c = nr.shape[1];
    Node nd;
    nd.op = Op::broadcast_rows;
    nd.a = row;
    nd.n = n;
    nd.c = c;
    nd.shape = {n, c};
    nd.val.resize(size_t(n) * c);
    for (int i = 0; i < n; ++i)
        std::memcpy(nd.val.data() + size_t(i) * c, nr.val.data(), sizeof(Real) * c);
    nd.requires_grad = nr.requires_grad;
    return push(std::move(nd), "broadcast_rows");
}

template <typename Real>
int Tape<Real>::sum_all(int x) {
    const Node& nx = at(x);
    Real s = 0;
    for (Real v : nx.val) s += v;
    Node nd;
    nd.op = Op::sum_all;
    nd.a = x;
    nd.shape = {1};
    nd.val = {s};
    nd.requires_grad = nx.requires_grad;
    return push(std::move(nd), "sum_all");
}

template <typename Real>
int Tape<Real>::mean_all(int x) {
    const Node& nx = at(x);
    Real s = 0;
    for (Real v : nx.val) s += v;
    Node nd;
    nd.op = Op::mean_all;
    nd.a = x;
    nd.shape = {1};
    nd.val = {s / Real(nx.val.size())};
    nd.requires_grad = nx.requires_grad;
    return push(std::move(nd), "mean_all");
}

template <typename Real>
int Tape<Real>::angular_loss(int pred, int gt) {
    const Node& np = at(pred);
    const Node& ng = at(gt);
    if (np.shape != ng.shape || np.shape.size() != 2 || np.shape[1] != 3)
        throw DimensionError("angular_loss: expects matching [n,3] inputs");
    int n = np.shape[0];
    Node nd;
    nd.op = Op::angular;
    nd.a = pred;
    nd.b = gt;
    nd.n = n;
    nd.shape = {1};
    nd.ra.resize(n);
    Real acc = 0;
    for (int i = 0; i < n; ++i) {
        Real d = 0;
        for (int t = 0; t < 3; ++t) d += np.val[size_t(i) * 3 + t] * ng.val[size_t(i) * 3 + t];
        nd.ra[i] = d;
        acc += Real(1) - d * d;
    }
    nd.val = {acc / Real(n)};
    nd.requires_grad = np.requires_grad || ng.requires_grad;
    return push(std::move(nd), "angular_loss");
}

template <typename Real>
int Tape<Real>::mse_loss(int a, int b) {
    const Node& na = at(a);
    const Node& nb = at(b);
    if (na.shape != nb.shape) throw DimensionError("mse_loss: shape mismatch");
    Real acc = 0;
    for (size_t i = 0; i < na.val.size(); ++i) {
        Real d = na.val[i] - nb.val[i];
        acc += d * d;
    }
    Node nd;
    nd.op = Op::mse;
    nd.a = a;
    nd.b = b;
    nd.shape = {1};
    nd.val = {acc / Real(na.val.size())};
    nd.requires_grad = na.requires_grad || nb.requires_grad;
    return push(std::move(nd), "mse_loss");
}

template <typename Real>
int Tape<Real>::bce_with_logits(int logits, int labels) {
    const Node& nz = at(logits);
    const Node& ny = at(labels);
    if (numel(nz.shape) != numel(ny.shape))
        throw DimensionError("bce_with_logits: logits/labels length mismatch");
    int n = int(nz.val.size());
    Real acc = 0;
    for (int i = 0; i < n; ++i) {
        Real z = nz.val[i], y = ny.val[i];
        acc += std::max(z, Real(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    Node nd;
    nd.op = Op::bce;
    nd.a = logits;
    nd.b = labels;
    nd.n = n;
    nd.shape = {1};
    nd.val = {acc / Real(n)};
    nd.requires_grad = nz.requires_grad || ny.requires_grad;
    return push(std::move(nd), "bce_with_logits");
}

template <typename Real>
void Tape<Real>::backward(int seed) {
    const Node& sn = at(seed);
    if (numel(sn.shape) != 1) throw DimensionError("backward: seed must be scalar");
    if (Real* g = touch(seed))
        g[0] += Real(1);
    else
        return; // loss does not depend on any differentiable leaf

    for (int id = seed; id >= 0; --id) {
        Node& nd = nodes_[id];
        if (nd.grad.empty() || nd.op == Op::leaf) continue;
        const Real* g = nd.grad.data();
        switch (nd.op) {
        case Op::matmul_nn: {
            const Node& na = nodes_[nd.a];
            const Node& nb = nodes_[nd.b];
            int m = na.shape[0], k = na.shape[1], n = nb.shape[1];
            if (Real* da = touch(nd.a)) kernels::matmul_nt(g, nb.val.data(), da, m, n, k, true);
            if (Real* db = touch(nd.b)) kernels::matmul_tn(na.val.data(), g, db, m, k, n, true);
            break;
        }
        case Op::matmul_nt: {
            const Node& na = nodes_[nd.a];
            const Node& nb = nodes_[nd.b];
            int m = na.shape[0], k = na.shape[1], n = nb.shape[0];
            if (Real* da = touch(nd.a)) kernels::matmul_nn(g, nb.val.data(), da, m, n, k, true);
            if (Real* db = touch(nd.b)) kernels::matmul_tn(g, na.val.data(), db, m, n, k, true);
            break;
        }
        case Op::add: {
            if (Real* da = touch(nd.a))
                for (size_t i = 0; i < nd.val.size(); ++i) da[i] += g[i];
            if (Real* db = touch(nd.b))
                for (size_t i = 0; i < nd.val.size(); ++i) db[i] += g[i];
            break;
        }
        case Op::mul: {
            const Node& na = nodes_[nd.a];
            const Node& nb = nodes_[nd.b];
            if (Real* da = touch(nd.a))
                for (size_t i = 0; i < nd.val.size(); ++i) da[i] += g[i] * nb.val[i];
            if (Real* db = touch(nd.b))
                for (size_t i = 0; i < nd.val.size(); ++i) db[i] += g[i] * na.val[i];
            break;
        }
        case Op::axpb: {
            if (Real* da = touch(nd.a))
                for (size_t i = 0; i < nd.val.size(); ++i) da[i] += nd.p0 * g[i];
            break;
        }
        case Op::add_row_bias: {
            const Node& nx = nodes_[nd.a];
            int n = nx.shape[0], c = nx.shape[1];
            if (Real* dx = touch(nd.a))
                for (size_t i = 0; i < nd.val.size(); ++i) dx[i] += g[i];
            if (Real* db = touch(nd.b)) {
#pragma omp parallel for schedule(static)
                for (int j = 0; j < c; ++j) {
                    Real s = 0;
                    for (int i = 0; i < n; ++i) s += g[size_t(i) * c + j];
                    db[j] += s;
                }
            }
            break;
        }
        case Op::leaky_relu: {
            const Node& nx = nodes_[nd.a];
            if (Real* dx = touch(nd.a)) {
                Real alpha = nd.p0;
                // subgradient at exactly 0 takes the alpha side
                for (size_t i = 0; i < nd.val.size(); ++i)
                    dx[i] += g[i] * (nx.val[i] > Real(0) ? Real(1) : alpha);
            }
            break;
        }
        case Op::softmax_rows: {
            if (Real* dx = touch(nd.a)) {
                int n = nd.shape[0], c = nd.shape[1];
#pragma omp parallel for schedule(static)
                for (int i = 0; i < n; ++i) {
                    const Real* y = nd.val.data() + size_t(i) * c;
                    const Real* gi = g + size_t(i) * c;
                    Real* dxi = dx + size_t(i) * c;
                    Real s = 0;
                    for (int j = 0; j < c; ++j) s += gi[j] * y[j];
                    for (int j = 0; j < c; ++j) dxi[j] += y[j] * (gi[j] - s);
                }
            }
            break;
        }
        case Op::l2norm_rows: {
            if (Real* dx = touch(nd.a)) {
                int n = nd.shape[0], c = nd.shape[1];
                Real eps = nd.p0;
#pragma omp parallel for schedule(static)
                for (int i = 0; i < n; ++i) {
                    const Real* y = nd.val.data() + size_t(i) * c;
                    const Real* gi = g + size_t(i) * c;
                    Real* dxi = dx + size_t(i) * c;
                    Real nrm = nd.ra[i];
                    if (nrm >= eps) {
                        Real s = 0;
                        for (int j = 0; j < c; ++j) s += gi[j] * y[j];
                        for (int j = 0; j < c; ++j) dxi[j] += (gi[j] - y[j] * s) / nrm;
                    } else {
                        for (int j = 0; j < c; ++j) dxi[j] += gi[j] / eps;
                    }
                }
            }
            break;
        }
        case Op::pairwise_neg_dist: {
            if (Real* dx = touch(nd.a)) {
                const Node& nx = nodes_[nd.a];
                int n = nd.shape[0], d = nx.shape[1];
#pragma omp parallel for schedule(static)
                for (int i = 0; i < n; ++i) {
                    Real* dxi = dx + size_t(i) * d;
                    const Real* xi = nx.val.data() + size_t(i) * d;
                    for (int j = 0; j < n; ++j) {
                        if (j == i) continue;
                        Real dist = -nd.val[size_t(i) * n + j];
                        if (!(dist > Real(0))) continue; // coincident points: subgradient 0
                        Real w = -(g[size_t(i) * n + j] + g[size_t(j) * n + i]) / dist;
                        const Real* xj = nx.val.data() + size_t(j) * d;
                        for (int t = 0; t < d; ++t) dxi[t] += w * (xi[t] - xj[t]);
                    }
                }
            }
            break;
        }
        case Op::concat_cols: {
            const Node& na = nodes_[nd.a];
            const Node& nb = nodes_[nd.b];
            int n = na.shape[0], ca = na.shape[1], cb = nb.shape[1];
            if (Real* da = touch(nd.a))
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < ca; ++j)
                        da[size_t(i) * ca + j] += g[size_t(i) * (ca + cb) + j];
            if (Real* db = touch(nd.b))
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < cb; ++j)
                        db[size_t(i) * cb + j] += g[size_t(i) * (ca + cb) + ca + j];
            break;
        }
        case Op::edge_features: {
            if (Real* dx = touch(nd.a)) {
                int n = nd.n, k = nd.k, c = nd.c;
                // center contributions: rows of point i only touch dx_i
#pragma omp parallel for schedule(static)
                for (int i = 0; i < n; ++i) {
                    Real* dxi = dx + size_t(i) * c;
                    for (int s = 0; s < k; ++s) {
                        const Real* gr = g + (size_t(i) * k + s) * (2 * c);
                        for (int t = 0; t < c; ++t) dxi[t] += gr[t] - gr[c + t];
                    }
                }
                // neighbor contributions via a reverse index, accumulated in
                // edge order per target point (deterministic under threading)
                std::vector<int32_t> count(n, 0);
                for (int32_t j : nd.ia) count[j]++;
                std::vector<int32_t> offs(n + 1, 0);
                for (int i = 0; i < n; ++i) offs[i + 1] = offs[i] + count[i];
                std::vector<int32_t> incoming(nd.ia.size());
                std::vector<int32_t> fill(offs.begin(), offs.end() - 1);
                for (size_t e = 0; e < nd.ia.size(); ++e) incoming[fill[nd.ia[e]]++] = int32_t(e);
#pragma omp parallel for schedule(static)
                for (int j = 0; j < n; ++j) {
                    Real* dxj = dx + size_t(j) * c;
                    for (int32_t q = offs[j]; q < offs[j + 1]; ++q) {
                        const Real* gr = g + size_t(incoming[q]) * (2 * c);
                        for (int t = 0; t < c; ++t) dxj[t] += gr[c + t];
                    }
                }
            }
            break;
        }
        case Op::slot_max: {
            if (Real* dv = touch(nd.a)) {
                int n = nd.n, k = nd.k, c = nd.c;
#pragma omp parallel for schedule(static)
                for (int i = 0; i < n; ++i)
                    for (int t = 0; t < c; ++t) {
                        int32_t s = nd.ia[size_t(i) * c + t];
                        dv[(size_t(i) * k + s) * c + t] += g[size_t(i) * c + t];
                    }
            }
            break;
        }
        case Op::gather_scores: {
            if (Real* ds = touch(nd.a)) {
                int n = nd.n, k = nd.k;
#pragma omp parallel for schedule(static)
                for (int i = 0; i < n; ++i)
                    for (int s = 0; s < k; ++s)
                        ds[size_t(i) * n + nd.ia[size_t(i) * k + s]] += g[size_t(i) * k + s];
            }
            break;
        }
        case Op::mul_rows: {
            const Node& nx = nodes_[nd.a];
            const Node& nw = nodes_[nd.b];
            int m = nx.shape[0], c = nx.shape[1];
            if (Real* dx = touch(nd.a))
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < c; ++j)
                        dx[size_t(i) * c + j] += g[size_t(i) * c + j] * nw.val[i];
            if (Real* dw = touch(nd.b))
                for (int i = 0; i < m; ++i) {
                    Real s = 0;
                    for (int j = 0; j < c; ++j)
                        s += g[size_t(i) * c + j] * nx.val[size_t(i) * c + j];
                    dw[i] += s;
                }
            break;
        }
        case Op::colwise_max: {
            if (Real* dx = touch(nd.a)) {
                int c = nd.c;
                for (int t = 0; t < c; ++t) dx[size_t(nd.ia[t]) * c + t] += g[t];
            }
            break;
        }
        case Op::broadcast_rows: {
            if (Real* dr = touch(nd.a)) {
                int n = nd.n, c = nd.c;
#pragma omp parallel for schedule(static)
                for (int t = 0; t < c; ++t) {
                    Real s = 0;
                    for (int i = 0; i < n; ++i) s += g[size_t(i) * c + t];
                    dr[t] += s;
                }
            }
            break;
        }
        case Op::sum_all: {
            if (Real* dx = touch(nd.a)) {
                size_t sz = nodes_[nd.a].val.size();
                for (size_t i = 0; i < sz; ++i) dx[i] += g[0];
            }
            break;
        }
        case Op::mean_all: {
            if (Real* dx = touch(nd.a)) {
                size_t sz = nodes_[nd.a].val.size();
                Real w = g[0] / Real(sz);
                for (size_t i = 0; i < sz; ++i) dx[i] += w;
            }
            break;
        }
        case Op::angular: {
            const Node& np = nodes_[nd.a];
            const Node& ng2 = nodes_[nd.b];
            int n = nd.n;
            Real w = g[0] * Real(-2) / Real(n);
            if (Real* dp = touch(nd.a))
                for (int i = 0; i < n; ++i)
                    for (int t = 0; t < 3; ++t)
                        dp[size_t(i) * 3 + t] += w * nd.ra[i] * ng2.val[size_t(i) * 3 + t];
            if (Real* dg = touch(nd.b))
                for (int i = 0; i < n; ++i)
                    for (int t = 0; t < 3; ++t)
                        dg[size_t(i) * 3 + t] += w * nd.ra[i] * np.val[size_t(i) * 3 + t];
            break;
        }
        case Op::mse: {
            const Node& na = nodes_[nd.a];
            const Node& nb = nodes_[nd.b];
            Real w = g[0] * Real(2) / Real(na.val.size());
            if (Real* da = touch(nd.a))
                for (size_t i = 0; i < na.val.size(); ++i) da[i] += w * (na.val[i] - nb.val[i]);
            if (Real* db = touch(nd.b))
                for (size_t i = 0; i < na.val.size(); ++i) db[i] -= w * (na.val[i] - nb.val[i]);
            break;
        }
        case Op::bce: {
            const Node& nz = nodes_[nd.a];
            const Node& ny = nodes_[nd.b];
            int n = nd.n;
            Real w = g[0] / Real(n);
            if (Real* dz = touch(nd.a))
                for (int i = 0; i < n; ++i) dz[i] += w * (sigmoid(nz.val[i]) - ny.val[i]);
            if (Real* dy = touch(nd.b))
                for (int i = 0; i < n; ++i) dy[i] += w * (-nz.val[i]);
            break;
        }
        case Op::leaf:
            break;
        }
    }
}

template <typename Real>
Real gradcheck(const std::function<int(Tape<Real>&, int)>& build, const Shape& in_shape,
               const std::vector<Real>& input, Real h) {
    Tape<Real> tape;
    int in = tape.leaf(in_shape, input, true);
    int out = build(tape, in);
    if (numel(tape.shape(out)) != 1) out = tape.sum_all(out);
    tape.backward(out);
    std::vector<Real> analytic = tape.grad_dense(in);

    auto eval = [&](const std::vector<Real>& x) {
        Tape<Real> t;
        int i = t.leaf(in_shape, x, false);
        int o = build(t, i);
        if (numel(t.shape(o)) != 1) o = t.sum_all(o);
        return t.value(o)[0];
    };

    std::vector<Real> x = input;
    Real worst = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        Real keep = x[i];
        x[i] = keep + h;
        Real fp = eval(x);
        x[i] = keep - h;
        Real fm = eval(x);
        x[i] = keep;
        Real fd = (fp - fm) / (2 * h);
        Real rel = std::abs(analytic[i] - fd) / std::max(Real(1), std::abs(fd));
        worst = std::max(worst, rel);
    }
    return worst;
}

template class Tape<float>;
template class Tape<double>;
template float gradcheck<float>(const std::function<int(Tape<float>&, int)>&, const Shape&,
                                const std::vector<float>&, float);
template double gradcheck<double>(const std::function<int(Tape<double>&, int)>&, const Shape&,
                                  const std::vector<double>&, double);

} // namespace ga
