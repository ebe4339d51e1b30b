#include "ga/reference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ga::ref {

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            c[i * n + j] = s;
        }
}

void leaky_relu(const double* x, double* y, int64_t count, double alpha) {
    for (int64_t i = 0; i < count; ++i) y[i] = x[i] >= 0 ? x[i] : alpha * x[i];
}

void softmax_rows(const double* x, double* y, int n, int c) {
    for (int i = 0; i < n; ++i) {
        double sum = 0;
        for (int j = 0; j < c; ++j) {
            y[i * c + j] = std::exp(x[i * c + j]);
            sum += y[i * c + j];
        }
        for (int j = 0; j < c; ++j) y[i * c + j] /= sum;
    }
}

void l2_normalize_rows(const double* x, double* y, int n, int c, double eps) {
    for (int i = 0; i < n; ++i) {
        double s = 0;
        for (int j = 0; j < c; ++j) s += x[i * c + j] * x[i * c + j];
        double d = std::max(std::sqrt(s), eps);
        for (int j = 0; j < c; ++j) y[i * c + j] = x[i * c + j] / d;
    }
}

void pairwise_neg_dist(const double* x, double* pm, int n, int d) {
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int t = 0; t < d; ++t) {
                double diff = x[i * d + t] - x[j * d + t];
                s += diff * diff;
            }
            pm[i * n + j] = i == j ? 0.0 : -std::sqrt(s);
        }
}

void sdp_scores(const double* q, const double* kmat, double* sa, int n, int d, double t) {
    double inv = 1.0 / std::sqrt(t);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int p = 0; p < d; ++p) s += q[i * d + p] * kmat[j * d + p];
            sa[i * n + j] = s * inv;
        }
}

void attention_fuse(const double* sa, const double* pm, double* out, int n) {
    std::vector<double> ssa(size_t(n) * n), spm(size_t(n) * n);
    softmax_rows(sa, ssa.data(), n, n);
    softmax_rows(pm, spm.data(), n, n);
    std::vector<double> prod(size_t(n) * n);
    for (size_t i = 0; i < prod.size(); ++i) prod[i] = ssa[i] * spm[i];
    softmax_rows(prod.data(), out, n, n);
}

void knn_full_sort(const double* scores, int32_t* out, int n, int k) {
    for (int i = 0; i < n; ++i) {
        std::vector<int32_t> idx;
        for (int j = 0; j < n; ++j)
            if (j != i) idx.push_back(j);
        std::sort(idx.begin(), idx.end(), [&](int32_t a, int32_t b) {
            if (scores[i * n + a] != scores[i * n + b])
                return scores[i * n + a] > scores[i * n + b];
            return a < b;
        });
        for (int s = 0; s < k; ++s) out[i * k + s] = idx[s];
    }
}

void edge_conv(const double* x, const int32_t* nbr, int n, int k, int cin, int hidden,
               int cout, const double* w1, const double* b1, const double* w2,
               const double* b2, double alpha, double* y) {
    std::vector<double> edge(2 * cin), h(hidden), o(cout);
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < cout; ++t) y[i * cout + t] = -1e300;
        for (int s = 0; s < k; ++s) {
            int j = nbr[i * k + s];
            for (int t = 0; t < cin; ++t) {
                edge[t] = x[i * cin + t];
                edge[cin + t] = x[j * cin + t] - x[i * cin + t];
            }
            for (int hh = 0; hh < hidden; ++hh) {
                double s2 = b1[hh];
                for (int t = 0; t < 2 * cin; ++t) s2 += edge[t] * w1[t * hidden + hh];
                h[hh] = s2 >= 0 ? s2 : alpha * s2;
            }
            for (int t = 0; t < cout; ++t) {
                double s2 = b2[t];
                for (int hh = 0; hh < hidden; ++hh) s2 += h[hh] * w2[hh * cout + t];
                o[t] = s2 >= 0 ? s2 : alpha * s2; // trailing activation, DGCNN-style
            }
            for (int t = 0; t < cout; ++t) y[i * cout + t] = std::max(y[i * cout + t], o[t]);
        }
    }
}

double angular_loss(const double* pred, const double* gt, int n) {
    double acc = 0;
    for (int i = 0; i < n; ++i) {
        double d = 0;
        for (int t = 0; t < 3; ++t) d += pred[i * 3 + t] * gt[i * 3 + t];
        acc += 1.0 - d * d;
    }
    return acc / n;
}

double bce_direct(const double* logits, const double* labels, int n) {
    double acc = 0;
    for (int i = 0; i < n; ++i) {
        double p = 1.0 / (1.0 + std::exp(-logits[i]));
        acc += -(labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
    }
    return acc / n;
}

double rmse(const double* pred, const double* gt, int n, bool flip_sign) {
    double acc = 0;
    for (int i = 0; i < n; ++i) {
        double dot = 0;
        for (int t = 0; t < 3; ++t) dot += pred[i * 3 + t] * gt[i * 3 + t];
        double sign = (flip_sign && dot < 0) ? -1.0 : 1.0;
        for (int t = 0; t < 3; ++t) {
            double d = sign * pred[i * 3 + t] - gt[i * 3 + t];
            acc += d * d;
        }
    }
    return std::sqrt(acc / (3.0 * n));
}

double balanced_accuracy(const double* prob, const uint8_t* labels, int n, double threshold) {
    int tp = 0, tn = 0, fp = 0, fn = 0;
    for (int i = 0; i < n; ++i) {
        bool pred = prob[i] > threshold;
        if (labels[i]) {
            pred ? ++tp : ++fn;
        } else {
            pred ? ++fp : ++tn;
        }
    }
    bool has_pos = tp + fn > 0, has_neg = tn + fp > 0;
    double tpr = has_pos ? double(tp) / (tp + fn) : 0.0;
    double tnr = has_neg ? double(tn) / (tn + fp) : 0.0;
    if (has_pos && has_neg) return 0.5 * (tpr + tnr);
    return has_pos ? tpr : tnr;
}

std::vector<double> adam_scalar_sequence(double w0, const std::vector<double>& grads, double lr,
                                         double beta1, double beta2, double eps) {
    double w = w0, m = 0, v = 0;
    std::vector<double> out;
    for (size_t t = 1; t <= grads.size(); ++t) {
        double g = grads[t - 1];
        m = beta1 * m + (1 - beta1) * g;
        v = beta2 * v + (1 - beta2) * g * g;
        double mhat = m / (1 - std::pow(beta1, double(t)));
        double vhat = v / (1 - std::pow(beta2, double(t)));
        w -= lr * mhat / (std::sqrt(vhat) + eps);
        out.push_back(w);
    }
    return out;
}

Vec3 plane_fit_normal(const std::vector<Vec3>& pts) {
    Vec3 c{0, 0, 0};
    for (const Vec3& p : pts) c += p;
    c = c / double(pts.size());
    double a[3][3] = {};
    for (const Vec3& p : pts) {
        Vec3 d = p - c;
        double v[3] = {d.x, d.y, d.z};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) a[i][j] += v[i] * v[j];
    }
    // Jacobi eigenvalue sweeps on the symmetric 3x3
    double q[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int sweep = 0; sweep < 32; ++sweep) {
        double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
        if (off < 1e-14) break;
        for (int p = 0; p < 2; ++p)
            for (int r = p + 1; r < 3; ++r) {
                if (std::abs(a[p][r]) < 1e-300) continue;
                double theta = (a[r][r] - a[p][p]) / (2 * a[p][r]);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1));
                double cth = 1.0 / std::sqrt(t * t + 1), sth = t * cth;
                for (int i = 0; i < 3; ++i) {
                    double aip = a[i][p], air = a[i][r];
                    a[i][p] = cth * aip - sth * air;
                    a[i][r] = sth * aip + cth * air;
                }
                for (int i = 0; i < 3; ++i) {
                    double api = a[p][i], ari = a[r][i];
                    a[p][i] = cth * api - sth * ari;
                    a[r][i] = sth * api + cth * ari;
                }
                for (int i = 0; i < 3; ++i) {
                    double qip = q[i][p], qir = q[i][r];
                    q[i][p] = cth * qip - sth * qir;
                    q[i][r] = sth * qip + cth * qir;
                }
            }
    }
    int mi = 0;
    for (int i = 1; i < 3; ++i)
        if (a[i][i] < a[mi][mi]) mi = i;
    return Vec3{q[0][mi], q[1][mi], q[2][mi]}.normalized();
}

} // namespace ga::ref
