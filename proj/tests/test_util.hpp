#pragma once

// Shared helpers for the network-level tests and the acceptance suite.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ga/network.hpp"
#include "ga/patch.hpp"
#include "ga/rng.hpp"
#include "ga/tensor.hpp"

namespace gatest {

template <typename Real>
std::vector<std::vector<Real>> weights_as(const ga::WeightSet& w) {
    std::vector<std::vector<Real>> out;
    for (const auto& it : w.items) out.emplace_back(it.data.begin(), it.data.end());
    return out;
}

// Builds the task loss over a taped forward. gt is n*3 unit normals or n
// {0,1} labels depending on cfg.task.
template <typename Real>
int build_loss(ga::Tape<Real>& t, const ga::ModelConfig& cfg, int out_node,
               const std::vector<Real>& gt, int n, double mse_lambda) {
    if (cfg.task == ga::Task::normals) {
        int gtn = t.constant({n, 3}, gt);
        int loss = t.angular_loss(out_node, gtn);
        if (mse_lambda > 0)
            loss = t.add(loss, t.axpb(t.mse_loss(out_node, gtn), Real(mse_lambda), Real(0)));
        return loss;
    }
    int lab = t.constant({n}, gt);
    return t.bce_with_logits(out_node, lab);
}

template <typename Real>
Real eval_network_loss(const ga::ModelConfig& cfg, const std::vector<ga::TensorSpecEntry>& layout,
                       const std::vector<std::vector<Real>>& wdata,
                       const std::vector<Real>& points, int n, const std::vector<Real>& gt,
                       double mse_lambda) {
    ga::Tape<Real> t;
    int pts = t.leaf({n, 3}, points, false);
    std::vector<int> ids;
    ids.reserve(layout.size());
    for (size_t i = 0; i < layout.size(); ++i) ids.push_back(t.leaf(layout[i].shape, wdata[i], false));
    auto res = ga::forward(t, pts, cfg, ids, false);
    return t.value(build_loss(t, cfg, res.out_node, gt, n, mse_lambda))[0];
}

struct NetGradcheckResult {
    double max_rel_err = 0;
    int checked = 0;
    int skipped = 0; // coordinates excluded by the step-halving consistency
                     // guard (LeakyReLU kink or max/kNN tie inside the stencil)
};

// Central-difference check of d(loss)/d(weights) in double precision.
// coords_per_tensor == 0 checks every coordinate.
inline NetGradcheckResult network_gradcheck(const ga::ModelConfig& cfg,
                                            const std::vector<double>& points, int n,
                                            const std::vector<double>& gt, double mse_lambda,
                                            double h, int coords_per_tensor, uint64_t pick_seed) {
    auto layout = ga::weight_layout(cfg);
    ga::WeightSet init = ga::init_weights(cfg);
    auto wdata = weights_as<double>(init);

    // analytic gradients
    std::vector<std::vector<double>> analytic(layout.size());
    {
        ga::Tape<double> t;
        int pts = t.leaf({n, 3}, points, false);
        std::vector<int> ids;
        for (size_t i = 0; i < layout.size(); ++i)
            ids.push_back(t.leaf(layout[i].shape, wdata[i], true));
        auto res = ga::forward(t, pts, cfg, ids, false);
        t.backward(build_loss(t, cfg, res.out_node, gt, n, mse_lambda));
        for (size_t i = 0; i < layout.size(); ++i) analytic[i] = t.grad_dense(ids[i]);
    }

    ga::Rng rng(ga::mix_seed(pick_seed, 0xfdcULL));
    NetGradcheckResult result;
    for (size_t ti = 0; ti < layout.size(); ++ti) {
        size_t count = wdata[ti].size();
        std::vector<size_t> coords;
        if (coords_per_tensor == 0 || size_t(coords_per_tensor) >= count) {
            for (size_t c = 0; c < count; ++c) coords.push_back(c);
        } else {
            for (int c = 0; c < coords_per_tensor; ++c) coords.push_back(rng.uniform_int(count));
        }
        for (size_t c : coords) {
            double keep = wdata[ti][c];
            auto probe = [&](double step) {
                wdata[ti][c] = keep + step;
                double fp = eval_network_loss(cfg, layout, wdata, points, n, gt, mse_lambda);
                wdata[ti][c] = keep - step;
                double fm = eval_network_loss(cfg, layout, wdata, points, n, gt, mse_lambda);
                wdata[ti][c] = keep;
                return (fp - fm) / (2 * step);
            };
            double fd = probe(h);
            double fd_half = probe(h / 2);
            // smooth coordinates agree to ~1e-10 here; anything beyond this
            // means a kink or selection flip sits inside the stencil
            if (std::abs(fd - fd_half) > 2e-5 * std::max(1.0, std::abs(fd))) {
                ++result.skipped;
                continue;
            }
            double rel = std::abs(analytic[ti][c] - fd) / std::max(1.0, std::abs(fd));
            result.max_rel_err = std::max(result.max_rel_err, rel);
            ++result.checked;
        }
    }
    return result;
}

// A normalized patch plus double-precision views used by the harness.
struct PatchData {
    ga::PointPatch patch;
    std::vector<double> points;
    std::vector<double> normals;
    std::vector<double> labels;
};

inline PatchData make_wedge_patch(int n_points, uint64_t seed, double dihedral = 1.3) {
    ga::ShapeSpec spec;
    spec.kind = ga::ShapeKind::wedge;
    spec.dihedral_rad = dihedral;
    spec.n_points = n_points;
    PatchData d;
    d.patch = ga::generate_patch(spec, seed);
    d.points.assign(d.patch.points.begin(), d.patch.points.end());
    d.normals.assign(d.patch.normals.begin(), d.patch.normals.end());
    for (uint8_t s : d.patch.sharp) d.labels.push_back(double(s));
    return d;
}

} // namespace gatest
