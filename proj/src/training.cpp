#include "ga/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ga/rng.hpp"

namespace ga {

template <typename Real>
void adam_step(std::vector<std::vector<Real>>& weights,
               const std::vector<std::vector<Real>>& grads, AdamStateT<Real>& state, double lr,
               double beta1, double beta2, double eps) {
    if (weights.size() != grads.size()) throw DimensionError("adam_step: weights/grads mismatch");
    if (state.m.empty()) {
        state.m.resize(weights.size());
        state.v.resize(weights.size());
        for (size_t i = 0; i < weights.size(); ++i) {
            state.m[i].assign(weights[i].size(), Real(0));
            state.v[i].assign(weights[i].size(), Real(0));
        }
    }
    state.step += 1;
    double bc1 = 1.0 - std::pow(beta1, double(state.step));
    double bc2 = 1.0 - std::pow(beta2, double(state.step));
    for (size_t i = 0; i < weights.size(); ++i) {
        if (weights[i].size() != grads[i].size())
            throw DimensionError("adam_step: gradient shape mismatch at tensor " +
                                 std::to_string(i));
        Real* w = weights[i].data();
        Real* m = state.m[i].data();
        Real* v = state.v[i].data();
        const Real* g = grads[i].data();
        size_t count = weights[i].size();
#pragma omp parallel for schedule(static)
        for (int64_t j = 0; j < int64_t(count); ++j) {
            m[j] = Real(beta1) * m[j] + Real(1 - beta1) * g[j];
            v[j] = Real(beta2) * v[j] + Real(1 - beta2) * g[j] * g[j];
            double mhat = double(m[j]) / bc1;
            double vhat = double(v[j]) / bc2;
            w[j] -= Real(lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

template void adam_step<float>(std::vector<std::vector<float>>&,
                               const std::vector<std::vector<float>>&, AdamStateT<float>&, double,
                               double, double, double);
template void adam_step<double>(std::vector<std::vector<double>>&,
                                const std::vector<std::vector<double>>&, AdamStateT<double>&,
                                double, double, double, double);

namespace {

template <typename Real>
void require_unit_rows(const Tape<Real>& t, int node, const char* what) {
    const Shape& s = t.shape(node);
    if (s.size() != 2 || s[1] != 3) throw DimensionError(std::string(what) + ": expects [n,3]");
    const auto& v = t.value(node);
    for (int i = 0; i < s[0]; ++i) {
        double nrm = 0;
        for (int c = 0; c < 3; ++c) nrm += double(v[size_t(i) * 3 + c]) * v[size_t(i) * 3 + c];
        if (std::abs(std::sqrt(nrm) - 1.0) > 1e-3)
            throw Error(std::string(what) + ": row " + std::to_string(i) +
                        " is not unit length");
    }
}

} // namespace

template <typename Real>
int angular_loss_node(Tape<Real>& t, int pred, int gt) {
    require_unit_rows(t, pred, "angular_loss(pred)");
    require_unit_rows(t, gt, "angular_loss(gt)");
    return t.angular_loss(pred, gt);
}

template <typename Real>
int normals_objective_node(Tape<Real>& t, int pred, int gt, Real lambda) {
    int loss = angular_loss_node(t, pred, gt);
    if (lambda > 0) loss = t.add(loss, t.axpb(t.mse_loss(pred, gt), lambda, Real(0)));
    return loss;
}

template <typename Real>
int bce_loss_node(Tape<Real>& t, int logits, int labels) {
    return t.bce_with_logits(logits, labels);
}

template int angular_loss_node<float>(Tape<float>&, int, int);
template int angular_loss_node<double>(Tape<double>&, int, int);
template int normals_objective_node<float>(Tape<float>&, int, int, float);
template int normals_objective_node<double>(Tape<double>&, int, int, double);
template int bce_loss_node<float>(Tape<float>&, int, int);
template int bce_loss_node<double>(Tape<double>&, int, int);

double angular_loss_value(const float* pred, const float* gt, int n) {
    double acc = 0;
    for (int i = 0; i < n; ++i) {
        double pn = 0, gn = 0, d = 0;
        for (int c = 0; c < 3; ++c) {
            pn += double(pred[i * 3 + c]) * pred[i * 3 + c];
            gn += double(gt[i * 3 + c]) * gt[i * 3 + c];
            d += double(pred[i * 3 + c]) * gt[i * 3 + c];
        }
        if (std::abs(std::sqrt(pn) - 1.0) > 1e-3 || std::abs(std::sqrt(gn) - 1.0) > 1e-3)
            throw Error("angular_loss: non-unit row " + std::to_string(i));
        acc += 1.0 - d * d;
    }
    return acc / n;
}

double bce_loss_value(const float* logits, const float* labels, int n) {
    double acc = 0;
    for (int i = 0; i < n; ++i) {
        double z = logits[i], y = labels[i];
        acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    return acc / n;
}

double balanced_accuracy(const std::vector<double>& prob, const std::vector<uint8_t>& labels,
                         double threshold) {
    if (prob.size() != labels.size()) throw DimensionError("balanced_accuracy: length mismatch");
    int64_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < prob.size(); ++i) {
        bool hit = prob[i] > threshold;
        if (labels[i])
            hit ? ++tp : ++fn;
        else
            hit ? ++fp : ++tn;
    }
    bool has_pos = tp + fn > 0, has_neg = tn + fp > 0;
    double tpr = has_pos ? double(tp) / double(tp + fn) : 0.0;
    double tnr = has_neg ? double(tn) / double(tn + fp) : 0.0;
    if (has_pos && has_neg) return 0.5 * (tpr + tnr);
    return has_pos ? tpr : tnr; // single-class patch: the defined rate alone
}

double rmse_metric(const float* pred, const float* gt, int n, bool flip) {
    double acc = 0;
    for (int i = 0; i < n; ++i) {
        double dot = 0;
        for (int c = 0; c < 3; ++c) dot += double(pred[i * 3 + c]) * gt[i * 3 + c];
        double sign = (flip && dot < 0) ? -1.0 : 1.0;
        for (int c = 0; c < 3; ++c) {
            double d = sign * pred[i * 3 + c] - gt[i * 3 + c];
            acc += d * d;
        }
    }
    return std::sqrt(acc / (3.0 * n));
}

// ---------------------------------------------------------------------------

DataSet load_dataset(const std::string& data_dir) {
    namespace fs = std::filesystem;
    fs::path dir(data_dir);
    std::ifstream in(dir / "manifest.json");
    if (!in) throw Error("load_dataset: cannot open " + (dir / "manifest.json").string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error("load_dataset: manifest.json is not valid JSON");

    DataSet ds;
    auto load_split = [&](const char* key, std::vector<PointPatch>& out,
                          std::vector<std::string>& ids) {
        if (!j.contains(key)) throw Error(std::string("load_dataset: manifest lacks '") + key + "'");
        for (const auto& name : j.at(key)) {
            std::string file = name.get<std::string>();
            try {
                out.push_back(read_patch((dir / file).string()));
            } catch (const Error& e) {
                throw Error("load_dataset: patch '" + file + "': " + e.what());
            }
            ids.push_back(file);
        }
    };
    load_split("train", ds.train, ds.train_ids);
    load_split("val", ds.val, ds.val_ids);
    load_split("test", ds.test, ds.test_ids);
    return ds;
}

std::vector<int> epoch_order(int n_train, uint64_t seed, int epoch) {
    std::vector<int> order(n_train);
    for (int i = 0; i < n_train; ++i) order[i] = i;
    Rng rng(mix_seed(seed, 0x6f72646572ULL, uint64_t(epoch)));
    for (int i = n_train - 1; i > 0; --i)
        std::swap(order[i], order[rng.uniform_int(uint64_t(i) + 1)]);
    return order;
}

uint64_t augment_seed(uint64_t seed, int epoch, int position) {
    return mix_seed(mix_seed(seed, 0x617567ULL), uint64_t(epoch), uint64_t(position));
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const DataSet& data,
                  const StopFn& stop) {
    validate_config(model_cfg);
    if (train_cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(train_cfg.lr > 0)) throw ConfigError("train: lr must be positive");
    if (train_cfg.mse_weight < 0) throw ConfigError("train: mse_weight must be >= 0");
    if (data.train.empty()) throw ConfigError("train: empty train split");
    for (const auto& p : data.train) {
        if (model_cfg.task == Task::normals && !p.has_normals())
            throw ConfigError("train: task is normals but a patch has no normals");
        if (model_cfg.task == Task::sharp && !p.has_sharp())
            throw ConfigError("train: task is sharp but a patch has no sharp labels");
    }

    WeightSet weights = init_weights(model_cfg);
    size_t n_items = weights.items.size();
    AdamState adam;

    TrainResult result;
    result.model = model_cfg;

    auto member_pass = [&](const PointPatch& raw, uint64_t aug_seed,
                           std::vector<std::vector<float>>& grads_out) -> double {
        PointPatch patch = train_cfg.augment ? augment_rotate(raw, aug_seed) : raw;
        Tape<float> tape;
        int pts = tape.leaf({patch.n, 3}, patch.points, false);
        auto ids = stage_weights(tape, weights, true);
        auto fr = forward(tape, pts, model_cfg, ids, false);
        int loss;
        if (model_cfg.task == Task::normals) {
            int gt = tape.constant({patch.n, 3}, patch.normals);
            loss = normals_objective_node(tape, fr.out_node, gt, float(train_cfg.mse_weight));
        } else {
            std::vector<float> labels(patch.sharp.begin(), patch.sharp.end());
            int gt = tape.constant({patch.n}, labels);
            loss = bce_loss_node(tape, fr.out_node, gt);
        }
        tape.backward(loss);
        grads_out.resize(n_items);
        for (size_t i = 0; i < n_items; ++i) grads_out[i] = tape.grad_dense(ids[i]);
        return double(tape.value(loss)[0]);
    };

    auto evaluate_val = [&]() -> std::vector<LogRow> {
        std::vector<LogRow> rows;
        if (data.val.empty()) return rows;
        MetricsReport rep = evaluate(model_cfg, weights, data.val, data.val_ids);
        const char* task = to_string(model_cfg.task);
        if (model_cfg.task == Task::normals) {
            rows.push_back({0, "val", task, "angular_loss", rep.mean_metric});
            rows.push_back({0, "val", task, "rmse", rep.mean_rmse});
        } else {
            rows.push_back({0, "val", task, "balanced_accuracy", rep.mean_metric});
        }
        return rows;
    };

    bool best_set = false;
    bool stopped = false;
    int n_train = int(data.train.size());

    for (int epoch = 1; epoch <= train_cfg.epochs && !stopped; ++epoch) {
        std::vector<int> order = epoch_order(n_train, train_cfg.seed, epoch);
        double epoch_loss = 0;
        int epoch_steps = 0;

        for (int start = 0; start < n_train && !stopped; start += train_cfg.batch_size) {
            int members = std::min(train_cfg.batch_size, n_train - start);
            std::vector<std::vector<std::vector<float>>> member_grads(members);
            std::vector<double> member_loss(members);

            // exceptions may not cross an omp region; capture and rethrow
            std::string member_error;
#pragma omp parallel for schedule(static)
            for (int b = 0; b < members; ++b) {
                try {
                    int position = start + b;
                    member_loss[b] = member_pass(data.train[order[position]],
                                                 augment_seed(train_cfg.seed, epoch, position),
                                                 member_grads[b]);
                } catch (const std::exception& e) {
#pragma omp critical
                    if (member_error.empty()) member_error = e.what();
                }
            }
            if (!member_error.empty()) throw Error("train: " + member_error);

            // fixed-order reduction keeps results independent of threading
            std::vector<std::vector<float>> grad_mean(n_items);
            for (size_t i = 0; i < n_items; ++i)
                grad_mean[i].assign(weights.items[i].data.size(), 0.0f);
            for (int b = 0; b < members; ++b)
                for (size_t i = 0; i < n_items; ++i)
                    for (size_t j = 0; j < grad_mean[i].size(); ++j)
                        grad_mean[i][j] += member_grads[b][i][j];
            float inv = 1.0f / float(members);
            for (auto& g : grad_mean)
                for (auto& v : g) v *= inv;

            std::vector<std::vector<float>> wdata(n_items);
            for (size_t i = 0; i < n_items; ++i) wdata[i] = std::move(weights.items[i].data);
            adam_step(wdata, grad_mean, adam, train_cfg.lr, train_cfg.beta1, train_cfg.beta2,
                      train_cfg.adam_eps);
            for (size_t i = 0; i < n_items; ++i) weights.items[i].data = std::move(wdata[i]);

            double batch_loss = 0;
            for (double l : member_loss) batch_loss += l;
            batch_loss /= members;
            result.step_losses.push_back(batch_loss);
            result.steps += 1;
            epoch_loss += batch_loss;
            epoch_steps += 1;

            if (stop && stop(result.steps, batch_loss, weights)) stopped = true;
            if (train_cfg.max_steps > 0 && result.steps >= train_cfg.max_steps) stopped = true;
        }

        result.log.push_back({epoch, "train", to_string(model_cfg.task), "loss",
                              epoch_loss / std::max(epoch_steps, 1)});
        for (LogRow row : evaluate_val()) {
            row.epoch = epoch;
            result.log.push_back(row);

            bool is_primary = row.metric == "angular_loss" || row.metric == "balanced_accuracy";
            if (!is_primary) continue;
            bool better = !best_set || (model_cfg.task == Task::normals
                                            ? row.value < result.best_val_metric
                                            : row.value > result.best_val_metric);
            if (better) {
                best_set = true;
                result.best_val_metric = row.value;
                result.best_epoch = epoch;
                result.best_weights = weights;
            }
        }
    }

    if (!best_set) {
        result.best_weights = weights;
        result.best_epoch = train_cfg.epochs;
    }
    return result;
}

MetricsReport evaluate_with(Task task, const std::vector<PointPatch>& patches,
                            const std::vector<std::string>& ids, const PredictFn& predict,
                            bool rmse_flip) {
    if (!ids.empty() && ids.size() != patches.size())
        throw DimensionError("evaluate: ids/patches length mismatch");
    MetricsReport rep;
    rep.task = task;
    rep.patch_ids = ids;
    int n_patches = int(patches.size());
    rep.per_patch.resize(n_patches);
    if (task == Task::normals) rep.per_patch_rmse.resize(n_patches);
    rep.histogram.assign(64, 0);

    for (const PointPatch& p : patches) {
        if (task == Task::normals && !p.has_normals())
            throw ConfigError("evaluate: task is normals but a patch has no normals");
        if (task == Task::sharp && !p.has_sharp())
            throw ConfigError("evaluate: task is sharp but a patch has no sharp labels");
    }

    std::vector<std::vector<int64_t>> hist_parts(n_patches, std::vector<int64_t>(64, 0));

    std::string eval_error;
#pragma omp parallel for schedule(static)
    for (int pi = 0; pi < n_patches; ++pi) {
      try {
        const PointPatch& p = patches[pi];
        std::vector<float> out = predict(p);
        auto bin_of = [](double v) { return std::clamp(int(v * 64.0), 0, 63); };
        if (task == Task::normals) {
            double acc = 0;
            for (int i = 0; i < p.n; ++i) {
                double d = 0;
                for (int c = 0; c < 3; ++c)
                    d += double(out[size_t(i) * 3 + c]) * p.normals[size_t(i) * 3 + c];
                double err = 1.0 - d * d;
                acc += err;
                hist_parts[pi][bin_of(err)] += 1; // per-point angular errors
            }
            rep.per_patch[pi] = acc / p.n;
            rep.per_patch_rmse[pi] = rmse_metric(out.data(), p.normals.data(), p.n, rmse_flip);
        } else {
            std::vector<double> prob(p.n);
            for (int i = 0; i < p.n; ++i) prob[i] = 1.0 / (1.0 + std::exp(-double(out[i])));
            double ba = balanced_accuracy(prob, p.sharp, 0.5);
            rep.per_patch[pi] = ba;
            hist_parts[pi][bin_of(ba)] += 1; // per-patch balanced accuracies
        }
      } catch (const std::exception& e) {
#pragma omp critical
          if (eval_error.empty()) eval_error = e.what();
      }
    }
    if (!eval_error.empty()) throw Error("evaluate: " + eval_error);

    for (int pi = 0; pi < n_patches; ++pi)
        for (int b = 0; b < 64; ++b) rep.histogram[b] += hist_parts[pi][b];
    for (int64_t c : rep.histogram) rep.histogram_total += c;
    double sum = 0;
    for (double v : rep.per_patch) sum += v;
    rep.mean_metric = n_patches ? sum / n_patches : 0.0;
    if (task == Task::normals) {
        double rs = 0;
        for (double v : rep.per_patch_rmse) rs += v;
        rep.mean_rmse = n_patches ? rs / n_patches : 0.0;
    }
    return rep;
}

MetricsReport evaluate(const ModelConfig& cfg, const WeightSet& weights,
                       const std::vector<PointPatch>& patches,
                       const std::vector<std::string>& ids, bool rmse_flip) {
    return evaluate_with(
        cfg.task, patches, ids,
        [&](const PointPatch& p) { return forward_values(p.points, p.n, weights, cfg); },
        rmse_flip);
}

std::string metrics_to_json(const MetricsReport& report) {
    nlohmann::json j;
    j["task"] = to_string(report.task);
    j["patch_ids"] = report.patch_ids;
    j["per_patch"] = report.per_patch;
    if (report.task == Task::normals) {
        j["per_patch_rmse"] = report.per_patch_rmse;
        j["aggregate"] = {{"angular_loss", report.mean_metric}, {"rmse", report.mean_rmse}};
    } else {
        j["aggregate"] = {{"balanced_accuracy", report.mean_metric}};
    }
    j["histogram"] = {{"bins", 64},
                      {"range", {0.0, 1.0}},
                      {"counts", report.histogram},
                      {"total", report.histogram_total}};
    return j.dump(2);
}

void write_log_csv(const std::string& path, const std::vector<LogRow>& rows) {
    std::ofstream out(path);
    if (!out) throw Error("write_log_csv: cannot open " + path);
    out << "epoch,split,task,metric,value\n";
    char buf[64];
    for (const auto& r : rows) {
        snprintf(buf, sizeof buf, "%.9g", r.value);
        out << r.epoch << "," << r.split << "," << r.task << "," << r.metric << "," << buf << "\n";
    }
    if (!out) throw Error("write_log_csv: short write to " + path);
}

} // namespace ga
