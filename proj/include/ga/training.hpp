#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ga/network.hpp"
#include "ga/patch.hpp"

namespace ga {

struct TrainConfig {
    int epochs = 10;
    int batch_size = 8;
    double lr = 1e-3;
    double mse_weight = 0.01; // lambda on the MSE regularizer (normals task)
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 1;
    bool augment = true;
    int max_steps = 0; // 0: run the configured epochs
};

template <typename Real>
struct AdamStateT {
    std::vector<std::vector<Real>> m, v;
    int64_t step = 0;
};
using AdamState = AdamStateT<float>;

// Standard bias-corrected Adam, in place. Weight/grad vectors are aligned
// lists of flat arrays.
template <typename Real>
void adam_step(std::vector<std::vector<Real>>& weights,
               const std::vector<std::vector<Real>>& grads, AdamStateT<Real>& state, double lr,
               double beta1, double beta2, double eps);

// --- losses -----------------------------------------------------------------
// Tape builders validate the unit-row precondition (within 1e-3) where the
// loss definition assumes it.

template <typename Real>
int angular_loss_node(Tape<Real>& t, int pred, int gt);

template <typename Real>
int normals_objective_node(Tape<Real>& t, int pred, int gt, Real lambda);

template <typename Real>
int bce_loss_node(Tape<Real>& t, int logits, int labels);

double angular_loss_value(const float* pred, const float* gt, int n);
double bce_loss_value(const float* logits, const float* labels, int n);
double balanced_accuracy(const std::vector<double>& prob, const std::vector<uint8_t>& labels,
                         double threshold = 0.5);
// Unoriented convention: pred rows are sign-flipped onto gt before the
// difference (flip = false gives the strict oriented metric).
double rmse_metric(const float* pred, const float* gt, int n, bool flip = true);

// --- data -------------------------------------------------------------------

struct DataSet {
    std::vector<PointPatch> train, val, test;
    std::vector<std::string> train_ids, val_ids, test_ids;
};

// Reads manifest.json plus the patch files of a generated data directory.
DataSet load_dataset(const std::string& data_dir);

// --- training loop ----------------------------------------------------------

struct LogRow {
    int epoch;
    std::string split;
    std::string task;
    std::string metric;
    double value;
};

struct TrainResult {
    ModelConfig model;
    WeightSet best_weights;
    int best_epoch = 0;
    double best_val_metric = 0;
    std::vector<LogRow> log;
    std::vector<double> step_losses; // one entry per optimizer step
    int steps = 0;
};

// Deterministic shuffle of [0, n) for one epoch; exposed so tests can replay
// the exact batch composition.
std::vector<int> epoch_order(int n_train, uint64_t seed, int epoch);
uint64_t augment_seed(uint64_t seed, int epoch, int position);

// Stop callback: called after every optimizer step with (step, batch loss,
// current weights); returning true ends training early.
using StopFn = std::function<bool(int, double, const WeightSet&)>;

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const DataSet& data,
                  const StopFn& stop = nullptr);

// --- evaluation ---------------------------------------------------------------

struct MetricsReport {
    Task task = Task::normals;
    std::vector<std::string> patch_ids;
    std::vector<double> per_patch;      // angular loss / balanced accuracy
    std::vector<double> per_patch_rmse; // normals only
    double mean_metric = 0;
    double mean_rmse = 0;
    // 64 bins over [0,1]; counts per-point angular errors (normals) or
    // per-patch balanced accuracies (sharp)
    std::vector<int64_t> histogram;
    int64_t histogram_total = 0;
};

using PredictFn = std::function<std::vector<float>(const PointPatch&)>;

MetricsReport evaluate(const ModelConfig& cfg, const WeightSet& weights,
                       const std::vector<PointPatch>& patches,
                       const std::vector<std::string>& ids, bool rmse_flip = true);
// Test hook: identical bookkeeping with caller-supplied predictions.
MetricsReport evaluate_with(Task task, const std::vector<PointPatch>& patches,
                            const std::vector<std::string>& ids, const PredictFn& predict,
                            bool rmse_flip = true);

std::string metrics_to_json(const MetricsReport& report);
void write_log_csv(const std::string& path, const std::vector<LogRow>& rows);

} // namespace ga
