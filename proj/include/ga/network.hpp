#pragma once

#include <string>
#include <vector>

#include "ga/attention.hpp"
#include "ga/tensor.hpp"

namespace ga {

enum class Arch { dgcnn, ga };
enum class Task { normals, sharp };

const char* to_string(Arch a);
const char* to_string(Task t);
Arch arch_from_string(const std::string& s);
Task task_from_string(const std::string& s);

struct ModelConfig {
    Arch arch = Arch::ga;
    Task task = Task::normals;
    int k = 20;
    int n_layers = 3;
    std::vector<int> widths{64, 64, 64};
    int semantic_width = 64; // also the SDP scaling factor t
    int global_width = 256;
    std::vector<int> head_widths{256, 128};
    float leaky_slope = 0.01f;
    uint64_t seed = 1;
    bool ga_weighted_aggregation = false; // reserved; GA defines the graph only

    int out_dim() const { return task == Task::normals ? 3 : 1; }
};

void validate_config(const ModelConfig& cfg); // throws ConfigError

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

struct WeightSet {
    std::vector<NamedTensor> items;
    NamedTensor& find(const std::string& name);
    const NamedTensor& find(const std::string& name) const;
};

struct TensorSpecEntry {
    std::string name;
    Shape shape;
};

// Declaration order is the storage, staging and checkpoint order.
std::vector<TensorSpecEntry> weight_layout(const ModelConfig& cfg);

// Uniform fan-in-scaled weights, zero biases, deterministic in cfg.seed.
WeightSet init_weights(const ModelConfig& cfg);

int64_t parameter_count(const ModelConfig& cfg);

// Weight tensors registered as tape leaves, in layout order.
template <typename Real>
std::vector<int> stage_weights(Tape<Real>& tape, const WeightSet& weights, bool requires_grad);

template <typename Real>
struct ForwardResult {
    int out_node = -1;                  // n x 3 unit rows or n x 1 logits
    std::vector<AttentionState> trace;  // per layer, when requested
    std::vector<NeighborGraph> graphs;  // per layer, when requested
};

// points_node: [n,3] leaf of a unit-ball-normalized patch.
// weight_ids: from stage_weights, aligned with weight_layout(cfg).
template <typename Real>
ForwardResult<Real> forward(Tape<Real>& tape, int points_node, const ModelConfig& cfg,
                            const std::vector<int>& weight_ids, bool want_trace = false);

// Convenience float inference without keeping the tape.
std::vector<float> forward_values(const std::vector<float>& points, int n,
                                  const WeightSet& weights, const ModelConfig& cfg,
                                  std::vector<AttentionState>* trace = nullptr,
                                  std::vector<NeighborGraph>* graphs = nullptr);

// "GACK" checkpoint: config JSON + named f32 arrays, bit-exact round trip.
void save_checkpoint(const std::string& path, const ModelConfig& cfg, const WeightSet& weights);
std::pair<ModelConfig, WeightSet> load_checkpoint(const std::string& path);
std::string checkpoint_to_bytes(const ModelConfig& cfg, const WeightSet& weights);
std::pair<ModelConfig, WeightSet> checkpoint_from_bytes(const std::string& bytes);

extern template std::vector<int> stage_weights<float>(Tape<float>&, const WeightSet&, bool);
extern template std::vector<int> stage_weights<double>(Tape<double>&, const WeightSet&, bool);
extern template ForwardResult<float> forward<float>(Tape<float>&, int, const ModelConfig&,
                                                    const std::vector<int>&, bool);
extern template ForwardResult<double> forward<double>(Tape<double>&, int, const ModelConfig&,
                                                      const std::vector<int>&, bool);

} // namespace ga
