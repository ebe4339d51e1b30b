#include "ga/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ga/rng.hpp"

namespace ga {

const char* to_string(Arch a) { return a == Arch::dgcnn ? "dgcnn" : "ga"; }
const char* to_string(Task t) { return t == Task::normals ? "normals" : "sharp"; }

Arch arch_from_string(const std::string& s) {
    if (s == "dgcnn") return Arch::dgcnn;
    if (s == "ga") return Arch::ga;
    throw ConfigError("unknown arch '" + s + "' (expected dgcnn|ga)");
}

Task task_from_string(const std::string& s) {
    if (s == "normals") return Task::normals;
    if (s == "sharp") return Task::sharp;
    throw ConfigError("unknown task '" + s + "' (expected normals|sharp)");
}

void validate_config(const ModelConfig& cfg) {
    if (cfg.k < 1) throw ConfigError("config: k must be >= 1");
    if (cfg.n_layers < 1) throw ConfigError("config: n_layers must be >= 1");
    if (int(cfg.widths.size()) != cfg.n_layers)
        throw ConfigError("config: widths must list one channel count per layer");
    for (int w : cfg.widths)
        if (w < 1) throw ConfigError("config: widths must be positive");
    if (cfg.semantic_width < 1) throw ConfigError("config: semantic_width must be positive");
    if (cfg.global_width < 1) throw ConfigError("config: global_width must be positive");
    if (cfg.head_widths.size() != 2 || cfg.head_widths[0] < 1 || cfg.head_widths[1] < 1)
        throw ConfigError("config: head_widths must hold two positive widths");
    if (!(cfg.leaky_slope > 0 && cfg.leaky_slope < 1))
        throw ConfigError("config: leaky_slope must lie in (0,1)");
}

NamedTensor& WeightSet::find(const std::string& name) {
    for (auto& it : items)
        if (it.name == name) return it;
    throw ConfigError("weights: no tensor named '" + name + "'");
}

const NamedTensor& WeightSet::find(const std::string& name) const {
    return const_cast<WeightSet*>(this)->find(name);
}

std::vector<TensorSpecEntry> weight_layout(const ModelConfig& cfg) {
    std::vector<TensorSpecEntry> out;
    auto mlp_entries = [&](const std::string& prefix, int in, int hidden, int outw) {
        out.push_back({prefix + ".w1", {in, hidden}});
        out.push_back({prefix + ".b1", {hidden}});
        out.push_back({prefix + ".w2", {hidden, outw}});
        out.push_back({prefix + ".b2", {outw}});
    };

    int cat = 0;
    for (int l = 0; l < cfg.n_layers; ++l) {
        int in = l == 0 ? 3 : cfg.widths[l - 1];
        std::string lp = "l" + std::to_string(l);
        mlp_entries(lp + ".edge", 2 * in, cfg.widths[l], cfg.widths[l]);
        if (cfg.arch == Arch::ga) {
            int sem_in = l == 0 ? 3 : cfg.widths[l - 1] + cfg.semantic_width;
            mlp_entries(lp + ".sem", sem_in, cfg.semantic_width, cfg.semantic_width);
            mlp_entries(lp + ".q", cfg.semantic_width, cfg.semantic_width, cfg.semantic_width);
            mlp_entries(lp + ".k", cfg.semantic_width, cfg.semantic_width, cfg.semantic_width);
        }
        cat += cfg.widths[l];
    }
    int head_in;
    if (cfg.n_layers > 0) {
        mlp_entries("global", cat, cfg.global_width, cfg.global_width);
        head_in = cat + cfg.global_width;
    } else {
        head_in = 3; // degenerate head-only accounting
    }
    out.push_back({"head.w1", {head_in, cfg.head_widths[0]}});
    out.push_back({"head.b1", {cfg.head_widths[0]}});
    out.push_back({"head.w2", {cfg.head_widths[0], cfg.head_widths[1]}});
    out.push_back({"head.b2", {cfg.head_widths[1]}});
    out.push_back({"head.w3", {cfg.head_widths[1], cfg.out_dim()}});
    out.push_back({"head.b3", {cfg.out_dim()}});
    return out;
}

WeightSet init_weights(const ModelConfig& cfg) {
    Rng rng(mix_seed(cfg.seed, 0x696e6974ULL)); // "init"
    WeightSet w;
    for (const auto& spec : weight_layout(cfg)) {
        NamedTensor t;
        t.name = spec.name;
        t.shape = spec.shape;
        t.data.assign(size_t(numel(spec.shape)), 0.0f);
        if (spec.shape.size() == 2) {
            float bound = 1.0f / std::sqrt(float(spec.shape[0]));
            for (auto& v : t.data) v = float(rng.uniform(-bound, bound));
        }
        // rank-1 entries are biases and stay zero
        w.items.push_back(std::move(t));
    }
    return w;
}

int64_t parameter_count(const ModelConfig& cfg) {
    int64_t total = 0;
    for (const auto& spec : weight_layout(cfg)) total += numel(spec.shape);
    return total;
}

template <typename Real>
std::vector<int> stage_weights(Tape<Real>& tape, const WeightSet& weights, bool requires_grad) {
    std::vector<int> ids;
    ids.reserve(weights.items.size());
    for (const auto& it : weights.items) {
        std::vector<Real> data(it.data.begin(), it.data.end());
        ids.push_back(tape.leaf(it.shape, std::move(data), requires_grad));
    }
    return ids;
}

namespace {

struct Cursor {
    const std::vector<int>& ids;
    size_t pos = 0;
    int next() { return ids[pos++]; }
    MlpRef next_mlp() {
        MlpRef p;
        p.w1 = next();
        p.b1 = next();
        p.w2 = next();
        p.b2 = next();
        return p;
    }
};

template <typename Real>
std::vector<float> to_float(const std::vector<Real>& v) {
    return std::vector<float>(v.begin(), v.end());
}

} // namespace

template <typename Real>
ForwardResult<Real> forward(Tape<Real>& tape, int points_node, const ModelConfig& cfg,
                            const std::vector<int>& weight_ids, bool want_trace) {
    validate_config(cfg);
    const Shape& ps = tape.shape(points_node);
    if (ps.size() != 2 || ps[1] != 3) throw DimensionError("forward: points must be [n,3]");
    int n = ps[0];
    if (weight_ids.size() != weight_layout(cfg).size())
        throw ConfigError("forward: staged weights do not match the config layout");

    // normalized-patch precondition
    const auto& pv = tape.value(points_node);
    for (int i = 0; i < n; ++i) {
        Real r2 = pv[size_t(i) * 3] * pv[size_t(i) * 3] +
                  pv[size_t(i) * 3 + 1] * pv[size_t(i) * 3 + 1] +
                  pv[size_t(i) * 3 + 2] * pv[size_t(i) * 3 + 2];
        if (std::sqrt(double(r2)) > 1.0 + 1e-3)
            throw Error("forward: input patch is not unit-ball normalized");
    }

    Real alpha = Real(cfg.leaky_slope);
    Cursor cur{weight_ids};
    ForwardResult<Real> res;

    int x = points_node;
    int f_prev = -1;
    int cat = -1;
    for (int l = 0; l < cfg.n_layers; ++l) {
        MlpRef p_edge = cur.next_mlp();
        int pm = proximity_matrix(tape, x);
        int scores = pm;
        int sa = -1, ga = -1;
        if (cfg.arch == Arch::ga) {
            MlpRef p_sem = cur.next_mlp();
            MlpRef p_q = cur.next_mlp();
            MlpRef p_k = cur.next_mlp();
            int f = semantic_update(tape, x, f_prev, p_sem, alpha, Real(1e-12));
            sa = semantic_attention(tape, f, p_q, p_k, Real(cfg.semantic_width), alpha);
            GaParts<Real> parts = geometric_attention_parts(tape, sa, pm);
            ga = parts.ga;
            // the final softmax is row-monotone: ordering by the product
            // equals ordering by ga, without ga's compressed float range
            scores = parts.product;
            f_prev = f;
        }
        NeighborGraph graph = knn_from_scores(tape.value(scores), n, cfg.k);

        if (want_trace) {
            AttentionState st;
            st.layer_index = l;
            st.n = n;
            st.pm = to_float(tape.value(pm));
            if (sa >= 0) st.sa = to_float(tape.value(sa));
            if (ga >= 0) st.ga = to_float(tape.value(ga));
            res.trace.push_back(std::move(st));
            res.graphs.push_back(graph);
        }

        x = (cfg.arch == Arch::ga && cfg.ga_weighted_aggregation)
                ? edge_conv_weighted(tape, x, ga, graph, p_edge, alpha)
                : edge_conv(tape, x, graph, p_edge, alpha);
        cat = l == 0 ? x : tape.concat_cols(cat, x);
    }

    MlpRef p_global = cur.next_mlp();
    int global = tape.broadcast_rows(tape.colwise_max(mlp(tape, cat, p_global, alpha)), n);
    int head_in = tape.concat_cols(cat, global);

    // consume ids in layout order (argument evaluation order is unspecified)
    int hw1 = cur.next(), hb1 = cur.next();
    int hw2 = cur.next(), hb2 = cur.next();
    int hw3 = cur.next(), hb3 = cur.next();
    int h1 = tape.leaky_relu(tape.add_row_bias(tape.matmul(head_in, hw1), hb1), alpha);
    int h2 = tape.leaky_relu(tape.add_row_bias(tape.matmul(h1, hw2), hb2), alpha);
    int out = tape.add_row_bias(tape.matmul(h2, hw3), hb3);

    if (cfg.task == Task::normals) out = tape.l2_normalize_rows(out, Real(1e-12));
    res.out_node = out;
    return res;
}

std::vector<float> forward_values(const std::vector<float>& points, int n,
                                  const WeightSet& weights, const ModelConfig& cfg,
                                  std::vector<AttentionState>* trace,
                                  std::vector<NeighborGraph>* graphs) {
    Tape<float> tape;
    int pts = tape.leaf({n, 3}, points, false);
    auto ids = stage_weights(tape, weights, false);
    auto res = forward(tape, pts, cfg, ids, trace != nullptr || graphs != nullptr);
    if (trace) *trace = std::move(res.trace);
    if (graphs) *graphs = std::move(res.graphs);
    return tape.value(res.out_node);
}

// ---------------------------------------------------------------------------
// GACK checkpoint
// magic "GACK" | u32 version=1 | u32 config_len | config JSON
// | records until EOF: u32 name_len | name | u32 rank | u32 extents | f32 data

namespace {

void put_u32(std::string& out, uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                 char((v >> 24) & 0xff)};
    out.append(b, 4);
}

uint32_t get_u32(const std::string& buf, size_t& off, const char* what) {
    if (off + 4 > buf.size())
        throw FormatError(std::string("truncated checkpoint while reading ") + what, off);
    uint32_t v = uint32_t(uint8_t(buf[off])) | uint32_t(uint8_t(buf[off + 1])) << 8 |
                 uint32_t(uint8_t(buf[off + 2])) << 16 | uint32_t(uint8_t(buf[off + 3])) << 24;
    off += 4;
    return v;
}

nlohmann::json config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["arch"] = to_string(cfg.arch);
    j["task"] = to_string(cfg.task);
    j["k"] = cfg.k;
    j["n_layers"] = cfg.n_layers;
    j["widths"] = cfg.widths;
    j["semantic_width"] = cfg.semantic_width;
    j["global_width"] = cfg.global_width;
    j["head_widths"] = cfg.head_widths;
    j["leaky_slope"] = double(cfg.leaky_slope);
    j["seed"] = cfg.seed;
    j["ga_weighted_aggregation"] = cfg.ga_weighted_aggregation;
    return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
    try {
        ModelConfig cfg;
        cfg.arch = arch_from_string(j.at("arch").get<std::string>());
        cfg.task = task_from_string(j.at("task").get<std::string>());
        cfg.k = j.at("k").get<int>();
        cfg.n_layers = j.at("n_layers").get<int>();
        cfg.widths = j.at("widths").get<std::vector<int>>();
        cfg.semantic_width = j.at("semantic_width").get<int>();
        cfg.global_width = j.at("global_width").get<int>();
        cfg.head_widths = j.at("head_widths").get<std::vector<int>>();
        cfg.leaky_slope = float(j.at("leaky_slope").get<double>());
        cfg.seed = j.at("seed").get<uint64_t>();
        cfg.ga_weighted_aggregation = j.at("ga_weighted_aggregation").get<bool>();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("checkpoint config: ") + e.what());
    }
}

} // namespace

std::string checkpoint_to_bytes(const ModelConfig& cfg, const WeightSet& weights) {
    std::string out;
    out.append("GACK", 4);
    put_u32(out, 1);
    std::string config = config_to_json(cfg).dump();
    put_u32(out, uint32_t(config.size()));
    out.append(config);
    for (const auto& it : weights.items) {
        put_u32(out, uint32_t(it.name.size()));
        out.append(it.name);
        put_u32(out, uint32_t(it.shape.size()));
        for (int e : it.shape) put_u32(out, uint32_t(e));
        size_t bytes = it.data.size() * 4;
        size_t base = out.size();
        out.resize(base + bytes);
        std::memcpy(out.data() + base, it.data.data(), bytes);
    }
    return out;
}

std::pair<ModelConfig, WeightSet> checkpoint_from_bytes(const std::string& bytes) {
    if (bytes.size() < 4 || bytes.compare(0, 4, "GACK") != 0)
        throw FormatError("bad magic, expected GACK", 0);
    size_t off = 4;
    uint32_t version = get_u32(bytes, off, "version");
    if (version != 1)
        throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
    uint32_t config_len = get_u32(bytes, off, "config length");
    if (off + config_len > bytes.size()) throw FormatError("truncated checkpoint config", off);
    nlohmann::json j = nlohmann::json::parse(bytes.substr(off, config_len), nullptr, false);
    if (j.is_discarded()) throw FormatError("checkpoint config is not valid JSON", off);
    ModelConfig cfg = config_from_json(j);
    off += config_len;

    WeightSet w;
    while (off < bytes.size()) {
        NamedTensor t;
        uint32_t name_len = get_u32(bytes, off, "record name length");
        if (off + name_len > bytes.size()) throw FormatError("truncated record name", off);
        t.name = bytes.substr(off, name_len);
        off += name_len;
        uint32_t rank = get_u32(bytes, off, "record rank");
        int64_t count = 1;
        for (uint32_t r = 0; r < rank; ++r) {
            uint32_t e = get_u32(bytes, off, "record extent");
            t.shape.push_back(int(e));
            count *= e;
        }
        if (off + size_t(count) * 4 > bytes.size())
            throw FormatError("truncated record data for '" + t.name + "'", off);
        t.data.resize(size_t(count));
        std::memcpy(t.data.data(), bytes.data() + off, size_t(count) * 4);
        off += size_t(count) * 4;
        w.items.push_back(std::move(t));
    }

    // shapes must be consistent with the declared config
    auto layout = weight_layout(cfg);
    if (layout.size() != w.items.size())
        throw FormatError("checkpoint holds " + std::to_string(w.items.size()) +
                              " tensors, config expects " + std::to_string(layout.size()),
                          bytes.size());
    for (size_t i = 0; i < layout.size(); ++i)
        if (layout[i].name != w.items[i].name || layout[i].shape != w.items[i].shape)
            throw FormatError("checkpoint tensor '" + w.items[i].name +
                                  "' does not match the config layout",
                              bytes.size());
    return {cfg, std::move(w)};
}

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const WeightSet& weights) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_checkpoint: cannot open " + path);
    std::string bytes = checkpoint_to_bytes(cfg, weights);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw Error("save_checkpoint: short write to " + path);
}

std::pair<ModelConfig, WeightSet> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_checkpoint: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return checkpoint_from_bytes(bytes);
}

template std::vector<int> stage_weights<float>(Tape<float>&, const WeightSet&, bool);
template std::vector<int> stage_weights<double>(Tape<double>&, const WeightSet&, bool);
template ForwardResult<float> forward<float>(Tape<float>&, int, const ModelConfig&,
                                             const std::vector<int>&, bool);
template ForwardResult<double> forward<double>(Tape<double>&, int, const ModelConfig&,
                                               const std::vector<int>&, bool);

} // namespace ga
