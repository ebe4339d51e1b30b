#include "ga/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ga/error.hpp"
#include "ga/mesh.hpp"
#include "ga/network.hpp"
#include "ga/patch.hpp"
#include "ga/rng.hpp"
#include "ga/training.hpp"

namespace fs = std::filesystem;

namespace ga::cli {

namespace {

void set_threads(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

std::vector<int> parse_int_list(const std::string& s, const char* flag) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stoi(tok));
        } catch (...) {
            throw ConfigError(std::string(flag) + ": '" + tok + "' is not an integer");
        }
    }
    if (out.empty()) throw ConfigError(std::string(flag) + ": empty list");
    return out;
}

void write_run_manifest(const fs::path& dir, const std::string& command,
                        const nlohmann::json& config, const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs) {
    nlohmann::json j;
    j["command"] = command;
    j["tool_version"] = kToolVersion;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    std::ofstream out(dir / "run_manifest.json");
    if (!out) throw Error("cannot write run manifest in " + dir.string());
    out << j.dump(2) << "\n";
}

// --- generate ----------------------------------------------------------------

struct GenerateOptions {
    std::string out_dir;
    std::string shapes = "wedge,cylinder";
    std::string obj_path;
    int count = 24;
    int points = 512;
    double spacing = 0.05;
    double sharp_threshold_deg = 30.0;
    uint64_t seed = 1;
    int threads = 0;
};

ShapeSpec randomized_spec(ShapeKind kind, int points, double spacing, uint64_t seed, int index) {
    ShapeSpec spec;
    spec.kind = kind;
    spec.n_points = points;
    spec.spacing = spacing;
    Rng rng(mix_seed(seed, 0x7368617065ULL, uint64_t(index)));
    switch (kind) {
    case ShapeKind::wedge:
        // the hardest reported cases are obtuse creases; keep them in the mix
        spec.dihedral_rad = rng.uniform(0.5235987755982988, 2.8);
        break;
    case ShapeKind::cylinder:
        spec.radius = rng.uniform(0.3, 0.7);
        break;
    case ShapeKind::sphere_cap:
        spec.cap_angle_rad = rng.uniform(0.5235987755982988, 1.5707963267948966);
        break;
    case ShapeKind::plane:
        break;
    }
    return spec;
}

int cmd_generate(const GenerateOptions& opt) {
    if (opt.count < 6) throw ConfigError("--count: need at least 6 patches for a 4:1:1 split");
    if (!(opt.spacing > 0)) throw ConfigError("--spacing: must be positive");
    std::vector<ShapeKind> mix;
    if (opt.obj_path.empty()) {
        std::stringstream ss(opt.shapes);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                mix.push_back(shape_kind_from_string(tok));
            } catch (const ConfigError& e) {
                throw ConfigError(std::string("--shapes: ") + e.what());
            }
        }
        if (mix.empty()) throw ConfigError("--shapes: empty list");
    } else if (!fs::exists(opt.obj_path)) {
        throw ConfigError("--obj: no such file: " + opt.obj_path);
    }

    set_threads(opt.threads);
    fs::create_directories(opt.out_dir);
    fs::path dir(opt.out_dir);

    nlohmann::json config{{"shapes", opt.shapes},    {"obj", opt.obj_path},
                          {"count", opt.count},      {"points", opt.points},
                          {"spacing", opt.spacing},  {"sharp_threshold_deg", opt.sharp_threshold_deg},
                          {"seed", opt.seed},        {"out", opt.out_dir}};
    std::vector<std::string> names(opt.count);
    for (int i = 0; i < opt.count; ++i) {
        char buf[32];
        snprintf(buf, sizeof buf, "patch_%05d.gapc", i);
        names[i] = buf;
    }
    std::vector<std::string> outputs = names;
    outputs.push_back("manifest.json");
    write_run_manifest(dir, "generate", config,
                       opt.obj_path.empty() ? std::vector<std::string>{}
                                            : std::vector<std::string>{opt.obj_path},
                       outputs);

    TriMesh mesh;
    if (!opt.obj_path.empty()) mesh = load_obj(opt.obj_path, opt.sharp_threshold_deg);

    std::string failure;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < opt.count; ++i) {
        try {
            PointPatch p =
                opt.obj_path.empty()
                    ? generate_patch(randomized_spec(mix[i % mix.size()], opt.points, opt.spacing,
                                                     opt.seed, i),
                                     mix_seed(opt.seed, uint64_t(i)))
                    : generate_patch_from_mesh(mesh, opt.obj_path, opt.spacing, opt.points,
                                               mix_seed(opt.seed, uint64_t(i)));
            write_patch((dir / names[i]).string(), p);
        } catch (const std::exception& e) {
#pragma omp critical
            failure = names[i] + ": " + e.what();
        }
    }
    if (!failure.empty()) throw Error("generate: " + failure);

    SplitResult split = split_dataset(names, opt.seed);
    nlohmann::json manifest{{"seed", opt.seed},
                            {"count", opt.count},
                            {"train", split.train},
                            {"val", split.val},
                            {"test", split.test}};
    {
        std::ofstream out(dir / "manifest.json");
        if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
        out << manifest.dump(2) << "\n";
    }
    std::cout << "generated " << opt.count << " patches in " << opt.out_dir << " (train "
              << split.train.size() << ", val " << split.val.size() << ", test "
              << split.test.size() << ")\n";
    return 0;
}

// --- train ---------------------------------------------------------------------

struct TrainOptions {
    std::string task;
    std::string arch = "ga";
    std::string data_dir;
    std::string out_dir;
    std::string widths = "64,64,64";
    std::string head_widths = "256,128";
    int epochs = 10;
    int batch = 8;
    double lr = 1e-3;
    double mse_weight = 0.01;
    int k = 20;
    int layers = 3;
    int semantic_width = 64;
    int global_width = 256;
    double leaky_slope = 0.01;
    uint64_t seed = 1;
    bool no_augment = false;
    bool ga_weighted = false;
    int threads = 0;
};

std::pair<ModelConfig, TrainConfig> resolve_train_config(const TrainOptions& opt) {
    ModelConfig mc;
    mc.arch = arch_from_string(opt.arch);
    mc.task = task_from_string(opt.task);
    mc.k = opt.k;
    mc.n_layers = opt.layers;
    mc.widths = parse_int_list(opt.widths, "--widths");
    mc.semantic_width = opt.semantic_width;
    mc.global_width = opt.global_width;
    mc.head_widths = parse_int_list(opt.head_widths, "--head-widths");
    mc.leaky_slope = float(opt.leaky_slope);
    mc.seed = opt.seed;
    mc.ga_weighted_aggregation = opt.ga_weighted;
    validate_config(mc);

    TrainConfig tc;
    tc.epochs = opt.epochs;
    tc.batch_size = opt.batch;
    tc.lr = opt.lr;
    tc.mse_weight = opt.mse_weight;
    tc.seed = opt.seed;
    tc.augment = !opt.no_augment;
    return {mc, tc};
}

nlohmann::json train_config_json(const TrainOptions& opt) {
    return nlohmann::json{{"task", opt.task},
                          {"arch", opt.arch},
                          {"data", opt.data_dir},
                          {"out", opt.out_dir},
                          {"epochs", opt.epochs},
                          {"batch_size", opt.batch},
                          {"lr", opt.lr},
                          {"mse_weight", opt.mse_weight},
                          {"k", opt.k},
                          {"layers", opt.layers},
                          {"widths", opt.widths},
                          {"semantic_width", opt.semantic_width},
                          {"global_width", opt.global_width},
                          {"head_widths", opt.head_widths},
                          {"leaky_slope", opt.leaky_slope},
                          {"seed", opt.seed},
                          {"augment", !opt.no_augment},
                          {"ga_weighted_aggregation", opt.ga_weighted}};
}

int cmd_train(const TrainOptions& opt) {
    auto [mc, tc] = resolve_train_config(opt);
    set_threads(opt.threads);
    fs::create_directories(opt.out_dir);
    fs::path dir(opt.out_dir);
    write_run_manifest(dir, "train", train_config_json(opt),
                       {opt.data_dir + "/manifest.json"}, {"checkpoint.gack", "log.csv"});

    DataSet data = load_dataset(opt.data_dir);
    TrainResult result = train(mc, tc, data);

    save_checkpoint((dir / "checkpoint.gack").string(), mc, result.best_weights);
    write_log_csv((dir / "log.csv").string(), result.log);

    std::cout << "trained " << opt.arch << "/" << opt.task << ": " << result.steps
              << " steps, best epoch " << result.best_epoch;
    if (!data.val.empty()) std::cout << ", best val metric " << result.best_val_metric;
    std::cout << "\ncheckpoint: " << (dir / "checkpoint.gack").string() << "\n";
    return 0;
}

// --- eval ----------------------------------------------------------------------

struct EvalOptions {
    std::string checkpoint;
    std::string data_dir;
    std::string split = "test";
    std::string out_path = "metrics.json";
    bool strict_oriented_rmse = false;
    int threads = 0;
};

int cmd_eval(const EvalOptions& opt) {
    if (!fs::exists(opt.checkpoint)) throw ConfigError("--checkpoint: no such file: " + opt.checkpoint);
    if (opt.split != "train" && opt.split != "val" && opt.split != "test")
        throw ConfigError("--split: expected train|val|test");
    set_threads(opt.threads);

    auto [cfg, weights] = load_checkpoint(opt.checkpoint);
    DataSet data = load_dataset(opt.data_dir);
    const auto& patches = opt.split == "train" ? data.train : opt.split == "val" ? data.val : data.test;
    const auto& ids = opt.split == "train" ? data.train_ids : opt.split == "val" ? data.val_ids : data.test_ids;
    if (patches.empty()) throw ConfigError("--split: split '" + opt.split + "' is empty");

    MetricsReport rep = evaluate(cfg, weights, patches, ids, !opt.strict_oriented_rmse);
    {
        std::ofstream out(opt.out_path);
        if (!out) throw Error("cannot write " + opt.out_path);
        out << metrics_to_json(rep) << "\n";
    }
    if (cfg.task == Task::normals) {
        std::cout << "angular_loss " << rep.mean_metric << "\nrmse " << rep.mean_rmse << "\n";
    } else {
        std::cout << "balanced_accuracy " << rep.mean_metric << "\n";
    }
    std::cout << "patches " << patches.size() << "\nreport: " << opt.out_path << "\n";
    return 0;
}

// --- inspect ----------------------------------------------------------------------

struct InspectOptions {
    std::string checkpoint;
    std::string patch_path;
    std::string out_path = "inspect.ply";
    int query = 0;
    int layer = 0;
};

int cmd_inspect(const InspectOptions& opt) {
    if (!fs::exists(opt.checkpoint)) throw ConfigError("--checkpoint: no such file: " + opt.checkpoint);
    if (!fs::exists(opt.patch_path)) throw ConfigError("--patch: no such file: " + opt.patch_path);

    auto [cfg, weights] = load_checkpoint(opt.checkpoint);
    PointPatch patch = read_patch(opt.patch_path);
    if (opt.query < 0 || opt.query >= patch.n)
        throw ConfigError("--query: index " + std::to_string(opt.query) + " out of range [0, " +
                          std::to_string(patch.n) + ")");
    if (opt.layer < 0 || opt.layer >= cfg.n_layers)
        throw ConfigError("--layer: index " + std::to_string(opt.layer) + " out of range [0, " +
                          std::to_string(cfg.n_layers) + ")");

    std::vector<AttentionState> trace;
    std::vector<float> pred = forward_values(patch.points, patch.n, weights, cfg, &trace);
    const AttentionState& st = trace[opt.layer];

    // the selection distribution over all points, seen from the query row
    std::vector<float> attention(patch.n);
    if (!st.ga.empty()) {
        for (int j = 0; j < patch.n; ++j) attention[j] = st.ga[size_t(opt.query) * patch.n + j];
    } else {
        // proximity-only checkpoint: row softmax of PM
        double mx = -1e300, sum = 0;
        for (int j = 0; j < patch.n; ++j)
            mx = std::max(mx, double(st.pm[size_t(opt.query) * patch.n + j]));
        std::vector<double> e(patch.n);
        for (int j = 0; j < patch.n; ++j) {
            e[j] = std::exp(double(st.pm[size_t(opt.query) * patch.n + j]) - mx);
            sum += e[j];
        }
        for (int j = 0; j < patch.n; ++j) attention[j] = float(e[j] / sum);
    }

    std::vector<std::pair<std::string, std::vector<float>>> columns;
    if (cfg.task == Task::normals) {
        std::vector<float> nx(patch.n), ny(patch.n), nz(patch.n);
        for (int i = 0; i < patch.n; ++i) {
            nx[i] = pred[size_t(i) * 3];
            ny[i] = pred[size_t(i) * 3 + 1];
            nz[i] = pred[size_t(i) * 3 + 2];
        }
        columns = {{"pred_nx", nx}, {"pred_ny", ny}, {"pred_nz", nz}};
    } else {
        std::vector<float> prob(patch.n);
        for (int i = 0; i < patch.n; ++i) prob[i] = float(1.0 / (1.0 + std::exp(-double(pred[i]))));
        columns = {{"pred_sharp", prob}};
    }
    columns.push_back({"attention", attention});
    write_ply(opt.out_path, patch.n, patch.points.data(), columns);

    double wsum = 0;
    for (float v : attention) wsum += v;
    std::cout << "wrote " << opt.out_path << " (query " << opt.query << ", layer " << opt.layer
              << ", attention row sum " << wsum << ")\n";
    return 0;
}

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"point-cloud differential property estimation with geometric attention"};
    app.require_subcommand(1);

    GenerateOptions gen;
    CLI::App* g = app.add_subcommand("generate", "generate labeled point-cloud patches");
    g->add_option("--out", gen.out_dir, "output directory")->required();
    g->add_option("--shapes", gen.shapes, "comma list: plane,wedge,cylinder,sphere-cap");
    g->add_option("--obj", gen.obj_path, "sample patches from a triangle mesh instead");
    g->add_option("--count", gen.count, "number of patches");
    g->add_option("--points", gen.points, "points per patch");
    g->add_option("--spacing", gen.spacing, "target sample spacing in shape units");
    g->add_option("--sharp-threshold", gen.sharp_threshold_deg,
                  "mesh dihedral deviation (degrees) marking sharp edges");
    g->add_option("--seed", gen.seed, "generation seed");
    g->add_option("--threads", gen.threads, "worker threads (0 = default)");

    TrainOptions tr;
    CLI::App* t = app.add_subcommand("train", "train a model on generated patches");
    t->add_option("--task", tr.task, "normals|sharp")->required();
    t->add_option("--arch", tr.arch, "dgcnn|ga");
    t->add_option("--data", tr.data_dir, "data directory with manifest.json")->required();
    t->add_option("--out", tr.out_dir, "run output directory")->required();
    t->add_option("--epochs", tr.epochs, "training epochs");
    t->add_option("--batch", tr.batch, "batch size");
    t->add_option("--lr", tr.lr, "Adam learning rate");
    t->add_option("--mse-weight", tr.mse_weight, "MSE regularizer weight (normals)");
    t->add_option("--k", tr.k, "neighbors per point");
    t->add_option("--layers", tr.layers, "edge-conv layer count");
    t->add_option("--widths", tr.widths, "per-layer channel widths, comma list");
    t->add_option("--semantic-width", tr.semantic_width, "semantic feature channels");
    t->add_option("--global-width", tr.global_width, "global descriptor width");
    t->add_option("--head-widths", tr.head_widths, "head widths, comma list");
    t->add_option("--leaky-slope", tr.leaky_slope, "LeakyReLU negative slope");
    t->add_option("--seed", tr.seed, "training seed");
    t->add_flag("--no-augment", tr.no_augment, "disable rotation augmentation");
    t->add_flag("--ga-weighted-aggregation", tr.ga_weighted,
                "experimental: weight edge responses by attention values");
    t->add_option("--threads", tr.threads, "worker threads (0 = default)");

    EvalOptions ev;
    CLI::App* e = app.add_subcommand("eval", "evaluate a checkpoint on a data split");
    e->add_option("--checkpoint", ev.checkpoint, "GACK checkpoint")->required();
    e->add_option("--data", ev.data_dir, "data directory")->required();
    e->add_option("--split", ev.split, "train|val|test");
    e->add_option("--out", ev.out_path, "metrics JSON path");
    e->add_flag("--strict-oriented-rmse", ev.strict_oriented_rmse,
                "disable the unoriented sign flip in the RMSE metric");
    e->add_option("--threads", ev.threads, "worker threads (0 = default)");

    InspectOptions in;
    CLI::App* i = app.add_subcommand("inspect", "export one attention row as a PLY");
    i->add_option("--checkpoint", in.checkpoint, "GACK checkpoint")->required();
    i->add_option("--patch", in.patch_path, "GAPC patch file")->required();
    i->add_option("--query", in.query, "query point index")->required();
    i->add_option("--layer", in.layer, "layer index");
    i->add_option("--out", in.out_path, "output PLY path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& h) {
        return app.exit(h); // prints help, exit 0
    } catch (const CLI::ParseError& p) {
        std::cerr << p.what() << "\n";
        return 2;
    }

    try {
        if (g->parsed()) return cmd_generate(gen);
        if (t->parsed()) return cmd_train(tr);
        if (e->parsed()) return cmd_eval(ev);
        if (i->parsed()) return cmd_inspect(in);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const ConfigError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
}

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(int(argv.size()), argv.data());
}

} // namespace ga::cli
