#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ga/reference.hpp"
#include "ga/training.hpp"
#include "test_util.hpp"

using namespace ga;

namespace {

ModelConfig tiny_model(Arch arch, Task task) {
    ModelConfig cfg;
    cfg.arch = arch;
    cfg.task = task;
    cfg.k = 4;
    cfg.n_layers = 2;
    cfg.widths = {8, 8};
    cfg.semantic_width = 8;
    cfg.global_width = 8;
    cfg.head_widths = {12, 8};
    cfg.seed = 5;
    return cfg;
}

DataSet tiny_dataset(int n_patches, int points) {
    DataSet ds;
    for (int i = 0; i < n_patches; ++i) {
        ShapeSpec spec;
        spec.kind = i % 2 == 0 ? ShapeKind::wedge : ShapeKind::cylinder;
        spec.n_points = points;
        ds.train.push_back(generate_patch(spec, 100 + i));
        ds.train_ids.push_back("train" + std::to_string(i));
    }
    ShapeSpec vs;
    vs.kind = ShapeKind::wedge;
    vs.n_points = points;
    ds.val.push_back(generate_patch(vs, 999));
    ds.val_ids.push_back("val0");
    return ds;
}

} // namespace

TEST_CASE("angular loss examples, bounds and sign invariance") {
    Tape<float> t;
    int a = t.constant({2, 3}, {1, 0, 0, 0, 1, 0});
    CHECK(t.value(angular_loss_node(t, a, a))[0] == 0.0f);

    int b = t.constant({2, 3}, {0, 0, 1, 1, 0, 0}); // orthogonal to a
    CHECK(t.value(angular_loss_node(t, a, b))[0] == doctest::Approx(1.0));

    float s = float(std::sqrt(0.5));
    int c = t.constant({2, 3}, {s, s, 0, s, s, 0}); // 45 degrees from both
    CHECK(t.value(angular_loss_node(t, a, c))[0] == doctest::Approx(0.5));

    // exact sign invariance
    int na = t.constant({2, 3}, {-1, 0, 0, 0, -1, 0});
    CHECK(t.value(angular_loss_node(t, na, c))[0] == t.value(angular_loss_node(t, a, c))[0]);

    // bounds on random unit rows
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<float> u(6), v(6);
        for (int r = 0; r < 2; ++r) {
            Vec3 p{rng.normal(), rng.normal(), rng.normal()};
            Vec3 q{rng.normal(), rng.normal(), rng.normal()};
            p = p.normalized();
            q = q.normalized();
            u[r * 3] = float(p.x); u[r * 3 + 1] = float(p.y); u[r * 3 + 2] = float(p.z);
            v[r * 3] = float(q.x); v[r * 3 + 1] = float(q.y); v[r * 3 + 2] = float(q.z);
        }
        Tape<float> t2;
        float loss = t2.value(angular_loss_node(t2, t2.constant({2, 3}, u),
                                                t2.constant({2, 3}, v)))[0];
        CHECK(loss >= -1e-6f);
        CHECK(loss <= 1.0f + 1e-6f);
    }

    // precondition: non-unit rows rejected
    Tape<float> t3;
    int bad = t3.constant({1, 3}, {2, 0, 0});
    int ok = t3.constant({1, 3}, {1, 0, 0});
    CHECK_THROWS_AS((void)angular_loss_node(t3, bad, ok), Error);
}

TEST_CASE("normals objective composition") {
    Tape<double> t;
    int a = t.constant({1, 3}, {1, 0, 0});
    int ma = t.constant({1, 3}, {-1, 0, 0});

    // lambda = 0 reduces to the angular loss exactly
    CHECK(t.value(normals_objective_node(t, a, a, 0.0))[0] == 0.0);
    int angular = angular_loss_node(t, ma, a);
    int obj0 = normals_objective_node(t, ma, a, 0.0);
    CHECK(t.value(obj0)[0] == t.value(angular)[0]);

    // opposite unit vectors: angular 0, MSE mean over entries = 4/3
    int obj = normals_objective_node(t, ma, a, 0.01);
    CHECK(t.value(obj)[0] == doctest::Approx(0.01 * 4.0 / 3.0));
}

TEST_CASE("bce examples and direct-formula oracle") {
    Tape<double> t;
    int z0 = t.constant({1}, {0.0});
    int one = t.constant({1}, {1.0});
    CHECK(t.value(bce_loss_node(t, z0, one))[0] == doctest::Approx(std::log(2.0)));

    int zbig = t.constant({1}, {20.0});
    CHECK(t.value(bce_loss_node(t, zbig, one))[0] < 1e-8);

    Rng rng(4);
    std::vector<double> logits(32), labels(32);
    for (int i = 0; i < 32; ++i) {
        logits[i] = rng.uniform(-6, 6);
        labels[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    Tape<double> t2;
    double got = t2.value(bce_loss_node(t2, t2.constant({32}, logits),
                                        t2.constant({32}, labels)))[0];
    CHECK(std::abs(got - ref::bce_direct(logits.data(), labels.data(), 32)) < 1e-6);
    CHECK(got >= 0.0);
}

TEST_CASE("adam: zero gradient is the identity, first step magnitude") {
    std::vector<std::vector<double>> w{{0.5, -0.25}, {1.0}};
    auto w0 = w;
    AdamStateT<double> st;
    std::vector<std::vector<double>> zero{{0, 0}, {0}};
    for (int s = 0; s < 5; ++s) adam_step(w, zero, st, 1e-3, 0.9, 0.999, 1e-8);
    CHECK(w == w0);

    // first nonzero step moves by ~lr in each coordinate
    AdamStateT<double> st2;
    std::vector<std::vector<double>> g{{0.3, -2.0}, {0.001}};
    auto w1 = w0;
    adam_step(w1, g, st2, 1e-3, 0.9, 0.999, 1e-8);
    for (size_t i = 0; i < w1.size(); ++i)
        for (size_t j = 0; j < w1[i].size(); ++j) {
            double delta = std::abs(w1[i][j] - w0[i][j]);
            CHECK(delta > 0.99e-3);
            CHECK(delta <= 1.0e-3 + 1e-12);
            // sign opposes the gradient
            CHECK((w1[i][j] - w0[i][j]) * g[i][j] < 0);
        }
}

TEST_CASE("adam matches the sequential scalar oracle") {
    std::vector<double> grads{0.4, -1.2, 0.05};
    auto expect = ref::adam_scalar_sequence(0.7, grads, 1e-2, 0.9, 0.999, 1e-8);

    std::vector<std::vector<double>> w{{0.7}};
    AdamStateT<double> st;
    for (size_t s = 0; s < grads.size(); ++s) {
        adam_step(w, {{grads[s]}}, st, 1e-2, 0.9, 0.999, 1e-8);
        CHECK(std::abs(w[0][0] - expect[s]) < 1e-10);
    }
}

TEST_CASE("balanced accuracy fixed points") {
    // perfect predictions, both classes present
    CHECK(balanced_accuracy({0.9, 0.9, 0.1, 0.1}, {1, 1, 0, 0}) == doctest::Approx(1.0));
    // everything predicted negative: TNR 1, TPR 0
    CHECK(balanced_accuracy({0.1, 0.2, 0.3, 0.4}, {1, 1, 0, 0}) == doctest::Approx(0.5));
    // TPR 1/2, TNR 3/4
    CHECK(balanced_accuracy({0.9, 0.1, 0.1, 0.1, 0.2, 0.8}, {1, 1, 0, 0, 0, 0}) ==
          doctest::Approx(0.625));
    // single-class patches use the defined rate alone
    CHECK(balanced_accuracy({0.1, 0.2}, {0, 0}) == doctest::Approx(1.0));
    CHECK(balanced_accuracy({0.9, 0.2}, {1, 1}) == doctest::Approx(0.5));
}

TEST_CASE("rmse metric and the unoriented flip") {
    std::vector<float> a{1, 0, 0, 0, 1, 0};
    std::vector<float> na{-1, 0, 0, 0, -1, 0};
    std::vector<float> perp{0, 0, 1, 1, 0, 0};
    CHECK(rmse_metric(a.data(), a.data(), 2) == 0.0);
    CHECK(rmse_metric(na.data(), a.data(), 2) == 0.0);               // flipped onto gt
    CHECK(rmse_metric(na.data(), a.data(), 2, false) ==
          doctest::Approx(std::sqrt(4.0 / 3.0)));                    // strict oriented form
    CHECK(rmse_metric(perp.data(), a.data(), 2) == doctest::Approx(std::sqrt(2.0 / 3.0)));

    // oracle agreement on random rows
    Rng rng(6);
    std::vector<float> p(30), g(30);
    std::vector<double> pd(30), gd(30);
    for (int i = 0; i < 10; ++i) {
        Vec3 u = Vec3{rng.normal(), rng.normal(), rng.normal()}.normalized();
        Vec3 v = Vec3{rng.normal(), rng.normal(), rng.normal()}.normalized();
        p[i * 3] = float(u.x); p[i * 3 + 1] = float(u.y); p[i * 3 + 2] = float(u.z);
        g[i * 3] = float(v.x); g[i * 3 + 1] = float(v.y); g[i * 3 + 2] = float(v.z);
        for (int c = 0; c < 3; ++c) {
            pd[i * 3 + c] = p[i * 3 + c];
            gd[i * 3 + c] = g[i * 3 + c];
        }
    }
    CHECK(rmse_metric(p.data(), g.data(), 10) ==
          doctest::Approx(ref::rmse(pd.data(), gd.data(), 10, true)).epsilon(1e-6));
}

TEST_CASE("evaluate with ground truth as predictions") {
    DataSet ds = tiny_dataset(4, 48);

    // normals: angular loss 0
    auto rep = evaluate_with(
        Task::normals, ds.train, ds.train_ids,
        [](const PointPatch& p) { return p.normals; });
    CHECK(rep.mean_metric == doctest::Approx(0.0));
    CHECK(rep.per_patch.size() == 4);
    int64_t total_points = 0;
    for (auto& p : ds.train) total_points += p.n;
    CHECK(rep.histogram_total == total_points); // per-point histogram partition

    // sharp: +-10 logits reproduce the labels, balanced accuracy 1
    auto rep2 = evaluate_with(
        Task::sharp, ds.train, ds.train_ids,
        [](const PointPatch& p) {
            std::vector<float> out(p.n);
            for (int i = 0; i < p.n; ++i) out[i] = p.sharp[i] ? 10.0f : -10.0f;
            return out;
        });
    CHECK(rep2.mean_metric == doctest::Approx(1.0));
    CHECK(rep2.histogram_total == 4); // per-patch histogram partition

    // aggregate equals the mean of per-patch values
    double mean = 0;
    for (double v : rep2.per_patch) mean += v;
    mean /= double(rep2.per_patch.size());
    CHECK(std::abs(rep2.mean_metric - mean) < 1e-6);
}

TEST_CASE("train: contract, replay oracle, determinism") {
    ModelConfig cfg = tiny_model(Arch::ga, Task::normals);
    DataSet ds = tiny_dataset(6, 48);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 3;
    tc.seed = 11;
    tc.augment = true;

    TrainResult r1 = train(cfg, tc, ds);
    CHECK(r1.steps == 4); // 6 patches / batch 3 * 2 epochs
    CHECK(r1.step_losses.size() == 4);
    CHECK(!r1.best_weights.items.empty());
    bool has_val_row = false, has_train_row = false;
    for (auto& row : r1.log) {
        if (row.split == "val" && row.metric == "angular_loss") has_val_row = true;
        if (row.split == "train" && row.metric == "loss") has_train_row = true;
    }
    CHECK(has_val_row);
    CHECK(has_train_row);

    // replay the first batch independently
    WeightSet w0 = init_weights(cfg);
    auto order = epoch_order(6, tc.seed, 1);
    double replay = 0;
    for (int b = 0; b < tc.batch_size; ++b) {
        PointPatch patch = augment_rotate(ds.train[order[b]], augment_seed(tc.seed, 1, b));
        Tape<float> tape;
        int pts = tape.leaf({patch.n, 3}, patch.points, false);
        auto ids = stage_weights(tape, w0, false);
        auto fr = forward(tape, pts, cfg, ids, false);
        int gt = tape.constant({patch.n, 3}, patch.normals);
        replay += double(tape.value(normals_objective_node(tape, fr.out_node, gt,
                                                           float(tc.mse_weight)))[0]);
    }
    replay /= tc.batch_size;
    CHECK(r1.step_losses[0] == doctest::Approx(replay).epsilon(1e-12));

    // bitwise determinism across runs
    TrainResult r2 = train(cfg, tc, ds);
    CHECK(r2.step_losses == r1.step_losses);
    REQUIRE(r2.best_weights.items.size() == r1.best_weights.items.size());
    for (size_t i = 0; i < r1.best_weights.items.size(); ++i)
        CHECK(r2.best_weights.items[i].data == r1.best_weights.items[i].data);
    REQUIRE(r2.log.size() == r1.log.size());
    for (size_t i = 0; i < r1.log.size(); ++i) CHECK(r2.log[i].value == r1.log[i].value);
}

TEST_CASE("train rejects task/data mismatches and empty splits") {
    ModelConfig cfg = tiny_model(Arch::dgcnn, Task::sharp);
    DataSet ds = tiny_dataset(3, 48);
    for (auto& p : ds.train) p.sharp.clear();
    TrainConfig tc;
    tc.epochs = 1;
    CHECK_THROWS_AS((void)train(cfg, tc, ds), ConfigError);

    DataSet empty;
    CHECK_THROWS_AS((void)train(cfg, tc, empty), ConfigError);
}

TEST_CASE("sharp task trains end to end") {
    ModelConfig cfg = tiny_model(Arch::dgcnn, Task::sharp);
    DataSet ds = tiny_dataset(4, 48);
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 4;
    tc.augment = false;
    TrainResult r = train(cfg, tc, ds);
    CHECK(r.steps == 1);
    CHECK(std::isfinite(r.step_losses[0]));

    // max_steps cap
    tc.epochs = 50;
    tc.max_steps = 2;
    TrainResult r2 = train(cfg, tc, ds);
    CHECK(r2.steps == 2);
}
