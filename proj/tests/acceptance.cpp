// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line with its measured quantity.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <unistd.h>

#include "helpers.hpp"
#include "topo/cli.hpp"
#include "topo/dataset.hpp"
#include "topo/graphgen.hpp"
#include "topo/io.hpp"
#include "topo/layers.hpp"
#include "topo/model.hpp"
#include "topo/persistence.hpp"
#include "topo/train.hpp"

using namespace topo;
using namespace test_helpers;
namespace fs = std::filesystem;

namespace {

void report(int criterion, const std::string& what, bool ok) {
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << what
              << std::endl;
    CHECK_MESSAGE(ok, "criterion ", criterion, ": ", what);
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("topo_acc_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string str(const std::string& name = "") const {
        return name.empty() ? path.string() : (path / name).string();
    }
};

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& x : t.data) x = dist(rng);
    return t;
}

SyntheticSpec overfit_tser_spec() {
    SyntheticSpec spec;
    spec.task = Task::Tser;
    spec.n_sensors = 8;
    spec.geometry = Geometry::Ring;
    spec.events = 40;
    spec.window_s = 10.0;
    spec.sample_rate_hz = 10.0;
    spec.channels = 3;
    spec.noise_std = 0.0;
    spec.seed = 404;
    return spec;
}

ModelConfig tiny_tser_model() {
    ModelConfig cfg;
    cfg.task = Task::Tser;
    cfg.channels = 3;
    cfg.conv_kernel = 9;
    cfg.conv_c1 = 6;
    cfg.conv_c2 = 8;
    cfg.gcn_hidden = 8;
    cfg.gcn_out = 8;
    cfg.head_hidden = 8;
    return cfg;
}

}  // namespace

TEST_CASE("criterion 1: persistence oracle equivalence") {
    Timer timer;
    std::mt19937_64 rng(10001);
    bool ok = true;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 8);  // [3, 10]
        const auto d = distance_matrix_from_points(random_cloud(n, 2, rng));
        ok = ok && diagrams_match(compute_diagram(d), brute_force_diagram(d), 1e-9);
    }
    const double sec = timer.seconds();
    report(1, "compute_diagram == brute_force_diagram on 50 clouds (tol 1e-9), " +
                  std::to_string(sec) + " s",
           ok && sec < 60.0);
}

TEST_CASE("criterion 2: H0/MST duality") {
    Timer timer;
    std::mt19937_64 rng(10002);
    bool ok = true;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 28);  // [3, 30]
        const auto d = distance_matrix_from_points(random_cloud(n, 2, rng));
        const auto deaths = finite_deaths(compute_h0(d));
        const auto mst = kruskal_mst_weights(d);
        ok = ok && deaths.size() == mst.size();
        for (size_t i = 0; ok && i < mst.size(); ++i) {
            ok = std::abs(deaths[i] - mst[i]) <= 1e-12;
        }
    }
    const double sec = timer.seconds();
    report(2, "finite H0 deaths equal Kruskal MST weights on 50 clouds (tol 1e-12), " +
                  std::to_string(sec) + " s",
           ok && sec < 30.0);
}

TEST_CASE("criterion 3: unit-square fixture") {
    Timer timer;
    const auto d = unit_square();
    const auto diag = compute_diagram(d);
    bool ok = diag.pairs.size() == 5;

    int finite_h0 = 0, infinite_h0 = 0, h1 = 0;
    for (const auto& p : diag.pairs) {
        if (p.dim == 0 && p.is_infinite()) {
            ++infinite_h0;
            ok = ok && p.birth == 0.0;
        } else if (p.dim == 0) {
            ++finite_h0;
            ok = ok && std::abs(p.birth) <= 1e-12 && std::abs(p.death - 1.0) <= 1e-12;
        } else {
            ++h1;
            ok = ok && std::abs(p.birth - 1.0) <= 1e-12 &&
                 std::abs(p.death - std::sqrt(2.0)) <= 1e-12;
        }
    }
    ok = ok && finite_h0 == 3 && infinite_h0 == 1 && h1 == 1;

    const auto fams = generate_ph_graphs(d, diag, normalize_edge_weights(d));
    ok = ok && fams.g0.graphs.size() == 1 && fams.g0.graphs[0].edges.size() == 4;
    ok = ok && fams.g1.graphs.size() == 1 && fams.g1.graphs[0].edges.size() == 6;

    const double sec = timer.seconds();
    report(3, "diagram {3x(0,1),(0,inf)} + {(1,sqrt2)}; |G0|=1 (4 edges), |G1|=1 (6 edges), " +
                  std::to_string(sec) + " s",
           ok && sec < 1.0);
}

TEST_CASE("criterion 4: 39-sensor graph count matches the order-0 structure") {
    Timer timer;
    SyntheticSpec spec;
    spec.task = Task::Tser;
    spec.n_sensors = 39;
    spec.geometry = Geometry::Cluster;
    spec.seed = 3939;
    const auto coords = place_sensors(spec);
    const DistanceMatrix dm = build_distance_matrix(coords);
    const auto fams = generate_ph_graphs(dm, compute_diagram(dm), normalize_edge_weights(dm));
    const double sec = timer.seconds();
    report(4, "|G0| = " + std::to_string(fams.g0.graphs.size()) + " for 39 sensors, " +
                  std::to_string(sec) + " s",
           fams.g0.graphs.size() == 38 && sec < 5.0);
}

TEST_CASE("criterion 5: nested edge sets within families") {
    Timer timer;
    std::mt19937_64 rng(10005);
    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 5 + static_cast<int>(rng() % 12);
        const auto d = distance_matrix_from_points(random_cloud(n, 2, rng));
        const auto fams = generate_ph_graphs(d, compute_diagram(d), normalize_edge_weights(d));
        for (const GraphFamily* fam : {&fams.g0, &fams.g1, &fams.g01}) {
            for (size_t g = 1; ok && g < fam->graphs.size(); ++g) {
                std::set<std::pair<int, int>> prev, cur;
                for (const auto& e : fam->graphs[g - 1].edges) prev.insert({e.i, e.j});
                for (const auto& e : fam->graphs[g].edges) cur.insert({e.i, e.j});
                for (const auto& e : prev) {
                    if (cur.count(e) == 0) {
                        ok = false;
                        break;
                    }
                }
            }
        }
    }
    const double sec = timer.seconds();
    report(5, "edge sets monotone along epsilon on 20 layouts, " + std::to_string(sec) + " s",
           ok && sec < 10.0);
}

TEST_CASE("criterion 6: gradient suite at 1e-4") {
    Timer timer;
    std::mt19937_64 rng(10006);
    double worst = 0.0;
    auto track = [&](double err) { worst = std::max(worst, err); };

    for (int config = 0; config < 10; ++config) {
        const int n = 2 + static_cast<int>(rng() % 3);
        const int f_in = 2 + static_cast<int>(rng() % 3);
        const int f_out = 1 + static_cast<int>(rng() % 3);

        // GCN over a random admissible propagation operator.
        SensorGraph g;
        g.n = n;
        std::uniform_real_distribution<double> unit(0.1, 1.0);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (rng() % 2 == 0) g.edges.push_back({i, j, unit(rng)});
        const Tensor prop({n, n}, propagation_operator(g));
        track(finite_difference_check(
            [&](Tape& t, const std::vector<Var>& xs) {
                return t.mean(gcn_layer(t, xs[0], t.constant(prop), xs[1], Activation::Tanh));
            },
            {random_tensor({n, f_in}, rng), random_tensor({f_in, f_out}, rng)}));

        // Conv1D encoder.
        const int kernel = 2 + static_cast<int>(rng() % 2);
        const int width = 2 * kernel + 2 + static_cast<int>(rng() % 3);
        const int chans = 1 + static_cast<int>(rng() % 2);
        track(finite_difference_check(
            [&](Tape& t, const std::vector<Var>& xs) {
                BoundConv1dEncoder enc{kernel, xs[1], xs[2], xs[3], xs[4]};
                return t.mean(conv1d_encoder(t, xs[0], enc));
            },
            {random_tensor({n, width, chans}, rng), random_tensor({kernel, chans, 3}, rng),
             random_tensor({3}, rng), random_tensor({kernel, 3, f_out}, rng),
             random_tensor({f_out}, rng)}));

        // GRU encoder.
        const int steps = 2 + static_cast<int>(rng() % 3);
        const int hidden = 2 + static_cast<int>(rng() % 2);
        {
            GruEncoderParams p = GruEncoderParams::init(chans, 2, hidden, rng(), "acc.gru");
            std::vector<Tensor> inputs = {random_tensor({steps, n, chans}, rng),
                                          p.proj_w,
                                          p.proj_b,
                                          p.wz,
                                          p.uz,
                                          p.bz,
                                          p.wr,
                                          p.ur,
                                          p.br,
                                          p.wc,
                                          p.uc,
                                          p.bc};
            track(finite_difference_check(
                [hidden](Tape& t, const std::vector<Var>& xs) {
                    BoundGruEncoder enc{hidden, xs[1], xs[2], xs[3], xs[4],  xs[5],
                                        xs[6],  xs[7], xs[8], xs[9], xs[10], xs[11]};
                    return t.mean(gru_encoder(t, xs[0], enc));
                },
                inputs));
        }

        // MLP.
        track(finite_difference_check(
            [](Tape& t, const std::vector<Var>& xs) {
                BoundMlp m;
                m.weights = {xs[1], xs[3]};
                m.biases = {xs[2], xs[4]};
                m.activations = {Activation::Relu, Activation::Identity};
                return t.mean(mlp(t, xs[0], m));
            },
            {random_tensor({n, f_in}, rng), random_tensor({f_in, 3}, rng), random_tensor({3}, rng),
             random_tensor({3, f_out}, rng), random_tensor({f_out}, rng)}));

        // Aggregators.
        track(finite_difference_check(
            [](Tape& t, const std::vector<Var>& xs) {
                return t.mean(
                    attention_aggregate(t, {xs[0], xs[1], xs[2]}, {xs[0], xs[1], xs[2]}, xs[3],
                                        false));
            },
            {random_tensor({n, f_in}, rng), random_tensor({n, f_in}, rng),
             random_tensor({n, f_in}, rng), random_tensor({f_in, f_in}, rng)}));
        track(finite_difference_check(
            [](Tape& t, const std::vector<Var>& xs) {
                return t.mean(mean_aggregate(t, {xs[0], xs[1]}));
            },
            {random_tensor({n, f_in}, rng), random_tensor({n, f_in}, rng)}));
        track(finite_difference_check(
            [](Tape& t, const std::vector<Var>& xs) {
                return t.mean(max_aggregate(t, {xs[0], xs[1]}));
            },
            {random_tensor({n, f_in}, rng), random_tensor({n, f_in}, rng)}));
    }

    // Full task losses, 10 random tiny configurations each.
    for (int config = 0; config < 10; ++config) {
        const uint64_t seed = 20000 + static_cast<uint64_t>(config);

        {
            SyntheticSpec spec;
            spec.task = Task::Tser;
            spec.n_sensors = 4;
            spec.geometry = Geometry::Cluster;
            spec.events = 2;
            spec.window_s = 1.2;
            spec.sample_rate_hz = 10.0;
            spec.channels = 2;
            spec.seed = seed;
            const DatasetBundle data = generate_synthetic(spec);
            const DistanceMatrix dm = build_distance_matrix(data.coords);
            const auto fams =
                generate_ph_graphs(dm, compute_diagram(dm), normalize_edge_weights(dm));
            GraphFamily fam;
            fam.family = FamilyKind::G0;
            fam.graphs = {fams.g0.graphs.front(), fams.g0.graphs.back()};

            ModelConfig cfg;
            cfg.task = Task::Tser;
            cfg.channels = 2;
            cfg.conv_kernel = 3;
            cfg.conv_c1 = 2;
            cfg.conv_c2 = 3;
            cfg.gcn_hidden = 3;
            cfg.gcn_out = 2;
            cfg.head_hidden = 2;
            cfg.aggregator = config % 3 == 0   ? Aggregator::Att
                             : config % 3 == 1 ? Aggregator::Mean
                                               : Aggregator::Max;
            EnsembleModel model = EnsembleModel::build(fam, cfg, seed);

            const Tensor norm = normalize_series(data.series, data.norm, Task::Tser);
            const int n = norm.shape[1], w = norm.shape[2], c = norm.shape[3];
            const Tensor event({n, w, c},
                               std::vector<double>(norm.data.begin(),
                                                   norm.data.begin() + n * w * c));
            const Tensor label({n, 5}, std::vector<double>(data.labels.data.begin(),
                                                           data.labels.data.begin() + n * 5));
            track(model_loss_fd_check(model, [&](Tape& t, BoundEnsemble& be) {
                Var pred = forward_tser_event(t, be, model.config, t.constant(event));
                Var loss = tser_loss_var(t, pred, t.constant(label));
                Var reg;
                for (size_t k = 0; k < be.leaves.size(); ++k) {
                    Var sq = t.sum(t.hadamard(be.leaves[k], be.leaves[k]));
                    reg = k == 0 ? sq : t.add(reg, sq);
                }
                return t.add(loss, t.scale(reg, 1e-4));
            }));
        }

        {
            SyntheticSpec spec;
            spec.task = Task::Traffic;
            spec.n_sensors = 4;
            spec.geometry = Geometry::Ring;
            spec.total_steps = 40;
            spec.t_in = 3;
            spec.t_out = 2;
            spec.seed = seed;
            const DatasetBundle data = generate_synthetic(spec);
            const DistanceMatrix dm = build_distance_matrix(data.coords);
            const auto fams =
                generate_ph_graphs(dm, compute_diagram(dm), normalize_edge_weights(dm));
            GraphFamily fam = fams.g1.graphs.empty() ? fams.g0 : fams.g1;
            if (fam.graphs.size() > 2) fam.graphs.resize(2);

            ModelConfig cfg;
            cfg.task = Task::Traffic;
            cfg.gru_proj = 2;
            cfg.gru_hidden = 3;
            cfg.gcn_hidden = 2;
            cfg.gcn_out = 2;
            cfg.head_hidden = 2;
            cfg.t_out = 2;
            cfg.aggregator = config % 2 == 0 ? Aggregator::Att : Aggregator::Mean;
            EnsembleModel model = EnsembleModel::build(fam, cfg, seed);

            const Tensor norm = normalize_series(data.series, data.norm, Task::Traffic);
            const int n = norm.shape[1];
            const Tensor window({data.t_in, n, 1},
                                std::vector<double>(norm.data.begin(),
                                                    norm.data.begin() + data.t_in * n));
            const Tensor target({data.t_out, n, 1},
                                std::vector<double>(
                                    norm.data.begin() + data.t_in * n,
                                    norm.data.begin() + (data.t_in + data.t_out) * n));
            track(model_loss_fd_check(model, [&](Tape& t, BoundEnsemble& be) {
                Var pred = forward_traffic_window(t, be, model.config, t.constant(window));
                return traffic_loss_var(t, pred, t.constant(target));
            }));
        }
    }

    const double sec = timer.seconds();
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", worst);
    report(6, "max relative gradient error " + std::string(buf) + " across layers and losses, " +
                  std::to_string(sec) + " s",
           worst < 1e-4 && sec < 300.0);
}

TEST_CASE("criterion 7: attention weights stay on the simplex") {
    Timer timer;
    std::mt19937_64 rng(10007);
    bool ok = true;
    double worst_dev = 0.0;
    for (int members : {1, 2, 7, 44}) {
        Tape t;
        std::vector<Var> hs;
        for (int m = 0; m < members; ++m) hs.push_back(t.constant(random_tensor({5, 4}, rng)));
        std::vector<Var> weights;
        attention_aggregate_with_weights(t, hs, hs, t.constant(random_tensor({4, 4}, rng)), false,
                                         &weights);
        for (int r = 0; r < 5; ++r) {
            for (int c = 0; c < 4; ++c) {
                double sum = 0.0;
                for (const Var& w : weights) sum += w.value().at2(r, c);
                worst_dev = std::max(worst_dev, std::abs(sum - 1.0));
                ok = ok && std::abs(sum - 1.0) < 1e-6;
            }
        }
    }
    const double sec = timer.seconds();
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", worst_dev);
    report(7, "sum of weights within " + std::string(buf) +
                  " of 1 for ensemble sizes {1,2,7,44}, " + std::to_string(sec) + " s",
           ok && sec < 30.0);
}

TEST_CASE("criterion 8: single-graph attention degeneracy") {
    Timer timer;
    SyntheticSpec spec;
    spec.task = Task::Tser;
    spec.n_sensors = 4;
    spec.geometry = Geometry::Cluster;
    spec.events = 12;
    spec.window_s = 2.4;
    spec.sample_rate_hz = 10.0;
    spec.channels = 2;
    spec.seed = 808;
    const DatasetBundle data = generate_synthetic(spec);
    const DistanceMatrix dm = build_distance_matrix(data.coords);
    const auto fams = generate_ph_graphs(dm, compute_diagram(dm), normalize_edge_weights(dm));
    GraphFamily single;
    single.family = FamilyKind::G0;
    single.graphs = {fams.g0.graphs.back()};

    ModelConfig base;
    base.task = Task::Tser;
    base.channels = 2;
    base.conv_kernel = 3;
    base.conv_c1 = 3;
    base.conv_c2 = 4;
    base.gcn_hidden = 4;
    base.gcn_out = 4;
    base.head_hidden = 4;

    ModelConfig att_cfg = base;
    att_cfg.aggregator = Aggregator::Att;
    ModelConfig plain_cfg = base;
    plain_cfg.aggregator = Aggregator::Single;

    const uint64_t seed = 4242;
    TrainConfig cfg;
    cfg.epochs = 100;
    cfg.batch_size = 4;
    cfg.learning_rate = 1e-3;
    cfg.l2_lambda = 0.0;  // the attention matrix is the only structural extra;
                          // with L2 off the objectives coincide exactly
    cfg.seed = seed;

    EnsembleModel att_model = EnsembleModel::build(single, att_cfg, seed);
    EnsembleModel plain_model = EnsembleModel::build(single, plain_cfg, seed);

    const int n = data.series.shape[1], w = data.series.shape[2], c = data.series.shape[3];
    const Tensor batch({2, n, w, c},
                       std::vector<double>(data.series.data.begin(),
                                           data.series.data.begin() + 2 * n * w * c));
    const bool outputs_before = forward_tser(att_model, batch).data ==
                                forward_tser(plain_model, batch).data;

    const TrainHistory ha = train(att_model, data, cfg);
    const TrainHistory hb = train(plain_model, data, cfg);
    bool history_equal = ha.size() == hb.size() && ha.size() == 100;
    for (size_t i = 0; history_equal && i < ha.size(); ++i) {
        history_equal = ha[i].train_loss == hb[i].train_loss && ha[i].val_loss == hb[i].val_loss;
    }
    const bool outputs_after =
        forward_tser(att_model, batch).data == forward_tser(plain_model, batch).data;

    // The L2 objective differs by lambda*|W_att|^2 but shared-parameter
    // trajectories and outputs must still agree bitwise.
    TrainConfig reg_cfg = cfg;
    reg_cfg.l2_lambda = 1e-4;
    EnsembleModel att_reg = EnsembleModel::build(single, att_cfg, seed);
    EnsembleModel plain_reg = EnsembleModel::build(single, plain_cfg, seed);
    train(att_reg, data, reg_cfg);
    train(plain_reg, data, reg_cfg);
    const bool outputs_reg =
        forward_tser(att_reg, batch).data == forward_tser(plain_reg, batch).data;

    const double sec = timer.seconds();
    report(8, "outputs and 100-epoch history bitwise-equal to the plain model, " +
                  std::to_string(sec) + " s",
           outputs_before && history_equal && outputs_after && outputs_reg && sec < 120.0);
}

TEST_CASE("criterion 9: overfit oracles") {
    Timer timer;

    // TSER: noiseless distance-decay labels, capacity above the data.
    const DatasetBundle tser = generate_synthetic(overfit_tser_spec());
    DatasetBundle tser_all = tser;
    // Overfitting probe: every event participates in training.
    tser_all.splits.train.insert(tser_all.splits.train.end(), tser_all.splits.val.begin(),
                                 tser_all.splits.val.end());
    tser_all.splits.val.clear();
    std::sort(tser_all.splits.train.begin(), tser_all.splits.train.end());

    const DistanceMatrix dm = build_distance_matrix(tser.coords);
    const auto fams = generate_ph_graphs(dm, compute_diagram(dm), normalize_edge_weights(dm));

    ModelConfig cfg = tiny_tser_model();
    cfg.aggregator = Aggregator::Att;
    TrainConfig tc;
    tc.epochs = 500;
    tc.batch_size = 20;
    tc.optimizer = OptimizerKind::RmsProp;
    tc.learning_rate = 1e-3;
    tc.l2_lambda = 0.0;
    tc.seed = 909;
    tc.stop_below_train_loss = 9e-3;

    EnsembleModel model = EnsembleModel::build(fams.g0, cfg, tc.seed);
    const TrainHistory history = train(model, tser_all, tc);
    double best_mse = kInfiniteDeath;
    for (const auto& e : history) best_mse = std::min(best_mse, e.train_loss);
    const bool tser_ok = best_mse < 1e-2 && history.size() <= 500;

    // Traffic: graph-diffusion process vs the constant (train mean) predictor.
    SyntheticSpec traffic_spec;
    traffic_spec.task = Task::Traffic;
    traffic_spec.n_sensors = 10;
    traffic_spec.geometry = Geometry::Ring;
    traffic_spec.total_steps = 2000;
    traffic_spec.t_in = 12;
    traffic_spec.t_out = 3;
    traffic_spec.noise_std = 0.0;
    traffic_spec.seed = 910;
    const DatasetBundle traffic = generate_synthetic(traffic_spec);

    const DistanceMatrix tdm = build_distance_matrix(traffic.coords);
    const auto tfams = generate_ph_graphs(tdm, compute_diagram(tdm), normalize_edge_weights(tdm));
    const GraphFamily tfam = tfams.g1.graphs.empty() ? tfams.g0 : tfams.g1;

    // Constant predictor in normalized space: the training mean is 0, so the
    // baseline loss is the mean absolute normalized target.
    const Tensor norm = normalize_series(traffic.series, traffic.norm, Task::Traffic);
    double baseline = 0.0;
    for (int idx : traffic.splits.train) {
        double window_sum = 0.0;
        for (int t = 0; t < traffic.t_out; ++t) {
            for (int s = 0; s < traffic.series.shape[1]; ++s) {
                window_sum += std::abs(norm.at3(idx + traffic.t_in + t, s, 0));
            }
        }
        baseline += window_sum / static_cast<double>(traffic.series.shape[1]);
    }
    baseline /= static_cast<double>(traffic.splits.train.size());

    ModelConfig tcfg;
    tcfg.task = Task::Traffic;
    tcfg.aggregator = Aggregator::Att;
    tcfg.gru_proj = 4;
    tcfg.gru_hidden = 8;
    tcfg.gcn_hidden = 8;
    tcfg.gcn_out = 8;
    tcfg.head_hidden = 8;
    tcfg.t_out = 3;

    TrainConfig ttc;
    ttc.epochs = 60;
    ttc.batch_size = 64;
    ttc.optimizer = OptimizerKind::Adam;
    ttc.learning_rate = 3e-3;
    ttc.l2_lambda = 0.0;
    ttc.seed = 911;
    ttc.stop_below_train_loss = 0.18 * baseline;

    EnsembleModel tmodel = EnsembleModel::build(tfam, tcfg, ttc.seed);
    const TrainHistory thistory = train(tmodel, traffic, ttc);
    double best_l1 = kInfiniteDeath;
    for (const auto& e : thistory) best_l1 = std::min(best_l1, e.train_loss);
    const bool traffic_ok = best_l1 < 0.2 * baseline;

    const double sec = timer.seconds();
    char buf[128];
    std::snprintf(buf, sizeof(buf), "tser MSE %.3g (<1e-2), traffic L1 %.3g vs 20%% baseline %.3g",
                  best_mse, best_l1, 0.2 * baseline);
    report(9, std::string(buf) + ", " + std::to_string(sec) + " s",
           tser_ok && traffic_ok && sec < 600.0);
}

TEST_CASE("criterion 10: window reduction keeps the long-window advantage") {
    Timer timer;
    const DatasetBundle data = generate_synthetic(overfit_tser_spec());
    const DistanceMatrix dm = build_distance_matrix(data.coords);
    const auto fams = generate_ph_graphs(dm, compute_diagram(dm), normalize_edge_weights(dm));

    ModelConfig cfg = tiny_tser_model();
    cfg.aggregator = Aggregator::Att;
    TrainConfig tc;
    tc.epochs = 60;
    tc.batch_size = 20;
    tc.optimizer = OptimizerKind::RmsProp;
    tc.learning_rate = 1e-3;
    tc.l2_lambda = 0.0;
    tc.seed = 1010;

    const WindowTable table = window_reduction(fams.g0, cfg, data, tc, {4.0, 10.0}, 3);
    double mse4 = -1.0, mse10 = -1.0;
    for (const auto& row : table.rows) {
        if (row.seed == -1 && row.window_s == 4.0) mse4 = row.mse;
        if (row.seed == -1 && row.window_s == 10.0) mse10 = row.mse;
    }
    const double sec = timer.seconds();
    char buf[96];
    std::snprintf(buf, sizeof(buf), "mean test MSE: 10 s %.4g <= 4 s %.4g", mse10, mse4);
    report(10, std::string(buf) + ", " + std::to_string(sec) + " s",
           mse4 > 0.0 && mse10 > 0.0 && mse10 <= mse4 && sec < 600.0);
}

TEST_CASE("criterion 11: end-to-end determinism") {
    Timer timer;
    auto pipeline = [&](const std::string& root) {
        REQUIRE(run_cli({"synth", "--task", "tser", "--n", "6", "--events", "10", "--window-s",
                         "2", "--rate", "10", "--channels", "2", "--seed", "77", "--out",
                         root + "/data"}) == 0);
        REQUIRE(run_cli({"ph", "--sensors", root + "/data/sensors.csv", "--out",
                         root + "/pd.csv"}) == 0);
        REQUIRE(run_cli({"graphs", "--sensors", root + "/data/sensors.csv", "--diagram",
                         root + "/pd.csv", "--family", "g01", "--out", root + "/g01"}) == 0);
        REQUIRE(run_cli({"train",       "--data",     root + "/data", "--family",     "g0",
                         "--aggregator", "att",       "--epochs",     "3",            "--batch",
                         "4",            "--lr",      "1e-3",         "--seed",       "77",
                         "--conv-kernel", "3",        "--conv-c1",    "3",            "--conv-c2",
                         "4",            "--gcn-hidden", "4",         "--gcn-out",    "4",
                         "--head-hidden", "4",        "--out",        root + "/run"}) == 0);
        REQUIRE(run_cli({"eval", "--model", root + "/run/model.ckpt", "--data", root + "/data",
                         "--out", root + "/metrics.json"}) == 0);
    };
    TempDir a("det_a"), b("det_b");
    pipeline(a.str());
    pipeline(b.str());

    bool ok = true;
    for (const std::string rel :
         {"pd.csv", "g01/manifest.json", "run/history.csv", "run/model.ckpt", "metrics.json"}) {
        ok = ok && read_file(a.str(rel)) == read_file(b.str(rel));
    }
    const double sec = timer.seconds();
    report(11, "diagrams, graph manifests, histories, checkpoints and metrics byte-identical, " +
                   std::to_string(sec) + " s",
           ok && sec < 120.0);
}

TEST_CASE("criterion 12: geodesic distances") {
    Timer timer;
    const double d = vincenty_distance({0.0, 0.0}, {0.0, 1.0});
    const bool arc_ok = std::abs(d - 111319.4908) < 1e-3;

    std::mt19937_64 rng(10012);
    std::uniform_real_distribution<double> lat(-80.0, 80.0), lon(-179.0, 179.0);
    bool symmetric = true;
    for (int i = 0; i < 25; ++i) {
        const GeoCoordinate a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)};
        symmetric = symmetric && vincenty_distance(a, b) == vincenty_distance(b, a);
    }

    bool antipodal_raises = false;
    try {
        vincenty_distance({0.0, 0.0}, {0.5, 179.7});
    } catch (const NonConvergenceError&) {
        antipodal_raises = true;
    }

    const double sec = timer.seconds();
    report(12, "equatorial degree 111319.4908 m +- 1e-3, bitwise symmetry, antipodal raises, " +
                   std::to_string(sec) + " s",
           arc_ok && symmetric && antipodal_raises && sec < 1.0);
}
