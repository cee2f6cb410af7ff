#include "topo/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "topo/dataset.hpp"
#include "topo/graphgen.hpp"
#include "topo/io.hpp"
#include "topo/model.hpp"
#include "topo/persistence.hpp"
#include "topo/train.hpp"

namespace fs = std::filesystem;

namespace topo {

namespace {

DistanceMatrix load_distances(const std::string& sensors_path, const std::string& distances_path,
                              bool haversine_fallback) {
    if (!sensors_path.empty() && !distances_path.empty()) {
        throw UsageError("pass either --sensors or --distances, not both");
    }
    if (!sensors_path.empty()) {
        const SensorTable table = read_sensors_csv(sensors_path);
        VincentyOptions opts;
        opts.haversine_fallback = haversine_fallback;
        return build_distance_matrix(table.coords, opts);
    }
    if (!distances_path.empty()) return read_distance_csv(distances_path);
    throw UsageError("need --sensors or --distances");
}

GraphFamily build_family_for(const DistanceMatrix& dm, FamilyKind kind, double tau,
                             ThresholdDirection direction, bool binary_weights,
                             const PersistenceDiagram* diagram) {
    const WeightMatrix wm = normalize_edge_weights(dm);
    if (kind == FamilyKind::Baseline) {
        GraphFamily fam;
        fam.family = FamilyKind::Baseline;
        fam.graphs.push_back(threshold_graph(wm, tau, direction));
        return fam;
    }
    PersistenceDiagram local;
    if (diagram == nullptr) {
        local = compute_diagram(dm);
        diagram = &local;
    }
    GraphGenOptions opts;
    opts.normalized_weights = !binary_weights;
    PhGraphFamilies fams = generate_ph_graphs(dm, *diagram, wm, opts);
    switch (kind) {
        case FamilyKind::G0: return fams.g0;
        case FamilyKind::G1: return fams.g1;
        case FamilyKind::G01: return fams.g01;
        default: throw UsageError("unsupported family");
    }
}

ThresholdDirection direction_from_name(const std::string& name) {
    if (name == "gt") return ThresholdDirection::KeepAbove;
    if (name == "lt") return ThresholdDirection::KeepBelow;
    throw UsageError("--threshold-direction must be gt or lt");
}

struct TrainFlags {
    std::string data_dir, out;
    std::string family = "g01";
    std::string aggregator = "att";
    std::string task;
    std::string optimizer;
    int epochs = 100;
    int batch = 0;  // 0 = task default
    double lr = 1e-4;
    double lambda = -1.0;  // <0 = task default
    uint64_t seed = 0;
    double tau = 0.5;
    std::string threshold_direction = "gt";
    bool binary_weights = false;
    bool scalar_scores = false;
    // model sizes (0 = default)
    int conv_kernel = 9, conv_c1 = 32, conv_c2 = 64;
    int gru_proj = 16, gru_hidden = 64;
    int gcn_hidden = 32, gcn_out = 32, head_hidden = 32;
};

void add_model_size_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--conv-kernel", f.conv_kernel, "Conv1D kernel width");
    cmd->add_option("--conv-c1", f.conv_c1, "first Conv1D channel count");
    cmd->add_option("--conv-c2", f.conv_c2, "second Conv1D channel count");
    cmd->add_option("--gru-proj", f.gru_proj, "GRU input projection size");
    cmd->add_option("--gru-hidden", f.gru_hidden, "GRU hidden size");
    cmd->add_option("--gcn-hidden", f.gcn_hidden, "first GCN layer width");
    cmd->add_option("--gcn-out", f.gcn_out, "second GCN layer width");
    cmd->add_option("--head-hidden", f.head_hidden, "MLP head hidden width");
}

ModelConfig model_config_from_flags(const TrainFlags& f, const DatasetBundle& data) {
    ModelConfig cfg;
    cfg.task = data.task;
    cfg.aggregator = aggregator_from_name(f.aggregator);
    cfg.scalar_scores = f.scalar_scores;
    cfg.conv_kernel = f.conv_kernel;
    cfg.conv_c1 = f.conv_c1;
    cfg.conv_c2 = f.conv_c2;
    cfg.gru_proj = f.gru_proj;
    cfg.gru_hidden = f.gru_hidden;
    cfg.gcn_hidden = f.gcn_hidden;
    cfg.gcn_out = f.gcn_out;
    cfg.head_hidden = f.head_hidden;
    if (data.task == Task::Tser) {
        cfg.channels = data.series.shape[3];
        cfg.targets = data.labels.shape[2];
    } else {
        cfg.input_dim = data.series.shape[2];
        cfg.t_out = data.t_out;
    }
    return cfg;
}

TrainConfig train_config_from_flags(const TrainFlags& f, Task task) {
    TrainConfig cfg;
    cfg.epochs = f.epochs;
    cfg.batch_size = f.batch > 0 ? f.batch : (task == Task::Tser ? 20 : 64);
    cfg.optimizer = f.optimizer.empty()
                        ? (task == Task::Tser ? OptimizerKind::RmsProp : OptimizerKind::Adam)
                        : optimizer_from_name(f.optimizer);
    cfg.learning_rate = f.lr;
    cfg.l2_lambda = f.lambda >= 0.0 ? f.lambda : (task == Task::Tser ? 1e-4 : 0.0);
    cfg.seed = f.seed;
    return cfg;
}

GraphFamily family_from_dataset(const TrainFlags& f, const DatasetBundle& data) {
    const DistanceMatrix dm = build_distance_matrix(data.coords);
    return build_family_for(dm, family_from_name(f.family), f.tau,
                            direction_from_name(f.threshold_direction), f.binary_weights,
                            nullptr);
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"persistent-homology graph ensembles for sensor networks"};
    app.require_subcommand(1);
    app.footer("TOPO_ENSEMBLE_THREADS caps worker threads for distance-matrix assembly.");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    SyntheticSpec spec;
    std::string synth_task = "tser", synth_geometry = "ring", synth_out;
    synth->add_option("--task", synth_task, "tser|traffic");
    synth->add_option("--n", spec.n_sensors, "sensor count");
    synth->add_option("--geometry", synth_geometry, "cluster|ring|grid");
    synth->add_option("--noise", spec.noise_std, "additive noise std");
    synth->add_option("--seed", spec.seed, "generator seed");
    synth->add_option("--events", spec.events, "TSER event count");
    synth->add_option("--window-s", spec.window_s, "TSER window seconds");
    synth->add_option("--rate", spec.sample_rate_hz, "TSER sample rate Hz");
    synth->add_option("--channels", spec.channels, "TSER channel count");
    synth->add_option("--steps", spec.total_steps, "traffic step count");
    synth->add_option("--t-in", spec.t_in, "traffic look-back steps");
    synth->add_option("--t-out", spec.t_out, "traffic horizon steps");
    synth->add_option("--extent", spec.extent_deg, "layout extent in degrees");
    synth->add_option("--center-lat", spec.center_lat, "layout center latitude");
    synth->add_option("--center-lon", spec.center_lon, "layout center longitude");
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    synth->callback([&]() {
        spec.task = task_from_name(synth_task);
        spec.geometry = geometry_from_name(synth_geometry);
        write_dataset(synth_out, generate_synthetic(spec));
        std::cout << "wrote dataset to " << synth_out << "\n";
    });

    // ph
    auto* ph = app.add_subcommand("ph", "persistence diagram of a sensor network");
    std::string ph_sensors, ph_distances, ph_out, ph_distances_out;
    double ph_max_eps = -1.0;
    bool ph_haversine = false;
    ph->add_option("--sensors", ph_sensors, "sensors CSV (id,lat,lon)");
    ph->add_option("--distances", ph_distances, "distance matrix CSV");
    ph->add_option("--max-eps", ph_max_eps, "cap the filtration scale");
    ph->add_flag("--haversine-fallback", ph_haversine,
                 "fall back to the spherical distance on non-convergence");
    ph->add_option("--distances-out", ph_distances_out, "also write the distance matrix CSV");
    ph->add_option("--out", ph_out, "diagram CSV path")->required();
    ph->callback([&]() {
        const DistanceMatrix dm = load_distances(ph_sensors, ph_distances, ph_haversine);
        FiltrationBudget budget;
        if (ph_max_eps >= 0.0) budget.max_epsilon = ph_max_eps;
        const PersistenceDiagram diag = compute_diagram(dm, budget);
        write_diagram_csv(ph_out, diag);
        if (!ph_distances_out.empty()) write_distance_csv(ph_distances_out, dm);
        std::cout << "wrote " << diag.pairs.size() << " pairs to " << ph_out << "\n";
    });

    // graphs
    auto* graphs = app.add_subcommand("graphs", "materialize a graph family");
    std::string g_sensors, g_distances, g_diagram, g_family = "g0", g_dir = "gt", g_out;
    double g_tau = 0.5;
    bool g_binary = false, g_haversine = false;
    graphs->add_option("--sensors", g_sensors, "sensors CSV");
    graphs->add_option("--distances", g_distances, "distance matrix CSV");
    graphs->add_option("--diagram", g_diagram, "diagram CSV (computed when omitted)");
    graphs->add_option("--family", g_family, "g0|g1|g01|baseline");
    graphs->add_option("--tau", g_tau, "baseline threshold in (0,1)");
    graphs->add_option("--threshold-direction", g_dir, "gt keeps close pairs, lt keeps far pairs");
    graphs->add_flag("--binary-weights", g_binary, "unit edge weights instead of normalized");
    graphs->add_flag("--haversine-fallback", g_haversine, "spherical fallback for distances");
    graphs->add_option("--out", g_out, "output directory")->required();
    graphs->callback([&]() {
        const DistanceMatrix dm = load_distances(g_sensors, g_distances, g_haversine);
        std::optional<PersistenceDiagram> diag;
        if (!g_diagram.empty()) diag = read_diagram_csv(g_diagram);
        const GraphFamily family =
            build_family_for(dm, family_from_name(g_family), g_tau, direction_from_name(g_dir),
                             g_binary, diag ? &*diag : nullptr);
        write_graph_family(g_out, family);
        std::cout << "wrote " << family.graphs.size() << " graphs to " << g_out << "\n";
    });

    // train
    auto* train_cmd = app.add_subcommand("train", "train an ensemble on a dataset");
    TrainFlags tf;
    train_cmd->add_option("--data", tf.data_dir, "dataset directory")->required();
    train_cmd->add_option("--family", tf.family, "g0|g1|g01|baseline");
    train_cmd->add_option("--aggregator", tf.aggregator, "att|mean|max");
    train_cmd->add_option("--task", tf.task, "tser|traffic (validated against the dataset)");
    train_cmd->add_option("--epochs", tf.epochs, "training epochs");
    train_cmd->add_option("--batch", tf.batch, "batch size (0 = task default)");
    train_cmd->add_option("--lr", tf.lr, "learning rate");
    train_cmd->add_option("--lambda", tf.lambda, "L2 strength (default 1e-4 tser, 0 traffic)");
    train_cmd->add_option("--seed", tf.seed, "training seed");
    train_cmd->add_option("--optimizer", tf.optimizer, "rmsprop|adam (default per task)");
    train_cmd->add_option("--tau", tf.tau, "baseline threshold");
    train_cmd->add_option("--threshold-direction", tf.threshold_direction, "gt|lt");
    train_cmd->add_flag("--binary-weights", tf.binary_weights, "unit edge weights");
    train_cmd->add_flag("--scalar-scores", tf.scalar_scores, "scalar attention scores (F->1)");
    add_model_size_flags(train_cmd, tf);
    train_cmd->add_option("--out", tf.out, "output directory")->required();
    train_cmd->callback([&]() {
        const DatasetBundle data = read_dataset(tf.data_dir);
        if (!tf.task.empty() && task_from_name(tf.task) != data.task) {
            throw UsageError("--task " + tf.task + " does not match dataset task " +
                             task_name(data.task));
        }
        const GraphFamily family = family_from_dataset(tf, data);
        ModelConfig model_cfg = model_config_from_flags(tf, data);
        TrainConfig train_cfg = train_config_from_flags(tf, data.task);
        EnsembleModel model = EnsembleModel::build(family, model_cfg, train_cfg.seed);
        const TrainHistory history = train(model, data, train_cfg);
        fs::create_directories(tf.out);
        save_model((fs::path(tf.out) / "model.ckpt").string(), model);
        write_file_atomic((fs::path(tf.out) / "history.csv").string(), history_to_csv(history));
        std::cout << "trained " << model.subnets.size() << " sub-networks for "
                  << history.size() << " epochs; final train loss "
                  << format_double(history.back().train_loss) << "\n";
    });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained model");
    std::string e_model, e_data, e_split = "test", e_out, e_horizons = "3,6,12";
    eval_cmd->add_option("--model", e_model, "model checkpoint")->required();
    eval_cmd->add_option("--data", e_data, "dataset directory")->required();
    eval_cmd->add_option("--split", e_split, "train|val|test");
    eval_cmd->add_option("--horizons", e_horizons, "traffic horizon steps, comma separated");
    eval_cmd->add_option("--out", e_out, "metrics JSON path")->required();
    eval_cmd->callback([&]() {
        EnsembleModel model = load_model(e_model);
        const DatasetBundle data = read_dataset(e_data);
        std::vector<int> horizons;
        for (const auto& part : CLI::detail::split(e_horizons, ',')) {
            horizons.push_back(std::stoi(part));
        }
        const MetricsReport report =
            evaluate(model, data, split_from_name(e_split), horizons);
        write_file_atomic(e_out, metrics_to_json(report));
        std::cout << "wrote metrics to " << e_out << " (mae "
                  << format_double(report.overall.mae) << ")\n";
    });

    // explain
    auto* explain = app.add_subcommand("explain", "per-graph attention weights");
    std::string x_model, x_data, x_split = "test", x_out;
    explain->add_option("--model", x_model, "model checkpoint")->required();
    explain->add_option("--data", x_data, "dataset directory")->required();
    explain->add_option("--split", x_split, "train|val|test");
    explain->add_option("--out", x_out, "output directory")->required();
    explain->callback([&]() {
        EnsembleModel model = load_model(x_model);
        const DatasetBundle data = read_dataset(x_data);
        const AttentionReport report = attention_report(model, data, split_from_name(x_split));
        fs::create_directories(x_out);
        write_file_atomic((fs::path(x_out) / "attention.csv").string(), attention_to_csv(report));
        write_file_atomic((fs::path(x_out) / "attention.json").string(),
                          attention_to_json(report));
        write_file_atomic((fs::path(x_out) / "attention_per_node.csv").string(),
                          attention_per_node_csv(report));
        std::cout << "wrote attention report for " << report.rows.size() << " graphs to " << x_out
                  << "\n";
    });

    // window
    auto* window = app.add_subcommand("window", "window-reduction sensitivity analysis");
    TrainFlags wf;
    std::string w_windows = "4,6,8,10";
    int w_seeds = 3;
    window->add_option("--data", wf.data_dir, "TSER dataset directory")->required();
    window->add_option("--windows", w_windows, "window lengths in seconds, comma separated");
    window->add_option("--seeds", w_seeds, "seeds per window");
    window->add_option("--family", wf.family, "g0|g1|g01|baseline");
    window->add_option("--aggregator", wf.aggregator, "att|mean|max");
    window->add_option("--epochs", wf.epochs, "training epochs");
    window->add_option("--batch", wf.batch, "batch size");
    window->add_option("--lr", wf.lr, "learning rate");
    window->add_option("--lambda", wf.lambda, "L2 strength");
    window->add_option("--seed", wf.seed, "base seed");
    window->add_option("--optimizer", wf.optimizer, "rmsprop|adam");
    window->add_option("--tau", wf.tau, "baseline threshold");
    window->add_option("--threshold-direction", wf.threshold_direction, "gt|lt");
    add_model_size_flags(window, wf);
    window->add_option("--out", wf.out, "window table CSV path")->required();
    window->callback([&]() {
        const DatasetBundle data = read_dataset(wf.data_dir);
        const GraphFamily family = family_from_dataset(wf, data);
        ModelConfig model_cfg = model_config_from_flags(wf, data);
        TrainConfig train_cfg = train_config_from_flags(wf, data.task);
        std::vector<double> windows;
        for (const auto& part : CLI::detail::split(w_windows, ',')) {
            windows.push_back(parse_double(part));
        }
        const WindowTable table =
            window_reduction(family, model_cfg, data, train_cfg, windows, w_seeds);
        write_file_atomic(wf.out, window_table_to_csv(table));
        std::cout << "wrote window table to " << wf.out << "\n";
    });

    std::vector<std::string> argv_storage;
    argv_storage.push_back("topoens");
    for (const auto& a : args) argv_storage.push_back(a);
    std::vector<const char*> argv;
    for (const auto& a : argv_storage) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        // Collapse CLI11's per-error exit codes onto the documented contract:
        // 0 for --help/--version, 1 for any usage problem.
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NonConvergenceError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const DivergenceError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace topo
