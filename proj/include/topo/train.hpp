#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "topo/model.hpp"

namespace topo {

enum class OptimizerKind { RmsProp, Adam };

std::string optimizer_name(OptimizerKind k);
OptimizerKind optimizer_from_name(const std::string& name);

struct TrainConfig {
    int epochs = 100;
    int batch_size = 20;
    OptimizerKind optimizer = OptimizerKind::RmsProp;
    double learning_rate = 1e-4;
    double l2_lambda = 1e-4;  // applied to every trainable tensor
    uint64_t seed = 0;
    // Stop once the epoch train loss drops below this value (< 0 disables);
    // used by overfitting harnesses, not by paper-style fixed-epoch runs.
    double stop_below_train_loss = -1.0;
};

struct EpochStats {
    int epoch;
    double train_loss;  // optimized objective (data term + L2)
    double val_loss;    // data term on the validation split
};
using TrainHistory = std::vector<EpochStats>;

// RMSProp (decay 0.9) or Adam (beta 0.9/0.999), both with eps 1e-8.
// Per-tensor state; step order follows the slot order.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate);
    void step(const std::vector<ParamSlot>& slots, const std::vector<Tensor>& grads);

private:
    OptimizerKind kind_;
    double lr_;
    long t_ = 0;
    std::vector<std::vector<double>> v_, m_;
};

// Minibatch training over the bundle's train split with per-epoch validation.
// Deterministic under a fixed seed. Throws DivergenceError (with the epoch)
// when the loss stops being finite.
TrainHistory train(EnsembleModel& model, const DatasetBundle& data, const TrainConfig& cfg);

std::string history_to_csv(const TrainHistory& history);

enum class Split { Train, Val, Test };
std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct MetricBlock {
    double mae = 0.0, mse = 0.0, rmse = 0.0, mape = 0.0;
    long mape_skipped = 0;  // points with zero truth excluded from MAPE
};

struct MetricsReport {
    Task task = Task::Tser;
    std::string split;
    MetricBlock overall;
    // TSER: one row per intensity measure; traffic: one row per horizon step.
    std::vector<std::pair<std::string, MetricBlock>> breakdown;
};

// MAE/MSE/RMSE/MAPE over aligned prediction/truth values; zero-truth points
// are excluded from MAPE and counted.
MetricBlock compute_metrics(const std::vector<double>& pred, const std::vector<double>& truth);

// Metrics in original (denormalized) units. TSER averages the per-target
// metrics; traffic reports the horizons (default 3/6/12 steps) that fit in
// t_out.
MetricsReport evaluate(EnsembleModel& model, const DatasetBundle& data, Split split,
                       const std::vector<int>& horizons = {3, 6, 12});

std::string metrics_to_json(const MetricsReport& report);

struct WindowRow {
    double window_s;
    long seed;  // -1 marks the per-window mean row
    double mae, mse, rmse;
};

struct WindowTable {
    std::vector<WindowRow> rows;
};

// Retrains per truncated window length and reports test error; TSER only.
// Windows below 4 s or below the encoder receptive field raise
// WindowTooShortError.
WindowTable window_reduction(const GraphFamily& family, const ModelConfig& model_cfg,
                             const DatasetBundle& data, const TrainConfig& train_cfg,
                             const std::vector<double>& windows_s, int seeds);

std::string window_table_to_csv(const WindowTable& table);

struct AttentionRow {
    int graph_index;
    std::string source_dim;
    std::optional<double> epsilon;
    double mean_weight;
};

struct AttentionReport {
    std::vector<AttentionRow> rows;  // sorted by mean weight, descending
    Tensor per_node;                 // [graphs, N] mean weight per node
    int samples = 0;
};

// Mean attention weight per graph over every position of the split.
// Requires the att aggregator.
AttentionReport attention_report(EnsembleModel& model, const DatasetBundle& data, Split split);

std::string attention_to_csv(const AttentionReport& report);
std::string attention_to_json(const AttentionReport& report);
std::string attention_per_node_csv(const AttentionReport& report);

// 5-fold CV over the 80% train+val pool (TSER): fold f trains with seed
// seed+f and is scored on the held-out test split; blocks are averaged.
MetricsReport cross_validate(const GraphFamily& family, const ModelConfig& model_cfg,
                             const DatasetBundle& data, const TrainConfig& train_cfg, int k = 5);

}  // namespace topo
