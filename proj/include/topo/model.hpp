#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topo/dataset.hpp"
#include "topo/graphgen.hpp"
#include "topo/layers.hpp"

namespace topo {

enum class Aggregator { Att, Mean, Max, Single };

std::string aggregator_name(Aggregator a);
Aggregator aggregator_from_name(const std::string& name);

struct ModelConfig {
    Task task = Task::Tser;
    Aggregator aggregator = Aggregator::Att;
    bool scalar_scores = false;

    // TSER temporal encoder
    int channels = 3;
    int conv_kernel = 9;
    int conv_c1 = 32;
    int conv_c2 = 64;

    // traffic temporal encoder
    int input_dim = 1;  // K
    int gru_proj = 16;
    int gru_hidden = 64;

    int gcn_hidden = 32;
    int gcn_out = 32;
    int head_hidden = 32;

    int targets = 5;  // TSER heads
    int t_out = 3;    // traffic horizon

    int encoder_out() const { return task == Task::Tser ? conv_c2 : gru_hidden; }
};

struct Subnet {
    Conv1dEncoderParams conv;  // TSER
    GruEncoderParams gru;      // traffic
    GcnLayerParams gcn1, gcn2;
    Tensor prop;  // constant propagation operator [N, N]
    SensorGraph graph;
};

// Per-graph sub-networks plus shared attention and heads. Parameter init is
// keyed by (seed, parameter name) so the same names always get the same
// values regardless of which other parameters exist.
struct EnsembleModel {
    ModelConfig config;
    uint64_t init_seed = 0;
    FamilyKind family = FamilyKind::G0;
    std::vector<Subnet> subnets;
    AttentionParams attention;     // populated iff aggregator == Att
    std::vector<MlpParams> heads;  // 5 single-output heads (TSER) or 1 horizon head (traffic)

    static EnsembleModel build(const GraphFamily& family, const ModelConfig& cfg, uint64_t seed);

    // Ordered view of every trainable tensor; order is the contract for
    // optimizers and checkpoints.
    std::vector<ParamSlot> collect_params();
};

struct BoundSubnet {
    BoundConv1dEncoder conv;
    BoundGruEncoder gru;
    Var gcn1_w, gcn2_w;
    Var prop;  // constant
};

struct BoundEnsemble {
    std::vector<BoundSubnet> subnets;
    Var w_att;
    std::vector<BoundMlp> heads;
    std::vector<Var> leaves;  // aligned with collect_params()
};

BoundEnsemble bind_model(Tape& t, EnsembleModel& model);

// series [N, W, C] -> [N, targets]; optionally exposes per-member attention
// weight tensors.
Var forward_tser_event(Tape& t, const BoundEnsemble& be, const ModelConfig& cfg, Var series,
                       std::vector<Var>* attention_out = nullptr);

// window [T_in, N, K] -> [T_out, N, 1].
Var forward_traffic_window(Tape& t, const BoundEnsemble& be, const ModelConfig& cfg, Var window,
                           std::vector<Var>* attention_out = nullptr);

// Pure batched inference; batch [B, N, W, C] -> [B, N, targets].
Tensor forward_tser(EnsembleModel& model, const Tensor& batch);
// batch [B, T_in, N, K] -> [B, T_out, N, 1].
Tensor forward_traffic(EnsembleModel& model, const Tensor& batch);

// (1/N) ||pred - label||^2 + lambda * sum of squared weights.
double loss_tser(const Tensor& pred, const Tensor& label,
                 const std::vector<const Tensor*>& weights, double lambda);
// (1/N) * sum |pred - label|.
double loss_traffic(const Tensor& pred, const Tensor& label);

// On-tape data terms matching the formulas above (no L2 term).
Var tser_loss_var(Tape& t, Var pred, Var label);
Var traffic_loss_var(Tape& t, Var pred, Var label);

// Checkpoint: JSON header (config, seed, graphs, parameter manifest) followed
// by a little-endian f64 blob in collect_params() order.
void save_model(const std::string& path, EnsembleModel& model);
EnsembleModel load_model(const std::string& path);

}  // namespace topo
