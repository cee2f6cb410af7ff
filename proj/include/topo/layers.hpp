#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topo/tape.hpp"

namespace topo {

enum class Activation { Identity, Relu, Tanh };

Var apply_activation(Tape& t, Var x, Activation act);

// Deterministic per-parameter stream: mixing the run seed with the parameter
// name keeps initialization independent of which other parameters exist.
uint64_t param_seed(uint64_t run_seed, const std::string& name);

Tensor glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, uint64_t seed);

// One named tensor slot; params structs expose their slots through each().
struct ParamSlot {
    std::string name;
    Tensor* tensor;
};

struct GcnLayerParams {
    Tensor weight;  // [F, F']
    Activation activation = Activation::Relu;

    static GcnLayerParams init(int in, int out, Activation act, uint64_t run_seed,
                               const std::string& name);

    template <typename F>
    void each(const std::string& prefix, F&& f) {
        f(prefix + ".w", weight);
    }
};

// sigma(A_hat H W); prop is the constant propagation operator.
Var gcn_layer(Tape& t, Var h, Var prop, Var weight, Activation act);

struct Conv1dEncoderParams {
    int kernel = 9;
    Tensor w1, b1;  // [K, C, C1], [C1]
    Tensor w2, b2;  // [K, C1, C2], [C2]

    static Conv1dEncoderParams init(int channels, int kernel, int c1, int c2, uint64_t run_seed,
                                    const std::string& name);

    int out_features() const { return w2.shape[2]; }
    int receptive_field() const { return 2 * (kernel - 1) + 1; }

    template <typename F>
    void each(const std::string& prefix, F&& f) {
        f(prefix + ".conv1.w", w1);
        f(prefix + ".conv1.b", b1);
        f(prefix + ".conv2.w", w2);
        f(prefix + ".conv2.b", b2);
    }
};

struct BoundConv1dEncoder {
    int kernel;
    Var w1, b1, w2, b2;
};

// series [N, W, C] -> [N, F]: two convolutions with ReLU, then temporal mean
// pooling so F stays independent of the window length.
// Throws SeriesTooShortError when W is below the receptive field.
Var conv1d_encoder(Tape& t, Var series, const BoundConv1dEncoder& enc);

struct GruEncoderParams {
    int hidden = 64;
    Tensor proj_w, proj_b;  // [K, P], [P]
    Tensor wz, uz, bz;      // update gate
    Tensor wr, ur, br;      // reset gate
    Tensor wc, uc, bc;      // candidate

    static GruEncoderParams init(int input_dim, int proj, int hidden, uint64_t run_seed,
                                 const std::string& name);

    template <typename F>
    void each(const std::string& prefix, F&& f) {
        f(prefix + ".proj.w", proj_w);
        f(prefix + ".proj.b", proj_b);
        f(prefix + ".z.w", wz);
        f(prefix + ".z.u", uz);
        f(prefix + ".z.b", bz);
        f(prefix + ".r.w", wr);
        f(prefix + ".r.u", ur);
        f(prefix + ".r.b", br);
        f(prefix + ".c.w", wc);
        f(prefix + ".c.u", uc);
        f(prefix + ".c.b", bc);
    }
};

struct BoundGruEncoder {
    int hidden;
    Var proj_w, proj_b, wz, uz, bz, wr, ur, br, wc, uc, bc;
};

// series [T, N, K] -> final hidden state [N, H]. T = 0 yields zeros.
Var gru_encoder(Tape& t, Var series, const BoundGruEncoder& enc);

struct AttentionParams {
    Tensor w_att;  // [F, F] or [F, 1] for scalar scores
    bool scalar_scores = false;

    static AttentionParams init(int features, bool scalar_scores, uint64_t run_seed,
                                const std::string& name);

    template <typename F>
    void each(const std::string& prefix, F&& f) {
        f(prefix + ".w", w_att);
    }
};

// S_i = H_i W_att; alpha = softmax over the member index at every position;
// returns sum_i alpha_i (*) Z_i. H and Z must be member-aligned.
Var attention_aggregate(Tape& t, const std::vector<Var>& h, const std::vector<Var>& z, Var w_att,
                        bool scalar_scores);

// Same, also exposing the member weights (one [N,F] Var per member).
Var attention_aggregate_with_weights(Tape& t, const std::vector<Var>& h,
                                     const std::vector<Var>& z, Var w_att, bool scalar_scores,
                                     std::vector<Var>* weights_out);

Var mean_aggregate(Tape& t, const std::vector<Var>& z);
Var max_aggregate(Tape& t, const std::vector<Var>& z);

struct MlpParams {
    std::vector<Tensor> weights;  // [F_l, F_{l+1}]
    std::vector<Tensor> biases;
    std::vector<Activation> activations;

    static MlpParams init(const std::vector<int>& dims, const std::vector<Activation>& acts,
                          uint64_t run_seed, const std::string& name);

    template <typename F>
    void each(const std::string& prefix, F&& f) {
        for (size_t l = 0; l < weights.size(); ++l) {
            f(prefix + ".l" + std::to_string(l) + ".w", weights[l]);
            f(prefix + ".l" + std::to_string(l) + ".b", biases[l]);
        }
    }
};

struct BoundMlp {
    std::vector<Var> weights, biases;
    std::vector<Activation> activations;
};

Var mlp(Tape& t, Var x, const BoundMlp& m);

}  // namespace topo
