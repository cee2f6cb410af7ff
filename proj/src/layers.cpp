#include "topo/layers.hpp"

#include <cmath>
#include <random>

namespace topo {

Var apply_activation(Tape& t, Var x, Activation act) {
    switch (act) {
        case Activation::Identity: return x;
        case Activation::Relu: return t.relu(x);
        case Activation::Tanh: return t.tanh(x);
    }
    throw Error("unknown activation");
}

uint64_t param_seed(uint64_t run_seed, const std::string& name) {
    // FNV-1a over the name, then splitmix-style mixing with the run seed.
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : name) {
        h ^= c;
        h *= 1099511628211ull;
    }
    uint64_t z = h ^ (run_seed + 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

Tensor glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, uint64_t seed) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& x : t.data) x = dist(rng);
    return t;
}

GcnLayerParams GcnLayerParams::init(int in, int out, Activation act, uint64_t run_seed,
                                    const std::string& name) {
    GcnLayerParams p;
    p.weight = glorot_uniform({in, out}, in, out, param_seed(run_seed, name + ".w"));
    p.activation = act;
    return p;
}

Var gcn_layer(Tape& t, Var h, Var prop, Var weight, Activation act) {
    return apply_activation(t, t.matmul(t.matmul(prop, h), weight), act);
}

Conv1dEncoderParams Conv1dEncoderParams::init(int channels, int kernel, int c1, int c2,
                                              uint64_t run_seed, const std::string& name) {
    Conv1dEncoderParams p;
    p.kernel = kernel;
    p.w1 = glorot_uniform({kernel, channels, c1}, kernel * channels, kernel * c1,
                          param_seed(run_seed, name + ".conv1.w"));
    p.b1 = Tensor::zeros({c1});
    p.w2 = glorot_uniform({kernel, c1, c2}, kernel * c1, kernel * c2,
                          param_seed(run_seed, name + ".conv2.w"));
    p.b2 = Tensor::zeros({c2});
    return p;
}

Var conv1d_encoder(Tape& t, Var series, const BoundConv1dEncoder& enc) {
    const auto& shape = series.shape();
    if (shape.size() != 3) {
        throw ShapeMismatchError("conv1d_encoder expects [N, W, C], got " + shape_str(shape));
    }
    const int width = shape[1];
    const int receptive = 2 * (enc.kernel - 1) + 1;
    if (width < receptive) {
        throw SeriesTooShortError("window of " + std::to_string(width) +
                                  " samples is below the encoder receptive field of " +
                                  std::to_string(receptive));
    }
    Var x = t.relu(t.conv1d(series, enc.w1, enc.b1));
    x = t.relu(t.conv1d(x, enc.w2, enc.b2));
    return t.mean_axis(x, 1);  // [N, F]
}

GruEncoderParams GruEncoderParams::init(int input_dim, int proj, int hidden, uint64_t run_seed,
                                        const std::string& name) {
    GruEncoderParams p;
    p.hidden = hidden;
    auto w = [&](const std::string& suffix, int in, int out) {
        return glorot_uniform({in, out}, in, out, param_seed(run_seed, name + suffix));
    };
    p.proj_w = w(".proj.w", input_dim, proj);
    p.proj_b = Tensor::zeros({proj});
    p.wz = w(".z.w", proj, hidden);
    p.uz = w(".z.u", hidden, hidden);
    p.bz = Tensor::zeros({hidden});
    p.wr = w(".r.w", proj, hidden);
    p.ur = w(".r.u", hidden, hidden);
    p.br = Tensor::zeros({hidden});
    p.wc = w(".c.w", proj, hidden);
    p.uc = w(".c.u", hidden, hidden);
    p.bc = Tensor::zeros({hidden});
    return p;
}

Var gru_encoder(Tape& t, Var series, const BoundGruEncoder& enc) {
    const auto& shape = series.shape();
    if (shape.size() != 3) {
        throw ShapeMismatchError("gru_encoder expects [T, N, K], got " + shape_str(shape));
    }
    const int steps = shape[0], nodes = shape[1], input_dim = shape[2];
    if (enc.proj_w.shape()[0] != input_dim) {
        throw ShapeMismatchError("gru input dim " + std::to_string(input_dim) +
                                 " does not match projection " + shape_str(enc.proj_w.shape()));
    }
    Var h = t.constant(Tensor::zeros({nodes, enc.hidden}));
    for (int step = 0; step < steps; ++step) {
        Var x = t.reshape(t.slice(series, 0, step, 1), {nodes, input_dim});
        Var p = t.add_rowvec(t.matmul(x, enc.proj_w), enc.proj_b);
        Var z = t.sigmoid(t.add_rowvec(t.add(t.matmul(p, enc.wz), t.matmul(h, enc.uz)), enc.bz));
        Var r = t.sigmoid(t.add_rowvec(t.add(t.matmul(p, enc.wr), t.matmul(h, enc.ur)), enc.br));
        Var c = t.tanh(
            t.add_rowvec(t.add(t.matmul(p, enc.wc), t.matmul(t.hadamard(r, h), enc.uc)), enc.bc));
        Var keep = t.add_scalar(t.scale(z, -1.0), 1.0);  // 1 - z
        h = t.add(t.hadamard(keep, h), t.hadamard(z, c));
    }
    return h;
}

AttentionParams AttentionParams::init(int features, bool scalar_scores, uint64_t run_seed,
                                      const std::string& name) {
    AttentionParams p;
    p.scalar_scores = scalar_scores;
    const int out = scalar_scores ? 1 : features;
    p.w_att = glorot_uniform({features, out}, features, out, param_seed(run_seed, name + ".w"));
    return p;
}

Var attention_aggregate_with_weights(Tape& t, const std::vector<Var>& h,
                                     const std::vector<Var>& z, Var w_att, bool scalar_scores,
                                     std::vector<Var>* weights_out) {
    if (h.empty() || z.empty()) throw EmptyEnsembleError("attention over empty ensemble");
    if (h.size() != z.size()) {
        throw ShapeMismatchError("attention: got " + std::to_string(h.size()) + " score inputs vs " +
                                 std::to_string(z.size()) + " members");
    }
    const int members = static_cast<int>(h.size());
    const auto& zshape = z[0].shape();
    const int rows = zshape[0], feats = zshape[1];

    std::vector<Var> scores;
    scores.reserve(h.size());
    for (Var hi : h) {
        Var s = t.matmul(hi, w_att);  // [N, F] or [N, 1]
        scores.push_back(t.reshape(s, {1, rows * s.shape()[1]}));
    }
    Var alpha = t.softmax(t.concat(scores, 0), 0);  // normalize across members

    Var out;
    for (int i = 0; i < members; ++i) {
        Var ai = t.reshape(t.slice(alpha, 0, i, 1), {rows, scalar_scores ? 1 : feats});
        if (scalar_scores) {
            ai = t.concat(std::vector<Var>(static_cast<size_t>(feats), ai), 1);
        }
        if (weights_out) weights_out->push_back(ai);
        Var term = t.hadamard(ai, z[static_cast<size_t>(i)]);
        out = i == 0 ? term : t.add(out, term);
    }
    return out;
}

Var attention_aggregate(Tape& t, const std::vector<Var>& h, const std::vector<Var>& z, Var w_att,
                        bool scalar_scores) {
    return attention_aggregate_with_weights(t, h, z, w_att, scalar_scores, nullptr);
}

Var mean_aggregate(Tape& t, const std::vector<Var>& z) {
    if (z.empty()) throw EmptyEnsembleError("mean aggregation over empty ensemble");
    Var acc = z[0];
    for (size_t i = 1; i < z.size(); ++i) acc = t.add(acc, z[i]);
    return t.scale(acc, 1.0 / static_cast<double>(z.size()));
}

Var max_aggregate(Tape& t, const std::vector<Var>& z) {
    if (z.empty()) throw EmptyEnsembleError("max aggregation over empty ensemble");
    return t.max_over_set(z);
}

MlpParams MlpParams::init(const std::vector<int>& dims, const std::vector<Activation>& acts,
                          uint64_t run_seed, const std::string& name) {
    if (dims.size() < 2 || acts.size() != dims.size() - 1) {
        throw Error("mlp init: need dims >= 2 layers and one activation per layer");
    }
    MlpParams p;
    p.activations = acts;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        p.weights.push_back(glorot_uniform({dims[l], dims[l + 1]}, dims[l], dims[l + 1],
                                           param_seed(run_seed,
                                                      name + ".l" + std::to_string(l) + ".w")));
        p.biases.push_back(Tensor::zeros({dims[l + 1]}));
    }
    return p;
}

Var mlp(Tape& t, Var x, const BoundMlp& m) {
    if (m.weights.size() != m.biases.size() || m.weights.size() != m.activations.size()) {
        throw Error("mlp: inconsistent layer containers");
    }
    for (size_t l = 0; l < m.weights.size(); ++l) {
        x = apply_activation(t, t.add_rowvec(t.matmul(x, m.weights[l]), m.biases[l]),
                             m.activations[l]);
    }
    return x;
}

}  // namespace topo
