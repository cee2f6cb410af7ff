#include "topo/model.hpp"

#include <cmath>
#include <cstring>

#include <json.hpp>

#include "topo/io.hpp"

using nlohmann::json;

namespace topo {

std::string aggregator_name(Aggregator a) {
    switch (a) {
        case Aggregator::Att: return "att";
        case Aggregator::Mean: return "mean";
        case Aggregator::Max: return "max";
        case Aggregator::Single: return "single";
    }
    return "?";
}

Aggregator aggregator_from_name(const std::string& name) {
    if (name == "att") return Aggregator::Att;
    if (name == "mean") return Aggregator::Mean;
    if (name == "max") return Aggregator::Max;
    if (name == "single") return Aggregator::Single;
    throw UsageError("unknown aggregator '" + name + "' (expected att|mean|max)");
}

namespace {

// Single traversal defining parameter order; collect_params and bind_model
// both derive from it.
template <typename F>
void walk_params(EnsembleModel& m, F&& f) {
    for (size_t i = 0; i < m.subnets.size(); ++i) {
        const std::string p = "subnet" + std::to_string(i);
        if (m.config.task == Task::Tser) {
            m.subnets[i].conv.each(p + ".enc", f);
        } else {
            m.subnets[i].gru.each(p + ".enc", f);
        }
        m.subnets[i].gcn1.each(p + ".gcn1", f);
        m.subnets[i].gcn2.each(p + ".gcn2", f);
    }
    if (m.config.aggregator == Aggregator::Att) m.attention.each("att", f);
    for (size_t h = 0; h < m.heads.size(); ++h) {
        m.heads[h].each("head" + std::to_string(h), f);
    }
}

}  // namespace

EnsembleModel EnsembleModel::build(const GraphFamily& family, const ModelConfig& cfg,
                                   uint64_t seed) {
    if (family.graphs.empty()) {
        throw EmptyEnsembleError("graph family '" + family_name(family.family) +
                                 "' has no graphs; cannot build an ensemble");
    }
    if (cfg.aggregator == Aggregator::Single && family.graphs.size() != 1) {
        throw UsageError("single aggregator requires exactly one graph, got " +
                         std::to_string(family.graphs.size()));
    }
    if (cfg.task == Task::Traffic && cfg.input_dim != 1) {
        throw UsageError("traffic models support K=1 speed channels");
    }
    const int n = family.graphs[0].n;
    for (const auto& g : family.graphs) {
        if (g.n != n) throw DataError("graphs in a family must share the sensor count");
    }

    EnsembleModel m;
    m.config = cfg;
    m.init_seed = seed;
    m.family = family.family;
    m.subnets.reserve(family.graphs.size());
    for (size_t i = 0; i < family.graphs.size(); ++i) {
        const std::string p = "subnet" + std::to_string(i);
        Subnet s;
        s.graph = family.graphs[i];
        s.prop = Tensor({n, n}, propagation_operator(s.graph));
        if (cfg.task == Task::Tser) {
            s.conv = Conv1dEncoderParams::init(cfg.channels, cfg.conv_kernel, cfg.conv_c1,
                                               cfg.conv_c2, seed, p + ".enc");
            s.gcn1 = GcnLayerParams::init(cfg.conv_c2, cfg.gcn_hidden, Activation::Relu, seed,
                                          p + ".gcn1");
            s.gcn2 = GcnLayerParams::init(cfg.gcn_hidden, cfg.gcn_out, Activation::Tanh, seed,
                                          p + ".gcn2");
        } else {
            s.gru = GruEncoderParams::init(cfg.input_dim, cfg.gru_proj, cfg.gru_hidden, seed,
                                           p + ".enc");
            s.gcn1 = GcnLayerParams::init(cfg.gru_hidden, cfg.gcn_hidden, Activation::Relu, seed,
                                          p + ".gcn1");
            s.gcn2 = GcnLayerParams::init(cfg.gcn_hidden, cfg.gcn_out, Activation::Identity, seed,
                                          p + ".gcn2");
        }
        m.subnets.push_back(std::move(s));
    }
    if (cfg.aggregator == Aggregator::Att) {
        m.attention = AttentionParams::init(cfg.gcn_out, cfg.scalar_scores, seed, "att");
    }
    if (cfg.task == Task::Tser) {
        for (int h = 0; h < cfg.targets; ++h) {
            m.heads.push_back(MlpParams::init({cfg.gcn_out, cfg.head_hidden, 1},
                                              {Activation::Relu, Activation::Identity}, seed,
                                              "head" + std::to_string(h)));
        }
    } else {
        m.heads.push_back(MlpParams::init({cfg.gcn_out, cfg.head_hidden, cfg.t_out},
                                          {Activation::Relu, Activation::Identity}, seed,
                                          "head0"));
    }
    return m;
}

std::vector<ParamSlot> EnsembleModel::collect_params() {
    std::vector<ParamSlot> slots;
    walk_params(*this, [&](const std::string& name, Tensor& t) {
        slots.push_back(ParamSlot{name, &t});
    });
    return slots;
}

BoundEnsemble bind_model(Tape& t, EnsembleModel& model) {
    BoundEnsemble be;
    // Leaves are created in walk order; the per-struct views below must index
    // the same order (covered by the binding unit test).
    walk_params(model, [&](const std::string&, Tensor& tensor) {
        be.leaves.push_back(t.leaf(tensor, true));
    });

    size_t cursor = 0;
    auto next = [&]() { return be.leaves[cursor++]; };
    for (auto& s : model.subnets) {
        BoundSubnet bs;
        if (model.config.task == Task::Tser) {
            bs.conv.kernel = s.conv.kernel;
            bs.conv.w1 = next();
            bs.conv.b1 = next();
            bs.conv.w2 = next();
            bs.conv.b2 = next();
        } else {
            bs.gru.hidden = s.gru.hidden;
            bs.gru.proj_w = next();
            bs.gru.proj_b = next();
            bs.gru.wz = next();
            bs.gru.uz = next();
            bs.gru.bz = next();
            bs.gru.wr = next();
            bs.gru.ur = next();
            bs.gru.br = next();
            bs.gru.wc = next();
            bs.gru.uc = next();
            bs.gru.bc = next();
        }
        bs.gcn1_w = next();
        bs.gcn2_w = next();
        bs.prop = t.constant(s.prop);
        be.subnets.push_back(bs);
    }
    if (model.config.aggregator == Aggregator::Att) be.w_att = next();
    for (auto& h : model.heads) {
        BoundMlp bm;
        bm.activations = h.activations;
        for (size_t l = 0; l < h.weights.size(); ++l) {
            bm.weights.push_back(next());
            bm.biases.push_back(next());
        }
        be.heads.push_back(std::move(bm));
    }
    if (cursor != be.leaves.size()) throw Error("parameter binding drifted from walk order");
    return be;
}

namespace {

Var aggregate_members(Tape& t, const ModelConfig& cfg, const BoundEnsemble& be,
                      const std::vector<Var>& members, std::vector<Var>* attention_out) {
    switch (cfg.aggregator) {
        case Aggregator::Att:
            return attention_aggregate_with_weights(t, members, members, be.w_att,
                                                    cfg.scalar_scores, attention_out);
        case Aggregator::Mean:
            return mean_aggregate(t, members);
        case Aggregator::Max:
            return max_aggregate(t, members);
        case Aggregator::Single:
            if (members.size() != 1) {
                throw WrongAggregatorError("single aggregator with " +
                                           std::to_string(members.size()) + " members");
            }
            return members[0];
    }
    throw Error("unknown aggregator");
}

}  // namespace

Var forward_tser_event(Tape& t, const BoundEnsemble& be, const ModelConfig& cfg, Var series,
                       std::vector<Var>* attention_out) {
    if (cfg.task != Task::Tser) throw WrongAggregatorError("model was not built for tser");
    std::vector<Var> members;
    members.reserve(be.subnets.size());
    for (const auto& bs : be.subnets) {
        Var enc = conv1d_encoder(t, series, bs.conv);                     // [N, F]
        Var h1 = gcn_layer(t, enc, bs.prop, bs.gcn1_w, Activation::Relu);
        Var h2 = gcn_layer(t, h1, bs.prop, bs.gcn2_w, Activation::Tanh);  // [N, gcn_out]
        members.push_back(h2);
    }
    Var z = aggregate_members(t, cfg, be, members, attention_out);
    std::vector<Var> outs;
    outs.reserve(be.heads.size());
    for (const auto& head : be.heads) outs.push_back(mlp(t, z, head));  // [N, 1] each
    return t.concat(outs, 1);                                           // [N, targets]
}

Var forward_traffic_window(Tape& t, const BoundEnsemble& be, const ModelConfig& cfg, Var window,
                           std::vector<Var>* attention_out) {
    if (cfg.task != Task::Traffic) throw WrongAggregatorError("model was not built for traffic");
    std::vector<Var> members;
    members.reserve(be.subnets.size());
    for (const auto& bs : be.subnets) {
        Var enc = gru_encoder(t, window, bs.gru);  // [N, H]
        Var h1 = gcn_layer(t, enc, bs.prop, bs.gcn1_w, Activation::Relu);
        Var h2 = gcn_layer(t, h1, bs.prop, bs.gcn2_w, Activation::Identity);
        members.push_back(h2);
    }
    Var z = aggregate_members(t, cfg, be, members, attention_out);
    Var y = mlp(t, z, be.heads[0]);  // [N, T_out]
    const int n = y.shape()[0];
    return t.reshape(t.transpose(y), {cfg.t_out, n, 1});
}

Tensor forward_tser(EnsembleModel& model, const Tensor& batch) {
    if (batch.ndim() != 4) {
        throw ShapeMismatchError("tser batch must be [B, N, W, C], got " + shape_str(batch.shape));
    }
    const int b = batch.shape[0], n = batch.shape[1], w = batch.shape[2], c = batch.shape[3];
    Tensor out = Tensor::zeros({b, n, model.config.targets});
    const size_t event_sz = static_cast<size_t>(n) * w * c;
    for (int e = 0; e < b; ++e) {
        Tape tape;
        BoundEnsemble be = bind_model(tape, model);
        Tensor ev({n, w, c},
                  std::vector<double>(batch.data.begin() + e * event_sz,
                                      batch.data.begin() + (e + 1) * event_sz));
        Var pred = forward_tser_event(tape, be, model.config, tape.constant(std::move(ev)));
        const Tensor& pv = pred.value();
        std::copy(pv.data.begin(), pv.data.end(),
                  out.data.begin() + static_cast<size_t>(e) * pv.data.size());
    }
    return out;
}

Tensor forward_traffic(EnsembleModel& model, const Tensor& batch) {
    if (batch.ndim() != 4) {
        throw ShapeMismatchError("traffic batch must be [B, T_in, N, K], got " +
                                 shape_str(batch.shape));
    }
    const int b = batch.shape[0], t_in = batch.shape[1], n = batch.shape[2], k = batch.shape[3];
    Tensor out = Tensor::zeros({b, model.config.t_out, n, 1});
    const size_t win_sz = static_cast<size_t>(t_in) * n * k;
    for (int e = 0; e < b; ++e) {
        Tape tape;
        BoundEnsemble be = bind_model(tape, model);
        Tensor win({t_in, n, k},
                   std::vector<double>(batch.data.begin() + e * win_sz,
                                       batch.data.begin() + (e + 1) * win_sz));
        Var pred = forward_traffic_window(tape, be, model.config, tape.constant(std::move(win)));
        const Tensor& pv = pred.value();
        std::copy(pv.data.begin(), pv.data.end(),
                  out.data.begin() + static_cast<size_t>(e) * pv.data.size());
    }
    return out;
}

double loss_tser(const Tensor& pred, const Tensor& label,
                 const std::vector<const Tensor*>& weights, double lambda) {
    if (pred.shape != label.shape) {
        throw ShapeMismatchError("tser loss: " + shape_str(pred.shape) + " vs " +
                                 shape_str(label.shape));
    }
    const double n = static_cast<double>(pred.shape[0]);
    double sq = 0.0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const double r = pred.data[i] - label.data[i];
        sq += r * r;
    }
    double reg = 0.0;
    for (const Tensor* w : weights) {
        for (double x : w->data) reg += x * x;
    }
    return sq / n + lambda * reg;
}

double loss_traffic(const Tensor& pred, const Tensor& label) {
    if (pred.shape != label.shape) {
        throw ShapeMismatchError("traffic loss: " + shape_str(pred.shape) + " vs " +
                                 shape_str(label.shape));
    }
    const double n = static_cast<double>(pred.shape[1]);
    double abs_sum = 0.0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        abs_sum += std::abs(pred.data[i] - label.data[i]);
    }
    return abs_sum / n;
}

Var tser_loss_var(Tape& t, Var pred, Var label) {
    const double n = static_cast<double>(pred.shape()[0]);
    Var diff = t.sub(pred, label);
    return t.scale(t.sum(t.hadamard(diff, diff)), 1.0 / n);
}

Var traffic_loss_var(Tape& t, Var pred, Var label) {
    const double n = static_cast<double>(pred.shape()[1]);
    Var diff = t.sub(pred, label);
    Var abs = t.add(t.relu(diff), t.relu(t.scale(diff, -1.0)));
    return t.scale(t.sum(abs), 1.0 / n);
}

namespace {

json graph_to_json(const SensorGraph& g) {
    json e = json::array();
    for (const auto& edge : g.edges) e.push_back({edge.i, edge.j, edge.weight});
    json out;
    out["n"] = g.n;
    if (g.epsilon) out["epsilon"] = *g.epsilon;
    else out["epsilon"] = nullptr;
    out["source_dim"] = source_dim_name(g.source_dim);
    out["edges"] = e;
    return out;
}

SensorGraph graph_from_json(const json& j) {
    SensorGraph g;
    g.n = j.at("n").get<int>();
    if (!j.at("epsilon").is_null()) g.epsilon = j.at("epsilon").get<double>();
    const std::string sd = j.at("source_dim").get<std::string>();
    g.source_dim = sd == "0" ? SourceDim::H0 : sd == "1" ? SourceDim::H1 : SourceDim::Baseline;
    for (const auto& e : j.at("edges")) {
        g.edges.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<double>()});
    }
    return g;
}

}  // namespace

void save_model(const std::string& path, EnsembleModel& model) {
    const auto slots = model.collect_params();
    json header;
    header["format_version"] = 1;
    header["task"] = task_name(model.config.task);
    header["aggregator"] = aggregator_name(model.config.aggregator);
    header["family"] = family_name(model.family);
    header["init_seed"] = model.init_seed;
    json cfg;
    cfg["scalar_scores"] = model.config.scalar_scores;
    cfg["channels"] = model.config.channels;
    cfg["conv_kernel"] = model.config.conv_kernel;
    cfg["conv_c1"] = model.config.conv_c1;
    cfg["conv_c2"] = model.config.conv_c2;
    cfg["input_dim"] = model.config.input_dim;
    cfg["gru_proj"] = model.config.gru_proj;
    cfg["gru_hidden"] = model.config.gru_hidden;
    cfg["gcn_hidden"] = model.config.gcn_hidden;
    cfg["gcn_out"] = model.config.gcn_out;
    cfg["head_hidden"] = model.config.head_hidden;
    cfg["targets"] = model.config.targets;
    cfg["t_out"] = model.config.t_out;
    header["config"] = cfg;
    json graphs = json::array();
    for (const auto& s : model.subnets) graphs.push_back(graph_to_json(s.graph));
    header["graphs"] = graphs;

    json params = json::array();
    size_t offset = 0;
    for (const auto& slot : slots) {
        params.push_back(
            {{"name", slot.name}, {"shape", slot.tensor->shape}, {"offset", offset}});
        offset += slot.tensor->data.size();
    }
    header["params"] = params;

    const std::string head_str = header.dump();
    std::string blob;
    const uint64_t head_len = head_str.size();
    blob.resize(8);
    std::memcpy(blob.data(), &head_len, 8);
    blob += head_str;
    for (const auto& slot : slots) {
        const size_t bytes = slot.tensor->data.size() * sizeof(double);
        const size_t off = blob.size();
        blob.resize(off + bytes);
        std::memcpy(blob.data() + off, slot.tensor->data.data(), bytes);
    }
    write_file_atomic(path, blob);
}

EnsembleModel load_model(const std::string& path) {
    const std::string raw = read_file(path);
    if (raw.size() < 8) throw DataError("checkpoint " + path + " is truncated");
    uint64_t head_len = 0;
    std::memcpy(&head_len, raw.data(), 8);
    if (raw.size() < 8 + head_len) throw DataError("checkpoint " + path + " header is truncated");
    json header;
    try {
        header = json::parse(raw.substr(8, head_len));
    } catch (const json::exception& e) {
        throw DataError("checkpoint " + path + " has a bad header: " + e.what());
    }
    if (header.value("format_version", 0) != 1) {
        throw DataError("checkpoint " + path + ": unsupported format version");
    }

    ModelConfig cfg;
    cfg.task = task_from_name(header.at("task").get<std::string>());
    cfg.aggregator = aggregator_from_name(header.at("aggregator").get<std::string>());
    const json& c = header.at("config");
    cfg.scalar_scores = c.at("scalar_scores").get<bool>();
    cfg.channels = c.at("channels").get<int>();
    cfg.conv_kernel = c.at("conv_kernel").get<int>();
    cfg.conv_c1 = c.at("conv_c1").get<int>();
    cfg.conv_c2 = c.at("conv_c2").get<int>();
    cfg.input_dim = c.at("input_dim").get<int>();
    cfg.gru_proj = c.at("gru_proj").get<int>();
    cfg.gru_hidden = c.at("gru_hidden").get<int>();
    cfg.gcn_hidden = c.at("gcn_hidden").get<int>();
    cfg.gcn_out = c.at("gcn_out").get<int>();
    cfg.head_hidden = c.at("head_hidden").get<int>();
    cfg.targets = c.at("targets").get<int>();
    cfg.t_out = c.at("t_out").get<int>();

    GraphFamily family;
    family.family = family_from_name(header.at("family").get<std::string>());
    for (const auto& gj : header.at("graphs")) family.graphs.push_back(graph_from_json(gj));

    EnsembleModel model =
        EnsembleModel::build(family, cfg, header.at("init_seed").get<uint64_t>());
    const auto slots = model.collect_params();
    const json& params = header.at("params");
    if (params.size() != slots.size()) {
        throw DataError("checkpoint " + path + ": expected " + std::to_string(slots.size()) +
                        " parameters, header lists " + std::to_string(params.size()));
    }
    const char* payload = raw.data() + 8 + head_len;
    const size_t payload_doubles = (raw.size() - 8 - head_len) / sizeof(double);
    for (size_t i = 0; i < slots.size(); ++i) {
        const json& pj = params[i];
        if (pj.at("name").get<std::string>() != slots[i].name ||
            pj.at("shape").get<std::vector<int>>() != slots[i].tensor->shape) {
            throw DataError("checkpoint " + path + ": parameter " + std::to_string(i) +
                            " does not match the rebuilt model (" + slots[i].name + ")");
        }
        const size_t offset = pj.at("offset").get<size_t>();
        const size_t count = slots[i].tensor->data.size();
        if (offset + count > payload_doubles) {
            throw DataError("checkpoint " + path + ": parameter blob is truncated");
        }
        std::memcpy(slots[i].tensor->data.data(), payload + offset * sizeof(double),
                    count * sizeof(double));
    }
    return model;
}

}  // namespace topo
