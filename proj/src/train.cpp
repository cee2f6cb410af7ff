#include "topo/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "topo/io.hpp"

using nlohmann::json;

namespace topo {

std::string optimizer_name(OptimizerKind k) {
    return k == OptimizerKind::RmsProp ? "rmsprop" : "adam";
}

OptimizerKind optimizer_from_name(const std::string& name) {
    if (name == "rmsprop") return OptimizerKind::RmsProp;
    if (name == "adam") return OptimizerKind::Adam;
    throw UsageError("unknown optimizer '" + name + "' (expected rmsprop|adam)");
}

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw UsageError("unknown split '" + name + "' (expected train|val|test)");
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate)
    : kind_(kind), lr_(learning_rate) {
    if (learning_rate < 0.0) throw UsageError("learning rate must be non-negative");
}

void Optimizer::step(const std::vector<ParamSlot>& slots, const std::vector<Tensor>& grads) {
    constexpr double kEps = 1e-8;
    if (grads.size() != slots.size()) throw Error("optimizer slot/grad count mismatch");
    if (v_.empty()) {
        v_.resize(slots.size());
        m_.resize(slots.size());
        for (size_t s = 0; s < slots.size(); ++s) {
            v_[s].assign(slots[s].tensor->data.size(), 0.0);
            if (kind_ == OptimizerKind::Adam) m_[s].assign(slots[s].tensor->data.size(), 0.0);
        }
    }
    ++t_;
    if (kind_ == OptimizerKind::RmsProp) {
        constexpr double kDecay = 0.9;
        for (size_t s = 0; s < slots.size(); ++s) {
            auto& p = slots[s].tensor->data;
            const auto& g = grads[s].data;
            auto& v = v_[s];
            for (size_t i = 0; i < p.size(); ++i) {
                v[i] = kDecay * v[i] + (1.0 - kDecay) * g[i] * g[i];
                p[i] -= lr_ * g[i] / (std::sqrt(v[i]) + kEps);
            }
        }
    } else {
        constexpr double kBeta1 = 0.9, kBeta2 = 0.999;
        const double bias1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        for (size_t s = 0; s < slots.size(); ++s) {
            auto& p = slots[s].tensor->data;
            const auto& g = grads[s].data;
            auto& v = v_[s];
            auto& m = m_[s];
            for (size_t i = 0; i < p.size(); ++i) {
                m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
                v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
                const double m_hat = m[i] / bias1;
                const double v_hat = v[i] / bias2;
                p[i] -= lr_ * m_hat / (std::sqrt(v_hat) + kEps);
            }
        }
    }
}

namespace {

Tensor tser_event_view(const Tensor& series, int event) {
    const int n = series.shape[1], w = series.shape[2], c = series.shape[3];
    const size_t sz = static_cast<size_t>(n) * w * c;
    return Tensor({n, w, c}, std::vector<double>(series.data.begin() + event * sz,
                                                 series.data.begin() + (event + 1) * sz));
}

Tensor tser_label_view(const Tensor& labels, int event) {
    const int n = labels.shape[1], m = labels.shape[2];
    const size_t sz = static_cast<size_t>(n) * m;
    return Tensor({n, m}, std::vector<double>(labels.data.begin() + event * sz,
                                              labels.data.begin() + (event + 1) * sz));
}

Tensor traffic_steps_view(const Tensor& series, int start, int count) {
    const int n = series.shape[1], k = series.shape[2];
    const size_t sz = static_cast<size_t>(n) * k;
    return Tensor({count, n, k}, std::vector<double>(series.data.begin() + start * sz,
                                                     series.data.begin() + (start + count) * sz));
}

const std::vector<int>& split_indices(const DatasetBundle& data, Split split) {
    switch (split) {
        case Split::Train: return data.splits.train;
        case Split::Val: return data.splits.val;
        case Split::Test: return data.splits.test;
    }
    throw Error("unknown split");
}

// Mean data-term loss over a set of samples, forward only.
double dataset_loss(EnsembleModel& model, const DatasetBundle& data, const Tensor& norm_series,
                    const std::vector<int>& indices) {
    if (indices.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    for (int idx : indices) {
        Tape tape;
        BoundEnsemble be = bind_model(tape, model);
        if (model.config.task == Task::Tser) {
            Var pred = forward_tser_event(tape, be, model.config,
                                          tape.constant(tser_event_view(norm_series, idx)));
            Var loss = tser_loss_var(tape, pred,
                                     tape.constant(tser_label_view(data.labels, idx)));
            total += loss.value().data[0];
        } else {
            Var pred = forward_traffic_window(
                tape, be, model.config, tape.constant(traffic_steps_view(norm_series, idx, data.t_in)));
            Var loss = traffic_loss_var(
                tape, pred,
                tape.constant(traffic_steps_view(norm_series, idx + data.t_in, data.t_out)));
            total += loss.value().data[0];
        }
    }
    return total / static_cast<double>(indices.size());
}

}  // namespace

TrainHistory train(EnsembleModel& model, const DatasetBundle& data, const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw UsageError("epochs must be at least 1");
    if (cfg.batch_size < 1) throw UsageError("batch size must be at least 1");
    if (data.splits.train.empty()) throw TooFewEventsError("training split is empty");

    const Tensor norm_series = normalize_series(data.series, data.norm, data.task);
    auto slots = model.collect_params();
    Optimizer opt(cfg.optimizer, cfg.learning_rate);

    std::vector<int> order = data.splits.train;
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x6f726465722d7267ull);

    TrainHistory history;
    history.reserve(static_cast<size_t>(cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        long epoch_samples = 0;

        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
            Tape tape;
            BoundEnsemble be = bind_model(tape, model);

            Var batch_data_term;
            for (size_t s = begin; s < end; ++s) {
                const int idx = order[s];
                Var sample_loss;
                if (model.config.task == Task::Tser) {
                    Var pred = forward_tser_event(
                        tape, be, model.config, tape.constant(tser_event_view(norm_series, idx)));
                    sample_loss = tser_loss_var(tape, pred,
                                                tape.constant(tser_label_view(data.labels, idx)));
                } else {
                    Var pred = forward_traffic_window(
                        tape, be, model.config,
                        tape.constant(traffic_steps_view(norm_series, idx, data.t_in)));
                    sample_loss = traffic_loss_var(
                        tape, pred,
                        tape.constant(traffic_steps_view(norm_series, idx + data.t_in, data.t_out)));
                }
                batch_data_term =
                    s == begin ? sample_loss : tape.add(batch_data_term, sample_loss);
            }
            batch_data_term = tape.scale(batch_data_term, 1.0 / static_cast<double>(end - begin));

            Var loss = batch_data_term;
            if (cfg.l2_lambda > 0.0) {
                Var reg;
                for (size_t k = 0; k < be.leaves.size(); ++k) {
                    Var sq = tape.sum(tape.hadamard(be.leaves[k], be.leaves[k]));
                    reg = k == 0 ? sq : tape.add(reg, sq);
                }
                loss = tape.add(loss, tape.scale(reg, cfg.l2_lambda));
            }

            const double loss_value = loss.value().data[0];
            if (!std::isfinite(loss_value)) {
                throw DivergenceError("training loss became non-finite at epoch " +
                                          std::to_string(epoch),
                                      epoch);
            }
            tape.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(be.leaves.size());
            for (Var leaf : be.leaves) grads.push_back(leaf.grad());
            opt.step(slots, grads);

            epoch_loss += loss_value * static_cast<double>(end - begin);
            epoch_samples += static_cast<long>(end - begin);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(epoch_samples);
        stats.val_loss = dataset_loss(model, data, norm_series, data.splits.val);
        history.push_back(stats);
        if (cfg.stop_below_train_loss >= 0.0 && stats.train_loss < cfg.stop_below_train_loss) {
            break;
        }
    }
    return history;
}

std::string history_to_csv(const TrainHistory& history) {
    std::string out = "epoch,train_loss,val_loss\n";
    for (const auto& e : history) {
        out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," +
               format_double(e.val_loss) + "\n";
    }
    return out;
}

namespace {

struct ErrorAccum {
    double abs_sum = 0.0, sq_sum = 0.0, ape_sum = 0.0;
    long count = 0, ape_count = 0, ape_skipped = 0;

    void add(double pred, double truth) {
        const double err = pred - truth;
        abs_sum += std::abs(err);
        sq_sum += err * err;
        ++count;
        if (truth != 0.0) {
            ape_sum += std::abs(err / truth);
            ++ape_count;
        } else {
            ++ape_skipped;
        }
    }

    MetricBlock block() const {
        MetricBlock b;
        if (count > 0) {
            b.mae = abs_sum / static_cast<double>(count);
            b.mse = sq_sum / static_cast<double>(count);
            b.rmse = std::sqrt(b.mse);
        }
        b.mape = ape_count > 0 ? 100.0 * ape_sum / static_cast<double>(ape_count) : 0.0;
        b.mape_skipped = ape_skipped;
        return b;
    }
};

MetricBlock average_blocks(const std::vector<MetricBlock>& blocks) {
    MetricBlock out;
    if (blocks.empty()) return out;
    for (const auto& b : blocks) {
        out.mae += b.mae;
        out.mse += b.mse;
        out.rmse += b.rmse;
        out.mape += b.mape;
        out.mape_skipped += b.mape_skipped;
    }
    const double k = static_cast<double>(blocks.size());
    out.mae /= k;
    out.mse /= k;
    out.rmse /= k;
    out.mape /= k;
    return out;
}

}  // namespace

MetricBlock compute_metrics(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size()) {
        throw ShapeMismatchError("metric inputs differ in length");
    }
    ErrorAccum acc;
    for (size_t i = 0; i < pred.size(); ++i) acc.add(pred[i], truth[i]);
    return acc.block();
}

MetricsReport evaluate(EnsembleModel& model, const DatasetBundle& data, Split split,
                       const std::vector<int>& horizons) {
    const auto& indices = split_indices(data, split);
    if (indices.empty()) throw TooFewEventsError("split '" + split_name(split) + "' is empty");
    const Tensor norm_series = normalize_series(data.series, data.norm, data.task);

    MetricsReport report;
    report.task = data.task;
    report.split = split_name(split);

    if (data.task == Task::Tser) {
        const int targets = data.labels.shape[2];
        std::vector<ErrorAccum> per_target(static_cast<size_t>(targets));
        for (int idx : indices) {
            Tape tape;
            BoundEnsemble be = bind_model(tape, model);
            Var pred = forward_tser_event(tape, be, model.config,
                                          tape.constant(tser_event_view(norm_series, idx)));
            const Tensor& pv = pred.value();
            const Tensor truth = tser_label_view(data.labels, idx);
            for (int s = 0; s < pv.shape[0]; ++s) {
                for (int m = 0; m < targets; ++m) {
                    per_target[static_cast<size_t>(m)].add(pv.at2(s, m), truth.at2(s, m));
                }
            }
        }
        static const char* kImNames[5] = {"pga", "pgv", "sa03", "sa1", "sa3"};
        std::vector<MetricBlock> blocks;
        for (int m = 0; m < targets; ++m) {
            blocks.push_back(per_target[static_cast<size_t>(m)].block());
            const std::string name = m < 5 ? kImNames[m] : "im" + std::to_string(m);
            report.breakdown.emplace_back(name, blocks.back());
        }
        report.overall = average_blocks(blocks);
    } else {
        std::vector<int> steps;  // horizon steps that fit in t_out
        for (int h : horizons) {
            if (h >= 1 && h <= data.t_out) steps.push_back(h);
        }
        std::vector<ErrorAccum> per_horizon(steps.size());
        ErrorAccum overall;
        for (int idx : indices) {
            Tape tape;
            BoundEnsemble be = bind_model(tape, model);
            Var pred = forward_traffic_window(
                tape, be, model.config, tape.constant(traffic_steps_view(norm_series, idx, data.t_in)));
            const Tensor& pv = pred.value();
            const Tensor truth_raw = traffic_steps_view(data.series, idx + data.t_in, data.t_out);
            for (int t = 0; t < data.t_out; ++t) {
                for (int s = 0; s < pv.shape[1]; ++s) {
                    const double p = denormalize_value(pv.at3(t, s, 0), data.norm, 0);
                    const double y = truth_raw.at3(t, s, 0);
                    overall.add(p, y);
                    for (size_t h = 0; h < steps.size(); ++h) {
                        if (steps[h] == t + 1) per_horizon[h].add(p, y);
                    }
                }
            }
        }
        report.overall = overall.block();
        for (size_t h = 0; h < steps.size(); ++h) {
            report.breakdown.emplace_back("horizon_" + std::to_string(steps[h]),
                                          per_horizon[h].block());
        }
    }
    return report;
}

std::string metrics_to_json(const MetricsReport& report) {
    auto block_json = [](const MetricBlock& b) {
        return json{{"mae", b.mae},
                    {"mse", b.mse},
                    {"rmse", b.rmse},
                    {"mape_percent", b.mape},
                    {"mape_skipped", b.mape_skipped}};
    };
    json out;
    out["task"] = task_name(report.task);
    out["split"] = report.split;
    out["overall"] = block_json(report.overall);
    json breakdown = json::object();
    for (const auto& [name, block] : report.breakdown) breakdown[name] = block_json(block);
    out["breakdown"] = breakdown;
    return out.dump(2) + "\n";
}

WindowTable window_reduction(const GraphFamily& family, const ModelConfig& model_cfg,
                             const DatasetBundle& data, const TrainConfig& train_cfg,
                             const std::vector<double>& windows_s, int seeds) {
    if (data.task != Task::Tser) throw UsageError("window reduction applies to the tser task");
    if (windows_s.empty()) throw UsageError("no window lengths given");
    if (seeds < 1) throw UsageError("need at least one seed");

    const int receptive = 2 * (model_cfg.conv_kernel - 1) + 1;
    const int full_window = data.series.shape[2];
    for (double w : windows_s) {
        if (w < 4.0) {
            throw WindowTooShortError("window of " + format_double(w) +
                                      " s is below the 4-second minimum");
        }
        const int samples = static_cast<int>(std::lround(w * data.sample_rate_hz));
        if (samples < receptive) {
            throw WindowTooShortError("window of " + format_double(w) + " s (" +
                                      std::to_string(samples) +
                                      " samples) is below the encoder receptive field of " +
                                      std::to_string(receptive));
        }
        if (samples > full_window) {
            throw UsageError("window of " + format_double(w) + " s exceeds the recorded " +
                             std::to_string(full_window) + " samples");
        }
    }

    WindowTable table;
    for (double w : windows_s) {
        const int samples = static_cast<int>(std::lround(w * data.sample_rate_hz));
        DatasetBundle truncated = data;
        const int events = data.series.shape[0], n = data.series.shape[1];
        const int channels = data.series.shape[3];
        truncated.series = Tensor::zeros({events, n, samples, channels});
        for (int e = 0; e < events; ++e) {
            for (int s = 0; s < n; ++s) {
                for (int t = 0; t < samples; ++t) {
                    for (int c = 0; c < channels; ++c) {
                        truncated.series.data[((static_cast<size_t>(e) * n + s) * samples + t) *
                                                  channels +
                                              c] =
                            data.series.data[((static_cast<size_t>(e) * n + s) * full_window + t) *
                                                 channels +
                                             c];
                    }
                }
            }
        }
        truncated.norm = compute_norm_stats(truncated);

        std::vector<MetricBlock> blocks;
        for (int s = 0; s < seeds; ++s) {
            TrainConfig cfg = train_cfg;
            cfg.seed = train_cfg.seed + static_cast<uint64_t>(s);
            EnsembleModel model = EnsembleModel::build(family, model_cfg, cfg.seed);
            train(model, truncated, cfg);
            const MetricsReport report = evaluate(model, truncated, Split::Test);
            table.rows.push_back(
                {w, s, report.overall.mae, report.overall.mse, report.overall.rmse});
            blocks.push_back(report.overall);
        }
        const MetricBlock mean = average_blocks(blocks);
        table.rows.push_back({w, -1, mean.mae, mean.mse, mean.rmse});
    }
    return table;
}

std::string window_table_to_csv(const WindowTable& table) {
    std::string out = "window_s,seed,mae,mse,rmse\n";
    for (const auto& r : table.rows) {
        out += format_double(r.window_s) + "," +
               (r.seed < 0 ? std::string("mean") : std::to_string(r.seed)) + "," +
               format_double(r.mae) + "," + format_double(r.mse) + "," + format_double(r.rmse) +
               "\n";
    }
    return out;
}

AttentionReport attention_report(EnsembleModel& model, const DatasetBundle& data, Split split) {
    if (model.config.aggregator != Aggregator::Att) {
        throw WrongAggregatorError("attention report needs the att aggregator, model uses " +
                                   aggregator_name(model.config.aggregator));
    }
    const auto& indices = split_indices(data, split);
    if (indices.empty()) throw TooFewEventsError("split '" + split_name(split) + "' is empty");
    const Tensor norm_series = normalize_series(data.series, data.norm, data.task);

    const int members = static_cast<int>(model.subnets.size());
    const int n = model.subnets[0].graph.n;
    std::vector<double> totals(static_cast<size_t>(members), 0.0);
    Tensor per_node = Tensor::zeros({members, n});
    long positions = 0;

    for (int idx : indices) {
        Tape tape;
        BoundEnsemble be = bind_model(tape, model);
        std::vector<Var> weights;
        if (data.task == Task::Tser) {
            forward_tser_event(tape, be, model.config,
                               tape.constant(tser_event_view(norm_series, idx)), &weights);
        } else {
            forward_traffic_window(tape, be, model.config,
                                   tape.constant(traffic_steps_view(norm_series, idx, data.t_in)),
                                   &weights);
        }
        for (int m = 0; m < members; ++m) {
            const Tensor& wv = weights[static_cast<size_t>(m)].value();
            const int feats = wv.shape[1];
            for (int s = 0; s < n; ++s) {
                double row = 0.0;
                for (int f = 0; f < feats; ++f) row += wv.at2(s, f);
                totals[static_cast<size_t>(m)] += row;
                per_node.at2(m, s) += row / static_cast<double>(feats);
            }
        }
        positions += static_cast<long>(n) * weights[0].value().shape[1];
    }

    AttentionReport report;
    report.samples = static_cast<int>(indices.size());
    for (double& x : per_node.data) x /= static_cast<double>(indices.size());
    for (int m = 0; m < members; ++m) {
        AttentionRow row;
        row.graph_index = m;
        row.source_dim = source_dim_name(model.subnets[static_cast<size_t>(m)].graph.source_dim);
        row.epsilon = model.subnets[static_cast<size_t>(m)].graph.epsilon;
        row.mean_weight = totals[static_cast<size_t>(m)] / static_cast<double>(positions);
        report.rows.push_back(row);
    }
    report.per_node = std::move(per_node);
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [](const AttentionRow& a, const AttentionRow& b) {
                         return a.mean_weight > b.mean_weight;
                     });
    return report;
}

std::string attention_to_csv(const AttentionReport& report) {
    std::string out = "rank,graph_index,source_dim,epsilon,mean_weight\n";
    for (size_t r = 0; r < report.rows.size(); ++r) {
        const auto& row = report.rows[r];
        out += std::to_string(r) + "," + std::to_string(row.graph_index) + "," + row.source_dim +
               "," + (row.epsilon ? format_double(*row.epsilon) : std::string("")) + "," +
               format_double(row.mean_weight) + "\n";
    }
    return out;
}

std::string attention_to_json(const AttentionReport& report) {
    json rows = json::array();
    for (const auto& row : report.rows) {
        json r;
        r["graph_index"] = row.graph_index;
        r["source_dim"] = row.source_dim;
        if (row.epsilon) r["epsilon"] = *row.epsilon;
        else r["epsilon"] = nullptr;
        r["mean_weight"] = row.mean_weight;
        rows.push_back(r);
    }
    json out;
    out["samples"] = report.samples;
    out["graphs"] = rows;
    return out.dump(2) + "\n";
}

std::string attention_per_node_csv(const AttentionReport& report) {
    const int members = report.per_node.shape[0], n = report.per_node.shape[1];
    std::string out = "graph_index";
    for (int s = 0; s < n; ++s) out += ",node" + std::to_string(s);
    out += "\n";
    for (int m = 0; m < members; ++m) {
        out += std::to_string(m);
        for (int s = 0; s < n; ++s) out += "," + format_double(report.per_node.at2(m, s));
        out += "\n";
    }
    return out;
}

MetricsReport cross_validate(const GraphFamily& family, const ModelConfig& model_cfg,
                             const DatasetBundle& data, const TrainConfig& train_cfg, int k) {
    if (data.task != Task::Tser) throw UsageError("cross validation applies to the tser task");
    if (k < 2) throw UsageError("cross validation needs k >= 2 folds");

    std::vector<int> pool = data.splits.train;
    pool.insert(pool.end(), data.splits.val.begin(), data.splits.val.end());
    std::sort(pool.begin(), pool.end());
    if (static_cast<int>(pool.size()) < k) {
        throw TooFewEventsError("pool of " + std::to_string(pool.size()) +
                                " events cannot fill " + std::to_string(k) + " folds");
    }

    std::mt19937_64 rng(train_cfg.seed ^ 0x63762d666f6c6473ull);
    std::shuffle(pool.begin(), pool.end(), rng);

    // As-even-as-possible fold sizes.
    std::vector<std::vector<int>> folds(static_cast<size_t>(k));
    const size_t base = pool.size() / static_cast<size_t>(k);
    const size_t extra = pool.size() % static_cast<size_t>(k);
    size_t cursor = 0;
    for (size_t f = 0; f < static_cast<size_t>(k); ++f) {
        const size_t len = base + (f < extra ? 1 : 0);
        folds[f].assign(pool.begin() + cursor, pool.begin() + cursor + len);
        cursor += len;
    }

    MetricsReport aggregate;
    aggregate.task = Task::Tser;
    aggregate.split = "test";
    std::vector<MetricBlock> fold_blocks;
    for (int f = 0; f < k; ++f) {
        DatasetBundle view = data;
        view.splits.val = folds[static_cast<size_t>(f)];
        view.splits.train.clear();
        for (int g = 0; g < k; ++g) {
            if (g == f) continue;
            view.splits.train.insert(view.splits.train.end(), folds[static_cast<size_t>(g)].begin(),
                                     folds[static_cast<size_t>(g)].end());
        }
        std::sort(view.splits.train.begin(), view.splits.train.end());
        std::sort(view.splits.val.begin(), view.splits.val.end());
        view.norm = compute_norm_stats(view);

        TrainConfig cfg = train_cfg;
        cfg.seed = train_cfg.seed + static_cast<uint64_t>(f);
        EnsembleModel model = EnsembleModel::build(family, model_cfg, cfg.seed);
        train(model, view, cfg);
        const MetricsReport report = evaluate(model, view, Split::Test);
        fold_blocks.push_back(report.overall);
        aggregate.breakdown.emplace_back("fold" + std::to_string(f), report.overall);
    }
    aggregate.overall = average_blocks(fold_blocks);
    return aggregate;
}

}  // namespace topo
