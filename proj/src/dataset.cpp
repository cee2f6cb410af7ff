#include "topo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include <json.hpp>

#include "topo/graphgen.hpp"
#include "topo/persistence.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace topo {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kWaveSpeedMps = 12000.0;   // spreads arrival delays over the window
constexpr double kAttenuationScaleM = 15000.0;
constexpr double kWaveDecayS = 3.0;

}  // namespace

std::string task_name(Task t) { return t == Task::Tser ? "tser" : "traffic"; }

Task task_from_name(const std::string& name) {
    if (name == "tser") return Task::Tser;
    if (name == "traffic") return Task::Traffic;
    throw UsageError("unknown task '" + name + "' (expected tser|traffic)");
}

std::string geometry_name(Geometry g) {
    switch (g) {
        case Geometry::Cluster: return "cluster";
        case Geometry::Ring: return "ring";
        case Geometry::Grid: return "grid";
    }
    return "?";
}

Geometry geometry_from_name(const std::string& name) {
    if (name == "cluster") return Geometry::Cluster;
    if (name == "ring") return Geometry::Ring;
    if (name == "grid") return Geometry::Grid;
    throw UsageError("unknown geometry '" + name + "' (expected cluster|ring|grid)");
}

std::vector<GeoCoordinate> place_sensors(const SyntheticSpec& spec) {
    if (spec.n_sensors < 3) throw UsageError("synthetic layouts need at least 3 sensors");
    std::mt19937_64 rng(spec.seed ^ 0x73656e736f727321ull);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const double half = spec.extent_deg / 2.0;
    std::vector<GeoCoordinate> coords;
    coords.reserve(static_cast<size_t>(spec.n_sensors));

    switch (spec.geometry) {
        case Geometry::Ring: {
            const double radius = half * 0.8;
            for (int i = 0; i < spec.n_sensors; ++i) {
                const double angle = 2.0 * kPi * i / spec.n_sensors;
                const double jitter = 0.01 * radius;
                coords.push_back({spec.center_lat + radius * std::sin(angle) + jitter * gauss(rng),
                                  spec.center_lon + radius * std::cos(angle) + jitter * gauss(rng)});
            }
            break;
        }
        case Geometry::Grid: {
            const int side = static_cast<int>(std::ceil(std::sqrt(spec.n_sensors)));
            const double step = spec.extent_deg / std::max(1, side - 1);
            for (int i = 0; i < spec.n_sensors; ++i) {
                const int r = i / side, c = i % side;
                const double jitter = 0.02 * step;
                coords.push_back({spec.center_lat - half + r * step + jitter * gauss(rng),
                                  spec.center_lon - half + c * step + jitter * gauss(rng)});
            }
            break;
        }
        case Geometry::Cluster: {
            const int k = std::max(2, spec.n_sensors / 8);
            std::vector<GeoCoordinate> centers;
            for (int c = 0; c < k; ++c) {
                centers.push_back({spec.center_lat - half + spec.extent_deg * unit(rng),
                                   spec.center_lon - half + spec.extent_deg * unit(rng)});
            }
            const double spread = 0.12 * spec.extent_deg;
            for (int i = 0; i < spec.n_sensors; ++i) {
                const auto& c = centers[static_cast<size_t>(i % k)];
                coords.push_back({c.latitude_deg + spread * gauss(rng),
                                  c.longitude_deg + spread * gauss(rng)});
            }
            break;
        }
    }
    for (auto& c : coords) {
        c.latitude_deg = std::clamp(c.latitude_deg, -89.0, 89.0);
        c.longitude_deg = std::clamp(c.longitude_deg, -179.0, 179.0);
    }
    return coords;
}

namespace {

SplitIndices chronological_split(int count) {
    SplitIndices s;
    const int train_end = static_cast<int>(std::floor(count * 0.7));
    const int val_end = static_cast<int>(std::floor(count * 0.8));
    for (int i = 0; i < count; ++i) {
        if (i < train_end) s.train.push_back(i);
        else if (i < val_end) s.val.push_back(i);
        else s.test.push_back(i);
    }
    return s;
}

SplitIndices shuffled_split(int count, uint64_t seed) {
    std::vector<int> order(static_cast<size_t>(count));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed ^ 0x73706c6974733aull);
    std::shuffle(order.begin(), order.end(), rng);
    SplitIndices s;
    const int train_end = static_cast<int>(std::floor(count * 0.7));
    const int val_end = static_cast<int>(std::floor(count * 0.8));
    for (int i = 0; i < count; ++i) {
        if (i < train_end) s.train.push_back(order[static_cast<size_t>(i)]);
        else if (i < val_end) s.val.push_back(order[static_cast<size_t>(i)]);
        else s.test.push_back(order[static_cast<size_t>(i)]);
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

std::vector<double> sensor_labels_from_attenuation(double att) {
    return {att, 0.5 * att * att, std::log1p(att), 0.8 * att + 0.1, std::sqrt(att)};
}

DatasetBundle generate_tser(const SyntheticSpec& spec, std::vector<GeoCoordinate> coords) {
    DatasetBundle b;
    b.task = Task::Tser;
    b.coords = std::move(coords);
    b.seed = spec.seed;
    b.sample_rate_hz = spec.sample_rate_hz;
    for (int i = 0; i < spec.n_sensors; ++i) b.sensor_ids.push_back("s" + std::to_string(i));

    const int n = spec.n_sensors;
    const int window = static_cast<int>(std::lround(spec.window_s * spec.sample_rate_hz));
    const int channels = spec.channels;
    b.series = Tensor::zeros({spec.events, n, window, channels});
    b.labels = Tensor::zeros({spec.events, n, 5});

    std::mt19937_64 rng(spec.seed ^ 0x747365722d657674ull);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const double half = spec.extent_deg / 2.0;
    const double chan_gain[3] = {1.0, 0.8, 0.65};
    const double chan_freq[3] = {1.0, 1.5, 2.2};

    for (int e = 0; e < spec.events; ++e) {
        const GeoCoordinate epicenter{spec.center_lat - half + spec.extent_deg * unit(rng),
                                      spec.center_lon - half + spec.extent_deg * unit(rng)};
        const double amplitude = 0.8 + 1.2 * unit(rng);
        for (int s = 0; s < n; ++s) {
            const double dist = vincenty_distance(epicenter, b.coords[static_cast<size_t>(s)]);
            const double att = amplitude / (1.0 + dist / kAttenuationScaleM);
            const double delay_s = dist / kWaveSpeedMps;
            const auto ims = sensor_labels_from_attenuation(att);
            for (int m = 0; m < 5; ++m) b.labels.at3(e, s, m) = ims[static_cast<size_t>(m)];
            for (int w = 0; w < window; ++w) {
                const double t = w / spec.sample_rate_hz - delay_s;
                for (int c = 0; c < channels; ++c) {
                    double v = 0.0;
                    if (t >= 0.0) {
                        const double g = chan_gain[c % 3];
                        const double f = chan_freq[c % 3];
                        v = att * g * std::sin(2.0 * kPi * f * t) * std::exp(-t / kWaveDecayS);
                    }
                    if (spec.noise_std > 0.0) v += spec.noise_std * gauss(rng);
                    b.series.data[((static_cast<size_t>(e) * n + s) * window + w) * channels + c] = v;
                }
            }
        }
    }
    b.splits = shuffled_split(spec.events, spec.seed);
    b.norm = compute_norm_stats(b);
    return b;
}

DatasetBundle generate_traffic(const SyntheticSpec& spec, std::vector<GeoCoordinate> coords) {
    DatasetBundle b;
    b.task = Task::Traffic;
    b.coords = std::move(coords);
    b.seed = spec.seed;
    b.t_in = spec.t_in;
    b.t_out = spec.t_out;
    for (int i = 0; i < spec.n_sensors; ++i) b.sensor_ids.push_back("s" + std::to_string(i));

    const int n = spec.n_sensors;
    const int steps = spec.total_steps;
    if (steps < spec.t_in + spec.t_out + 10) {
        throw UsageError("traffic series too short for the requested windows");
    }

    // Diffusion operator from the connected scale graph of the layout.
    const DistanceMatrix dm = build_distance_matrix(b.coords);
    const WeightMatrix wm = normalize_edge_weights(dm);
    const PersistenceDiagram diag = compute_diagram(dm);
    const PhGraphFamilies fams = generate_ph_graphs(dm, diag, wm);
    const SensorGraph& carrier = fams.g0.graphs.back();
    const std::vector<double> prop = propagation_operator(carrier);

    b.series = Tensor::zeros({steps, n, 1});
    std::mt19937_64 rng(spec.seed ^ 0x747261666669632dull);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<double> x(static_cast<size_t>(n)), next(static_cast<size_t>(n));
    auto season = [&](int t, int i) {
        return std::sin(2.0 * kPi * (t / 96.0 + static_cast<double>(i) / n));
    };
    for (int i = 0; i < n; ++i) x[static_cast<size_t>(i)] = season(0, i);
    for (int t = 0; t < steps; ++t) {
        for (int i = 0; i < n; ++i) b.series.at3(t, i, 0) = x[static_cast<size_t>(i)];
        for (int i = 0; i < n; ++i) {
            double mixed = 0.0;
            for (int j = 0; j < n; ++j) {
                mixed += prop[static_cast<size_t>(i) * n + j] * x[static_cast<size_t>(j)];
            }
            double v = 0.9 * (0.6 * mixed + 0.4 * x[static_cast<size_t>(i)]) +
                       0.5 * season(t + 1, i);
            if (spec.noise_std > 0.0) v += spec.noise_std * gauss(rng);
            next[static_cast<size_t>(i)] = v;
        }
        x.swap(next);
    }

    const int window_starts = steps - spec.t_in - spec.t_out + 1;
    b.splits = chronological_split(window_starts);
    b.norm = compute_norm_stats(b);
    return b;
}

}  // namespace

DatasetBundle generate_synthetic(const SyntheticSpec& spec) {
    if (spec.noise_std < 0.0) throw UsageError("noise_std must be non-negative");
    auto coords = place_sensors(spec);
    return spec.task == Task::Tser ? generate_tser(spec, std::move(coords))
                                   : generate_traffic(spec, std::move(coords));
}

NormStats compute_norm_stats(const DatasetBundle& bundle) {
    NormStats stats;
    if (bundle.task == Task::Tser) {
        const int channels = bundle.series.shape[3];
        const int n = bundle.series.shape[1], window = bundle.series.shape[2];
        stats.mean.assign(static_cast<size_t>(channels), 0.0);
        stats.stddev.assign(static_cast<size_t>(channels), 1.0);
        if (bundle.splits.train.empty()) throw TooFewEventsError("empty training split");
        for (int c = 0; c < channels; ++c) {
            double sum = 0.0, sum_sq = 0.0;
            long count = 0;
            for (int e : bundle.splits.train) {
                for (int s = 0; s < n; ++s) {
                    for (int w = 0; w < window; ++w) {
                        const double v =
                            bundle.series
                                .data[((static_cast<size_t>(e) * n + s) * window + w) * channels + c];
                        sum += v;
                        sum_sq += v * v;
                        ++count;
                    }
                }
            }
            const double mean = sum / static_cast<double>(count);
            const double var = std::max(0.0, sum_sq / static_cast<double>(count) - mean * mean);
            stats.mean[static_cast<size_t>(c)] = mean;
            stats.stddev[static_cast<size_t>(c)] = var > 0.0 ? std::sqrt(var) : 1.0;
        }
    } else {
        const int n = bundle.series.shape[1], k = bundle.series.shape[2];
        stats.mean.assign(static_cast<size_t>(k), 0.0);
        stats.stddev.assign(static_cast<size_t>(k), 1.0);
        if (bundle.splits.train.empty()) throw TooFewEventsError("empty training split");
        const int last_train_start =
            *std::max_element(bundle.splits.train.begin(), bundle.splits.train.end());
        const int train_steps = last_train_start + bundle.t_in;  // inputs seen in training
        for (int c = 0; c < k; ++c) {
            double sum = 0.0, sum_sq = 0.0;
            long count = 0;
            for (int t = 0; t < train_steps; ++t) {
                for (int s = 0; s < n; ++s) {
                    const double v = bundle.series.at3(t, s, c);
                    sum += v;
                    sum_sq += v * v;
                    ++count;
                }
            }
            const double mean = sum / static_cast<double>(count);
            const double var = std::max(0.0, sum_sq / static_cast<double>(count) - mean * mean);
            stats.mean[static_cast<size_t>(c)] = mean;
            stats.stddev[static_cast<size_t>(c)] = var > 0.0 ? std::sqrt(var) : 1.0;
        }
    }
    return stats;
}

Tensor normalize_series(const Tensor& series, const NormStats& stats, Task task) {
    Tensor out = series;
    const int channels = task == Task::Tser ? series.shape[3] : series.shape[2];
    if (static_cast<int>(stats.mean.size()) != channels) {
        throw ShapeMismatchError("normalization stats cover " + std::to_string(stats.mean.size()) +
                                 " channels, series has " + std::to_string(channels));
    }
    const size_t total = out.data.size();
    for (size_t i = 0; i < total; ++i) {
        const size_t c = i % static_cast<size_t>(channels);
        out.data[i] = (out.data[i] - stats.mean[c]) / stats.stddev[c];
    }
    return out;
}

double denormalize_value(double z, const NormStats& stats, int channel) {
    return z * stats.stddev[static_cast<size_t>(channel)] + stats.mean[static_cast<size_t>(channel)];
}

DatasetBundle build_traffic_bundle(const SensorTable& sensors, const Tensor& speeds, int t_in,
                                   int t_out, uint64_t seed) {
    if (speeds.ndim() != 3 || speeds.shape[2] != 1) {
        throw DataError("speed series must be [T, N, 1], got " + shape_str(speeds.shape));
    }
    if (speeds.shape[1] != static_cast<int>(sensors.coords.size())) {
        throw DataError("speed series sensor count does not match sensor table");
    }
    DatasetBundle b;
    b.task = Task::Traffic;
    b.coords = sensors.coords;
    b.sensor_ids = sensors.ids;
    b.series = speeds;
    b.t_in = t_in;
    b.t_out = t_out;
    b.seed = seed;
    const int window_starts = speeds.shape[0] - t_in - t_out + 1;
    if (window_starts < 3) throw DataError("speed series too short for requested windows");
    b.splits = chronological_split(window_starts);
    b.norm = compute_norm_stats(b);
    return b;
}

namespace {

json splits_to_json(const SplitIndices& s) {
    return json{{"train", s.train}, {"val", s.val}, {"test", s.test}};
}

SplitIndices splits_from_json(const json& j) {
    SplitIndices s;
    s.train = j.at("train").get<std::vector<int>>();
    s.val = j.at("val").get<std::vector<int>>();
    s.test = j.at("test").get<std::vector<int>>();
    return s;
}

}  // namespace

void write_dataset(const std::string& dir, const DatasetBundle& bundle) {
    fs::create_directories(dir);
    const fs::path root(dir);

    SensorTable table{bundle.sensor_ids, bundle.coords};
    write_sensors_csv((root / "sensors.csv").string(), table);

    ContainerMeta series_meta;
    series_meta.task = task_name(bundle.task);
    if (bundle.task == Task::Tser) {
        series_meta.dims = {{"T", bundle.series.shape[0]},
                            {"N", bundle.series.shape[1]},
                            {"W", bundle.series.shape[2]},
                            {"C", bundle.series.shape[3]}};
        series_meta.channels = {"e", "n", "z"};
    } else {
        series_meta.dims = {{"T_total", bundle.series.shape[0]},
                            {"N", bundle.series.shape[1]},
                            {"K", bundle.series.shape[2]}};
        series_meta.channels = {"speed"};
    }
    write_tensor_container((root / "series.tns").string(), bundle.series, series_meta);

    if (bundle.task == Task::Tser) {
        ContainerMeta label_meta;
        label_meta.task = "tser";
        label_meta.dims = {{"T", bundle.labels.shape[0]},
                           {"N", bundle.labels.shape[1]},
                           {"IM", bundle.labels.shape[2]}};
        label_meta.channels = {"pga", "pgv", "sa03", "sa1", "sa3"};
        write_tensor_container((root / "labels.tns").string(), bundle.labels, label_meta);
    }

    json manifest;
    manifest["format_version"] = 1;
    manifest["task"] = task_name(bundle.task);
    manifest["seed"] = bundle.seed;
    manifest["n_sensors"] = bundle.n_sensors();
    manifest["sample_rate_hz"] = bundle.sample_rate_hz;
    manifest["t_in"] = bundle.t_in;
    manifest["t_out"] = bundle.t_out;
    manifest["splits"] = splits_to_json(bundle.splits);
    manifest["norm"] = json{{"mean", bundle.norm.mean}, {"std", bundle.norm.stddev}};
    manifest["files"] = json{{"sensors", "sensors.csv"}, {"series", "series.tns"}};
    if (bundle.task == Task::Tser) manifest["files"]["labels"] = "labels.tns";
    write_file_atomic((root / "manifest.json").string(), manifest.dump(2) + "\n");
}

DatasetBundle read_dataset(const std::string& dir) {
    const fs::path root(dir);
    json manifest;
    try {
        manifest = json::parse(read_file((root / "manifest.json").string()));
    } catch (const json::exception& e) {
        throw DataError("bad dataset manifest in " + dir + ": " + e.what());
    }

    DatasetBundle b;
    b.task = task_from_name(manifest.at("task").get<std::string>());
    b.seed = manifest.at("seed").get<uint64_t>();
    b.sample_rate_hz = manifest.at("sample_rate_hz").get<double>();
    b.t_in = manifest.at("t_in").get<int>();
    b.t_out = manifest.at("t_out").get<int>();
    b.splits = splits_from_json(manifest.at("splits"));
    b.norm.mean = manifest.at("norm").at("mean").get<std::vector<double>>();
    b.norm.stddev = manifest.at("norm").at("std").get<std::vector<double>>();

    const auto table = read_sensors_csv((root / manifest.at("files").at("sensors").get<std::string>()).string());
    b.sensor_ids = table.ids;
    b.coords = table.coords;

    b.series = read_tensor_container((root / manifest.at("files").at("series").get<std::string>()).string());
    if (b.task == Task::Tser) {
        b.labels = read_tensor_container((root / manifest.at("files").at("labels").get<std::string>()).string());
        if (b.series.ndim() != 4 || b.labels.ndim() != 3 ||
            b.series.shape[0] != b.labels.shape[0] || b.series.shape[1] != b.labels.shape[1]) {
            throw DataError("dataset " + dir + ": series/label shapes disagree");
        }
    } else if (b.series.ndim() != 3) {
        throw DataError("dataset " + dir + ": traffic series must be [T, N, K]");
    }
    const int n_from_series = b.series.shape[1];
    if (n_from_series != b.n_sensors()) {
        throw DataError("dataset " + dir + ": sensors.csv lists " + std::to_string(b.n_sensors()) +
                        " sensors, series has " + std::to_string(n_from_series));
    }
    return b;
}

}  // namespace topo
