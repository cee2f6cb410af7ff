#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topo/geodesy.hpp"
#include "topo/io.hpp"
#include "topo/tape.hpp"

namespace topo {

enum class Task { Tser, Traffic };

std::string task_name(Task t);
Task task_from_name(const std::string& name);

struct SplitIndices {
    std::vector<int> train, val, test;  // disjoint by construction
};

// Per-channel mean/std from the training portion only.
struct NormStats {
    std::vector<double> mean, stddev;
};

struct DatasetBundle {
    Task task = Task::Tser;
    Tensor series;  // TSER [T, N, W, C]; traffic [T_total, N, K]
    Tensor labels;  // TSER [T, N, 5]; traffic unused (targets come from series windows)
    std::vector<std::string> sensor_ids;
    std::vector<GeoCoordinate> coords;
    SplitIndices splits;  // TSER: event indices; traffic: window start indices
    NormStats norm;
    double sample_rate_hz = 10.0;  // TSER
    int t_in = 12, t_out = 3;      // traffic
    uint64_t seed = 0;

    int n_sensors() const { return static_cast<int>(coords.size()); }
};

enum class Geometry { Cluster, Ring, Grid };

std::string geometry_name(Geometry g);
Geometry geometry_from_name(const std::string& name);

struct SyntheticSpec {
    Task task = Task::Tser;
    int n_sensors = 12;
    Geometry geometry = Geometry::Ring;
    double noise_std = 0.0;
    uint64_t seed = 0;

    // TSER
    int events = 40;
    double window_s = 10.0;
    double sample_rate_hz = 10.0;
    int channels = 3;

    // traffic
    int total_steps = 2000;
    int t_in = 12;
    int t_out = 3;

    // placement region (degrees)
    double center_lat = 43.0;
    double center_lon = 11.5;
    double extent_deg = 0.5;
};

// Places sensors by geometry and synthesizes a task dataset. TSER events are
// attenuated wavefronts whose labels decay with geodesic distance from a
// random epicenter; traffic is a graph-diffusion autoregressive process over
// a scale graph of the layout, so the network structure is predictive.
DatasetBundle generate_synthetic(const SyntheticSpec& spec);

// Layout only (used by generate_synthetic and by tests that probe geometry).
std::vector<GeoCoordinate> place_sensors(const SyntheticSpec& spec);

void write_dataset(const std::string& dir, const DatasetBundle& bundle);
DatasetBundle read_dataset(const std::string& dir);

NormStats compute_norm_stats(const DatasetBundle& bundle);
// z = (x - mean_c) / std_c applied over the channel axis.
Tensor normalize_series(const Tensor& series, const NormStats& stats, Task task);
double denormalize_value(double z, const NormStats& stats, int channel);

// Assemble a traffic bundle from real CSV exports (sensor table + speed grid);
// chronological 70/10/20 window split, Z-score stats from the training slice.
DatasetBundle build_traffic_bundle(const SensorTable& sensors, const Tensor& speeds, int t_in,
                                   int t_out, uint64_t seed);

}  // namespace topo
