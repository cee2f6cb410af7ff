#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "topo/graphgen.hpp"
#include "topo/persistence.hpp"
#include "topo/tape.hpp"

namespace topo {

// All writers go through a temp file + rename so readers never observe a
// partial file.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

// Round-trip exact double formatting (%.17g).
std::string format_double(double v);
double parse_double(const std::string& s);

struct SensorTable {
    std::vector<std::string> ids;
    std::vector<GeoCoordinate> coords;
};

// CSV with header `id,lat,lon`, decimal degrees.
SensorTable read_sensors_csv(const std::string& path);
void write_sensors_csv(const std::string& path, const SensorTable& table);

// CSV with header `dim,birth,death`; `inf` encodes infinite deaths.
// Barcode and diagram share this schema.
void write_diagram_csv(const std::string& path, const PersistenceDiagram& diag);
PersistenceDiagram read_diagram_csv(const std::string& path);

// Plain numeric matrix, one row per line.
void write_distance_csv(const std::string& path, const DistanceMatrix& d);
DistanceMatrix read_distance_csv(const std::string& path);

// Directory layout: manifest.json + one `i,j,weight` CSV and one DOT file
// per graph.
void write_graph_family(const std::string& dir, const GraphFamily& family);
GraphFamily read_graph_family(const std::string& dir);

// Speed-series adapter for real traffic data: CSV whose header names the
// sensors and whose rows are consecutive 5-minute readings. Returns
// [T_total, N, 1].
Tensor read_speed_series_csv(const std::string& path, const std::vector<std::string>& sensor_ids);

struct ContainerMeta {
    std::string task;                                  // tser | traffic | blob
    std::vector<std::pair<std::string, int>> dims;     // named extents, row-major order
    std::string dtype = "f64";                         // f64 | f32
    std::vector<std::string> channels;
};

// Binary tensor container: u64 little-endian header length, JSON manifest,
// raw little-endian payload. Payload length is validated against the
// manifest on read.
void write_tensor_container(const std::string& path, const Tensor& tensor,
                            const ContainerMeta& meta);
Tensor read_tensor_container(const std::string& path, ContainerMeta* meta_out = nullptr);

}  // namespace topo
