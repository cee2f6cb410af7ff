#include "topo/io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "binary containers assume a little-endian host");

namespace topo {

void write_file_atomic(const std::string& path, const std::string& contents) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open for writing: " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw DataError("short write to " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) {
    if (s == "inf" || s == "+inf" || s == "infinity") return kInfiniteDeath;
    if (s == "-inf") return -kInfiniteDeath;
    size_t used = 0;
    double v;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw DataError("not a number: '" + s + "'");
    }
    if (used != s.size()) throw DataError("trailing characters in number: '" + s + "'");
    return v;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

}  // namespace

SensorTable read_sensors_csv(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw DataError("empty sensors file: " + path);
    const auto header = split_csv_line(lines[0]);
    if (header.size() != 3 || header[0] != "id" || header[1] != "lat" || header[2] != "lon") {
        throw DataError("sensors file " + path + " must start with header 'id,lat,lon'");
    }
    SensorTable table;
    for (size_t i = 1; i < lines.size(); ++i) {
        const auto f = split_csv_line(lines[i]);
        if (f.size() != 3) {
            throw DataError("sensors file " + path + " line " + std::to_string(i + 1) +
                            ": expected 3 fields");
        }
        GeoCoordinate c{parse_double(f[1]), parse_double(f[2])};
        validate_coordinate(c);
        table.ids.push_back(f[0]);
        table.coords.push_back(c);
    }
    return table;
}

void write_sensors_csv(const std::string& path, const SensorTable& table) {
    std::string out = "id,lat,lon\n";
    for (size_t i = 0; i < table.coords.size(); ++i) {
        out += table.ids[i] + "," + format_double(table.coords[i].latitude_deg) + "," +
               format_double(table.coords[i].longitude_deg) + "\n";
    }
    write_file_atomic(path, out);
}

void write_diagram_csv(const std::string& path, const PersistenceDiagram& diag) {
    std::string out = "dim,birth,death\n";
    for (const auto& p : diag.pairs) {
        out += std::to_string(p.dim) + "," + format_double(p.birth) + "," +
               (p.is_infinite() ? std::string("inf") : format_double(p.death)) + "\n";
    }
    write_file_atomic(path, out);
}

PersistenceDiagram read_diagram_csv(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.empty() || lines[0] != "dim,birth,death") {
        throw DataError("diagram file " + path + " must start with header 'dim,birth,death'");
    }
    PersistenceDiagram diag;
    for (size_t i = 1; i < lines.size(); ++i) {
        const auto f = split_csv_line(lines[i]);
        if (f.size() != 3) {
            throw DataError("diagram file " + path + " line " + std::to_string(i + 1) +
                            ": expected 3 fields");
        }
        PersistencePair p{};
        p.dim = static_cast<int>(parse_double(f[0]));
        p.birth = parse_double(f[1]);
        p.death = parse_double(f[2]);
        if (p.dim != 0 && p.dim != 1) {
            throw DataError("diagram file " + path + ": unsupported dimension " +
                            std::to_string(p.dim));
        }
        diag.pairs.push_back(p);
    }
    return diag;
}

void write_distance_csv(const std::string& path, const DistanceMatrix& d) {
    std::string out;
    for (int i = 0; i < d.size(); ++i) {
        for (int j = 0; j < d.size(); ++j) {
            if (j) out += ",";
            out += format_double(d(i, j));
        }
        out += "\n";
    }
    write_file_atomic(path, out);
}

DistanceMatrix read_distance_csv(const std::string& path) {
    const auto lines = read_lines(path);
    const int n = static_cast<int>(lines.size());
    if (n < 2) throw DataError("distance matrix " + path + " needs at least 2 rows");
    std::vector<double> entries;
    entries.reserve(static_cast<size_t>(n) * n);
    for (const auto& line : lines) {
        const auto f = split_csv_line(line);
        if (static_cast<int>(f.size()) != n) {
            throw DataError("distance matrix " + path + " is not square");
        }
        for (const auto& s : f) entries.push_back(parse_double(s));
    }
    return DistanceMatrix(n, std::move(entries));
}

namespace {

std::string graph_file_name(FamilyKind family, size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%03zu.csv", family_name(family).c_str(), index);
    return buf;
}

std::string graph_dot(const SensorGraph& g) {
    std::string out = "graph sensor_graph {\n";
    for (int i = 0; i < g.n; ++i) out += "  n" + std::to_string(i) + ";\n";
    for (const auto& e : g.edges) {
        out += "  n" + std::to_string(e.i) + " -- n" + std::to_string(e.j) + " [weight=" +
               format_double(e.weight) + "];\n";
    }
    return out + "}\n";
}

}  // namespace

void write_graph_family(const std::string& dir, const GraphFamily& family) {
    fs::create_directories(dir);
    json manifest;
    manifest["family"] = family_name(family.family);
    manifest["graph_count"] = family.graphs.size();
    json entries = json::array();
    for (size_t g = 0; g < family.graphs.size(); ++g) {
        const SensorGraph& graph = family.graphs[g];
        const std::string file = graph_file_name(family.family, g);

        std::string csv = "i,j,weight\n";
        for (const auto& e : graph.edges) {
            csv += std::to_string(e.i) + "," + std::to_string(e.j) + "," +
                   format_double(e.weight) + "\n";
        }
        write_file_atomic((fs::path(dir) / file).string(), csv);
        const std::string dot_file = file.substr(0, file.size() - 4) + ".dot";
        write_file_atomic((fs::path(dir) / dot_file).string(), graph_dot(graph));

        json entry;
        entry["family"] = family_name(family.family);
        if (graph.epsilon) {
            entry["epsilon"] = *graph.epsilon;
        } else {
            entry["epsilon"] = nullptr;
        }
        entry["source_dim"] = source_dim_name(graph.source_dim);
        entry["n"] = graph.n;
        entry["edge_count"] = graph.edges.size();
        entry["file"] = file;
        entries.push_back(entry);
    }
    manifest["graphs"] = entries;
    write_file_atomic((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

GraphFamily read_graph_family(const std::string& dir) {
    json manifest;
    try {
        manifest = json::parse(read_file((fs::path(dir) / "manifest.json").string()));
    } catch (const json::exception& e) {
        throw DataError("bad graph family manifest in " + dir + ": " + e.what());
    }
    GraphFamily family;
    family.family = family_from_name(manifest.at("family").get<std::string>());
    for (const auto& entry : manifest.at("graphs")) {
        SensorGraph g;
        g.n = entry.at("n").get<int>();
        if (!entry.at("epsilon").is_null()) g.epsilon = entry.at("epsilon").get<double>();
        const std::string sd = entry.at("source_dim").get<std::string>();
        g.source_dim = sd == "0"          ? SourceDim::H0
                       : sd == "1"        ? SourceDim::H1
                       : sd == "baseline" ? SourceDim::Baseline
                                          : throw DataError("bad source_dim '" + sd + "'");
        const auto lines = read_lines((fs::path(dir) / entry.at("file").get<std::string>()).string());
        if (lines.empty() || lines[0] != "i,j,weight") {
            throw DataError("graph edge file must start with header 'i,j,weight'");
        }
        for (size_t l = 1; l < lines.size(); ++l) {
            const auto f = split_csv_line(lines[l]);
            if (f.size() != 3) throw DataError("graph edge file: expected 3 fields");
            GraphEdge e{};
            e.i = static_cast<int>(parse_double(f[0]));
            e.j = static_cast<int>(parse_double(f[1]));
            e.weight = parse_double(f[2]);
            if (e.i < 0 || e.j <= e.i || e.j >= g.n) {
                throw DataError("graph edge (" + f[0] + "," + f[1] + ") out of range");
            }
            g.edges.push_back(e);
        }
        const size_t declared = entry.at("edge_count").get<size_t>();
        if (declared != g.edges.size()) {
            throw DataError("graph edge count mismatch: manifest says " +
                            std::to_string(declared) + ", file has " +
                            std::to_string(g.edges.size()));
        }
        family.graphs.push_back(std::move(g));
    }
    return family;
}

Tensor read_speed_series_csv(const std::string& path, const std::vector<std::string>& sensor_ids) {
    const auto lines = read_lines(path);
    if (lines.size() < 2) throw DataError("speed series " + path + " has no data rows");
    const auto header = split_csv_line(lines[0]);
    std::vector<int> col_of;
    for (const auto& id : sensor_ids) {
        int col = -1;
        for (size_t c = 0; c < header.size(); ++c) {
            if (header[c] == id) {
                col = static_cast<int>(c);
                break;
            }
        }
        if (col < 0) throw DataError("speed series " + path + " missing sensor column '" + id + "'");
        col_of.push_back(col);
    }
    const int steps = static_cast<int>(lines.size()) - 1;
    const int n = static_cast<int>(sensor_ids.size());
    Tensor out = Tensor::zeros({steps, n, 1});
    for (int t = 0; t < steps; ++t) {
        const auto f = split_csv_line(lines[static_cast<size_t>(t) + 1]);
        if (f.size() != header.size()) {
            throw DataError("speed series " + path + " row " + std::to_string(t + 2) +
                            " has wrong field count");
        }
        for (int s = 0; s < n; ++s) {
            out.at3(t, s, 0) = parse_double(f[static_cast<size_t>(col_of[static_cast<size_t>(s)])]);
        }
    }
    return out;
}

void write_tensor_container(const std::string& path, const Tensor& tensor,
                            const ContainerMeta& meta) {
    json manifest;
    manifest["task"] = meta.task;
    json dims = json::array();
    int product = 1;
    for (const auto& [name, extent] : meta.dims) {
        dims.push_back({{"name", name}, {"extent", extent}});
        product *= extent;
    }
    if (product != tensor.size()) {
        throw DataError("container dims product " + std::to_string(product) +
                        " does not match tensor size " + std::to_string(tensor.size()));
    }
    manifest["dims"] = dims;
    manifest["dtype"] = meta.dtype == "f32" ? "f32" : "f64";
    manifest["byte_order"] = "little";
    if (!meta.channels.empty()) manifest["channels"] = meta.channels;

    const std::string header = manifest.dump();
    std::string blob;
    const uint64_t header_len = header.size();
    blob.resize(8);
    std::memcpy(blob.data(), &header_len, 8);
    blob += header;
    if (manifest["dtype"] == "f32") {
        std::vector<float> tmp(tensor.data.begin(), tensor.data.end());
        const size_t bytes = tmp.size() * sizeof(float);
        const size_t off = blob.size();
        blob.resize(off + bytes);
        std::memcpy(blob.data() + off, tmp.data(), bytes);
    } else {
        const size_t bytes = tensor.data.size() * sizeof(double);
        const size_t off = blob.size();
        blob.resize(off + bytes);
        std::memcpy(blob.data() + off, tensor.data.data(), bytes);
    }
    write_file_atomic(path, blob);
}

Tensor read_tensor_container(const std::string& path, ContainerMeta* meta_out) {
    const std::string raw = read_file(path);
    if (raw.size() < 8) throw DataError("container " + path + " is truncated");
    uint64_t header_len = 0;
    std::memcpy(&header_len, raw.data(), 8);
    if (raw.size() < 8 + header_len) throw DataError("container " + path + " header is truncated");
    json manifest;
    try {
        manifest = json::parse(raw.substr(8, header_len));
    } catch (const json::exception& e) {
        throw DataError("container " + path + " has a bad manifest: " + e.what());
    }

    ContainerMeta meta;
    meta.task = manifest.value("task", "blob");
    meta.dtype = manifest.value("dtype", "f64");
    if (manifest.contains("channels")) {
        meta.channels = manifest["channels"].get<std::vector<std::string>>();
    }
    std::vector<int> shape;
    size_t count = 1;
    for (const auto& d : manifest.at("dims")) {
        const int extent = d.at("extent").get<int>();
        meta.dims.emplace_back(d.at("name").get<std::string>(), extent);
        shape.push_back(extent);
        count *= static_cast<size_t>(extent);
    }
    if (manifest.value("byte_order", "little") != "little") {
        throw DataError("container " + path + ": unsupported byte order");
    }
    const size_t elem = meta.dtype == "f32" ? 4 : 8;
    const size_t expected = 8 + header_len + count * elem;
    if (raw.size() != expected) {
        throw DataError("container " + path + ": payload is " +
                        std::to_string(raw.size() - 8 - header_len) + " bytes, manifest implies " +
                        std::to_string(count * elem));
    }
    Tensor out = Tensor::zeros(shape);
    const char* payload = raw.data() + 8 + header_len;
    if (meta.dtype == "f32") {
        std::vector<float> tmp(count);
        std::memcpy(tmp.data(), payload, count * 4);
        for (size_t i = 0; i < count; ++i) out.data[i] = static_cast<double>(tmp[i]);
    } else {
        std::memcpy(out.data.data(), payload, count * 8);
    }
    if (meta_out) *meta_out = meta;
    return out;
}

}  // namespace topo
