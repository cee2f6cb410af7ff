#include "topo/graphgen.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace topo {

std::string source_dim_name(SourceDim s) {
    switch (s) {
        case SourceDim::H0: return "0";
        case SourceDim::H1: return "1";
        case SourceDim::Baseline: return "baseline";
    }
    return "?";
}

std::string family_name(FamilyKind f) {
    switch (f) {
        case FamilyKind::G0: return "g0";
        case FamilyKind::G1: return "g1";
        case FamilyKind::G01: return "g01";
        case FamilyKind::Baseline: return "baseline";
    }
    return "?";
}

FamilyKind family_from_name(const std::string& name) {
    if (name == "g0") return FamilyKind::G0;
    if (name == "g1") return FamilyKind::G1;
    if (name == "g01") return FamilyKind::G01;
    if (name == "baseline") return FamilyKind::Baseline;
    throw UsageError("unknown graph family '" + name + "' (expected g0|g1|g01|baseline)");
}

WeightMatrix::WeightMatrix(int n, std::vector<double> entries)
    : n_(n), entries_(std::move(entries)) {
    if (n_ < 0 || entries_.size() != static_cast<size_t>(n_) * n_) {
        throw DataError("weight matrix entries do not match size");
    }
}

WeightMatrix normalize_edge_weights(const DistanceMatrix& d) {
    const int n = d.size();
    if (n < 2) throw DataError("weight normalization needs at least 2 sensors");

    double m_min = kInfiniteDeath, m_max = -kInfiniteDeath;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            m_min = std::min(m_min, d(i, j));
            m_max = std::max(m_max, d(i, j));
        }
    }
    if (m_max == m_min) {
        throw DegenerateScaleError("all off-diagonal distances are equal; weight scale collapses");
    }

    std::vector<double> w(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            w[static_cast<size_t>(i) * n + j] = 1.0 - (d(i, j) - m_min) / (m_max - m_min);
        }
    }
    return WeightMatrix(n, std::move(w));
}

SensorGraph threshold_graph(const WeightMatrix& weights, double tau,
                            ThresholdDirection direction) {
    if (!(tau > 0.0 && tau < 1.0)) {
        throw UsageError("threshold tau must lie in (0, 1), got " + std::to_string(tau));
    }
    SensorGraph g;
    g.n = weights.size();
    g.source_dim = SourceDim::Baseline;
    for (int i = 0; i < g.n; ++i) {
        for (int j = i + 1; j < g.n; ++j) {
            const double w = weights(i, j);
            const bool keep = direction == ThresholdDirection::KeepAbove ? w > tau : w < tau;
            if (keep) g.edges.push_back({i, j, w});
        }
    }
    return g;
}

namespace {

SensorGraph graph_at_scale(const DistanceMatrix& d, const WeightMatrix& weights, double eps,
                           SourceDim source, bool normalized_weights) {
    SensorGraph g;
    g.n = d.size();
    g.epsilon = eps;
    g.source_dim = source;
    for (int i = 0; i < g.n; ++i) {
        for (int j = i + 1; j < g.n; ++j) {
            if (d(i, j) <= eps) {
                g.edges.push_back({i, j, normalized_weights ? weights(i, j) : 1.0});
            }
        }
    }
    return g;
}

GraphFamily build_family(FamilyKind kind, const DistanceMatrix& d, const WeightMatrix& weights,
                         const std::vector<double>& deaths, SourceDim source,
                         bool normalized_weights) {
    GraphFamily fam;
    fam.family = kind;
    std::vector<double> unique_deaths = deaths;
    std::sort(unique_deaths.begin(), unique_deaths.end());
    unique_deaths.erase(std::unique(unique_deaths.begin(), unique_deaths.end()),
                        unique_deaths.end());
    for (double eps : unique_deaths) {
        fam.graphs.push_back(graph_at_scale(d, weights, eps, source, normalized_weights));
    }
    return fam;
}

}  // namespace

PhGraphFamilies generate_ph_graphs(const DistanceMatrix& d, const PersistenceDiagram& diag,
                                   const WeightMatrix& weights, const GraphGenOptions& opts) {
    // n_points is 0 for diagrams loaded from CSV, which carry no vertex count.
    if ((diag.n_points != 0 && diag.n_points != d.size()) || weights.size() != d.size()) {
        throw DataError("diagram, distance matrix and weights disagree on sensor count");
    }
    std::vector<double> deaths0, deaths1;
    for (const auto& p : diag.pairs) {
        if (p.is_infinite()) continue;
        (p.dim == 0 ? deaths0 : deaths1).push_back(p.death);
    }
    if (deaths0.empty() && deaths1.empty()) {
        throw EmptyDiagramError("diagram has no finite death times; no graphs to generate");
    }

    PhGraphFamilies out;
    out.g0 = build_family(FamilyKind::G0, d, weights, deaths0, SourceDim::H0,
                          opts.normalized_weights);
    out.g1 = build_family(FamilyKind::G1, d, weights, deaths1, SourceDim::H1,
                          opts.normalized_weights);

    // The union family retains one graph per death time per source dimension;
    // a scale shared across dimensions appears twice.
    out.g01.family = FamilyKind::G01;
    out.g01.graphs.reserve(out.g0.graphs.size() + out.g1.graphs.size());
    for (const auto& g : out.g0.graphs) out.g01.graphs.push_back(g);
    for (const auto& g : out.g1.graphs) out.g01.graphs.push_back(g);
    std::stable_sort(out.g01.graphs.begin(), out.g01.graphs.end(),
                     [](const SensorGraph& a, const SensorGraph& b) {
                         if (*a.epsilon != *b.epsilon) return *a.epsilon < *b.epsilon;
                         return static_cast<int>(a.source_dim) < static_cast<int>(b.source_dim);
                     });
    return out;
}

std::vector<double> propagation_operator(const SensorGraph& g) {
    const size_t n = static_cast<size_t>(g.n);
    std::vector<double> a_tilde(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) a_tilde[i * n + i] = 1.0;  // self-loops
    for (const auto& e : g.edges) {
        a_tilde[static_cast<size_t>(e.i) * n + e.j] = e.weight;
        a_tilde[static_cast<size_t>(e.j) * n + e.i] = e.weight;
    }
    std::vector<double> inv_sqrt_deg(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (size_t j = 0; j < n; ++j) deg += a_tilde[i * n + j];
        inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    std::vector<double> op(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i; j < n; ++j) {
            const double v = inv_sqrt_deg[i] * a_tilde[i * n + j] * inv_sqrt_deg[j];
            op[i * n + j] = v;
            op[j * n + i] = v;  // mirror, so symmetry is exact
        }
    }
    return op;
}

}  // namespace topo
