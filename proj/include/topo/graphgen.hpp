#pragma once

#include <optional>
#include <string>
#include <vector>

#include "topo/persistence.hpp"

namespace topo {

enum class SourceDim { H0 = 0, H1 = 1, Baseline = 2 };

std::string source_dim_name(SourceDim s);

struct GraphEdge {
    int i, j;  // i < j
    double weight;
};

struct SensorGraph {
    int n = 0;
    std::vector<GraphEdge> edges;          // sorted by (i, j), no self-loops
    std::optional<double> epsilon;         // generating scale; empty for baseline
    SourceDim source_dim = SourceDim::Baseline;
};

enum class FamilyKind { G0, G1, G01, Baseline };

std::string family_name(FamilyKind f);
FamilyKind family_from_name(const std::string& name);

struct GraphFamily {
    FamilyKind family = FamilyKind::G0;
    std::vector<SensorGraph> graphs;  // ascending epsilon
};

// Dense symmetric weight matrix in [0, 1]; entry (i,j) is the affinity of the
// sensor pair, 1 for the closest pair and 0 for the farthest.
class WeightMatrix {
public:
    WeightMatrix() = default;
    WeightMatrix(int n, std::vector<double> entries);

    int size() const { return n_; }
    double operator()(int i, int j) const { return entries_[static_cast<size_t>(i) * n_ + j]; }

private:
    int n_ = 0;
    std::vector<double> entries_;
};

// w_ij = 1 - (m_ij - m_min) / (m_max - m_min) over off-diagonal entries.
// Throws DegenerateScaleError when all off-diagonal distances coincide.
WeightMatrix normalize_edge_weights(const DistanceMatrix& d);

enum class ThresholdDirection { KeepAbove, KeepBelow };

// Baseline graph: keep pair (i,j) when w_ij > tau (KeepAbove, the default) or
// w_ij < tau (KeepBelow). tau must lie strictly in (0, 1).
SensorGraph threshold_graph(const WeightMatrix& weights, double tau,
                            ThresholdDirection direction = ThresholdDirection::KeepAbove);

struct PhGraphFamilies {
    GraphFamily g0;
    GraphFamily g1;
    GraphFamily g01;  // merged multiset of g0 and g1, ascending epsilon
};

struct GraphGenOptions {
    // Carry normalized pair weights on admitted edges; otherwise weight 1.
    bool normalized_weights = true;
};

// One graph per finite death time: edges {(i,j) : D_ij <= eps}. Duplicate
// death times are deduplicated within a family; infinite pairs are skipped.
// Throws EmptyDiagramError when the diagram has no finite pairs.
PhGraphFamilies generate_ph_graphs(const DistanceMatrix& d, const PersistenceDiagram& diag,
                                   const WeightMatrix& weights,
                                   const GraphGenOptions& opts = {});

// Symmetric normalized adjacency with self-loops:
// A_hat = D~^{-1/2} (A + I) D~^{-1/2}, D~_ii = sum_j (A + I)_ij.
// Row-major n x n.
std::vector<double> propagation_operator(const SensorGraph& g);

}  // namespace topo
