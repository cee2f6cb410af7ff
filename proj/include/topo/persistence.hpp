#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "topo/geodesy.hpp"

namespace topo {

inline constexpr double kInfiniteDeath = std::numeric_limits<double>::infinity();

struct PersistencePair {
    int dim;       // homology dimension, 0 or 1
    double birth;  // scale at which the feature appears
    double death;  // scale at which it disappears; kInfiniteDeath if never

    bool is_infinite() const { return death == kInfiniteDeath; }
    double lifespan() const { return death - birth; }
};

bool operator==(const PersistencePair& a, const PersistencePair& b);

// Deterministic ordering: (dim, birth, death).
bool pair_less(const PersistencePair& a, const PersistencePair& b);

struct PersistenceDiagram {
    std::vector<PersistencePair> pairs;  // sorted by pair_less
    int n_points = 0;
};

struct FiltrationBudget {
    int max_dim = 1;  // highest homology dimension; simplices go up to dim max_dim+1
    std::optional<double> max_epsilon;  // cap on the filtration scale
};

// Connected-component persistence of the Vietoris-Rips filtration. Finite
// death times are the merge scales (the minimum-spanning-tree edge weights);
// every component still alive at the cap yields one infinite pair.
// Zero-lifespan pairs are dropped.
std::vector<PersistencePair> compute_h0(const DistanceMatrix& d,
                                        std::optional<double> max_epsilon = {});

// Loop persistence from Z/2 column reduction of the triangle boundary matrix,
// edges and triangles ordered by (filtration value, vertex lexicographic).
// Columns are bit-packed over edge ranks. Zero-lifespan pairs are dropped.
// Returns empty for n < 3.
std::vector<PersistencePair> compute_h1(const DistanceMatrix& d,
                                        std::optional<double> max_epsilon = {});

PersistenceDiagram compute_diagram(const DistanceMatrix& d, const FiltrationBudget& budget = {});

// Number of dimension-d features alive at scale eps: birth <= eps < death.
int betti_at(const PersistenceDiagram& diag, double eps, int dim);

// Naive full-boundary-matrix reduction over all simplices, no shortcuts.
// Independent cross-check for compute_diagram; guarded to n <= 12.
PersistenceDiagram brute_force_diagram(const DistanceMatrix& d, const FiltrationBudget& budget = {});

}  // namespace topo
