#include "topo/persistence.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <string>
#include <tuple>

namespace topo {

bool operator==(const PersistencePair& a, const PersistencePair& b) {
    return a.dim == b.dim && a.birth == b.birth && a.death == b.death;
}

bool pair_less(const PersistencePair& a, const PersistencePair& b) {
    return std::tie(a.dim, a.birth, a.death) < std::tie(b.dim, b.birth, b.death);
}

namespace {

struct Edge {
    double value;
    int i, j;  // i < j
};

struct Triangle {
    double value;
    int i, j, k;  // i < j < k
};

std::vector<Edge> sorted_edges(const DistanceMatrix& d, std::optional<double> cap) {
    const int n = d.size();
    std::vector<Edge> edges;
    edges.reserve(static_cast<size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double v = d(i, j);
            if (cap && v > *cap) continue;
            edges.push_back({v, i, j});
        }
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        return std::tie(a.value, a.i, a.j) < std::tie(b.value, b.i, b.j);
    });
    return edges;
}

struct UnionFind {
    std::vector<int> parent;
    std::vector<int> rank;

    explicit UnionFind(int n) : parent(n), rank(n, 0) {
        for (int i = 0; i < n; ++i) parent[i] = i;
    }

    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }

    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (rank[a] < rank[b]) std::swap(a, b);
        parent[b] = a;
        if (rank[a] == rank[b]) ++rank[a];
        return true;
    }
};

// Bit-packed Z/2 column over edge ranks.
struct BitColumn {
    std::vector<uint64_t> words;

    explicit BitColumn(size_t nbits) : words((nbits + 63) / 64, 0) {}

    void set(size_t bit) { words[bit >> 6] |= uint64_t{1} << (bit & 63); }

    void xor_with(const BitColumn& other) {
        for (size_t w = 0; w < words.size(); ++w) words[w] ^= other.words[w];
    }

    // Highest set bit, or -1 if the column is zero.
    long low() const {
        for (size_t w = words.size(); w-- > 0;) {
            if (words[w] != 0) {
                return static_cast<long>(w * 64 + (63 - std::countl_zero(words[w])));
            }
        }
        return -1;
    }
};

}  // namespace

std::vector<PersistencePair> compute_h0(const DistanceMatrix& d,
                                        std::optional<double> max_epsilon) {
    const int n = d.size();
    const auto edges = sorted_edges(d, max_epsilon);

    std::vector<PersistencePair> pairs;
    UnionFind uf(n);
    int components = n;
    for (const auto& e : edges) {
        if (uf.unite(e.i, e.j)) {
            --components;
            if (e.value > 0.0) pairs.push_back({0, 0.0, e.value});
        }
    }
    for (int c = 0; c < components; ++c) pairs.push_back({0, 0.0, kInfiniteDeath});
    std::sort(pairs.begin(), pairs.end(), pair_less);
    return pairs;
}

std::vector<PersistencePair> compute_h1(const DistanceMatrix& d,
                                        std::optional<double> max_epsilon) {
    const int n = d.size();
    if (n < 3) return {};

    const auto edges = sorted_edges(d, max_epsilon);
    const size_t m = edges.size();

    // Rank of each edge in filtration order.
    std::vector<int> rank_of(static_cast<size_t>(n) * n, -1);
    for (size_t r = 0; r < m; ++r) {
        rank_of[static_cast<size_t>(edges[r].i) * n + edges[r].j] = static_cast<int>(r);
    }
    auto edge_rank = [&](int i, int j) { return rank_of[static_cast<size_t>(i) * n + j]; };

    std::vector<Triangle> triangles;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (edge_rank(i, j) < 0) continue;
            for (int k = j + 1; k < n; ++k) {
                if (edge_rank(i, k) < 0 || edge_rank(j, k) < 0) continue;
                const double v = std::max({d(i, j), d(i, k), d(j, k)});
                triangles.push_back({v, i, j, k});
            }
        }
    }
    std::sort(triangles.begin(), triangles.end(), [](const Triangle& a, const Triangle& b) {
        return std::tie(a.value, a.i, a.j, a.k) < std::tie(b.value, b.i, b.j, b.k);
    });

    std::vector<PersistencePair> pairs;
    std::vector<long> pivot_owner(m, -1);  // edge rank -> index into stored columns
    std::vector<BitColumn> stored;
    stored.reserve(triangles.size() / 2);

    for (const auto& t : triangles) {
        BitColumn col(m);
        col.set(static_cast<size_t>(edge_rank(t.i, t.j)));
        col.set(static_cast<size_t>(edge_rank(t.i, t.k)));
        col.set(static_cast<size_t>(edge_rank(t.j, t.k)));

        long low = col.low();
        while (low >= 0 && pivot_owner[low] >= 0) {
            col.xor_with(stored[pivot_owner[low]]);
            low = col.low();
        }
        if (low >= 0) {
            const double birth = edges[low].value;
            if (t.value > birth) pairs.push_back({1, birth, t.value});
            pivot_owner[low] = static_cast<long>(stored.size());
            stored.push_back(std::move(col));
        }
        // A zero column would start a 2-cycle; irrelevant below dimension 2.
    }

    if (max_epsilon) {
        // Cycle-creating edges never killed within the capped filtration.
        UnionFind uf(n);
        for (size_t r = 0; r < m; ++r) {
            if (!uf.unite(edges[r].i, edges[r].j) && pivot_owner[r] < 0) {
                pairs.push_back({1, edges[r].value, kInfiniteDeath});
            }
        }
    }

    std::sort(pairs.begin(), pairs.end(), pair_less);
    return pairs;
}

PersistenceDiagram compute_diagram(const DistanceMatrix& d, const FiltrationBudget& budget) {
    if (budget.max_dim < 0 || budget.max_dim > 1) {
        throw DataError("filtration budget supports homology dimensions 0 and 1, got max_dim=" +
                        std::to_string(budget.max_dim));
    }
    PersistenceDiagram diag;
    diag.n_points = d.size();
    diag.pairs = compute_h0(d, budget.max_epsilon);
    if (budget.max_dim >= 1) {
        auto h1 = compute_h1(d, budget.max_epsilon);
        diag.pairs.insert(diag.pairs.end(), h1.begin(), h1.end());
    }
    std::sort(diag.pairs.begin(), diag.pairs.end(), pair_less);
    return diag;
}

int betti_at(const PersistenceDiagram& diag, double eps, int dim) {
    if (eps < 0.0) throw DataError("betti query scale must be non-negative");
    int count = 0;
    for (const auto& p : diag.pairs) {
        if (p.dim == dim && p.birth <= eps && eps < p.death) ++count;
    }
    return count;
}

namespace {

struct Simplex {
    double value;
    int dim;
    std::array<int, 3> verts;  // padded with -1 below dim 2
};

}  // namespace

PersistenceDiagram brute_force_diagram(const DistanceMatrix& d, const FiltrationBudget& budget) {
    const int n = d.size();
    if (n > 12) {
        throw InputTooLargeError("brute-force reduction is limited to 12 points, got " +
                                 std::to_string(n));
    }
    if (budget.max_dim < 0 || budget.max_dim > 1) {
        throw DataError("filtration budget supports homology dimensions 0 and 1, got max_dim=" +
                        std::to_string(budget.max_dim));
    }
    const auto cap = budget.max_epsilon;
    auto admitted = [&](double v) { return !cap || v <= *cap; };

    std::vector<Simplex> simplices;
    for (int i = 0; i < n; ++i) simplices.push_back({0.0, 0, {i, -1, -1}});
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (admitted(d(i, j))) simplices.push_back({d(i, j), 1, {i, j, -1}});
    if (budget.max_dim >= 1) {
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                for (int k = j + 1; k < n; ++k) {
                    const double v = std::max({d(i, j), d(i, k), d(j, k)});
                    if (admitted(v)) simplices.push_back({v, 2, {i, j, k}});
                }
    }
    std::sort(simplices.begin(), simplices.end(), [](const Simplex& a, const Simplex& b) {
        return std::tie(a.value, a.dim, a.verts) < std::tie(b.value, b.dim, b.verts);
    });

    const size_t total = simplices.size();
    std::vector<size_t> index_of(total);
    auto find_simplex = [&](int dim, std::array<int, 3> verts) -> size_t {
        for (size_t s = 0; s < total; ++s) {
            if (simplices[s].dim == dim && simplices[s].verts == verts) return s;
        }
        throw DataError("face lookup failed in brute-force reduction");
    };

    // Columns as sorted index vectors over Z/2.
    std::vector<std::vector<size_t>> columns(total);
    for (size_t s = 0; s < total; ++s) {
        const auto& sx = simplices[s];
        if (sx.dim == 1) {
            columns[s] = {find_simplex(0, {sx.verts[0], -1, -1}),
                          find_simplex(0, {sx.verts[1], -1, -1})};
        } else if (sx.dim == 2) {
            columns[s] = {find_simplex(1, {sx.verts[0], sx.verts[1], -1}),
                          find_simplex(1, {sx.verts[0], sx.verts[2], -1}),
                          find_simplex(1, {sx.verts[1], sx.verts[2], -1})};
        }
        std::sort(columns[s].begin(), columns[s].end());
    }

    auto symmetric_difference = [](const std::vector<size_t>& a, const std::vector<size_t>& b) {
        std::vector<size_t> out;
        std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(),
                                      std::back_inserter(out));
        return out;
    };

    std::vector<long> pivot_of_row(total, -1);
    std::vector<bool> row_is_pivot(total, false);
    PersistenceDiagram diag;
    diag.n_points = n;

    for (size_t j = 0; j < total; ++j) {
        auto& col = columns[j];
        while (!col.empty() && pivot_of_row[col.back()] >= 0) {
            col = symmetric_difference(col, columns[pivot_of_row[col.back()]]);
        }
        if (!col.empty()) {
            const size_t i = col.back();
            pivot_of_row[i] = static_cast<long>(j);
            row_is_pivot[i] = true;
            const int feature_dim = simplices[i].dim;
            if (feature_dim <= budget.max_dim && simplices[j].value > simplices[i].value) {
                diag.pairs.push_back({feature_dim, simplices[i].value, simplices[j].value});
            }
        }
    }
    // Positive simplices never used as a pivot row carry essential classes.
    for (size_t s = 0; s < total; ++s) {
        if (columns[s].empty() && !row_is_pivot[s] && simplices[s].dim <= budget.max_dim) {
            diag.pairs.push_back({simplices[s].dim, simplices[s].value, kInfiniteDeath});
        }
    }

    std::sort(diag.pairs.begin(), diag.pairs.end(), pair_less);
    return diag;
}

}  // namespace topo
