#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "topo/geodesy.hpp"
#include "topo/model.hpp"
#include "topo/persistence.hpp"

namespace test_helpers {

// Independent Kruskal oracle: multiset of MST edge weights of a distance
// matrix. Deliberately separate from the library's union-find path.
inline std::vector<double> kruskal_mst_weights(const topo::DistanceMatrix& d) {
    const int n = d.size();
    struct E {
        double w;
        int a, b;
    };
    std::vector<E> edges;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) edges.push_back({d(i, j), i, j});
    std::sort(edges.begin(), edges.end(), [](const E& x, const E& y) { return x.w < y.w; });

    std::vector<int> comp(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) comp[static_cast<size_t>(i)] = i;
    auto root = [&](int x) {
        while (comp[static_cast<size_t>(x)] != x) x = comp[static_cast<size_t>(x)];
        return x;
    };

    std::vector<double> weights;
    for (const auto& e : edges) {
        const int ra = root(e.a), rb = root(e.b);
        if (ra != rb) {
            comp[static_cast<size_t>(ra)] = rb;
            weights.push_back(e.w);
        }
    }
    std::sort(weights.begin(), weights.end());
    return weights;
}

inline std::vector<std::vector<double>> random_cloud(int n, int dims, std::mt19937_64& rng,
                                                     double scale = 1.0) {
    std::uniform_real_distribution<double> unit(0.0, scale);
    std::vector<std::vector<double>> pts(static_cast<size_t>(n));
    for (auto& p : pts) {
        p.resize(static_cast<size_t>(dims));
        for (auto& x : p) x = unit(rng);
    }
    return pts;
}

// Multiset comparison of two diagrams within a tolerance, per dimension.
inline bool diagrams_match(const topo::PersistenceDiagram& a, const topo::PersistenceDiagram& b,
                           double tol) {
    if (a.pairs.size() != b.pairs.size()) return false;
    auto sorted = [](const topo::PersistenceDiagram& d) {
        auto pairs = d.pairs;
        std::sort(pairs.begin(), pairs.end(), topo::pair_less);
        return pairs;
    };
    const auto pa = sorted(a), pb = sorted(b);
    for (size_t i = 0; i < pa.size(); ++i) {
        if (pa[i].dim != pb[i].dim) return false;
        if (pa[i].is_infinite() != pb[i].is_infinite()) return false;
        if (std::abs(pa[i].birth - pb[i].birth) > tol) return false;
        if (!pa[i].is_infinite() && std::abs(pa[i].death - pb[i].death) > tol) return false;
    }
    return true;
}

inline std::vector<double> finite_deaths(const std::vector<topo::PersistencePair>& pairs) {
    std::vector<double> out;
    for (const auto& p : pairs) {
        if (!p.is_infinite()) out.push_back(p.death);
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline topo::DistanceMatrix unit_square() {
    return topo::distance_matrix_from_points(
        {{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}});
}

// Central differences over every model parameter against tape gradients of
// an arbitrary scalar loss built on a bound model.
inline double model_loss_fd_check(
    topo::EnsembleModel& model,
    const std::function<topo::Var(topo::Tape&, topo::BoundEnsemble&)>& loss_builder,
    double h = 1e-5) {
    using topo::BoundEnsemble;
    using topo::Tape;
    using topo::Tensor;
    using topo::Var;

    std::vector<double> analytic;
    {
        Tape tape;
        BoundEnsemble be = bind_model(tape, model);
        Var loss = loss_builder(tape, be);
        tape.backward(loss);
        for (Var leaf : be.leaves) {
            const Tensor& g = leaf.grad();
            analytic.insert(analytic.end(), g.data.begin(), g.data.end());
        }
    }
    auto eval = [&]() {
        Tape tape;
        BoundEnsemble be = bind_model(tape, model);
        return loss_builder(tape, be).value().data[0];
    };

    double max_err = 0.0;
    size_t flat = 0;
    auto slots = model.collect_params();
    for (auto& slot : slots) {
        for (size_t e = 0; e < slot.tensor->data.size(); ++e, ++flat) {
            const double saved = slot.tensor->data[e];
            slot.tensor->data[e] = saved + h;
            const double up = eval();
            slot.tensor->data[e] = saved - h;
            const double down = eval();
            slot.tensor->data[e] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double an = analytic[flat];
            const double err =
                std::abs(an - numeric) / std::max({1.0, std::abs(an), std::abs(numeric)});
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace test_helpers
