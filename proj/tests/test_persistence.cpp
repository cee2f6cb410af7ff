#include <cmath>
#include <random>

#include <doctest.h>

#include "helpers.hpp"
#include "topo/persistence.hpp"

using namespace topo;
using namespace test_helpers;

TEST_CASE("h0: two points merge at their distance") {
    const auto d = distance_matrix_from_points({{0.0}, {2.5}});
    const auto pairs = compute_h0(d);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].dim == 0);
    CHECK(pairs[0].birth == 0.0);
    CHECK(pairs[0].death == doctest::Approx(2.5));
    CHECK(pairs[1].is_infinite());
}

TEST_CASE("h0: collinear points match the Kruskal oracle") {
    const auto d = distance_matrix_from_points({{0.0}, {1.0}, {3.0}});
    const auto pairs = compute_h0(d);
    const auto deaths = finite_deaths(pairs);
    REQUIRE(deaths.size() == 2);
    CHECK(deaths[0] == doctest::Approx(1.0));
    CHECK(deaths[1] == doctest::Approx(2.0));
    CHECK(deaths == kruskal_mst_weights(d));
}

TEST_CASE("h0: unit square has three unit deaths") {
    const auto pairs = compute_h0(unit_square());
    const auto deaths = finite_deaths(pairs);
    REQUIRE(deaths.size() == 3);
    for (double w : deaths) CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
    int infinite = 0;
    for (const auto& p : pairs) infinite += p.is_infinite() ? 1 : 0;
    CHECK(infinite == 1);
}

TEST_CASE("h0/MST duality on random clouds") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 28);
        const auto d = distance_matrix_from_points(random_cloud(n, 2, rng));
        const auto deaths = finite_deaths(compute_h0(d));
        const auto mst = kruskal_mst_weights(d);
        REQUIRE(deaths.size() == mst.size());
        for (size_t i = 0; i < mst.size(); ++i) {
            CHECK(std::abs(deaths[i] - mst[i]) <= 1e-12);
        }
    }
}

TEST_CASE("h1: triangles carry no persistent loop") {
    const auto d = distance_matrix_from_points({{0.0, 0.0}, {1.0, 0.0}, {0.3, 0.9}});
    CHECK(compute_h1(d).empty());
}

TEST_CASE("h1: unit square loop dies at the diagonal") {
    const auto pairs = compute_h1(unit_square());
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].dim == 1);
    CHECK(pairs[0].birth == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pairs[0].death == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("h1: regular hexagon loop born at the side length") {
    std::vector<std::vector<double>> pts;
    for (int k = 0; k < 6; ++k) {
        const double a = 2.0 * 3.14159265358979323846 * k / 6.0;
        pts.push_back({std::cos(a), std::sin(a)});
    }
    const auto d = distance_matrix_from_points(pts);
    const auto pairs = compute_h1(d);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].birth == doctest::Approx(1.0).epsilon(1e-9));

    // Cross-checked against the naive reduction, which pins the death too.
    const auto oracle = brute_force_diagram(d);
    bool found = false;
    for (const auto& p : oracle.pairs) {
        if (p.dim == 1) {
            found = true;
            CHECK(pairs[0].birth == doctest::Approx(p.birth).epsilon(1e-12));
            CHECK(pairs[0].death == doctest::Approx(p.death).epsilon(1e-12));
        }
    }
    CHECK(found);
    CHECK(pairs[0].death == doctest::Approx(std::sqrt(3.0)).epsilon(1e-9));
}

TEST_CASE("diagram: two points") {
    const auto diag = compute_diagram(distance_matrix_from_points({{0.0}, {1.0}}));
    CHECK(diag.pairs.size() == 2);
    for (const auto& p : diag.pairs) CHECK(p.dim == 0);
}

TEST_CASE("diagram: unit square composition and determinism") {
    const auto diag = compute_diagram(unit_square());
    int h0 = 0, h1 = 0;
    for (const auto& p : diag.pairs) (p.dim == 0 ? h0 : h1) += 1;
    CHECK(h0 == 4);
    CHECK(h1 == 1);

    const auto again = compute_diagram(unit_square());
    REQUIRE(again.pairs.size() == diag.pairs.size());
    for (size_t i = 0; i < diag.pairs.size(); ++i) {
        CHECK(diag.pairs[i] == again.pairs[i]);
        if (i > 0) CHECK(!pair_less(diag.pairs[i], diag.pairs[i - 1]));
    }
}

TEST_CASE("diagram: 39 generic points have 38 finite component deaths") {
    std::mt19937_64 rng(1234);
    const auto d = distance_matrix_from_points(random_cloud(39, 2, rng));
    const auto diag = compute_diagram(d);
    int finite_h0 = 0;
    for (const auto& p : diag.pairs) {
        if (p.dim == 0 && !p.is_infinite()) ++finite_h0;
    }
    CHECK(finite_h0 == 38);
}

TEST_CASE("betti: unit square queries") {
    const auto diag = compute_diagram(unit_square());
    CHECK(betti_at(diag, 0.5, 0) == 4);
    CHECK(betti_at(diag, 1.2, 1) == 1);
    CHECK(betti_at(diag, 1.5, 1) == 0);
    CHECK_THROWS_AS(betti_at(diag, -1.0, 0), DataError);
}

TEST_CASE("betti: three components and one loop at mid scale") {
    // Unit square plus two isolated points far away.
    const auto d = distance_matrix_from_points({{0.0, 0.0},
                                                {1.0, 0.0},
                                                {1.0, 1.0},
                                                {0.0, 1.0},
                                                {10.0, 0.0},
                                                {20.0, 0.0}});
    const auto diag = compute_diagram(d);
    CHECK(betti_at(diag, 1.2, 0) == 3);
    CHECK(betti_at(diag, 1.2, 1) == 1);
}

TEST_CASE("betti: component count is non-increasing in scale") {
    std::mt19937_64 rng(31);
    const auto d = distance_matrix_from_points(random_cloud(10, 2, rng));
    const auto diag = compute_diagram(d);
    int prev = betti_at(diag, 0.0, 0);
    for (double eps = 0.05; eps < 2.0; eps += 0.05) {
        const int cur = betti_at(diag, eps, 0);
        CHECK(cur <= prev);
        prev = cur;
    }
}

TEST_CASE("brute force: guard rejects more than 12 points") {
    std::mt19937_64 rng(37);
    const auto d = distance_matrix_from_points(random_cloud(13, 2, rng));
    CHECK_THROWS_AS(brute_force_diagram(d), InputTooLargeError);
}

TEST_CASE("brute force: agrees with compute_diagram on random clouds") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 12; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 8);
        const auto d = distance_matrix_from_points(random_cloud(n, 2, rng));
        CHECK(diagrams_match(compute_diagram(d), brute_force_diagram(d), 1e-9));
    }
}

TEST_CASE("capped filtration: infinite classes appear") {
    FiltrationBudget budget;
    budget.max_epsilon = 0.9;  // below the square's merges
    const auto diag = compute_diagram(unit_square(), budget);
    int infinite_h0 = 0;
    for (const auto& p : diag.pairs) {
        if (p.dim == 0 && p.is_infinite()) ++infinite_h0;
    }
    CHECK(infinite_h0 == 4);  // nothing merges below eps 1

    // Capped above the diameter: no infinite loops anywhere.
    FiltrationBudget full;
    full.max_epsilon = 2.0;
    const auto full_diag = compute_diagram(unit_square(), full);
    for (const auto& p : full_diag.pairs) {
        if (p.dim == 1) CHECK(!p.is_infinite());
    }
    CHECK(diagrams_match(full_diag, brute_force_diagram(unit_square(), full), 1e-12));
}

TEST_CASE("stability: small perturbations move the diagram at most 2*delta") {
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double delta = 0.01;
    const std::vector<std::vector<double>> base = {
        {0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};

    auto perturb = [&]() {
        auto pts = base;
        for (auto& p : pts) {
            double dx = unit(rng), dy = unit(rng);
            const double norm = std::sqrt(dx * dx + dy * dy);
            if (norm > 0.0) {
                dx *= delta / norm;
                dy *= delta / norm;
            }
            p[0] += dx;
            p[1] += dy;
        }
        return pts;
    };

    const auto ref = compute_diagram(distance_matrix_from_points(base));
    for (int trial = 0; trial < 10; ++trial) {
        const auto moved = compute_diagram(distance_matrix_from_points(perturb()));
        REQUIRE(moved.pairs.size() == ref.pairs.size());
        for (size_t i = 0; i < ref.pairs.size(); ++i) {
            CHECK(ref.pairs[i].dim == moved.pairs[i].dim);
            CHECK(std::abs(ref.pairs[i].birth - moved.pairs[i].birth) <= 2.0 * delta + 1e-12);
            if (!ref.pairs[i].is_infinite()) {
                CHECK(std::abs(ref.pairs[i].death - moved.pairs[i].death) <= 2.0 * delta + 1e-12);
            }
        }
    }
}

TEST_CASE("filtration budget validates max_dim") {
    CHECK_THROWS_AS(compute_diagram(unit_square(), FiltrationBudget{2, {}}), DataError);
}
