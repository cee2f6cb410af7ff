#pragma once

#include <cstddef>
#include <vector>

#include "topo/errors.hpp"

namespace topo {

// WGS-84 ellipsoid.
inline constexpr double kWgs84SemiMajorM = 6378137.0;
inline constexpr double kWgs84Flattening = 1.0 / 298.257223563;

struct GeoCoordinate {
    double latitude_deg;
    double longitude_deg;
};

// Throws DataError if the coordinate is non-finite or out of range.
void validate_coordinate(const GeoCoordinate& c);

struct VincentyOptions {
    int max_iterations = 200;
    double tolerance_rad = 1e-12;
    // On non-convergence fall back to the spherical great-circle distance
    // instead of throwing NonConvergenceError.
    bool haversine_fallback = false;
};

// Iterative inverse geodesic on the WGS-84 ellipsoid, in meters.
double vincenty_distance(const GeoCoordinate& a, const GeoCoordinate& b,
                         const VincentyOptions& opts = {});

// Spherical fallback with radius = WGS-84 semi-major axis.
double haversine_distance(const GeoCoordinate& a, const GeoCoordinate& b);

// Symmetric pairwise geodesic distance matrix with zero diagonal.
// Each pair is computed once and mirrored, so symmetry is exact.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    DistanceMatrix(int n, std::vector<double> entries);

    int size() const { return n_; }
    double operator()(int i, int j) const { return entries_[static_cast<size_t>(i) * n_ + j]; }
    const std::vector<double>& entries() const { return entries_; }

private:
    int n_ = 0;
    std::vector<double> entries_;
};

// Pairs may be evaluated on several worker threads (each writes disjoint
// cells); thread count is capped by TOPO_ENSEMBLE_THREADS.
DistanceMatrix build_distance_matrix(const std::vector<GeoCoordinate>& sensors,
                                     const VincentyOptions& opts = {});

// Build directly from a Euclidean point cloud; used by tests and synthetic
// planar fixtures where geographic coordinates are irrelevant.
DistanceMatrix distance_matrix_from_points(const std::vector<std::vector<double>>& points);

// Worker cap from TOPO_ENSEMBLE_THREADS (>=1); defaults to hardware concurrency.
int worker_thread_cap();

}  // namespace topo
