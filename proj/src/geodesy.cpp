#include "topo/geodesy.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <cstdlib>
#include <string>
#include <thread>

namespace topo {

namespace {

constexpr double kPi = 3.14159265358979323846;

double deg2rad(double d) { return d * kPi / 180.0; }

}  // namespace

void validate_coordinate(const GeoCoordinate& c) {
    if (!std::isfinite(c.latitude_deg) || !std::isfinite(c.longitude_deg)) {
        throw DataError("coordinate has non-finite component");
    }
    if (c.latitude_deg < -90.0 || c.latitude_deg > 90.0) {
        throw DataError("latitude out of range [-90, 90]: " + std::to_string(c.latitude_deg));
    }
    if (c.longitude_deg < -180.0 || c.longitude_deg > 180.0) {
        throw DataError("longitude out of range [-180, 180]: " + std::to_string(c.longitude_deg));
    }
}

double haversine_distance(const GeoCoordinate& a, const GeoCoordinate& b) {
    const double phi1 = deg2rad(a.latitude_deg);
    const double phi2 = deg2rad(b.latitude_deg);
    const double dphi = phi2 - phi1;
    const double dlam = deg2rad(b.longitude_deg - a.longitude_deg);
    const double s1 = std::sin(dphi / 2.0);
    const double s2 = std::sin(dlam / 2.0);
    const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
    return 2.0 * kWgs84SemiMajorM * std::asin(std::min(1.0, std::sqrt(h)));
}

double vincenty_distance(const GeoCoordinate& a_in, const GeoCoordinate& b_in,
                         const VincentyOptions& opts) {
    validate_coordinate(a_in);
    validate_coordinate(b_in);

    // Canonical endpoint order makes the result bitwise symmetric.
    GeoCoordinate a = a_in, b = b_in;
    if (std::tie(b.latitude_deg, b.longitude_deg) < std::tie(a.latitude_deg, a.longitude_deg)) {
        std::swap(a, b);
    }

    if (a.latitude_deg == b.latitude_deg && a.longitude_deg == b.longitude_deg) {
        return 0.0;
    }

    const double f = kWgs84Flattening;
    const double big_a = kWgs84SemiMajorM;
    const double big_b = big_a * (1.0 - f);  // semi-minor axis

    const double u1 = std::atan((1.0 - f) * std::tan(deg2rad(a.latitude_deg)));
    const double u2 = std::atan((1.0 - f) * std::tan(deg2rad(b.latitude_deg)));
    const double big_l = deg2rad(b.longitude_deg - a.longitude_deg);

    const double sin_u1 = std::sin(u1), cos_u1 = std::cos(u1);
    const double sin_u2 = std::sin(u2), cos_u2 = std::cos(u2);

    double lambda = big_l;
    double sin_sigma = 0.0, cos_sigma = 0.0, sigma = 0.0;
    double cos_sq_alpha = 0.0, cos_2sigma_m = 0.0;
    bool converged = false;

    for (int it = 0; it < opts.max_iterations; ++it) {
        const double sin_lambda = std::sin(lambda);
        const double cos_lambda = std::cos(lambda);
        const double t1 = cos_u2 * sin_lambda;
        const double t2 = cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lambda;
        sin_sigma = std::sqrt(t1 * t1 + t2 * t2);
        if (sin_sigma == 0.0) return 0.0;  // coincident points
        cos_sigma = sin_u1 * sin_u2 + cos_u1 * cos_u2 * cos_lambda;
        sigma = std::atan2(sin_sigma, cos_sigma);
        const double sin_alpha = cos_u1 * cos_u2 * sin_lambda / sin_sigma;
        cos_sq_alpha = 1.0 - sin_alpha * sin_alpha;
        // Equatorial geodesic: cos^2(alpha) = 0.
        cos_2sigma_m = cos_sq_alpha != 0.0
                           ? cos_sigma - 2.0 * sin_u1 * sin_u2 / cos_sq_alpha
                           : 0.0;
        const double c = f / 16.0 * cos_sq_alpha * (4.0 + f * (4.0 - 3.0 * cos_sq_alpha));
        const double lambda_prev = lambda;
        lambda = big_l + (1.0 - c) * f * sin_alpha *
                             (sigma + c * sin_sigma *
                                          (cos_2sigma_m +
                                           c * cos_sigma *
                                               (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m)));
        if (std::abs(lambda - lambda_prev) < opts.tolerance_rad) {
            converged = true;
            break;
        }
    }

    if (!converged) {
        if (opts.haversine_fallback) return haversine_distance(a, b);
        throw NonConvergenceError("vincenty inverse did not converge after " +
                                  std::to_string(opts.max_iterations) +
                                  " iterations (near-antipodal pair)");
    }

    const double u_sq = cos_sq_alpha * (big_a * big_a - big_b * big_b) / (big_b * big_b);
    const double coef_a =
        1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
    const double coef_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
    const double delta_sigma =
        coef_b * sin_sigma *
        (cos_2sigma_m +
         coef_b / 4.0 *
             (cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m) -
              coef_b / 6.0 * cos_2sigma_m * (-3.0 + 4.0 * sin_sigma * sin_sigma) *
                  (-3.0 + 4.0 * cos_2sigma_m * cos_2sigma_m)));

    return big_b * coef_a * (sigma - delta_sigma);
}

DistanceMatrix::DistanceMatrix(int n, std::vector<double> entries)
    : n_(n), entries_(std::move(entries)) {
    if (n_ < 0 || entries_.size() != static_cast<size_t>(n_) * n_) {
        throw DataError("distance matrix entries do not match size " + std::to_string(n_));
    }
}

int worker_thread_cap() {
    if (const char* env = std::getenv("TOPO_ENSEMBLE_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

DistanceMatrix build_distance_matrix(const std::vector<GeoCoordinate>& sensors,
                                     const VincentyOptions& opts) {
    const int n = static_cast<int>(sensors.size());
    if (n < 2) throw DataError("degenerate network: need at least 2 sensors, got " +
                               std::to_string(n));
    for (const auto& s : sensors) validate_coordinate(s);

    std::vector<double> entries(static_cast<size_t>(n) * n, 0.0);
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);

    const int threads = std::min<int>(worker_thread_cap(), static_cast<int>(pairs.size()));
    std::exception_ptr first_error;
    std::vector<std::thread> workers;
    auto run_chunk = [&](size_t begin, size_t end, std::exception_ptr* err) {
        try {
            for (size_t k = begin; k < end; ++k) {
                const auto [i, j] = pairs[k];
                double d;
                try {
                    d = vincenty_distance(sensors[i], sensors[j], opts);
                } catch (const NonConvergenceError& e) {
                    throw NonConvergenceError(std::string(e.what()) + " for sensor pair (" +
                                                  std::to_string(i) + ", " + std::to_string(j) +
                                                  ")",
                                              i, j);
                }
                entries[static_cast<size_t>(i) * n + j] = d;
                entries[static_cast<size_t>(j) * n + i] = d;
            }
        } catch (...) {
            *err = std::current_exception();
        }
    };

    if (threads <= 1) {
        run_chunk(0, pairs.size(), &first_error);
    } else {
        std::vector<std::exception_ptr> errs(threads);
        const size_t chunk = (pairs.size() + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            const size_t begin = std::min(pairs.size(), t * chunk);
            const size_t end = std::min(pairs.size(), begin + chunk);
            workers.emplace_back(run_chunk, begin, end, &errs[t]);
        }
        for (auto& w : workers) w.join();
        for (auto& e : errs)
            if (e && !first_error) first_error = e;
    }
    if (first_error) std::rethrow_exception(first_error);

    return DistanceMatrix(n, std::move(entries));
}

DistanceMatrix distance_matrix_from_points(const std::vector<std::vector<double>>& points) {
    const int n = static_cast<int>(points.size());
    if (n < 2) throw DataError("degenerate network: need at least 2 points");
    std::vector<double> entries(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (points[i].size() != points[j].size()) {
                throw DataError("points have mismatched dimensions");
            }
            double s = 0.0;
            for (size_t d = 0; d < points[i].size(); ++d) {
                const double diff = points[i][d] - points[j][d];
                s += diff * diff;
            }
            const double dist = std::sqrt(s);
            entries[static_cast<size_t>(i) * n + j] = dist;
            entries[static_cast<size_t>(j) * n + i] = dist;
        }
    }
    return DistanceMatrix(n, std::move(entries));
}

}  // namespace topo
