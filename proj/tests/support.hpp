#pragma once

// Helpers and independent reference implementations for the test suites. The
// references use long double and the most literal formulation available, and share
// no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "restrav/encoder.hpp"
#include "restrav/matrix.hpp"

namespace testing_support {

using Rows = std::vector<std::vector<double>>;

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("restrav_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline Rows random_rows(std::mt19937_64& rng, std::size_t t, std::size_t d, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Rows z(t, std::vector<double>(d));
    for (auto& r : z) for (auto& v : r) v = n(rng);
    return z;
}

inline restrav::Matrix to_matrix(const Rows& z) {
    restrav::Matrix m(z.size(), z.empty() ? 0 : z[0].size());
    for (std::size_t i = 0; i < z.size(); ++i) std::copy(z[i].begin(), z[i].end(), m.row(i).begin());
    return m;
}

inline restrav::EmbeddingTrajectory to_trajectory(const Rows& z) {
    restrav::EmbeddingTrajectory t;
    t.frames = z.size();
    t.dim = z[0].size();
    t.layout = {1, static_cast<std::uint32_t>(t.dim)};
    t.backend_id = "test";
    for (const auto& r : z) for (double v : r) t.values.push_back(static_cast<float>(v));
    return t;
}

// ---- geometry, straight from the definitions ------------------------------------------

inline std::vector<double> ref_distances(const Rows& z) {
    std::vector<double> d;
    for (std::size_t i = 0; i + 1 < z.size(); ++i) {
        long double s = 0;
        for (std::size_t j = 0; j < z[i].size(); ++j) {
            const long double diff = static_cast<long double>(z[i + 1][j]) - z[i][j];
            s += diff * diff;
        }
        d.push_back(static_cast<double>(std::sqrt(s)));
    }
    return d;
}

inline std::vector<double> ref_curvatures(const Rows& z) {
    std::vector<double> th;
    const long double pi = 3.141592653589793238462643383279502884L;
    for (std::size_t i = 0; i + 2 < z.size(); ++i) {
        long double dot = 0, na = 0, nb = 0;
        for (std::size_t j = 0; j < z[i].size(); ++j) {
            const long double a = static_cast<long double>(z[i + 1][j]) - z[i][j];
            const long double b = static_cast<long double>(z[i + 2][j]) - z[i + 1][j];
            dot += a * b;
            na += a * a;
            nb += b * b;
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        if (na < 1e-12L || nb < 1e-12L) {
            th.push_back(0.0);
            continue;
        }
        long double c = dot / (na * nb);
        c = std::max(-1.0L, std::min(1.0L, c));
        th.push_back(static_cast<double>(std::acos(c) * 180.0L / pi));
    }
    return th;
}

struct RefStats {
    double mean, min, max, var;
};

inline RefStats two_pass(const std::vector<double>& x) {
    long double s = 0;
    for (double v : x) s += v;
    const long double m = s / x.size();
    long double ss = 0;
    for (double v : x) ss += (v - m) * (v - m);
    return {static_cast<double>(m), *std::min_element(x.begin(), x.end()), *std::max_element(x.begin(), x.end()),
            static_cast<double>(ss / x.size())};
}

inline double rel_err(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// ---- metrics ------------------------------------------------------------------------------

// P(score_pos > score_neg) + 0.5 P(equal), over all pairs.
inline double pairwise_auroc(const std::vector<double>& s, const std::vector<int>& y) {
    // Half-integer counts are exact in double, so the quotient is correctly rounded.
    double wins = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            ++pairs;
            if (s[i] > s[j]) wins += 1;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

// AP by recounting precision and recall from scratch at each distinct threshold.
inline double sweep_ap(const std::vector<double>& s, const std::vector<int>& y) {
    std::vector<double> thresholds = s;
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    const double pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
    double ap = 0, prev_recall = 0;
    for (double t : thresholds) {
        double tp = 0, flagged = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] >= t) {
                ++flagged;
                tp += y[i];
            }
        }
        const double recall = tp / pos;
        ap += (recall - prev_recall) * (tp / flagged);
        prev_recall = recall;
    }
    return ap;
}

inline double f1_count(const std::vector<double>& s, const std::vector<int>& y, double tau) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const bool p = s[i] >= tau;
        if (p && y[i] == 1) ++tp;
        else if (p) ++fp;
        else if (y[i] == 1) ++fn;
    }
    return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

// ---- statistics ---------------------------------------------------------------------------

inline double pooled_t(const std::vector<double>& x, const std::vector<double>& y) {
    const auto a = two_pass(x), b = two_pass(y);
    const double nx = x.size(), ny = y.size();
    const double sx = a.var * nx / (nx - 1), sy = b.var * ny / (ny - 1);
    const double sp = ((nx - 1) * sx + (ny - 1) * sy) / (nx + ny - 2);
    return (a.mean - b.mean) / std::sqrt(sp * (1 / nx + 1 / ny));
}

inline double student_density(double x, double df) {
    const double c = std::lgamma((df + 1) / 2) - std::lgamma(df / 2) - 0.5 * std::log(df * M_PI);
    return std::exp(c - (df + 1) / 2 * std::log1p(x * x / df));
}

template <typename F>
double adaptive_simpson(F f, double a, double b, double eps, double whole, double fa, double fb, double fm, int depth) {
    const double m = (a + b) / 2, lm = (a + m) / 2, rm = (m + b) / 2;
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6 * (fa + 4 * flm + fm), right = (b - m) / 6 * (fm + 4 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15 * eps) return left + right + (left + right - whole) / 15;
    return adaptive_simpson(f, a, m, eps / 2, left, fa, fm, flm, depth - 1) +
           adaptive_simpson(f, m, b, eps / 2, right, fm, fb, frm, depth - 1);
}

// Two-sided p = 1 - 2 * integral_0^|t| density.
inline double quadrature_t_p(double t, double df) {
    auto f = [df](double x) { return student_density(x, df); };
    const double a = 0, b = std::abs(t);
    const double fa = f(a), fb = f(b), fm = f(b / 2);
    const double whole = b / 6 * (fa + 4 * fm + fb);
    return 1.0 - 2.0 * adaptive_simpson(f, a, b, 1e-13, whole, fa, fb, fm, 50);
}

}  // namespace testing_support
