#include "restrav/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "restrav/error.hpp"

namespace restrav {
namespace {

template <typename Real>
void difference(std::span<const Real> next, std::span<const Real> prev, std::span<double> out) {
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = static_cast<double>(next[k]) - static_cast<double>(prev[k]);
    }
}

void require_frames(std::size_t frames, std::size_t needed, const char* what) {
    if (frames < needed) {
        throw Error(ErrorCode::TooFewFrames, std::string(what) + " needs at least " + std::to_string(needed) +
                                                 " frames, got " + std::to_string(frames));
    }
}

}  // namespace

// Four independent partial sums keep the dependency chain short on long (D ~ 75k) rows.
double dot(std::span<const double> a, std::span<const double> b) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    const std::size_t n = a.size();
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    for (; k < n; ++k) s0 += a[k] * b[k];
    return (s0 + s1) + (s2 + s3);
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double angle_deg(double dot_product, double norm_a, double norm_b) {
    const double cosine = std::clamp(dot_product / (norm_a * norm_b), -1.0, 1.0);
    return std::acos(cosine) * (180.0 / std::numbers::pi);
}

double angle_between_deg(std::span<const double> a, std::span<const double> b, double norm_a, double norm_b) {
    const double d = dot(a, b);
    const double cosine = d / (norm_a * norm_b);
    if (std::abs(cosine) < kNearParallelCosine) return angle_deg(d, norm_a, norm_b);
    // acos loses about half the digits near 0 and 180 degrees; the half-angle form
    // 2 atan2(|a/|a| - b/|b||, |a/|a| + b/|b||) does not.
    double diff = 0.0, sum = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double u = a[k] / norm_a, v = b[k] / norm_b;
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum)) * (180.0 / std::numbers::pi);
}

template <typename Real>
Matrix displacements(TrajectoryView<Real> z) {
    require_frames(z.frames, 2, "displacements");
    Matrix dz(z.frames - 1, z.dim);
    for (std::size_t i = 0; i + 1 < z.frames; ++i) difference(z.row(i + 1), z.row(i), dz.row(i));
    return dz;
}

Matrix displacements(const EmbeddingTrajectory& z) { return displacements(view(z)); }

std::vector<double> stepwise_distances(const Matrix& dz) {
    if (dz.rows == 0) throw Error(ErrorCode::TooFewFrames, "no displacement vectors");
    std::vector<double> d(dz.rows);
    for (std::size_t i = 0; i < dz.rows; ++i) d[i] = std::sqrt(squared_norm(dz.row(i)));
    return d;
}

std::vector<double> curvatures(const Matrix& dz, std::vector<std::size_t>* degenerate_steps) {
    if (dz.rows < 2) throw Error(ErrorCode::TooFewFrames, "curvature needs at least 2 displacement vectors");
    std::vector<double> norms(dz.rows);
    for (std::size_t i = 0; i < dz.rows; ++i) {
        norms[i] = std::sqrt(squared_norm(dz.row(i)));
        if (degenerate_steps && norms[i] < kDegenerateNorm) degenerate_steps->push_back(i + 1);
    }
    std::vector<double> theta(dz.rows - 1);
    for (std::size_t i = 0; i + 1 < dz.rows; ++i) {
        if (norms[i] < kDegenerateNorm || norms[i + 1] < kDegenerateNorm) {
            theta[i] = 0.0;
            continue;
        }
        theta[i] = angle_between_deg(dz.row(i), dz.row(i + 1), norms[i], norms[i + 1]);
    }
    return theta;
}

template <typename Real>
GeometrySignals compute_signals(TrajectoryView<Real> z) {
    require_frames(z.frames, 3, "curvature");
    GeometrySignals sig;
    sig.distances.resize(z.frames - 1);
    sig.curvatures_deg.resize(z.frames - 2);
    std::vector<double> prev(z.dim), cur(z.dim);
    for (std::size_t i = 0; i + 1 < z.frames; ++i) {
        difference(z.row(i + 1), z.row(i), std::span<double>(cur));
        sig.distances[i] = std::sqrt(squared_norm(cur));
        if (sig.distances[i] < kDegenerateNorm) sig.degenerate_steps.push_back(i + 1);
        if (i > 0) {
            const double a = sig.distances[i - 1], b = sig.distances[i];
            sig.curvatures_deg[i - 1] =
                (a < kDegenerateNorm || b < kDegenerateNorm) ? 0.0 : angle_between_deg(prev, cur, a, b);
        }
        std::swap(prev, cur);
    }
    return sig;
}

GeometrySignals compute_signals(const EmbeddingTrajectory& z) { return compute_signals(view(z)); }

template <typename Real>
double mean_curvature(TrajectoryView<Real> z) {
    const auto sig = compute_signals(z);
    double sum = 0.0;
    for (double t : sig.curvatures_deg) sum += t;
    return sum / static_cast<double>(sig.curvatures_deg.size());
}

double mean_curvature(const EmbeddingTrajectory& z) { return mean_curvature(view(z)); }

template Matrix displacements(TrajectoryView<float>);
template Matrix displacements(TrajectoryView<double>);
template GeometrySignals compute_signals(TrajectoryView<float>);
template GeometrySignals compute_signals(TrajectoryView<double>);
template double mean_curvature(TrajectoryView<float>);
template double mean_curvature(TrajectoryView<double>);

}  // namespace restrav
