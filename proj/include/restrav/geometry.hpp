#pragma once

// Trajectory geometry: displacements, stepwise distances and curvature angles.
//
//   dz_i    = z_{i+1} - z_i                                   i = 0..T-2
//   d_i     = ||dz_i||_2
//   theta_i = acos(clamp(<dz_i, dz_{i+1}> / (d_i d_{i+1}), -1, 1)) * 180 / pi
//
// All accumulation is in double precision regardless of storage type.

#include <cstddef>
#include <span>
#include <vector>

#include "restrav/encoder.hpp"
#include "restrav/matrix.hpp"

namespace restrav {

// Displacement norms below this are degenerate: the curvature at that step is
// zero-filled and the step index recorded.
inline constexpr double kDegenerateNorm = 1e-12;

struct GeometrySignals {
    std::vector<double> distances;             // T-1 values, >= 0
    std::vector<double> curvatures_deg;        // T-2 values in [0, 180]
    std::vector<std::size_t> degenerate_steps; // 1-based displacement indices with norm < kDegenerateNorm
};

// Row-major T x D view over either float or double storage.
template <typename Real>
struct TrajectoryView {
    std::span<const Real> values;
    std::size_t frames = 0;
    std::size_t dim = 0;

    std::span<const Real> row(std::size_t i) const { return values.subspan(i * dim, dim); }
};

inline TrajectoryView<float> view(const EmbeddingTrajectory& t) { return {t.values, t.frames, t.dim}; }
inline TrajectoryView<double> view(const Matrix& m) { return {m.data, m.rows, m.cols}; }

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
// Angle in degrees; the cosine is clamped to [-1, 1] before acos.
double angle_deg(double dot_product, double norm_a, double norm_b);

// Above this |cosine| the angle between two vectors is taken from the half-angle form.
inline constexpr double kNearParallelCosine = 0.99;

// Angle between a and b in degrees (norms supplied). Same value as angle_deg, but
// accurate near 0 and 180 degrees.
double angle_between_deg(std::span<const double> a, std::span<const double> b, double norm_a, double norm_b);

template <typename Real>
Matrix displacements(TrajectoryView<Real> z);
Matrix displacements(const EmbeddingTrajectory& z);

std::vector<double> stepwise_distances(const Matrix& dz);

// Curvature per consecutive displacement pair. degenerate_steps receives the 1-based
// indices of zero-length displacements that forced a zero-filled angle.
std::vector<double> curvatures(const Matrix& dz, std::vector<std::size_t>* degenerate_steps = nullptr);

// Fused single pass (no T x D displacement matrix); bit-identical to the separate ops.
template <typename Real>
GeometrySignals compute_signals(TrajectoryView<Real> z);
GeometrySignals compute_signals(const EmbeddingTrajectory& z);

template <typename Real>
double mean_curvature(TrajectoryView<Real> z);
double mean_curvature(const EmbeddingTrajectory& z);

}  // namespace restrav
