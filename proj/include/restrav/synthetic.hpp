#pragma once

// Synthetic embedding trajectories with controlled turning angles, for
// self-contained tests and demos without an encoder.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "restrav/encoder.hpp"
#include "restrav/harness.hpp"

namespace restrav {

struct WalkSpec {
    std::size_t frames = 24;
    std::size_t dim = 64;
    double angle_mean_deg = 30.0;  // per-step turning angle ~ N(mean, sd), clipped to [0, 180]
    double angle_sd_deg = 5.0;
    double step_mean = 1.0;        // displacement length ~ N(mean, sd), floored at 1e-3
    double step_sd = 0.1;
};

// Random walk whose consecutive displacements meet at exactly the drawn angles
// (up to rounding): u_{i+1} = cos(a) u_i + sin(a) w, with w a random unit vector
// orthogonal to u_i.
EmbeddingTrajectory random_walk(const WalkSpec& spec, std::uint64_t seed);

struct SyntheticDatasetSpec {
    std::size_t natural = 100;
    std::size_t generated_per_generator = 50;
    std::vector<std::string> generators{"gen_a", "gen_b"};
    std::size_t frames = 24;        // rows per file
    std::size_t dim = 64;
    double natural_angle_deg = 30.0;
    double angle_sd_deg = 5.0;
    double gap_deg = 15.0;          // added to the generated angle mean
    double generator_spread_deg = 0.0;  // extra gap per generator index
    double train_fraction = 0.5;
    bool pairs = false;             // matched natural/generated pairs, all in the test split
    double fps = 0.0;               // > 0: files are full-rate sources and records carry fps
    std::uint64_t seed = 0;
};

// Writes one RSTVEMB1 file per video plus manifest.jsonl into `dir` and returns the
// manifest (base_dir = dir).
Manifest write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticDatasetSpec& spec);

}  // namespace restrav
