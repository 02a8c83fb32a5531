#include "restrav/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "restrav/error.hpp"
#include "restrav/random.hpp"

namespace restrav {
namespace fs = std::filesystem;

namespace {

void normalize(std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
}

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    double n = 0.0;
    do {
        for (double& x : v) x = rng.normal();
        n = 0.0;
        for (double x : v) n += x * x;
    } while (n < 1e-20);
    normalize(v);
    return v;
}

}  // namespace

EmbeddingTrajectory random_walk(const WalkSpec& spec, std::uint64_t seed) {
    if (spec.dim < 2) throw Error(ErrorCode::ConfigInvalid, "random walk needs dim >= 2");
    if (spec.frames < 2) throw Error(ErrorCode::ConfigInvalid, "random walk needs >= 2 frames");
    Rng rng(seed);
    const std::size_t d = spec.dim;
    std::vector<double> pos(d);
    for (double& x : pos) x = rng.normal();
    auto u = random_unit(rng, d);

    EmbeddingTrajectory t;
    t.frames = spec.frames;
    t.dim = d;
    t.backend_id = "synthetic-walk";
    t.layout = {1, static_cast<std::uint32_t>(d)};
    t.values.reserve(spec.frames * d);
    auto emit = [&] {
        for (double x : pos) t.values.push_back(static_cast<float>(x));
    };
    emit();
    for (std::size_t i = 1; i < spec.frames; ++i) {
        if (i > 1) {
            const double a = std::clamp(rng.normal(spec.angle_mean_deg, spec.angle_sd_deg), 0.0, 180.0) *
                             std::numbers::pi / 180.0;
            auto w = random_unit(rng, d);
            double proj = 0.0;
            for (std::size_t j = 0; j < d; ++j) proj += w[j] * u[j];
            for (std::size_t j = 0; j < d; ++j) w[j] -= proj * u[j];
            normalize(w);
            for (std::size_t j = 0; j < d; ++j) u[j] = std::cos(a) * u[j] + std::sin(a) * w[j];
            normalize(u);
        }
        const double step = std::max(rng.normal(spec.step_mean, spec.step_sd), 1e-3);
        for (std::size_t j = 0; j < d; ++j) pos[j] += step * u[j];
        emit();
    }
    return t;
}

Manifest write_synthetic_dataset(const fs::path& dir, const SyntheticDatasetSpec& spec) {
    if (spec.generators.empty()) throw Error(ErrorCode::ConfigInvalid, "need at least one generator name");
    for (const auto& g : spec.generators) {
        if (g == kNaturalGenerator) throw Error(ErrorCode::ConfigInvalid, "generator name 'natural' is reserved");
    }
    fs::create_directories(dir);
    Manifest m;
    m.base_dir = dir;

    auto add = [&](const std::string& id, const std::string& generator, double angle_mean, const std::string& split,
                   std::optional<std::string> pair_id) {
        WalkSpec w;
        w.frames = spec.frames;
        w.dim = spec.dim;
        w.angle_mean_deg = angle_mean;
        w.angle_sd_deg = spec.angle_sd_deg;
        const auto traj = random_walk(w, fnv1a(id, spec.seed * 0x9E3779B97F4A7C15ULL + 1));
        const std::string file = id + ".emb";
        store_embeddings(dir / file, traj);
        VideoRecord r;
        r.id = id;
        r.source = file;
        r.generator = generator;
        r.label = generator == kNaturalGenerator ? VideoLabel::natural : VideoLabel::generated;
        r.split = split;
        r.pair_id = std::move(pair_id);
        if (spec.fps > 0.0) {
            r.fps = spec.fps;
            r.duration_s = static_cast<double>(spec.frames) / spec.fps;
        }
        m.records.push_back(std::move(r));
    };
    auto gen_angle = [&](std::size_t g) {
        return spec.natural_angle_deg + spec.gap_deg + spec.generator_spread_deg * static_cast<double>(g);
    };
    char buf[64];

    if (spec.pairs) {
        for (std::size_t i = 0; i < spec.natural; ++i) {
            const std::size_t g = i % spec.generators.size();
            std::snprintf(buf, sizeof buf, "pair%05zu", i);
            const std::string pid = buf;
            add(pid + "_nat", kNaturalGenerator, spec.natural_angle_deg, "test", pid);
            add(pid + "_" + spec.generators[g], spec.generators[g], gen_angle(g), "test", pid);
        }
        m.save(dir / "manifest.jsonl");
        return m;
    }

    // Stratified split: the first round(fraction * n) of each class go to train.
    auto split_of = [&](std::size_t i, std::size_t n) {
        return static_cast<double>(i) < std::round(spec.train_fraction * static_cast<double>(n)) ? "train" : "test";
    };
    for (std::size_t i = 0; i < spec.natural; ++i) {
        std::snprintf(buf, sizeof buf, "nat%05zu", i);
        add(buf, kNaturalGenerator, spec.natural_angle_deg, split_of(i, spec.natural), std::nullopt);
    }
    for (std::size_t g = 0; g < spec.generators.size(); ++g) {
        for (std::size_t i = 0; i < spec.generated_per_generator; ++i) {
            std::snprintf(buf, sizeof buf, "_%05zu", i);
            add(spec.generators[g] + buf, spec.generators[g], gen_angle(g),
                split_of(i, spec.generated_per_generator), std::nullopt);
        }
    }
    m.save(dir / "manifest.jsonl");
    return m;
}

}  // namespace restrav
