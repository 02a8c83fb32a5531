#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "restrav/geometry.hpp"

namespace restrav {

inline constexpr std::size_t kLeadDistances = 7;
inline constexpr std::size_t kLeadCurvatures = 6;
inline constexpr std::size_t kStatCount = 8;
inline constexpr std::size_t kFeatureCount = kLeadDistances + kLeadCurvatures + kStatCount;  // 21

// Population (divide-by-count) statistics over the full signals.
struct AggregateStats {
    double mu_d = 0, min_d = 0, max_d = 0, var_d = 0;
    double mu_theta = 0, min_theta = 0, max_theta = 0, var_theta = 0;

    // [mu_d, min_d, max_d, var_d, mu_theta, min_theta, max_theta, var_theta]
    std::array<double, 8> as_array() const {
        return {mu_d, min_d, max_d, var_d, mu_theta, min_theta, max_theta, var_theta};
    }
};

AggregateStats aggregate_stats(const GeometrySignals& sig);

struct FeatureVector {
    // [d_1..d_nd, theta_1..theta_nt, mu_d, var_d, min_d, max_d, mu_theta, var_theta, min_theta, max_theta]
    std::vector<double> values;
    std::string source_id;
};

FeatureVector build_feature_vector(const GeometrySignals& sig, std::size_t n_d = kLeadDistances,
                                   std::size_t n_theta = kLeadCurvatures);

// Layout string recorded in feature sidecars and model files.
std::string feature_layout(std::size_t n_d = kLeadDistances, std::size_t n_theta = kLeadCurvatures);
std::vector<std::string> feature_names(std::size_t n_d = kLeadDistances, std::size_t n_theta = kLeadCurvatures);

struct FeatureRow {
    std::string source_id;
    std::optional<int> label;      // 0 natural, 1 generated
    std::string generator;
    std::vector<double> values;
};

struct FeatureTable {
    std::string layout = feature_layout();
    std::vector<FeatureRow> rows;
    nlohmann::json sampling = nlohmann::json::object();
    // (source_id, message) for inputs that failed to featurize
    std::vector<std::pair<std::string, std::string>> errors;
};

// CSV "source_id,label,generator,f00..f20" plus "<csv>.json" sidecar with layout and sampling.
void write_feature_csv(const std::filesystem::path& path, const FeatureTable& table);
FeatureTable read_feature_csv(const std::filesystem::path& path);

}  // namespace restrav
