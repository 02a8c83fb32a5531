#pragma once

// Evaluation metrics. Positive class = generated (label 1). Rates are fractions.

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace restrav {

struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

ConfusionMatrix confusion(std::span<const int> labels, std::span<const double> scores, double tau);

// Rank-based AUROC with average ranks for ties: P(s_gen > s_nat) + 0.5 P(equal).
double auroc(std::span<const double> scores, std::span<const int> labels);

// Uninterpolated AP over the descending score sweep; tied scores are one block.
double average_precision(std::span<const double> scores, std::span<const int> labels);

struct MapResult {
    double map = 0.0;
    std::map<std::string, double> per_generator;
};

// AP of each generator's videos against all natural videos (generator tag "natural"),
// averaged without weights. `required` generators must be present (MissingGenerator).
MapResult map_over_generators(std::span<const double> scores, std::span<const int> labels,
                              std::span<const std::string> generators,
                              std::span<const std::string> required = {});

struct LatencySample {
    double encode_ms = 0.0;
    double classify_ms = 0.0;
};

// Mean of encode + classify over the samples.
double latency_report(std::span<const LatencySample> samples);

struct MetricsReport {
    double acc = 0, balanced_acc = 0, specificity = 0;
    double precision_gen = 0, recall_gen = 0, f1_gen = 0;
    double auroc = 0, ap = 0;
    double latency_ms_mean = 0;
    std::size_t count = 0;
    ConfusionMatrix confusion;

    nlohmann::json to_json() const;
};

// Threshold metrics at tau. Quantities that are undefined for the input (AUROC with a
// single class, precision with no positive predictions) are NaN and serialise as null.
MetricsReport compute_metrics(std::span<const double> scores, std::span<const int> labels, double tau);

struct CurvePoint {
    double threshold, x, y;
};

// (threshold, fpr, tpr) including the (inf, 0, 0) start point.
std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const int> labels);
// (threshold, recall, precision) at each tie block.
std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const int> labels);

void write_roc_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& roc);
void write_pr_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& pr);

}  // namespace restrav
