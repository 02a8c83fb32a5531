#include "restrav/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "restrav/error.hpp"

namespace restrav {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_lengths(std::size_t a, std::size_t b) {
    if (a != b) throw Error(ErrorCode::LengthMismatch, "scores and labels differ in length");
    if (a == 0) throw Error(ErrorCode::LengthMismatch, "empty input");
}

std::vector<std::size_t> descending_order(std::span<const double> scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? kNaN : static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

ConfusionMatrix confusion(std::span<const int> labels, std::span<const double> scores, double tau) {
    check_lengths(scores.size(), labels.size());
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= tau;
        if (labels[i] == 1) (pred ? cm.tp : cm.fn) += 1;
        else (pred ? cm.fp : cm.tn) += 1;
    }
    return cm;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
    check_lengths(scores.size(), labels.size());
    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Average 1-based ranks over tie groups.
    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t k = 0; k < n;) {
        std::size_t j = k;
        while (j < n && scores[idx[j]] == scores[idx[k]]) ++j;
        const double avg_rank = (static_cast<double>(k + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = k; t < j; ++t) {
            if (labels[idx[t]] == 1) {
                rank_sum_pos += avg_rank;
                ++n_pos;
            }
        }
        k = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::DegenerateData, "AUROC needs both classes");
    const double np = static_cast<double>(n_pos);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
    check_lengths(scores.size(), labels.size());
    const std::size_t total_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (total_pos == 0) throw Error(ErrorCode::DegenerateData, "average precision needs at least one positive");
    const auto idx = descending_order(scores);
    double ap = 0.0;
    std::size_t tp = 0, seen = 0;
    for (std::size_t k = 0; k < idx.size();) {
        std::size_t block_pos = 0;
        const double s = scores[idx[k]];
        for (; k < idx.size() && scores[idx[k]] == s; ++k) {
            ++seen;
            block_pos += (labels[idx[k]] == 1);
        }
        tp += block_pos;
        if (block_pos > 0) {
            const double delta_recall = static_cast<double>(block_pos) / static_cast<double>(total_pos);
            ap += delta_recall * (static_cast<double>(tp) / static_cast<double>(seen));
        }
    }
    return ap;
}

MapResult map_over_generators(std::span<const double> scores, std::span<const int> labels,
                              std::span<const std::string> generators, std::span<const std::string> required) {
    check_lengths(scores.size(), labels.size());
    if (generators.size() != scores.size()) throw Error(ErrorCode::LengthMismatch, "generator tags length");
    std::vector<std::size_t> natural;
    std::map<std::string, std::vector<std::size_t>> by_gen;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 0) natural.push_back(i);
        else by_gen[generators[i]].push_back(i);
    }
    for (const auto& g : required) {
        if (!by_gen.contains(g)) throw Error(ErrorCode::MissingGenerator, "no videos for generator '" + g + "'");
    }
    if (by_gen.empty()) throw Error(ErrorCode::MissingGenerator, "no generated videos");
    if (natural.empty()) throw Error(ErrorCode::MissingGenerator, "no natural videos to pair against");

    MapResult out;
    double sum = 0.0;
    for (const auto& [gen, members] : by_gen) {
        std::vector<double> s;
        std::vector<int> y;
        for (auto i : members) {
            s.push_back(scores[i]);
            y.push_back(1);
        }
        for (auto i : natural) {
            s.push_back(scores[i]);
            y.push_back(0);
        }
        const double ap = average_precision(s, y);
        out.per_generator[gen] = ap;
        sum += ap;
    }
    out.map = sum / static_cast<double>(by_gen.size());
    return out;
}

double latency_report(std::span<const LatencySample> samples) {
    if (samples.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& s : samples) sum += s.encode_ms + s.classify_ms;
    return sum / static_cast<double>(samples.size());
}

MetricsReport compute_metrics(std::span<const double> scores, std::span<const int> labels, double tau) {
    MetricsReport r;
    r.confusion = confusion(labels, scores, tau);
    const auto& cm = r.confusion;
    r.count = cm.total();
    r.acc = ratio(cm.tp + cm.tn, cm.total());
    r.recall_gen = ratio(cm.tp, cm.tp + cm.fn);
    r.specificity = ratio(cm.tn, cm.tn + cm.fp);
    r.precision_gen = ratio(cm.tp, cm.tp + cm.fp);
    r.balanced_acc = (r.recall_gen + r.specificity) / 2.0;
    r.f1_gen = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn);
    const bool both = (cm.tp + cm.fn) > 0 && (cm.tn + cm.fp) > 0;
    r.auroc = both ? auroc(scores, labels) : kNaN;
    r.ap = (cm.tp + cm.fn) > 0 ? average_precision(scores, labels) : kNaN;
    return r;
}

nlohmann::json MetricsReport::to_json() const {
    return {{"acc", number_or_null(acc)},
            {"balanced_acc", number_or_null(balanced_acc)},
            {"specificity", number_or_null(specificity)},
            {"precision_gen", number_or_null(precision_gen)},
            {"recall_gen", number_or_null(recall_gen)},
            {"f1_gen", number_or_null(f1_gen)},
            {"auroc", number_or_null(auroc)},
            {"ap", number_or_null(ap)},
            {"count", count},
            {"confusion", {{"tp", confusion.tp}, {"fp", confusion.fp}, {"tn", confusion.tn}, {"fn", confusion.fn}}},
            {"latency_ms_mean", latency_ms_mean}};
}

std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
    check_lengths(scores.size(), labels.size());
    const std::size_t p = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::size_t n = labels.size() - p;
    if (p == 0 || n == 0) throw Error(ErrorCode::DegenerateData, "ROC needs both classes");
    const auto idx = descending_order(scores);
    std::vector<CurvePoint> pts{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    std::size_t tp = 0, fp = 0;
    for (std::size_t k = 0; k < idx.size();) {
        const double s = scores[idx[k]];
        for (; k < idx.size() && scores[idx[k]] == s; ++k) (labels[idx[k]] == 1 ? tp : fp) += 1;
        pts.push_back({s, static_cast<double>(fp) / static_cast<double>(n), static_cast<double>(tp) / static_cast<double>(p)});
    }
    return pts;
}

std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const int> labels) {
    check_lengths(scores.size(), labels.size());
    const std::size_t p = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (p == 0) throw Error(ErrorCode::DegenerateData, "PR curve needs at least one positive");
    const auto idx = descending_order(scores);
    std::vector<CurvePoint> pts;
    std::size_t tp = 0, seen = 0;
    for (std::size_t k = 0; k < idx.size();) {
        const double s = scores[idx[k]];
        for (; k < idx.size() && scores[idx[k]] == s; ++k) {
            ++seen;
            tp += (labels[idx[k]] == 1);
        }
        pts.push_back({s, static_cast<double>(tp) / static_cast<double>(p),
                       static_cast<double>(tp) / static_cast<double>(seen)});
    }
    return pts;
}

namespace {
void write_curve(const std::filesystem::path& path, const char* header, const std::vector<CurvePoint>& pts) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << header << '\n';
    char buf[128];
    for (const auto& pt : pts) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", pt.threshold, pt.x, pt.y);
        out << buf;
    }
}
}  // namespace

void write_roc_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& roc) {
    // Column order: threshold, tpr, fpr.
    std::vector<CurvePoint> swapped;
    for (const auto& p : roc) swapped.push_back({p.threshold, p.y, p.x});
    write_curve(path, "threshold,tpr,fpr", swapped);
}

void write_pr_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& pr) {
    write_curve(path, "threshold,recall,precision", pr);
}

}  // namespace restrav
