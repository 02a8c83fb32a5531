#include "restrav/stats.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <cmath>
#include <limits>
#include <string>

#include "restrav/error.hpp"

namespace restrav {
namespace {

struct MeanVar {
    double mean = 0.0;
    double var = 0.0;  // unbiased (n - 1)
};

MeanVar mean_var(std::span<const double> x) {
    MeanVar mv;
    for (double v : x) mv.mean += v;
    mv.mean /= static_cast<double>(x.size());
    for (double v : x) mv.var += (v - mv.mean) * (v - mv.mean);
    mv.var /= static_cast<double>(x.size() - 1);
    return mv;
}

double mean_of(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

}  // namespace

double student_t_two_sided_p(double t, double df) {
    if (std::isnan(t) || !(df > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    if (std::isinf(t)) return 0.0;
    // P(|T| > |t|) = I_{df / (df + t^2)}(df / 2, 1 / 2)
    const double x = df / (df + t * t);
    return boost::math::ibeta(df / 2.0, 0.5, x);
}

double f_survival(double f, double d1, double d2) {
    if (std::isnan(f) || !(d1 > 0.0) || !(d2 > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    if (f <= 0.0) return 1.0;
    if (std::isinf(f)) return 0.0;
    // P(F > f) = I_{d2 / (d2 + d1 f)}(d2 / 2, d1 / 2)
    const double x = d2 / (d2 + d1 * f);
    return boost::math::ibeta(d2 / 2.0, d1 / 2.0, x);
}

TTestResult welch_ttest(std::span<const double> x, std::span<const double> y) {
    if (x.size() < 2 || y.size() < 2) {
        throw Error(ErrorCode::TooFewSamples, "t-test needs at least 2 values per sample, got " +
                                                  std::to_string(x.size()) + " and " + std::to_string(y.size()));
    }
    const auto a = mean_var(x);
    const auto b = mean_var(y);
    const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
    const double vx = a.var / nx, vy = b.var / ny;
    const double diff = a.mean - b.mean;

    TTestResult r;
    const double se2 = vx + vy;
    if (se2 > 0.0) {
        r.df = se2 * se2 / (vx * vx / (nx - 1.0) + vy * vy / (ny - 1.0));
    } else {
        r.df = nx + ny - 2.0;
    }
    if (diff == 0.0) {
        r.t = 0.0;
        r.p = 1.0;
        return r;
    }
    r.t = se2 > 0.0 ? diff / std::sqrt(se2) : std::copysign(std::numeric_limits<double>::infinity(), diff);
    r.p = student_t_two_sided_p(r.t, r.df);
    return r;
}

AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw Error(ErrorCode::TooFewSamples, "ANOVA needs at least 2 groups");
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& g : groups) {
        if (g.size() < 2) throw Error(ErrorCode::TooFewSamples, "each ANOVA group needs at least 2 values");
        for (double v : g) total += v;
        n += g.size();
    }
    const double grand = total / static_cast<double>(n);
    AnovaResult r;
    for (const auto& g : groups) {
        const double m = mean_of(g);
        r.ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
        for (double v : g) r.ss_within += (v - m) * (v - m);
    }
    r.df_between = static_cast<double>(groups.size() - 1);
    r.df_within = static_cast<double>(n - groups.size());
    const double ms_between = r.ss_between / r.df_between;
    const double ms_within = r.ss_within / r.df_within;
    if (r.ss_between == 0.0) {
        r.f = 0.0;
        r.p = 1.0;
    } else if (ms_within == 0.0) {
        r.f = std::numeric_limits<double>::infinity();
        r.p = 0.0;
    } else {
        r.f = ms_between / ms_within;
        r.p = f_survival(r.f, r.df_between, r.df_within);
    }
    return r;
}

double curvature_gap(std::span<const double> natural_mean_curvatures,
                     std::span<const double> generated_mean_curvatures) {
    if (natural_mean_curvatures.empty() || generated_mean_curvatures.empty()) {
        throw Error(ErrorCode::EmptySubset, "curvature gap needs non-empty natural and generated subsets");
    }
    return mean_of(generated_mean_curvatures) - mean_of(natural_mean_curvatures);
}

}  // namespace restrav
