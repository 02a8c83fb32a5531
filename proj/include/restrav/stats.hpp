#pragma once

#include <span>
#include <vector>

namespace restrav {

struct TTestResult {
    double t = 0.0;
    double p = 1.0;    // two-sided
    double df = 0.0;   // Welch-Satterthwaite
};

// Welch's unequal-variance two-sample t-test (t > 0 when mean(x) > mean(y)).
// Throws TooFewSamples when either sample has fewer than 2 values.
TTestResult welch_ttest(std::span<const double> x, std::span<const double> y);

struct AnovaResult {
    double f = 0.0;
    double p = 1.0;
    double df_between = 0.0;
    double df_within = 0.0;
    double ss_between = 0.0;
    double ss_within = 0.0;
};

// One-way ANOVA over >= 2 groups of >= 2 values each.
AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups);

// Two-sided tail probability of Student's t with df degrees of freedom.
double student_t_two_sided_p(double t, double df);
// Upper tail P(F > f) of the F(d1, d2) distribution.
double f_survival(double f, double d1, double d2);

// mean(generated) - mean(natural) over per-video mean curvatures. Throws EmptySubset.
double curvature_gap(std::span<const double> natural_mean_curvatures,
                     std::span<const double> generated_mean_curvatures);

}  // namespace restrav
