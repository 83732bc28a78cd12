#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "styleam/common.hpp"

namespace styleam {

// Result of fitting the 5-parameter logistic remapping used before PLCC:
//   f(x) = b1*(1/2 - 1/(1 + exp(b2*(x - b3)))) + b4*x + b5
struct LogisticFit {
    std::array<double, 5> beta{0.0, 1.0, 0.0, 1.0, 0.0};
    bool converged = false;
    double residual_norm = 0.0;
};

struct MetricsReport {
    double srocc = 0.0;
    double plcc_raw = 0.0;
    double plcc_mapped = 0.0;
    int64_t n = 0;
    LogisticFit fit;
};

// Fractional (average-tie) ranks, 1-based.
std::vector<double> fractional_ranks(std::span<const double> v);

// Spearman rank-order correlation: Pearson correlation of fractional ranks.
// Throws MetricError for n < 3 or zero rank variance.
double srocc(std::span<const double> preds, std::span<const double> labels);

// Pearson linear correlation. Throws MetricError for n < 3 or zero variance.
double plcc(std::span<const double> preds, std::span<const double> labels);

double logistic5(const std::array<double, 5>& beta, double x);

// Damped (Levenberg-Marquardt) least-squares fit of the logistic remapping.
// On non-convergence returns the identity mapping with converged=false.
// If mapped_out is non-null it receives the remapped predictions.
LogisticFit logistic_map_fit(std::span<const double> preds, std::span<const double> labels,
                             std::vector<double>* mapped_out = nullptr);

// Full evaluation protocol: SROCC, raw PLCC, logistic-mapped PLCC.
MetricsReport compute_metrics(std::span<const double> preds, std::span<const double> labels);

std::string metrics_to_json(const MetricsReport& r);

}  // namespace styleam
