#include "styleam/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace styleam {

std::vector<double> fractional_ranks(std::span<const double> v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        // positions i..j share the value: average rank
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

namespace {

double pearson_centered(std::span<const double> a, std::span<const double> b, const char* what) {
    const size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0)
        throw MetricError(std::string(what) + ": undefined for zero variance input");
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

double srocc(std::span<const double> preds, std::span<const double> labels) {
    if (preds.size() != labels.size()) throw InputError("srocc: length mismatch");
    if (preds.size() < 3)
        throw MetricError("srocc: undefined for n < 3 (got n = " + std::to_string(preds.size()) + ")");
    const auto ra = fractional_ranks(preds);
    const auto rb = fractional_ranks(labels);
    return pearson_centered(ra, rb, "srocc");
}

double plcc(std::span<const double> preds, std::span<const double> labels) {
    if (preds.size() != labels.size()) throw InputError("plcc: length mismatch");
    if (preds.size() < 3)
        throw MetricError("plcc: undefined for n < 3 (got n = " + std::to_string(preds.size()) + ")");
    return pearson_centered(preds, labels, "plcc");
}

double logistic5(const std::array<double, 5>& beta, double x) {
    const double z = std::clamp(beta[1] * (x - beta[2]), -500.0, 500.0);
    const double g = 1.0 / (1.0 + std::exp(z));
    return beta[0] * (0.5 - g) + beta[3] * x + beta[4];
}

namespace {

double sse_of(const std::array<double, 5>& beta, std::span<const double> x,
              std::span<const double> y) {
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double r = logistic5(beta, x[i]) - y[i];
        s += r * r;
    }
    return s;
}

}  // namespace

LogisticFit logistic_map_fit(std::span<const double> preds, std::span<const double> labels,
                             std::vector<double>* mapped_out) {
    const size_t n = preds.size();
    if (n != labels.size()) throw InputError("logistic_map_fit: length mismatch");
    if (n < 5) throw InputError("logistic_map_fit: needs at least 5 samples (5 free parameters)");

    LogisticFit fit;
    const auto identity = [&](const char* why) {
        log_warn(std::string("logistic_map_fit: ") + why + "; falling back to identity mapping");
        fit.beta = {0.0, 1.0, 0.0, 1.0, 0.0};
        fit.converged = false;
        fit.residual_norm = std::sqrt(sse_of(fit.beta, preds, labels));
        if (mapped_out != nullptr) mapped_out->assign(preds.begin(), preds.end());
        return fit;
    };

    double mean_x = 0.0, mean_y = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mean_x += preds[i];
        mean_y += labels[i];
    }
    mean_x /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);
    double var_x = 0.0;
    for (size_t i = 0; i < n; ++i) var_x += (preds[i] - mean_x) * (preds[i] - mean_x);
    var_x /= static_cast<double>(n);
    double raw = 0.0;
    try {
        raw = plcc(preds, labels);
    } catch (const MetricError&) {
        return identity("degenerate inputs for the initial guess");
    }
    const auto [ymin, ymax] = std::minmax_element(labels.begin(), labels.end());

    std::array<double, 5> beta;
    beta[0] = (raw >= 0.0 ? 1.0 : -1.0) * (*ymax - *ymin);
    beta[1] = var_x > 0.0 ? 1.0 / std::sqrt(var_x) : 1.0;
    beta[2] = mean_x;
    beta[3] = 0.0;
    beta[4] = mean_y;

    std::array<double, 5> best = beta;
    double best_sse = sse_of(beta, preds, labels);

    double mu = 1e-3;
    bool converged = false;
    constexpr int kMaxIter = 2000;
    for (int iter = 0; iter < kMaxIter; ++iter) {
        Eigen::Matrix<double, 5, 5> jtj = Eigen::Matrix<double, 5, 5>::Zero();
        Eigen::Matrix<double, 5, 1> jtr = Eigen::Matrix<double, 5, 1>::Zero();
        for (size_t i = 0; i < n; ++i) {
            const double x = preds[i];
            const double z = std::clamp(beta[1] * (x - beta[2]), -500.0, 500.0);
            const double g = 1.0 / (1.0 + std::exp(z));
            const double gp = g * (1.0 - g);  // |dg/dz|
            Eigen::Matrix<double, 5, 1> J;
            J(0) = 0.5 - g;
            J(1) = beta[0] * gp * (x - beta[2]);
            J(2) = -beta[0] * gp * beta[1];
            J(3) = x;
            J(4) = 1.0;
            const double r = beta[0] * (0.5 - g) + beta[3] * x + beta[4] - labels[i];
            jtj.noalias() += J * J.transpose();
            jtr.noalias() += J * r;
        }

        bool stepped = false;
        for (int attempt = 0; attempt < 25; ++attempt) {
            Eigen::Matrix<double, 5, 5> a = jtj;
            for (int d = 0; d < 5; ++d) a(d, d) += mu * jtj(d, d) + 1e-12;
            const Eigen::Matrix<double, 5, 1> delta = a.ldlt().solve(-jtr);
            if (!delta.allFinite()) {
                mu *= 4.0;
                continue;
            }
            std::array<double, 5> cand = beta;
            for (int d = 0; d < 5; ++d) cand[static_cast<size_t>(d)] += delta(d);
            const double cand_sse = sse_of(cand, preds, labels);
            if (cand_sse <= best_sse) {
                beta = cand;
                best = cand;
                best_sse = cand_sse;
                mu = std::max(mu / 3.0, 1e-12);
                stepped = true;
                double step = 0.0, scale = 1.0;
                for (int d = 0; d < 5; ++d) {
                    step = std::max(step, std::abs(delta(d)));
                    scale = std::max(scale, std::abs(beta[static_cast<size_t>(d)]));
                }
                if (step < 1e-10 * scale) converged = true;
                break;
            }
            mu *= 4.0;
        }
        if (converged) break;
        if (!stepped) {
            // damping exhausted: local minimum within the solver's resolution
            converged = true;
            break;
        }
    }

    if (!converged) return identity("no convergence within the iteration budget");

    fit.beta = best;
    fit.converged = true;
    fit.residual_norm = std::sqrt(best_sse);
    if (mapped_out != nullptr) {
        mapped_out->resize(n);
        for (size_t i = 0; i < n; ++i) (*mapped_out)[i] = logistic5(best, preds[i]);
    }
    return fit;
}

MetricsReport compute_metrics(std::span<const double> preds, std::span<const double> labels) {
    MetricsReport r;
    r.n = static_cast<int64_t>(preds.size());
    r.srocc = srocc(preds, labels);
    r.plcc_raw = plcc(preds, labels);
    std::vector<double> mapped;
    try {
        r.fit = logistic_map_fit(preds, labels, &mapped);
    } catch (const InputError& e) {
        log_warn(std::string("compute_metrics: ") + e.what());
        r.fit = LogisticFit{};
        mapped.assign(preds.begin(), preds.end());
    }
    try {
        r.plcc_mapped = plcc(mapped, labels);
    } catch (const MetricError&) {
        // mapped predictions collapsed to a constant; report the raw value
        r.plcc_mapped = r.plcc_raw;
    }
    return r;
}

std::string metrics_to_json(const MetricsReport& r) {
    std::ostringstream os;
    os.precision(12);
    os << "{\"n\":" << r.n << ",\"srocc\":" << r.srocc << ",\"plcc_raw\":" << r.plcc_raw
       << ",\"plcc_mapped\":" << r.plcc_mapped << ",\"beta\":[";
    for (int i = 0; i < 5; ++i) os << (i ? "," : "") << r.fit.beta[static_cast<size_t>(i)];
    os << "],\"converged\":" << (r.fit.converged ? "true" : "false") << "}";
    return os.str();
}

}  // namespace styleam
