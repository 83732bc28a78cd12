#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "styleam/common.hpp"
#include "styleam/metrics.hpp"

namespace styleam {

// Per-step loss telemetry record.
struct LossReport {
    double l_q = 0.0;
    double l_d = 0.0;
    double l_all = 0.0;
    bool mixed = false;
    int h = 0;
    double batch_srocc = 0.0;
    bool srocc_defined = false;
};

namespace detail {

inline double clamp_prob(double p) { return std::min(std::max(p, 1e-7), 1.0 - 1e-7); }

}  // namespace detail

// Domain loss with relaxation flag h:
//   -(1/n_s) sum log(1 - |p_i - h|) - (1/n_t) sum log(q_j)
// h = 0 keeps plain source-vs-target BCE; h = 1 flips the source term to
// -log(p_i), removing adversarial pressure on the source features.
inline double relaxed_discriminator_bce(std::span<const double> d_source,
                                        std::span<const double> d_target, int h) {
    if (h != 0 && h != 1) throw InputError("relaxed_discriminator_bce: h must be 0 or 1");
    if (d_source.empty() || d_target.empty())
        throw InputError("relaxed_discriminator_bce: empty batch");
    double loss = 0.0;
    for (double p : d_source)
        loss -= std::log(1.0 - std::abs(detail::clamp_prob(p) - static_cast<double>(h))) /
                static_cast<double>(d_source.size());
    for (double q : d_target)
        loss -= std::log(detail::clamp_prob(q)) / static_cast<double>(d_target.size());
    return loss;
}

inline double discriminator_bce(std::span<const double> d_source,
                                std::span<const double> d_target) {
    return relaxed_discriminator_bce(d_source, d_target, 0);
}

// Mean of the per-sample l2 norms of the scalar residuals: (1/n) sum |p - y|.
inline double quality_l2(std::span<const double> preds, std::span<const double> labels) {
    if (preds.size() != labels.size()) throw InputError("quality_l2: length mismatch");
    if (preds.empty()) throw InputError("quality_l2: empty batch");
    double s = 0.0;
    for (size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - labels[i]);
    return s / static_cast<double>(preds.size());
}

inline double total_loss(double l_q, double l_d, double lambda_adv) {
    if (lambda_adv < 0.0) throw ConfigError("total_loss: lambda_adv must be nonnegative");
    return l_q + lambda_adv * l_d;
}

// SROCC-gated relaxation: h = 0 (keep alignment) only when the source
// batch ranks well against its labels. Degenerate batches relax (h = 1).
struct RelaxationState {
    double tau = 0.9;
    int h = 1;
    double batch_srocc = 0.0;
    bool srocc_defined = false;
};

inline int relaxation_flag(std::span<const double> source_preds,
                           std::span<const double> source_labels, double tau,
                           RelaxationState* state = nullptr) {
    if (tau < -1.0 || tau > 1.0) throw ConfigError("relaxation_flag: tau must be in [-1,1]");
    RelaxationState s;
    s.tau = tau;
    if (source_preds.size() < 3) {
        log_warn("relaxation_flag: batch too small for SROCC (n=" +
                 std::to_string(source_preds.size()) + "); relaxing (h=1)");
        s.h = 1;
    } else {
        try {
            s.batch_srocc = srocc(source_preds, source_labels);
            s.srocc_defined = true;
            s.h = s.batch_srocc > tau ? 0 : 1;
        } catch (const MetricError& e) {
            log_warn(std::string("relaxation_flag: ") + e.what() + "; relaxing (h=1)");
            s.h = 1;
        }
    }
    if (state != nullptr) *state = s;
    return s.h;
}

// Decides h per step. In running mode the gate compares an exponential
// moving average of the batch SROCC instead of the raw batch value.
class RelaxationController {
  public:
    RelaxationController() = default;
    RelaxationController(double tau, bool running_average)
        : tau_(tau), running_(running_average) {
        if (tau < -1.0 || tau > 1.0) throw ConfigError("RelaxationController: tau must be in [-1,1]");
    }

    RelaxationState decide(std::span<const double> preds, std::span<const double> labels) {
        RelaxationState s;
        relaxation_flag(preds, labels, tau_, &s);
        if (running_ && s.srocc_defined) {
            ema_ = ema_initialized_ ? 0.9 * ema_ + 0.1 * s.batch_srocc : s.batch_srocc;
            ema_initialized_ = true;
            s.h = ema_ > tau_ ? 0 : 1;
        }
        return s;
    }

    double tau() const { return tau_; }

  private:
    double tau_ = 0.9;
    bool running_ = false;
    bool ema_initialized_ = false;
    double ema_ = 0.0;
};

}  // namespace styleam
