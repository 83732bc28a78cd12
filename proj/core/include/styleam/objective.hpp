#pragma once

#include <optional>
#include <vector>

#include "styleam/losses.hpp"
#include "styleam/nn.hpp"
#include "styleam/style.hpp"

namespace styleam {

// Knobs of one optimization step (a subset of the training config).
struct StepOptions {
    MixupMode mixup_mode = MixupMode::style_mixup;
    double mixup_prob = 0.5;
    AlignmentSpace alignment_space = AlignmentSpace::style;
    double lambda_adv = 2.0;
    double alpha = 0.65;
    double grl_coeff = 1.0;
    bool lambda_per_batch = false;
    bool training = true;
};

template <typename T>
struct SourcePath {
    int l_q = -1;        // scalar loss node
    int features = -1;   // backbone output F^s
    int used_features = -1;  // feature map feeding the head (F^s or F^mix)
    int mixed_style = -1;    // f^mix node (style-mix branches only)
    int preds = -1;          // head output on used_features
    bool mixed = false;
    std::vector<double> detached_preds;  // P(F^s) values, outside the gradient graph
};

namespace detail {

template <typename T>
std::vector<double> detached_head_eval(ModelSet<T>& m, const Tensor<T>& features) {
    Graph<T> g;
    const int x = g.leaf(features);
    const int preds = m.head.forward(g, x, /*detached=*/true);
    const Tensor<T>& v = g.val(preds);
    std::vector<double> out(static_cast<size_t>(v.size()));
    for (int64_t i = 0; i < v.size(); ++i) out[static_cast<size_t>(i)] = static_cast<double>(v[i]);
    return out;
}

}  // namespace detail

// Source-domain head path with the probability-gated mixup branch. Shared
// by the pretraining phase and the adaptation step.
template <typename T>
SourcePath<T> build_source_path(Graph<T>& g, ModelSet<T>& m, const Tensor<T>& images,
                                const std::vector<T>& labels, const StepOptions& opt,
                                Rng& mix_rng) {
    const int batch = images.dim(0);
    if (batch < 1) throw InputError("build_source_path: empty batch");
    if (static_cast<int>(labels.size()) != batch)
        throw InputError("build_source_path: label count mismatch");

    SourcePath<T> sp;
    const int x = g.leaf(images);
    sp.features = m.backbone.forward(g, x, m.backbone.stage_count(), opt.training);

    bool gate = false;
    if (opt.mixup_mode != MixupMode::none) {
        const double p = mix_rng.uniform();
        gate = p > 1.0 - opt.mixup_prob;
    }
    sp.mixed = gate;

    if (!gate) {
        sp.used_features = sp.features;
        sp.preds = m.head.forward(g, sp.features);
        std::vector<T> y(labels);
        sp.l_q = g.quality_l2(sp.preds, std::move(y));
        const Tensor<T>& pv = g.val(sp.preds);
        sp.detached_preds.resize(static_cast<size_t>(batch));
        for (int i = 0; i < batch; ++i) sp.detached_preds[static_cast<size_t>(i)] = static_cast<double>(pv[i]);
        return sp;
    }

    // partner permutation and per-sample Beta(alpha, alpha) coefficients
    const std::vector<int> perm = mix_rng.permutation(batch);
    std::vector<T> lam(static_cast<size_t>(batch));
    if (opt.lambda_per_batch) {
        const T l = static_cast<T>(mix_rng.beta(opt.alpha, opt.alpha));
        std::fill(lam.begin(), lam.end(), l);
    } else {
        for (int i = 0; i < batch; ++i)
            lam[static_cast<size_t>(i)] = static_cast<T>(mix_rng.beta(opt.alpha, opt.alpha));
    }

    std::vector<T> y_eff(static_cast<size_t>(batch));
    const bool mix_labels = opt.mixup_mode != MixupMode::mixstyle_no_label;
    for (int i = 0; i < batch; ++i) {
        const T l = lam[static_cast<size_t>(i)];
        y_eff[static_cast<size_t>(i)] =
            mix_labels ? l * labels[static_cast<size_t>(i)] +
                             (T(1) - l) * labels[static_cast<size_t>(perm[static_cast<size_t>(i)])]
                       : labels[static_cast<size_t>(i)];
    }

    if (opt.mixup_mode == MixupMode::feature_mixup) {
        const int fperm = g.permute_rows(sp.features, perm);
        sp.used_features = g.row_lerp(sp.features, fperm, lam);
    } else {
        const int c = m.backbone.out_channels();
        const int style = g.style_stats(sp.features, static_cast<T>(kStyleEps));
        const int style_perm = g.permute_rows(style, perm);
        sp.mixed_style = g.row_lerp(style, style_perm, lam);
        const int mu_mix = g.slice_cols(sp.mixed_style, 0, c);
        const int sd_mix = g.slice_cols(sp.mixed_style, c, 2 * c);
        sp.used_features = g.adain(sp.features, mu_mix, sd_mix, static_cast<T>(kStyleEps));
    }

    sp.preds = m.head.forward(g, sp.used_features);
    sp.l_q = g.quality_l2(sp.preds, std::move(y_eff));
    sp.detached_preds = detail::detached_head_eval(m, g.val(sp.features));
    return sp;
}

template <typename T>
struct StepGraph {
    int l_all = -1;
    int l_q = -1;
    int l_d = -1;  // -1 when alignment is disabled
    LossReport report;
};

// Source pretraining objective: quality loss only (no discriminator).
template <typename T>
StepGraph<T> build_pretrain_objective(Graph<T>& g, ModelSet<T>& m, const Tensor<T>& src_images,
                                      const std::vector<T>& src_labels, const StepOptions& opt,
                                      Rng& mix_rng) {
    SourcePath<T> sp = build_source_path(g, m, src_images, src_labels, opt, mix_rng);
    StepGraph<T> sg;
    sg.l_q = sp.l_q;
    sg.l_all = sp.l_q;
    sg.report.l_q = static_cast<double>(g.val(sp.l_q)[0]);
    sg.report.l_all = sg.report.l_q;
    sg.report.mixed = sp.mixed;
    sg.report.h = 1;  // no alignment in this phase
    return sg;
}

// Full adaptation objective: quality loss plus the relaxed adversarial
// loss through the gradient reversal layer, combined into one scalar so a
// single backward pass updates extractor, head and discriminator.
template <typename T>
StepGraph<T> build_uda_objective(Graph<T>& g, ModelSet<T>& m, const Tensor<T>& src_images,
                                 const std::vector<T>& src_labels, const Tensor<T>& tgt_images,
                                 const StepOptions& opt, Rng& mix_rng,
                                 RelaxationController& relax) {
    SourcePath<T> sp = build_source_path(g, m, src_images, src_labels, opt, mix_rng);

    std::vector<double> labels_d(src_labels.size());
    for (size_t i = 0; i < src_labels.size(); ++i) labels_d[i] = static_cast<double>(src_labels[i]);
    const RelaxationState rs = relax.decide(sp.detached_preds, labels_d);

    StepGraph<T> sg;
    sg.l_q = sp.l_q;
    sg.report.l_q = static_cast<double>(g.val(sp.l_q)[0]);
    sg.report.mixed = sp.mixed;
    sg.report.h = rs.h;
    sg.report.batch_srocc = rs.batch_srocc;
    sg.report.srocc_defined = rs.srocc_defined;

    if (opt.alignment_space == AlignmentSpace::none) {
        sg.l_all = sp.l_q;
        sg.report.l_all = sg.report.l_q;
        return sg;
    }

    if (tgt_images.dim(0) < 1) throw InputError("build_uda_objective: empty target batch");
    const int xt = g.leaf(tgt_images);
    const int ft = m.backbone.forward(g, xt, m.backbone.stage_count(), opt.training);

    int src_vec = -1, tgt_vec = -1;
    if (opt.alignment_space == AlignmentSpace::style) {
        src_vec = sp.mixed_style >= 0 ? sp.mixed_style
                                      : g.style_stats(sp.used_features, static_cast<T>(kStyleEps));
        tgt_vec = g.style_stats(ft, static_cast<T>(kStyleEps));
    } else {
        src_vec = g.global_avg_pool(sp.used_features);
        tgt_vec = g.global_avg_pool(ft);
    }

    const T c = static_cast<T>(opt.grl_coeff);
    const int d_src = m.disc.forward(g, g.grl(src_vec, c));
    const int d_tgt = m.disc.forward(g, g.grl(tgt_vec, c));
    sg.l_d = g.relaxed_domain_bce(d_src, d_tgt, rs.h);
    sg.l_all = g.add_scaled(sp.l_q, sg.l_d, static_cast<T>(opt.lambda_adv));

    sg.report.l_d = static_cast<double>(g.val(sg.l_d)[0]);
    sg.report.l_all = static_cast<double>(g.val(sg.l_all)[0]);
    return sg;
}

}  // namespace styleam
