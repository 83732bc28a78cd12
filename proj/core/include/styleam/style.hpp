#pragma once

#include <utility>
#include <vector>

#include "styleam/graph.hpp"
#include "styleam/rng.hpp"
#include "styleam/tensor.hpp"

namespace styleam {

// eps floor inside the std square root; keeps the AdaIN division and the
// sqrt gradient finite on constant channels.
inline constexpr double kStyleEps = 1e-6;

// Per-sample feature style: channel-wise spatial mean and standard
// deviation. The concatenated form [mean | std] (length 2C) is the
// alignment space.
template <typename T>
struct StyleVector {
    std::vector<T> mean;
    std::vector<T> sd;

    int channels() const { return static_cast<int>(mean.size()); }

    std::vector<T> concat() const {
        std::vector<T> f(mean);
        f.insert(f.end(), sd.begin(), sd.end());
        return f;
    }
};

template <typename T>
std::vector<T> concat_style(const std::vector<T>& mean, const std::vector<T>& sd) {
    if (mean.size() != sd.size()) throw ShapeError("concat_style: mean/std length mismatch");
    std::vector<T> f(mean);
    f.insert(f.end(), sd.begin(), sd.end());
    return f;
}

template <typename T>
StyleVector<T> split_style(const std::vector<T>& f) {
    if (f.size() % 2 != 0) throw ShapeError("split_style: odd length");
    const size_t c = f.size() / 2;
    return StyleVector<T>{{f.begin(), f.begin() + static_cast<long>(c)},
                          {f.begin() + static_cast<long>(c), f.end()}};
}

// Channel-wise mean/std of each sample in a (B,C,H,W) map.
template <typename T>
std::vector<StyleVector<T>> extract_style(const Tensor<T>& f, T eps = static_cast<T>(kStyleEps)) {
    if (f.rank() != 4) throw ShapeError("extract_style: input must be (B,C,H,W)");
    Tensor<T> mean, sd;
    detail::channel_stats(f, eps, mean, sd);
    const int b = f.dim(0), c = f.dim(1);
    std::vector<StyleVector<T>> out(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        out[static_cast<size_t>(i)].mean.assign(mean.data() + static_cast<int64_t>(i) * c,
                                                mean.data() + static_cast<int64_t>(i + 1) * c);
        out[static_cast<size_t>(i)].sd.assign(sd.data() + static_cast<int64_t>(i) * c,
                                              sd.data() + static_cast<int64_t>(i + 1) * c);
    }
    return out;
}

// Per-sample Beta(alpha, alpha) mixing coefficients.
struct MixDraw {
    std::vector<double> lambdas;
    double alpha = 0.0;
};

inline MixDraw sample_mix(double alpha, int batch, Rng& rng) {
    if (alpha <= 0.0) throw ConfigError("sample_mix: alpha must be positive");
    MixDraw d;
    d.alpha = alpha;
    d.lambdas.resize(static_cast<size_t>(batch));
    for (int i = 0; i < batch; ++i) d.lambdas[static_cast<size_t>(i)] = rng.beta(alpha, alpha);
    return d;
}

// Convex combination of two styles and their labels with the same lambda.
template <typename T>
std::pair<StyleVector<T>, T> mix_styles_and_labels(const StyleVector<T>& a, const StyleVector<T>& b,
                                                   T ya, T yb, T lambda) {
    if (a.mean.size() != b.mean.size() || a.sd.size() != b.sd.size())
        throw ShapeError("mix_styles_and_labels: style length mismatch");
    if (lambda < T(0) || lambda > T(1))
        throw InputError("mix_styles_and_labels: lambda must be in [0,1]");
    StyleVector<T> m;
    const size_t c = a.mean.size();
    m.mean.resize(c);
    m.sd.resize(c);
    for (size_t i = 0; i < c; ++i) {
        m.mean[i] = lambda * a.mean[i] + (T(1) - lambda) * b.mean[i];
        m.sd[i] = lambda * a.sd[i] + (T(1) - lambda) * b.sd[i];
    }
    return {std::move(m), lambda * ya + (T(1) - lambda) * yb};
}

// Re-normalizes every sample of f to carry the corresponding target style.
template <typename T>
Tensor<T> adain_transfer(const Tensor<T>& f, const std::vector<StyleVector<T>>& targets,
                         T eps = static_cast<T>(kStyleEps)) {
    if (f.rank() != 4) throw ShapeError("adain_transfer: input must be (B,C,H,W)");
    const int b = f.dim(0), c = f.dim(1);
    if (static_cast<int>(targets.size()) != b)
        throw ShapeError("adain_transfer: need one target style per sample");
    Tensor<T> tm({b, c}), ts({b, c});
    for (int i = 0; i < b; ++i) {
        if (targets[static_cast<size_t>(i)].channels() != c)
            throw ShapeError("adain_transfer: channel count mismatch");
        for (int j = 0; j < c; ++j) {
            tm.at(i, j) = targets[static_cast<size_t>(i)].mean[static_cast<size_t>(j)];
            ts.at(i, j) = targets[static_cast<size_t>(i)].sd[static_cast<size_t>(j)];
        }
    }
    Graph<T> g;
    const int x = g.leaf(f);
    return g.val(g.adain(x, g.leaf(std::move(tm)), g.leaf(std::move(ts)), eps));
}

template <typename T>
Tensor<T> adain_transfer(const Tensor<T>& f, const StyleVector<T>& target,
                         T eps = static_cast<T>(kStyleEps)) {
    std::vector<StyleVector<T>> ts(static_cast<size_t>(f.dim(0)), target);
    return adain_transfer(f, ts, eps);
}

// Ablation variant: mixes whole feature maps and labels.
template <typename T>
std::pair<Tensor<T>, T> feature_mixup(const Tensor<T>& fa, const Tensor<T>& fb, T ya, T yb,
                                      T lambda) {
    if (!same_shape(fa, fb)) throw ShapeError("feature_mixup: shape mismatch");
    if (lambda < T(0) || lambda > T(1)) throw InputError("feature_mixup: lambda must be in [0,1]");
    Tensor<T> out(fa.shape());
    const int64_t n = fa.size();
    for (int64_t i = 0; i < n; ++i) out[i] = lambda * fa[i] + (T(1) - lambda) * fb[i];
    return {std::move(out), lambda * ya + (T(1) - lambda) * yb};
}

}  // namespace styleam
