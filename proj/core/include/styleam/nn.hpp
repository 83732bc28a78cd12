#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "styleam/graph.hpp"
#include "styleam/rng.hpp"
#include "styleam/tensor.hpp"

namespace styleam {

enum class BackboneMode { toy, full };
enum class AlignmentSpace { style, feature, none };
enum class MixupMode { style_mixup, feature_mixup, mixstyle_no_label, none };

// Nonnegative gradient-reversal scale.
struct GrlCoefficient {
    double c = 1.0;
    explicit GrlCoefficient(double v = 1.0) : c(v) {
        if (c < 0.0) throw ConfigError("GrlCoefficient: c must be nonnegative");
    }
};

inline const char* to_string(BackboneMode m) { return m == BackboneMode::toy ? "toy" : "full"; }

inline const char* to_string(AlignmentSpace s) {
    switch (s) {
        case AlignmentSpace::style: return "style";
        case AlignmentSpace::feature: return "feature";
        default: return "none";
    }
}

inline const char* to_string(MixupMode m) {
    switch (m) {
        case MixupMode::style_mixup: return "style_mixup";
        case MixupMode::feature_mixup: return "feature_mixup";
        case MixupMode::mixstyle_no_label: return "mixstyle_no_label";
        default: return "none";
    }
}

BackboneMode parse_backbone_mode(const std::string& s);
AlignmentSpace parse_alignment_space(const std::string& s);
MixupMode parse_mixup_mode(const std::string& s);

inline std::vector<int> stage_widths(BackboneMode mode) {
    return mode == BackboneMode::toy ? std::vector<int>{16, 32, 64, 128}
                                     : std::vector<int>{64, 128, 256, 512};
}

namespace nn {

template <typename T>
void he_normal_init(Tensor<T>& w, int fan_in, Rng& rng) {
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.normal(0.0, sd));
}

template <typename T>
struct Conv2dLayer {
    Parameter<T> w, b;
    int stride = 1, pad = 1;

    Conv2dLayer() = default;
    Conv2dLayer(const std::string& name, int cin, int cout, int k, int stride_, Rng& rng)
        : w(name + ".w", Tensor<T>({cout, cin, k, k})),
          b(name + ".b", Tensor<T>({cout})),
          stride(stride_) {
        he_normal_init(w.value, cin * k * k, rng);
    }

    int forward(Graph<T>& g, int x, bool detached = false) {
        const int wi = detached ? g.leaf(w.value) : g.param(w);
        const int bi = detached ? g.leaf(b.value) : g.param(b);
        return g.conv2d(x, wi, bi, stride, pad);
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

template <typename T>
struct BatchNorm2d {
    Parameter<T> gamma, beta;
    Parameter<T> run_mean, run_var;  // tracked buffers, not trained
    T momentum = T(0.1), eps = T(1e-5);

    BatchNorm2d() = default;
    BatchNorm2d(const std::string& name, int c)
        : gamma(name + ".gamma", Tensor<T>::full({c}, T(1))),
          beta(name + ".beta", Tensor<T>({c})),
          run_mean(name + ".run_mean", Tensor<T>({c}), false),
          run_var(name + ".run_var", Tensor<T>::full({c}, T(1)), false) {}

    int forward(Graph<T>& g, int x, bool training, bool detached = false) {
        const int gi = detached ? g.leaf(gamma.value) : g.param(gamma);
        const int bi = detached ? g.leaf(beta.value) : g.param(beta);
        return g.batchnorm2d(x, gi, bi, &run_mean.value, &run_var.value, training, momentum, eps);
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
        out.push_back(&run_mean);
        out.push_back(&run_var);
    }
};

template <typename T>
struct LinearLayer {
    Parameter<T> w, b;

    LinearLayer() = default;
    LinearLayer(const std::string& name, int in, int out, Rng& rng)
        : w(name + ".w", Tensor<T>({out, in})), b(name + ".b", Tensor<T>({out})) {
        he_normal_init(w.value, in, rng);
    }

    int forward(Graph<T>& g, int x, bool detached = false) {
        const int wi = detached ? g.leaf(w.value) : g.param(w);
        const int bi = detached ? g.leaf(b.value) : g.param(b);
        return g.linear(x, wi, bi);
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

}  // namespace nn

// One downsampling stage: conv3x3/s2 -> BN -> ReLU -> conv3x3/s1 -> BN -> ReLU.
template <typename T>
struct BackboneStage {
    nn::Conv2dLayer<T> conv1, conv2;
    nn::BatchNorm2d<T> bn1, bn2;

    BackboneStage() = default;
    BackboneStage(const std::string& name, int cin, int cout, Rng& rng)
        : conv1(name + ".conv1", cin, cout, 3, 2, rng),
          conv2(name + ".conv2", cout, cout, 3, 1, rng),
          bn1(name + ".bn1", cout),
          bn2(name + ".bn2", cout) {}

    int forward(Graph<T>& g, int x, bool training) {
        int z = conv1.forward(g, x);
        z = bn1.forward(g, z, training);
        z = g.relu(z);
        z = conv2.forward(g, z);
        z = bn2.forward(g, z, training);
        return g.relu(z);
    }

    void collect(std::vector<Parameter<T>*>& out) {
        conv1.collect(out);
        bn1.collect(out);
        conv2.collect(out);
        bn2.collect(out);
    }
};

// Stride-2 convolutional feature extractor with per-stage taps. Stage k
// halves the spatial extent k times: (B,3,S,S) -> (B,C_k,S/2^k,S/2^k).
template <typename T>
class Backbone {
  public:
    Backbone() = default;
    Backbone(BackboneMode mode, Rng& rng) : mode_(mode), widths_(stage_widths(mode)) {
        int cin = 3;
        for (size_t k = 0; k < widths_.size(); ++k) {
            stages_.emplace_back("backbone.s" + std::to_string(k + 1), cin, widths_[k], rng);
            cin = widths_[k];
        }
    }

    int stage_count() const { return static_cast<int>(stages_.size()); }
    int out_channels() const { return widths_.back(); }
    int channels_at(int stage) const { return widths_.at(static_cast<size_t>(stage - 1)); }
    BackboneMode mode() const { return mode_; }
    const std::vector<int>& widths() const { return widths_; }

    // Stage outputs 1..tap; result[i] is the node id of stage i+1.
    std::vector<int> forward_stages(Graph<T>& g, int x, int tap, bool training) {
        check_input(g.val(x), tap);
        std::vector<int> outs;
        int z = x;
        for (int k = 0; k < tap; ++k) {
            z = stages_[static_cast<size_t>(k)].forward(g, z, training);
            outs.push_back(z);
        }
        return outs;
    }

    int forward(Graph<T>& g, int x, int tap, bool training) {
        return forward_stages(g, x, tap, training).back();
    }

    void collect(std::vector<Parameter<T>*>& out) {
        for (auto& s : stages_) s.collect(out);
    }

  private:
    void check_input(const Tensor<T>& x, int tap) const {
        if (tap < 1 || tap > stage_count())
            throw ConfigError("backbone: tap " + std::to_string(tap) + " out of range [1," +
                              std::to_string(stage_count()) + "]");
        if (x.rank() != 4 || x.dim(1) != 3)
            throw ShapeError("backbone: input must be (B,3,S,S), got " + x.shape_str());
        if (x.dim(2) != x.dim(3)) throw ShapeError("backbone: input must be square");
        const int s = x.dim(2);
        if (s % (1 << tap) != 0)
            throw ShapeError("backbone: input size " + std::to_string(s) +
                             " not divisible by 2^" + std::to_string(tap));
    }

    BackboneMode mode_ = BackboneMode::toy;
    std::vector<int> widths_;
    std::vector<BackboneStage<T>> stages_;
};

// Pooled features -> scalar quality score, bounded to [0,5] by a scaled
// sigmoid: FC -> ReLU -> FC -> sigmoid -> x5.
template <typename T>
class RegressionHead {
  public:
    RegressionHead() = default;
    RegressionHead(int in_dim, Rng& rng)
        : in_dim_(in_dim),
          fc1_("head.fc1", in_dim, in_dim / 2, rng),
          fc2_("head.fc2", in_dim / 2, 1, rng) {}

    int in_dim() const { return in_dim_; }

    // features: (B,C,H,W) node; returns (B,1) scores in [0,5].
    int forward(Graph<T>& g, int features, bool detached = false) {
        return forward_pooled(g, g.global_avg_pool(features), detached);
    }

    int forward_pooled(Graph<T>& g, int pooled, bool detached = false) {
        int z = fc1_.forward(g, pooled, detached);
        z = g.relu(z);
        z = fc2_.forward(g, z, detached);
        z = g.sigmoid(z);
        return g.affine_const(z, T(5), T(0));
    }

    void collect(std::vector<Parameter<T>*>& out) {
        fc1_.collect(out);
        fc2_.collect(out);
    }

    nn::LinearLayer<T>& fc1() { return fc1_; }
    nn::LinearLayer<T>& fc2() { return fc2_; }

  private:
    int in_dim_ = 0;
    nn::LinearLayer<T> fc1_, fc2_;
};

// Domain classifier over alignment vectors: two FC+ReLU blocks and a
// final FC+sigmoid producing a probability in (0,1).
template <typename T>
class Discriminator {
  public:
    Discriminator() = default;
    Discriminator(int in_dim, Rng& rng)
        : in_dim_(in_dim),
          fc1_("disc.fc1", in_dim, in_dim / 2, rng),
          fc2_("disc.fc2", in_dim / 2, in_dim / 4, rng),
          fc3_("disc.fc3", in_dim / 4, 1, rng) {}

    int in_dim() const { return in_dim_; }

    int forward(Graph<T>& g, int x, bool detached = false) {
        int z = fc1_.forward(g, x, detached);
        z = g.relu(z);
        z = fc2_.forward(g, z, detached);
        z = g.relu(z);
        z = fc3_.forward(g, z, detached);
        return g.sigmoid(z);
    }

    void collect(std::vector<Parameter<T>*>& out) {
        fc1_.collect(out);
        fc2_.collect(out);
        fc3_.collect(out);
    }

    nn::LinearLayer<T>& fc3() { return fc3_; }

  private:
    int in_dim_ = 0;
    nn::LinearLayer<T> fc1_, fc2_, fc3_;
};

// Backbone + head + discriminator plus a stable parameter registry
// (registration order defines the checkpoint payload order).
template <typename T>
class ModelSet {
  public:
    ModelSet() = default;
    ModelSet(BackboneMode mode, AlignmentSpace space, Rng init_rng)
        : mode_(mode), space_(space) {
        backbone = Backbone<T>(mode, init_rng);
        head = RegressionHead<T>(backbone.out_channels(), init_rng);
        const int c = backbone.out_channels();
        disc = Discriminator<T>(space == AlignmentSpace::feature ? c : 2 * c, init_rng);
        backbone.collect(params_);
        head.collect(params_);
        disc.collect(params_);
    }

    BackboneMode mode() const { return mode_; }
    AlignmentSpace alignment_space() const { return space_; }
    std::vector<Parameter<T>*>& params() { return params_; }

    Parameter<T>* find(const std::string& name) {
        for (auto* p : params_)
            if (p->name == name) return p;
        return nullptr;
    }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }

    Backbone<T> backbone;
    RegressionHead<T> head;
    Discriminator<T> disc;

  private:
    BackboneMode mode_ = BackboneMode::toy;
    AlignmentSpace space_ = AlignmentSpace::style;
    std::vector<Parameter<T>*> params_;
};

// Adam with decoupled-from-nothing classic L2 weight decay (added to the
// gradient). Parameters that received no gradient this step are skipped
// entirely: disabled model parts stay bit-identical.
template <typename T>
class Adam {
  public:
    Adam() = default;
    Adam(T lr, T weight_decay) : lr_(lr), wd_(weight_decay) {}

    void step(std::vector<Parameter<T>*>& params) {
        for (auto* p : params) {
            if (!p->trainable || !p->touched) continue;
            if (p->adam_m.empty()) {
                p->adam_m = Tensor<T>(p->value.shape());
                p->adam_v = Tensor<T>(p->value.shape());
            }
            ++p->adam_t;
            const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(p->adam_t));
            const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(p->adam_t));
            const int64_t n = p->value.size();
            for (int64_t i = 0; i < n; ++i) {
                const T g = p->grad[i] + wd_ * p->value[i];
                p->adam_m[i] = T(0.9) * p->adam_m[i] + T(0.1) * g;
                p->adam_v[i] = T(0.999) * p->adam_v[i] + T(0.001) * g * g;
                const T mh = static_cast<T>(p->adam_m[i] / bc1);
                const T vh = static_cast<T>(p->adam_v[i] / bc2);
                p->value[i] -= lr_ * mh / (std::sqrt(vh) + T(1e-8));
            }
        }
    }

    void zero_grad(std::vector<Parameter<T>*>& params) {
        for (auto* p : params) p->zero_grad();
    }

    // Fresh moments (used between the pretrain and adaptation phases).
    void reset_state(std::vector<Parameter<T>*>& params) {
        for (auto* p : params) {
            p->adam_m = Tensor<T>();
            p->adam_v = Tensor<T>();
            p->adam_t = 0;
        }
    }

    T lr() const { return lr_; }

  private:
    T lr_ = T(1e-4);
    T wd_ = T(0);
};

}  // namespace styleam
