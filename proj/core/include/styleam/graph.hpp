#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "styleam/common.hpp"
#include "styleam/tensor.hpp"

namespace styleam {

// Trainable (or tracked) buffer living outside any graph. Gradients from a
// backward pass accumulate here; the optimizer consumes them.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> adam_m, adam_v;
    int64_t adam_t = 0;
    bool trainable = true;  // false for running statistics buffers
    bool touched = false;   // grad accumulated since last zero_grad

    Parameter() = default;
    Parameter(std::string n, Tensor<T> v, bool train = true)
        : name(std::move(n)), value(std::move(v)), trainable(train) {}

    void zero_grad() {
        if (!grad.empty()) grad.fill(T(0));
        touched = false;
    }
};

namespace detail {

// Channel-wise spatial mean and standard deviation of a (B,C,H,W) map.
// Population normalization (1/HW); eps sits inside the square root.
template <typename T>
void channel_stats(const Tensor<T>& x, T eps, Tensor<T>& mean, Tensor<T>& sd) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t hw = static_cast<int64_t>(H) * W;
    if (hw < 1) throw ShapeError("channel_stats: empty spatial extent");
    mean = Tensor<T>({B, C});
    sd = Tensor<T>({B, C});
    const T* px = x.data();
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const T* p = px + (static_cast<int64_t>(b) * C + c) * hw;
            double s = 0.0;
            for (int64_t i = 0; i < hw; ++i) s += p[i];
            const T mu = static_cast<T>(s / static_cast<double>(hw));
            double q = 0.0;
            for (int64_t i = 0; i < hw; ++i) {
                const double d = static_cast<double>(p[i]) - static_cast<double>(mu);
                q += d * d;
            }
            mean.at(b, c) = mu;
            sd.at(b, c) = static_cast<T>(std::sqrt(q / static_cast<double>(hw) + static_cast<double>(eps)));
        }
    }
}

}  // namespace detail

// Reverse-mode autodiff tape. A Graph is built per training step and thrown
// away; parameters persist outside and receive gradient accumulation when
// the tape reaches their leaf nodes.
template <typename T>
class Graph {
  public:
    using BackFn = std::function<void(Graph&, int)>;

    struct Node {
        Tensor<T> value;
        Tensor<T> grad;  // lazily allocated during backward
        BackFn back;
        std::vector<int> parents;
        bool requires_grad = false;
        Parameter<T>* param = nullptr;
    };

    int leaf(Tensor<T> v, bool requires_grad = false) {
        Node n;
        n.value = std::move(v);
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    // Binds a parameter: the leaf holds a copy of the current value and
    // routes gradient back into the parameter on backward.
    int param(Parameter<T>& p) {
        Node n;
        n.value = p.value;
        n.requires_grad = true;
        n.param = &p;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    const Tensor<T>& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    bool requires(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
    int size() const { return static_cast<int>(nodes_.size()); }

    Tensor<T>& grad_buf(int id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.empty() && n.value.size() > 0) n.grad = Tensor<T>(n.value.shape());
        return n.grad;
    }

    const Tensor<T>& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }

    // Backpropagates from a scalar node. Nodes that did not receive any
    // gradient (detached side computations) are skipped.
    void backward(int root) {
        Node& r = nodes_[static_cast<size_t>(root)];
        if (r.value.size() != 1) throw InputError("backward: root must be scalar");
        grad_buf(root)[0] = T(1);
        for (int i = root; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.grad.empty()) continue;
            if (n.param != nullptr) {
                Parameter<T>& p = *n.param;
                if (p.grad.empty()) p.grad = Tensor<T>(p.value.shape());
                const int64_t m = n.grad.size();
                for (int64_t k = 0; k < m; ++k) p.grad[k] += n.grad[k];
                p.touched = true;
            } else if (n.back) {
                n.back(*this, i);
            }
        }
    }

    // ---- op builders ----------------------------------------------------

    int conv2d(int x, int w, int b, int stride, int pad);
    int batchnorm2d(int x, int gamma, int beta, Tensor<T>* run_mean, Tensor<T>* run_var,
                    bool training, T momentum, T eps);
    int relu(int x);
    int linear(int x, int w, int b);
    int sigmoid(int x);
    int affine_const(int x, T scale, T shift);
    int global_avg_pool(int x);
    int style_stats(int x, T eps);
    int slice_cols(int x, int c0, int c1);
    int concat_cols(int a, int b);
    int permute_rows(int x, std::vector<int> perm);
    int row_lerp(int a, int b, std::vector<T> lam);
    int adain(int x, int tgt_mean, int tgt_std, T eps);
    int grl(int x, T coeff);
    int quality_l2(int preds, std::vector<T> labels);
    int relaxed_domain_bce(int p_src, int p_tgt, int h);
    int add_scaled(int a, int b, T k);
    int weighted_sum(int x, std::vector<T> weights);

  private:
    int push(Tensor<T> value, std::vector<int> parents, BackFn back) {
        Node n;
        n.value = std::move(value);
        n.parents = std::move(parents);
        for (int p : n.parents)
            if (nodes_[static_cast<size_t>(p)].requires_grad) n.requires_grad = true;
        if (n.requires_grad) n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::vector<Node> nodes_;
};

namespace detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Unfolds one image of x (B,Cin,H,W) into (Cin*K*K, Ho*Wo).
template <typename T>
void im2col(const Tensor<T>& x, int b, int K, int stride, int pad, int Ho, int Wo, MatRM<T>& col) {
    const int Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    for (int ci = 0; ci < Cin; ++ci) {
        for (int ki = 0; ki < K; ++ki) {
            for (int kj = 0; kj < K; ++kj) {
                const int row = (ci * K + ki) * K + kj;
                T* dst = col.data() + static_cast<int64_t>(row) * Ho * Wo;
                for (int ho = 0; ho < Ho; ++ho) {
                    const int h = ho * stride + ki - pad;
                    if (h < 0 || h >= H) {
                        for (int wo = 0; wo < Wo; ++wo) dst[ho * Wo + wo] = T(0);
                        continue;
                    }
                    const T* src = &x.at(b, ci, h, 0);
                    for (int wo = 0; wo < Wo; ++wo) {
                        const int wcol = wo * stride + kj - pad;
                        dst[ho * Wo + wo] = (wcol >= 0 && wcol < W) ? src[wcol] : T(0);
                    }
                }
            }
        }
    }
}

}  // namespace detail

template <typename T>
int Graph<T>::conv2d(int x, int w, int b, int stride, int pad) {
    const Tensor<T>& X = val(x);
    const Tensor<T>& Wt = val(w);
    const Tensor<T>& Bt = val(b);
    if (X.rank() != 4) throw ShapeError("conv2d: input must be (B,C,H,W), got " + X.shape_str());
    const int Bn = X.dim(0), Cin = X.dim(1), H = X.dim(2), Wd = X.dim(3);
    const int Cout = Wt.dim(0), K = Wt.dim(2);
    if (Wt.dim(1) != Cin)
        throw ShapeError("conv2d: weight expects " + std::to_string(Wt.dim(1)) +
                         " input channels, input has " + std::to_string(Cin));
    if (Bt.size() != Cout) throw ShapeError("conv2d: bias size mismatch");
    const int Ho = (H + 2 * pad - K) / stride + 1;
    const int Wo = (Wd + 2 * pad - K) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: output would be empty");

    const int ck = Cin * K * K;
    Tensor<T> out({Bn, Cout, Ho, Wo});
    Eigen::Map<const detail::MatRM<T>> Wm(Wt.data(), Cout, ck);
    detail::MatRM<T> col(ck, Ho * Wo);
    for (int bi = 0; bi < Bn; ++bi) {
        detail::im2col(X, bi, K, stride, pad, Ho, Wo, col);
        Eigen::Map<detail::MatRM<T>> Om(&out.at(bi, 0, 0, 0), Cout, Ho * Wo);
        Om.noalias() = Wm * col;
        for (int co = 0; co < Cout; ++co) Om.row(co).array() += Bt[co];
    }

    auto back = [stride, pad, K, Ho, Wo, ck](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int xi = node.parents[0], wi = node.parents[1], bi_ = node.parents[2];
        const Tensor<T>& X = g.val(xi);
        const Tensor<T>& Wt = g.val(wi);
        const Tensor<T>& G = node.grad;
        const int Bn = X.dim(0), Cout = Wt.dim(0);
        Eigen::Map<const detail::MatRM<T>> Wm(Wt.data(), Cout, ck);
        detail::MatRM<T> col(ck, Ho * Wo), dcol(ck, Ho * Wo);
        const bool need_x = g.requires(xi), need_w = g.requires(wi), need_b = g.requires(bi_);
        Tensor<T>* dX = need_x ? &g.grad_buf(xi) : nullptr;
        Tensor<T>* dW = need_w ? &g.grad_buf(wi) : nullptr;
        Tensor<T>* dB = need_b ? &g.grad_buf(bi_) : nullptr;
        const int Cin = X.dim(1), H = X.dim(2), Wd = X.dim(3);
        for (int bb = 0; bb < Bn; ++bb) {
            Eigen::Map<const detail::MatRM<T>> Gm(&G.at(bb, 0, 0, 0), Cout, Ho * Wo);
            if (need_w || need_x) detail::im2col(X, bb, K, stride, pad, Ho, Wo, col);
            if (need_w) {
                Eigen::Map<detail::MatRM<T>> dWm(dW->data(), Cout, ck);
                dWm.noalias() += Gm * col.transpose();
            }
            if (need_b) {
                for (int co = 0; co < Cout; ++co) (*dB)[co] += Gm.row(co).sum();
            }
            if (need_x) {
                dcol.noalias() = Wm.transpose() * Gm;
                for (int ci = 0; ci < Cin; ++ci) {
                    for (int ki = 0; ki < K; ++ki) {
                        for (int kj = 0; kj < K; ++kj) {
                            const int row = (ci * K + ki) * K + kj;
                            const T* src = dcol.data() + static_cast<int64_t>(row) * Ho * Wo;
                            for (int ho = 0; ho < Ho; ++ho) {
                                const int h = ho * stride + ki - pad;
                                if (h < 0 || h >= H) continue;
                                T* dst = &dX->at(bb, ci, h, 0);
                                for (int wo = 0; wo < Wo; ++wo) {
                                    const int wcol = wo * stride + kj - pad;
                                    if (wcol >= 0 && wcol < Wd) dst[wcol] += src[ho * Wo + wo];
                                }
                            }
                        }
                    }
                }
            }
        }
    };
    return push(std::move(out), {x, w, b}, back);
}

template <typename T>
int Graph<T>::batchnorm2d(int x, int gamma, int beta, Tensor<T>* run_mean, Tensor<T>* run_var,
                          bool training, T momentum, T eps) {
    const Tensor<T>& X = val(x);
    const Tensor<T>& Gm = val(gamma);
    const Tensor<T>& Bt = val(beta);
    const int Bn = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    if (Gm.size() != C || Bt.size() != C) throw ShapeError("batchnorm2d: affine size mismatch");
    const int64_t m = static_cast<int64_t>(Bn) * H * W;
    const int64_t hw = static_cast<int64_t>(H) * W;

    Tensor<T> xhat({Bn, C, H, W});
    Tensor<T> inv_sd({C});
    if (training) {
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int bb = 0; bb < Bn; ++bb) {
                const T* p = &X.at(bb, c, 0, 0);
                for (int64_t i = 0; i < hw; ++i) s += p[i];
            }
            const double mu = s / static_cast<double>(m);
            double q = 0.0;
            for (int bb = 0; bb < Bn; ++bb) {
                const T* p = &X.at(bb, c, 0, 0);
                for (int64_t i = 0; i < hw; ++i) {
                    const double d = p[i] - mu;
                    q += d * d;
                }
            }
            const double var = q / static_cast<double>(m);
            const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            inv_sd[c] = inv;
            for (int bb = 0; bb < Bn; ++bb) {
                const T* p = &X.at(bb, c, 0, 0);
                T* ph = &xhat.at(bb, c, 0, 0);
                for (int64_t i = 0; i < hw; ++i) ph[i] = static_cast<T>((p[i] - mu) * inv);
            }
            if (run_mean != nullptr && run_var != nullptr) {
                const double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
                (*run_mean)[c] = static_cast<T>((1.0 - momentum) * (*run_mean)[c] + momentum * mu);
                (*run_var)[c] = static_cast<T>((1.0 - momentum) * (*run_var)[c] + momentum * unbiased);
            }
        }
    } else {
        if (run_mean == nullptr || run_var == nullptr)
            throw ConfigError("batchnorm2d: eval mode requires running statistics");
        for (int c = 0; c < C; ++c) {
            const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>((*run_var)[c]) + static_cast<double>(eps)));
            const T mu = (*run_mean)[c];
            inv_sd[c] = inv;
            for (int bb = 0; bb < Bn; ++bb) {
                const T* p = &X.at(bb, c, 0, 0);
                T* ph = &xhat.at(bb, c, 0, 0);
                for (int64_t i = 0; i < hw; ++i) ph[i] = (p[i] - mu) * inv;
            }
        }
    }

    Tensor<T> out({Bn, C, H, W});
    for (int bb = 0; bb < Bn; ++bb)
        for (int c = 0; c < C; ++c) {
            const T* ph = &xhat.at(bb, c, 0, 0);
            T* po = &out.at(bb, c, 0, 0);
            const T gc = Gm[c], bc = Bt[c];
            for (int64_t i = 0; i < hw; ++i) po[i] = gc * ph[i] + bc;
        }

    auto back = [xhat = std::move(xhat), inv_sd = std::move(inv_sd), training, m, hw](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int xi = node.parents[0], gi = node.parents[1], bi = node.parents[2];
        const Tensor<T>& G = node.grad;
        const Tensor<T>& Gam = g.val(gi);
        const int Bn = G.dim(0), C = G.dim(1);
        const bool need_x = g.requires(xi);
        Tensor<T>* dX = need_x ? &g.grad_buf(xi) : nullptr;
        Tensor<T>* dG = g.requires(gi) ? &g.grad_buf(gi) : nullptr;
        Tensor<T>* dB = g.requires(bi) ? &g.grad_buf(bi) : nullptr;
        for (int c = 0; c < C; ++c) {
            double gsum = 0.0, gxsum = 0.0;
            for (int bb = 0; bb < Bn; ++bb) {
                const T* pg = &G.at(bb, c, 0, 0);
                const T* ph = &xhat.at(bb, c, 0, 0);
                for (int64_t i = 0; i < hw; ++i) {
                    gsum += pg[i];
                    gxsum += static_cast<double>(pg[i]) * ph[i];
                }
            }
            if (dG != nullptr) (*dG)[c] += static_cast<T>(gxsum);
            if (dB != nullptr) (*dB)[c] += static_cast<T>(gsum);
            if (need_x) {
                const T a = Gam[c] * inv_sd[c];
                if (training) {
                    const T mg = static_cast<T>(gsum / static_cast<double>(m));
                    const T mgx = static_cast<T>(gxsum / static_cast<double>(m));
                    for (int bb = 0; bb < Bn; ++bb) {
                        const T* pg = &G.at(bb, c, 0, 0);
                        const T* ph = &xhat.at(bb, c, 0, 0);
                        T* pd = &dX->at(bb, c, 0, 0);
                        for (int64_t i = 0; i < hw; ++i) pd[i] += a * (pg[i] - mg - ph[i] * mgx);
                    }
                } else {
                    for (int bb = 0; bb < Bn; ++bb) {
                        const T* pg = &G.at(bb, c, 0, 0);
                        T* pd = &dX->at(bb, c, 0, 0);
                        for (int64_t i = 0; i < hw; ++i) pd[i] += a * pg[i];
                    }
                }
            }
        }
    };
    return push(std::move(out), {x, gamma, beta}, back);
}

template <typename T>
int Graph<T>::relu(int x) {
    const Tensor<T>& X = val(x);
    Tensor<T> out(X.shape());
    const int64_t n = X.size();
    for (int64_t i = 0; i < n; ++i) out[i] = X[i] > T(0) ? X[i] : T(0);
    auto back = [](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int xi = node.parents[0];
        if (!g.requires(xi)) return;
        const Tensor<T>& X = g.val(xi);
        Tensor<T>& dX = g.grad_buf(xi);
        const Tensor<T>& G = node.grad;
        const int64_t n = X.size();
        for (int64_t i = 0; i < n; ++i)
            if (X[i] > T(0)) dX[i] += G[i];
    };
    return push(std::move(out), {x}, back);
}

template <typename T>
int Graph<T>::linear(int x, int w, int b) {
    const Tensor<T>& X = val(x);
    const Tensor<T>& Wt = val(w);
    const Tensor<T>& Bt = val(b);
    if (X.rank() != 2) throw ShapeError("linear: input must be (B,D), got " + X.shape_str());
    const int Bn = X.dim(0), D = X.dim(1), O = Wt.dim(0);
    if (Wt.dim(1) != D)
        throw ConfigError("linear: layer expects input dim " + std::to_string(Wt.dim(1)) +
                          ", got " + std::to_string(D));
    Tensor<T> out({Bn, O});
    Eigen::Map<const detail::MatRM<T>> Xm(X.data(), Bn, D), Wm(Wt.data(), O, D);
    Eigen::Map<detail::MatRM<T>> Om(out.data(), Bn, O);
    Om.noalias() = Xm * Wm.transpose();
    for (int r = 0; r < Bn; ++r)
        for (int c = 0; c < O; ++c) Om(r, c) += Bt[c];
    auto back = [](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int xi = node.parents[0], wi = node.parents[1], bi = node.parents[2];
        const Tensor<T>& X = g.val(xi);
        const Tensor<T>& Wt = g.val(wi);
        const Tensor<T>& G = node.grad;
        const int Bn = X.dim(0), D = X.dim(1), O = Wt.dim(0);
        Eigen::Map<const detail::MatRM<T>> Xm(X.data(), Bn, D), Wm(Wt.data(), O, D),
            Gm(G.data(), Bn, O);
        if (g.requires(xi)) {
            Eigen::Map<detail::MatRM<T>> dXm(g.grad_buf(xi).data(), Bn, D);
            dXm.noalias() += Gm * Wm;
        }
        if (g.requires(wi)) {
            Eigen::Map<detail::MatRM<T>> dWm(g.grad_buf(wi).data(), O, D);
            dWm.noalias() += Gm.transpose() * Xm;
        }
        if (g.requires(bi)) {
            Tensor<T>& dB = g.grad_buf(bi);
            for (int r = 0; r < Bn; ++r)
                for (int c = 0; c < O; ++c) dB[c] += Gm(r, c);
        }
    };
    return push(std::move(out), {x, w, b}, back);
}

template <typename T>
int Graph<T>::sigmoid(int x) {
    const Tensor<T>& X = val(x);
    Tensor<T> out(X.shape());
    const int64_t n = X.size();
    for (int64_t i = 0; i < n; ++i) out[i] = T(1) / (T(1) + std::exp(-X[i]));
    auto back = [](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int xi = node.parents[0];
        if (!g.requires(xi)) return;
        Tensor<T>& dX = g.grad_buf(xi);
        const Tensor<T>& Y = node.value;
        const Tensor<T>& G = node.grad;
        const int64_t n = Y.size();
        for (int64_t i = 0; i < n; ++i) dX[i] += G[i] * Y[i] * (T(1) - Y[i]);
    };
    return push(std::move(out), {x}, back);
}

template <typename T>
int Graph<T>::affine_const(int x, T scale, T shift) {
    const Tensor<T>& X = val(x);
    Tensor<T> out(X.shape());
    const int64_t n = X.size();
    for (int64_t i = 0; i < n; ++i) out[i] = scale * X[i] + shift;
    auto back = [scale](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int xi = node.parents[0];
        if (!g.requires(xi)) return;
        Tensor<T>& dX = g.grad_buf(xi);
        const Tensor<T>& G = node.grad;
        const int64_t n = G.size();
        for (int64_t i = 0; i < n; ++i) dX[i] += scale * G[i];
    };
    return push(std::move(out), {x}, back);
}

template <typename T>
int Graph<T>::global_avg_pool(int x) {
    const Tensor<T>& X = val(x);
    if (X.rank() != 4) throw ShapeError("global_avg_pool: input must be (B,C,H,W)");
    const int Bn = X.dim(0), C = X.dim(1);
    const int64_t hw = static_cast<int64_t>(X.dim(2)) * X.dim(3);
    Tensor<T> out({Bn, C});
    for (int bb = 0; bb < Bn; ++bb)
        for (int c = 0; c < C; ++c) {
            const T* p = &X.at(bb, c, 0, 0);
            double s = 0.0;
            for (int64_t i = 0; i < hw; ++i) s += p[i];
            out.at(bb, c) = static_cast<T>(s / static_cast<double>(hw));
        }
    auto back = [hw](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int xi = node.parents[0];
        if (!g.requires(xi)) return;
        Tensor<T>& dX = g.grad_buf(xi);
        const Tensor<T>& G = node.grad;
        const int Bn = G.dim(0), C = G.dim(1);
        const T inv = T(1) / static_cast<T>(hw);
        for (int bb = 0; bb < Bn; ++bb)
            for (int c = 0; c < C; ++c) {
                const T gv = G.at(bb, c) * inv;
                T* pd = &dX.at(bb, c, 0, 0);
                for (int64_t i = 0; i < hw; ++i) pd[i] += gv;
            }
    };
    return push(std::move(out), {x}, back);
}

// (B,C,H,W) -> (B,2C): [channel means | channel stds].
template <typename T>
int Graph<T>::style_stats(int x, T eps) {
    const Tensor<T>& X = val(x);
    if (X.rank() != 4) throw ShapeError("style_stats: input must be (B,C,H,W)");
    Tensor<T> mean, sd;
    detail::channel_stats(X, eps, mean, sd);
    const int Bn = X.dim(0), C = X.dim(1);
    Tensor<T> out({Bn, 2 * C});
    for (int bb = 0; bb < Bn; ++bb)
        for (int c = 0; c < C; ++c) {
            out.at(bb, c) = mean.at(bb, c);
            out.at(bb, C + c) = sd.at(bb, c);
        }
    auto back = [](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int xi = node.parents[0];
        if (!g.requires(xi)) return;
        const Tensor<T>& X = g.val(xi);
        Tensor<T>& dX = g.grad_buf(xi);
        const Tensor<T>& Y = node.value;
        const Tensor<T>& G = node.grad;
        const int Bn = X.dim(0), C = X.dim(1);
        const int64_t hw = static_cast<int64_t>(X.dim(2)) * X.dim(3);
        const T inv_hw = T(1) / static_cast<T>(hw);
        for (int bb = 0; bb < Bn; ++bb)
            for (int c = 0; c < C; ++c) {
                const T mu = Y.at(bb, c), sd = Y.at(bb, C + c);
                const T gm = G.at(bb, c) * inv_hw;
                const T gs = G.at(bb, C + c) * inv_hw / sd;
                const T* p = &X.at(bb, c, 0, 0);
                T* pd = &dX.at(bb, c, 0, 0);
                for (int64_t i = 0; i < hw; ++i) pd[i] += gm + gs * (p[i] - mu);
            }
    };
    return push(std::move(out), {x}, back);
}

template <typename T>
int Graph<T>::slice_cols(int x, int c0, int c1) {
    const Tensor<T>& X = val(x);
    const int Bn = X.dim(0), C = X.dim(1), Cn = c1 - c0;
    if (c0 < 0 || c1 > C || Cn <= 0) throw ShapeError("slice_cols: bad column range");
    Tensor<T> out({Bn, Cn});
    for (int r = 0; r < Bn; ++r)
        for (int c = 0; c < Cn; ++c) out.at(r, c) = X.at(r, c0 + c);
    auto back = [c0, Cn](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int xi = node.parents[0];
        if (!g.requires(xi)) return;
        Tensor<T>& dX = g.grad_buf(xi);
        const Tensor<T>& G = node.grad;
        const int Bn = G.dim(0);
        for (int r = 0; r < Bn; ++r)
            for (int c = 0; c < Cn; ++c) dX.at(r, c0 + c) += G.at(r, c);
    };
    return push(std::move(out), {x}, back);
}

template <typename T>
int Graph<T>::concat_cols(int a, int b) {
    const Tensor<T>& A = val(a);
    const Tensor<T>& B = val(b);
    if (A.dim(0) != B.dim(0)) throw ShapeError("concat_cols: row count mismatch");
    const int Bn = A.dim(0), Ca = A.dim(1), Cb = B.dim(1);
    Tensor<T> out({Bn, Ca + Cb});
    for (int r = 0; r < Bn; ++r) {
        for (int c = 0; c < Ca; ++c) out.at(r, c) = A.at(r, c);
        for (int c = 0; c < Cb; ++c) out.at(r, Ca + c) = B.at(r, c);
    }
    auto back = [Ca, Cb](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int ai = node.parents[0], bi = node.parents[1];
        const Tensor<T>& G = node.grad;
        const int Bn = G.dim(0);
        if (g.requires(ai)) {
            Tensor<T>& dA = g.grad_buf(ai);
            for (int r = 0; r < Bn; ++r)
                for (int c = 0; c < Ca; ++c) dA.at(r, c) += G.at(r, c);
        }
        if (g.requires(bi)) {
            Tensor<T>& dB = g.grad_buf(bi);
            for (int r = 0; r < Bn; ++r)
                for (int c = 0; c < Cb; ++c) dB.at(r, c) += G.at(r, Ca + c);
        }
    };
    return push(std::move(out), {a, b}, back);
}

// Permutes along dim 0; works for any rank (rows = flattened trailing dims).
template <typename T>
int Graph<T>::permute_rows(int x, std::vector<int> perm) {
    const Tensor<T>& X = val(x);
    const int Bn = X.dim(0);
    if (static_cast<int>(perm.size()) != Bn) throw ShapeError("permute_rows: perm size mismatch");
    const int64_t stride = X.size() / Bn;
    Tensor<T> out(X.shape());
    for (int r = 0; r < Bn; ++r) {
        const T* src = X.data() + static_cast<int64_t>(perm[static_cast<size_t>(r)]) * stride;
        T* dst = out.data() + static_cast<int64_t>(r) * stride;
        std::copy(src, src + stride, dst);
    }
    auto back = [perm = std::move(perm), stride](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int xi = node.parents[0];
        if (!g.requires(xi)) return;
        Tensor<T>& dX = g.grad_buf(xi);
        const Tensor<T>& G = node.grad;
        const int Bn = G.dim(0);
        for (int r = 0; r < Bn; ++r) {
            const T* src = G.data() + static_cast<int64_t>(r) * stride;
            T* dst = dX.data() + static_cast<int64_t>(perm[static_cast<size_t>(r)]) * stride;
            for (int64_t i = 0; i < stride; ++i) dst[i] += src[i];
        }
    };
    return push(std::move(out), {x}, back);
}

// Per-row convex combination: out[r] = lam[r]*a[r] + (1-lam[r])*b[r].
template <typename T>
int Graph<T>::row_lerp(int a, int b, std::vector<T> lam) {
    const Tensor<T>& A = val(a);
    const Tensor<T>& B = val(b);
    if (!same_shape(A, B)) throw ShapeError("row_lerp: shape mismatch");
    const int Bn = A.dim(0);
    if (static_cast<int>(lam.size()) != Bn) throw ShapeError("row_lerp: lambda size mismatch");
    const int64_t stride = A.size() / Bn;
    Tensor<T> out(A.shape());
    for (int r = 0; r < Bn; ++r) {
        const T l = lam[static_cast<size_t>(r)];
        const T* pa = A.data() + r * stride;
        const T* pb = B.data() + r * stride;
        T* po = out.data() + r * stride;
        for (int64_t i = 0; i < stride; ++i) po[i] = l * pa[i] + (T(1) - l) * pb[i];
    }
    auto back = [lam = std::move(lam), stride](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int ai = node.parents[0], bi = node.parents[1];
        const Tensor<T>& G = node.grad;
        const int Bn = G.dim(0);
        for (int r = 0; r < Bn; ++r) {
            const T l = lam[static_cast<size_t>(r)];
            const T* pg = G.data() + r * stride;
            if (g.requires(ai)) {
                T* pd = g.grad_buf(ai).data() + r * stride;
                for (int64_t i = 0; i < stride; ++i) pd[i] += l * pg[i];
            }
            if (g.requires(bi)) {
                T* pd = g.grad_buf(bi).data() + r * stride;
                for (int64_t i = 0; i < stride; ++i) pd[i] += (T(1) - l) * pg[i];
            }
        }
    };
    return push(std::move(out), {a, b}, back);
}

// Re-normalizes x to carry the target per-sample style:
//   out = tgt_sd * (x - mean(x)) / sd(x) + tgt_mean, sd with eps floor.
template <typename T>
int Graph<T>::adain(int x, int tgt_mean, int tgt_std, T eps) {
    const Tensor<T>& X = val(x);
    const Tensor<T>& Tm = val(tgt_mean);
    const Tensor<T>& Ts = val(tgt_std);
    if (X.rank() != 4) throw ShapeError("adain: input must be (B,C,H,W)");
    const int Bn = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    if (Tm.dim(0) != Bn || Tm.dim(1) != C || Ts.dim(0) != Bn || Ts.dim(1) != C)
        throw ShapeError("adain: target style shape mismatch (want (B,C))");
    const int64_t hw = static_cast<int64_t>(H) * W;
    Tensor<T> mean, sd;
    detail::channel_stats(X, eps, mean, sd);
    Tensor<T> out({Bn, C, H, W});
    for (int bb = 0; bb < Bn; ++bb)
        for (int c = 0; c < C; ++c) {
            const T mu = mean.at(bb, c), s = sd.at(bb, c);
            const T tm = Tm.at(bb, c), ts = Ts.at(bb, c);
            const T* p = &X.at(bb, c, 0, 0);
            T* po = &out.at(bb, c, 0, 0);
            for (int64_t i = 0; i < hw; ++i) po[i] = ts * (p[i] - mu) / s + tm;
        }
    auto back = [mean = std::move(mean), sd = std::move(sd), hw](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int xi = node.parents[0], tmi = node.parents[1], tsi = node.parents[2];
        const Tensor<T>& X = g.val(xi);
        const Tensor<T>& Ts = g.val(tsi);
        const Tensor<T>& G = node.grad;
        const int Bn = X.dim(0), C = X.dim(1);
        const bool need_x = g.requires(xi);
        Tensor<T>* dX = need_x ? &g.grad_buf(xi) : nullptr;
        Tensor<T>* dTm = g.requires(tmi) ? &g.grad_buf(tmi) : nullptr;
        Tensor<T>* dTs = g.requires(tsi) ? &g.grad_buf(tsi) : nullptr;
        for (int bb = 0; bb < Bn; ++bb)
            for (int c = 0; c < C; ++c) {
                const T mu = mean.at(bb, c), s = sd.at(bb, c);
                const T ts = Ts.at(bb, c);
                const T* p = &X.at(bb, c, 0, 0);
                const T* pg = &G.at(bb, c, 0, 0);
                double gsum = 0.0, gnsum = 0.0;
                for (int64_t i = 0; i < hw; ++i) {
                    const double nrm = (p[i] - mu) / s;
                    gsum += pg[i];
                    gnsum += pg[i] * nrm;
                }
                if (dTm != nullptr) dTm->at(bb, c) += static_cast<T>(gsum);
                if (dTs != nullptr) dTs->at(bb, c) += static_cast<T>(gnsum);
                if (need_x) {
                    // instance-norm backward scaled by the target std
                    const T mg = static_cast<T>(gsum / static_cast<double>(hw));
                    const T mgn = static_cast<T>(gnsum / static_cast<double>(hw));
                    T* pd = &dX->at(bb, c, 0, 0);
                    for (int64_t i = 0; i < hw; ++i) {
                        const T nrm = (p[i] - mu) / s;
                        pd[i] += ts / s * (pg[i] - mg - nrm * mgn);
                    }
                }
            }
    };
    return push(std::move(out), {x, tgt_mean, tgt_std}, back);
}

// Identity forward; backward multiplies the incoming gradient by -coeff.
template <typename T>
int Graph<T>::grl(int x, T coeff) {
    if (coeff < T(0)) throw ConfigError("grl: coefficient must be nonnegative");
    Tensor<T> out = val(x);
    auto back = [coeff](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int xi = node.parents[0];
        if (!g.requires(xi)) return;
        Tensor<T>& dX = g.grad_buf(xi);
        const Tensor<T>& G = node.grad;
        const int64_t n = G.size();
        for (int64_t i = 0; i < n; ++i) dX[i] += -coeff * G[i];
    };
    return push(std::move(out), {x}, back);
}

// Mean over the batch of the l2 norm of each scalar residual, i.e.
// (1/n) * sum_i |pred_i - label_i|.
template <typename T>
int Graph<T>::quality_l2(int preds, std::vector<T> labels) {
    const Tensor<T>& P = val(preds);
    const int64_t n = P.size();
    if (n < 1) throw InputError("quality_l2: empty batch");
    if (static_cast<int64_t>(labels.size()) != n)
        throw InputError("quality_l2: prediction/label length mismatch");
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += std::abs(static_cast<double>(P[i]) - static_cast<double>(labels[static_cast<size_t>(i)]));
    Tensor<T> out({1});
    out[0] = static_cast<T>(s / static_cast<double>(n));
    auto back = [labels = std::move(labels)](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int pi = node.parents[0];
        if (!g.requires(pi)) return;
        const Tensor<T>& P = g.val(pi);
        Tensor<T>& dP = g.grad_buf(pi);
        const T gv = node.grad[0];
        const int64_t n = P.size();
        const T inv = T(1) / static_cast<T>(n);
        for (int64_t i = 0; i < n; ++i) {
            const T r = P[i] - labels[static_cast<size_t>(i)];
            const T sgn = r > T(0) ? T(1) : (r < T(0) ? T(-1) : T(0));
            dP[i] += gv * sgn * inv;
        }
    };
    return push(std::move(out), {preds}, back);
}

// Domain discriminator loss with relaxation flag h in {0,1}:
//   -(1/n_s) sum log(1 - |p_i - h|) - (1/n_t) sum log(q_j),
// probabilities clamped to [1e-7, 1-1e-7] before the logs. h = 0 is the
// plain source-vs-target BCE.
template <typename T>
int Graph<T>::relaxed_domain_bce(int p_src, int p_tgt, int h) {
    if (h != 0 && h != 1) throw InputError("relaxed_domain_bce: h must be 0 or 1");
    const Tensor<T>& Ps = val(p_src);
    const Tensor<T>& Pt = val(p_tgt);
    const int64_t ns = Ps.size(), nt = Pt.size();
    if (ns < 1 || nt < 1) throw InputError("relaxed_domain_bce: empty batch");
    constexpr double kClamp = 1e-7;
    auto clamp01 = [](double p) { return std::min(std::max(p, kClamp), 1.0 - kClamp); };
    double loss = 0.0;
    for (int64_t i = 0; i < ns; ++i) {
        const double p = clamp01(static_cast<double>(Ps[i]));
        loss -= std::log(1.0 - std::abs(p - static_cast<double>(h))) / static_cast<double>(ns);
    }
    for (int64_t j = 0; j < nt; ++j) {
        const double q = clamp01(static_cast<double>(Pt[j]));
        loss -= std::log(q) / static_cast<double>(nt);
    }
    Tensor<T> out({1});
    out[0] = static_cast<T>(loss);
    auto back = [h](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int si = node.parents[0], ti = node.parents[1];
        const T gv = node.grad[0];
        constexpr double kClamp = 1e-7;
        if (g.requires(si)) {
            const Tensor<T>& Ps = g.val(si);
            Tensor<T>& dS = g.grad_buf(si);
            const int64_t ns = Ps.size();
            for (int64_t i = 0; i < ns; ++i) {
                const double p = static_cast<double>(Ps[i]);
                if (p <= kClamp || p >= 1.0 - kClamp) continue;  // clamped: no gradient
                // h=0: d/dp[-log(1-p)] = 1/(1-p);  h=1: d/dp[-log(p)] = -1/p
                const double d = h == 0 ? 1.0 / (1.0 - p) : -1.0 / p;
                dS[i] += gv * static_cast<T>(d / static_cast<double>(ns));
            }
        }
        if (g.requires(ti)) {
            const Tensor<T>& Pt = g.val(ti);
            Tensor<T>& dT = g.grad_buf(ti);
            const int64_t nt = Pt.size();
            for (int64_t j = 0; j < nt; ++j) {
                const double q = static_cast<double>(Pt[j]);
                if (q <= kClamp || q >= 1.0 - kClamp) continue;
                dT[j] += gv * static_cast<T>(-1.0 / q / static_cast<double>(nt));
            }
        }
    };
    return push(std::move(out), {p_src, p_tgt}, back);
}

template <typename T>
int Graph<T>::add_scaled(int a, int b, T k) {
    const Tensor<T>& A = val(a);
    const Tensor<T>& B = val(b);
    if (A.size() != 1 || B.size() != 1) throw ShapeError("add_scaled: scalar inputs expected");
    Tensor<T> out({1});
    out[0] = A[0] + k * B[0];
    auto back = [k](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const T gv = node.grad[0];
        if (g.requires(node.parents[0])) g.grad_buf(node.parents[0])[0] += gv;
        if (g.requires(node.parents[1])) g.grad_buf(node.parents[1])[0] += k * gv;
    };
    return push(std::move(out), {a, b}, back);
}

// Fixed-weight contraction to a scalar; used by gradient checks.
template <typename T>
int Graph<T>::weighted_sum(int x, std::vector<T> weights) {
    const Tensor<T>& X = val(x);
    if (static_cast<int64_t>(weights.size()) != X.size())
        throw ShapeError("weighted_sum: weight count mismatch");
    double s = 0.0;
    for (int64_t i = 0; i < X.size(); ++i) s += static_cast<double>(X[i]) * weights[static_cast<size_t>(i)];
    Tensor<T> out({1});
    out[0] = static_cast<T>(s);
    auto back = [weights = std::move(weights)](Graph<T>& g, int self) {
        const auto& node = g.nodes_[static_cast<size_t>(self)];
        const int xi = node.parents[0];
        if (!g.requires(xi)) return;
        Tensor<T>& dX = g.grad_buf(xi);
        const T gv = node.grad[0];
        const int64_t n = dX.size();
        for (int64_t i = 0; i < n; ++i) dX[i] += gv * weights[static_cast<size_t>(i)];
    };
    return push(std::move(out), {x}, back);
}

}  // namespace styleam
