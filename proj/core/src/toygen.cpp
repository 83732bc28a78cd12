#include "styleam/toygen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <vector>

namespace styleam {

namespace {

namespace fs = std::filesystem;

// Pristine texture: a few random-frequency sinusoids plus soft Gaussian
// blobs, squashed into (0,1). Frequencies span low to high so blur
// sensitivity varies across images.
Tensor<float> make_texture(int n, Rng& rng) {
    constexpr int kWaves = 4;
    constexpr int kBlobs = 3;
    struct Wave {
        double fx, fy, phase, amp, w[3];
    };
    struct Blob {
        double cx, cy, inv2s2, amp, w[3];
    };
    std::vector<Wave> waves(kWaves);
    for (auto& wv : waves) {
        const double freq = rng.uniform(1.0, 14.0);  // cycles per image
        const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
        wv.fx = 2.0 * std::numbers::pi * freq * std::cos(theta) / n;
        wv.fy = 2.0 * std::numbers::pi * freq * std::sin(theta) / n;
        wv.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        wv.amp = rng.uniform(0.25, 1.0);
        for (double& c : wv.w) c = rng.uniform(0.3, 1.0);
    }
    std::vector<Blob> blobs(kBlobs);
    for (auto& bl : blobs) {
        bl.cx = rng.uniform(0.0, n);
        bl.cy = rng.uniform(0.0, n);
        const double s = rng.uniform(3.0, 12.0);
        bl.inv2s2 = 1.0 / (2.0 * s * s);
        bl.amp = rng.uniform(-1.2, 1.2);
        for (double& c : bl.w) c = rng.uniform(0.3, 1.0);
    }
    double base[3];
    for (double& c : base) c = rng.uniform(-0.3, 0.3);

    Tensor<float> img({3, n, n});
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double acc[3] = {base[0], base[1], base[2]};
            for (const auto& wv : waves) {
                const double s = wv.amp * std::sin(wv.fx * x + wv.fy * y + wv.phase);
                for (int c = 0; c < 3; ++c) acc[c] += s * wv.w[c];
            }
            for (const auto& bl : blobs) {
                const double dx = x - bl.cx, dy = y - bl.cy;
                const double g = bl.amp * std::exp(-(dx * dx + dy * dy) * bl.inv2s2);
                for (int c = 0; c < 3; ++c) acc[c] += g * bl.w[c];
            }
            for (int c = 0; c < 3; ++c)
                img.data()[(static_cast<size_t>(c) * n + y) * n + x] =
                    static_cast<float>(0.5 + 0.5 * std::tanh(0.8 * acc[c]));
        }
    return img;
}

void write_manifest(const std::string& path, const std::vector<std::string>& rel_paths,
                    const std::vector<double>* scores) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << (scores != nullptr ? "path,score" : "path") << "\n";
    out.precision(6);
    out << std::fixed;
    for (size_t i = 0; i < rel_paths.size(); ++i) {
        out << rel_paths[i];
        if (scores != nullptr) out << "," << (*scores)[i];
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace

double psnr_u8(const ImageU8& a, const ImageU8& b) {
    if (a.width != b.width || a.height != b.height || a.rgb.size() != b.rgb.size())
        throw ShapeError("psnr_u8: image size mismatch");
    double sse = 0.0;
    for (size_t i = 0; i < a.rgb.size(); ++i) {
        const double d = (static_cast<double>(a.rgb[i]) - static_cast<double>(b.rgb[i])) / 255.0;
        sse += d * d;
    }
    if (sse == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = sse / static_cast<double>(a.rgb.size());
    return 10.0 * std::log10(1.0 / mse);
}

double psnr_to_label(double psnr_db) {
    const double p = std::clamp(psnr_db, kToyPsnrLo, kToyPsnrHi);
    return (p - kToyPsnrLo) / (kToyPsnrHi - kToyPsnrLo) * 5.0;
}

Tensor<float> gaussian_blur(const Tensor<float>& img, double sigma) {
    const int h = img.dim(1), w = img.dim(2);
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<float> kernel(static_cast<size_t>(2 * radius + 1));
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
        kernel[static_cast<size_t>(i + radius)] = static_cast<float>(v);
        norm += v;
    }
    for (auto& k : kernel) k = static_cast<float>(k / norm);

    // separable convolution with reflect padding
    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - 1 - i;
        }
        return i;
    };
    Tensor<float> tmp({3, h, w}), out({3, h, w});
    for (int c = 0; c < 3; ++c) {
        const float* src = img.data() + static_cast<size_t>(c) * h * w;
        float* mid = tmp.data() + static_cast<size_t>(c) * h * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                float s = 0.0f;
                for (int k = -radius; k <= radius; ++k)
                    s += kernel[static_cast<size_t>(k + radius)] * src[y * w + reflect(x + k, w)];
                mid[y * w + x] = s;
            }
        float* dst = out.data() + static_cast<size_t>(c) * h * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                float s = 0.0f;
                for (int k = -radius; k <= radius; ++k)
                    s += kernel[static_cast<size_t>(k + radius)] * mid[reflect(y + k, h) * w + x];
                dst[y * w + x] = s;
            }
    }
    return out;
}

Tensor<float> add_gaussian_noise(const Tensor<float>& img, double sigma, Rng& rng) {
    Tensor<float> out(img.shape());
    for (int64_t i = 0; i < img.size(); ++i)
        out[i] = std::clamp(img[i] + static_cast<float>(rng.normal(0.0, sigma)), 0.0f, 1.0f);
    return out;
}

Tensor<float> pixelate(const Tensor<float>& img, int block) {
    if (block < 1) throw InputError("pixelate: block must be >= 1");
    const int h = img.dim(1), w = img.dim(2);
    Tensor<float> out(img.shape());
    for (int c = 0; c < 3; ++c)
        for (int by = 0; by < h; by += block)
            for (int bx = 0; bx < w; bx += block) {
                const int ey = std::min(by + block, h), ex = std::min(bx + block, w);
                double s = 0.0;
                for (int y = by; y < ey; ++y)
                    for (int x = bx; x < ex; ++x)
                        s += img.data()[(static_cast<size_t>(c) * h + y) * w + x];
                const float avg = static_cast<float>(s / ((ey - by) * (ex - bx)));
                for (int y = by; y < ey; ++y)
                    for (int x = bx; x < ex; ++x)
                        out.data()[(static_cast<size_t>(c) * h + y) * w + x] = avg;
            }
    return out;
}

ToyGenResult generate_toy_domains(const std::string& out_dir, int n_source, int n_target,
                                  uint64_t seed) {
    if (n_source < 1 || n_target < 1)
        throw ConfigError("generate_toy_domains: sample counts must be positive");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "source", ec);
    fs::create_directories(fs::path(out_dir) / "target", ec);
    fs::create_directories(fs::path(out_dir) / "ref" / "source", ec);
    fs::create_directories(fs::path(out_dir) / "ref" / "target", ec);
    if (ec) throw IoError("cannot create output directories under " + out_dir + ": " + ec.message());

    constexpr double kBlurSigma[5] = {0.6, 1.1, 1.8, 3.0, 5.0};
    constexpr double kNoiseSigma[5] = {0.010, 0.022, 0.048, 0.100, 0.200};
    constexpr int kPixelBlock[5] = {2, 3, 4, 6, 10};

    Rng rng = Rng(seed).derive("toygen");

    auto emit = [&](const std::string& domain, int index, const Tensor<float>& pristine,
                    const Tensor<float>& degraded, std::vector<std::string>& rels,
                    std::vector<double>& labels) {
        char name[32];
        std::snprintf(name, sizeof(name), "%s_%04d.png", domain.c_str(), index);
        const ImageU8 ref8 = from_float_chw(pristine);
        const ImageU8 deg8 = from_float_chw(degraded);
        // label from the quantized pair so recomputation from files is exact
        labels.push_back(psnr_to_label(psnr_u8(ref8, deg8)));
        const std::string rel = domain + "/" + name;
        const std::string ref_rel = std::string("ref/") + rel;
        write_png_rgb8((fs::path(out_dir) / rel).string(), deg8);
        write_png_rgb8((fs::path(out_dir) / ref_rel).string(), ref8);
        rels.push_back(rel);
    };

    std::vector<std::string> src_rels, tgt_rels;
    std::vector<double> src_labels, tgt_labels;

    for (int i = 0; i < n_source; ++i) {
        const Tensor<float> pristine = make_texture(kToyImageSize, rng);
        const int combo = i % 10;
        Tensor<float> degraded = combo < 5 ? gaussian_blur(pristine, kBlurSigma[combo])
                                           : add_gaussian_noise(pristine, kNoiseSigma[combo - 5], rng);
        emit("source", i, pristine, degraded, src_rels, src_labels);
    }
    for (int j = 0; j < n_target; ++j) {
        const Tensor<float> pristine = make_texture(kToyImageSize, rng);
        const Tensor<float> degraded = pixelate(pristine, kPixelBlock[j % 5]);
        emit("target", j, pristine, degraded, tgt_rels, tgt_labels);
    }

    ToyGenResult res;
    res.source_manifest = (fs::path(out_dir) / "source_manifest.csv").string();
    res.target_manifest = (fs::path(out_dir) / "target_manifest.csv").string();
    res.target_scores = (fs::path(out_dir) / "target_scores.csv").string();
    write_manifest(res.source_manifest, src_rels, &src_labels);
    write_manifest(res.target_manifest, tgt_rels, nullptr);
    write_manifest(res.target_scores, tgt_rels, &tgt_labels);
    return res;
}

}  // namespace styleam
