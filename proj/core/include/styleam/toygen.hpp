#pragma once

#include <cstdint>
#include <string>

#include "styleam/image_io.hpp"
#include "styleam/rng.hpp"
#include "styleam/tensor.hpp"

namespace styleam {

// Deterministic synthetic two-domain benchmark. Pristine procedural
// textures are degraded by Gaussian blur or additive noise (source) and
// block pixelation (target); quality labels are PSNR against the pristine
// image, clipped to [15,45] dB and mapped linearly onto [0,5].
struct ToyGenResult {
    std::string source_manifest;
    std::string target_manifest;
    std::string target_scores;  // eval-only labels, never read by training
};

inline constexpr int kToyImageSize = 64;
inline constexpr double kToyPsnrLo = 15.0;
inline constexpr double kToyPsnrHi = 45.0;

ToyGenResult generate_toy_domains(const std::string& out_dir, int n_source, int n_target,
                                  uint64_t seed);

// PSNR between two equally shaped 8-bit images, peak 1.0 on the [0,1]
// scale; +inf for identical inputs.
double psnr_u8(const ImageU8& a, const ImageU8& b);

double psnr_to_label(double psnr_db);

// Degradations (float images in [0,1], shape (3,H,W)).
Tensor<float> gaussian_blur(const Tensor<float>& img, double sigma);
Tensor<float> add_gaussian_noise(const Tensor<float>& img, double sigma, Rng& rng);
Tensor<float> pixelate(const Tensor<float>& img, int block);

}  // namespace styleam
