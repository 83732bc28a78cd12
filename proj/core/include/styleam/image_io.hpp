#pragma once

#include <string>
#include <vector>

#include "styleam/tensor.hpp"

namespace styleam {

// 8-bit RGB image, row-major, 3 bytes per pixel.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<unsigned char> rgb;
};

void write_png_rgb8(const std::string& path, const ImageU8& img);
ImageU8 read_png_rgb8(const std::string& path);

// (3,H,W) float tensor in [0,1] <-> 8-bit image.
Tensor<float> to_float_chw(const ImageU8& img);
ImageU8 from_float_chw(const Tensor<float>& t);

}  // namespace styleam
