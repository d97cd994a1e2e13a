#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fevl {

// Row-major image, 1 or 3 channels, values in [0,1]. Pixel p of a maxval-255
// PPM maps to p/255.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    std::vector<double> pixels;  // height*width*channels, interleaved

    Image() = default;
    Image(std::size_t h, std::size_t w, std::size_t c)
        : height(h), width(w), channels(c), pixels(h * w * c, 0.0) {}

    double& at(std::size_t r, std::size_t c, std::size_t ch) {
        return pixels[(r * width + c) * channels + ch];
    }
    double at(std::size_t r, std::size_t c, std::size_t ch) const {
        return pixels[(r * width + c) * channels + ch];
    }
};

// Binary PPM (P6, maxval 255). Round-trips bit-exactly for images whose
// values are multiples of 1/255.
Image read_ppm(const std::string& path);
void write_ppm(const Image& img, const std::string& path);

}  // namespace fevl
