#include "fevl/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace fevl {

namespace {

// Skips whitespace and '#' comments between header tokens.
int next_header_int(std::istream& in) {
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
        } else if (!std::isspace(c)) {
            in.unget();
            break;
        }
    }
    int value;
    if (!(in >> value)) throw std::runtime_error("read_ppm: malformed header");
    return value;
}

}  // namespace

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
    char magic[2];
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '6')
        throw std::runtime_error("read_ppm: not a P6 PPM: " + path);
    const int w = next_header_int(in);
    const int h = next_header_int(in);
    const int maxval = next_header_int(in);
    if (w <= 0 || h <= 0) throw std::runtime_error("read_ppm: bad dimensions in " + path);
    if (maxval != 255) throw std::runtime_error("read_ppm: only maxval 255 supported");
    in.get();  // single whitespace after maxval

    Image img(static_cast<std::size_t>(h), static_cast<std::size_t>(w), 3);
    std::vector<unsigned char> raw(img.pixels.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw std::runtime_error("read_ppm: truncated pixel data in " + path);
    for (std::size_t i = 0; i < raw.size(); ++i)
        img.pixels[i] = static_cast<double>(raw[i]) / 255.0;
    return img;
}

void write_ppm(const Image& img, const std::string& path) {
    if (img.channels != 3 && img.channels != 1)
        throw std::invalid_argument("write_ppm: 1 or 3 channels required");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw;
    raw.reserve(img.height * img.width * 3);
    for (std::size_t r = 0; r < img.height; ++r)
        for (std::size_t c = 0; c < img.width; ++c)
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double v = img.at(r, c, img.channels == 1 ? 0 : ch);
                const double clamped = std::min(std::max(v, 0.0), 1.0);
                raw.push_back(static_cast<unsigned char>(std::lround(clamped * 255.0)));
            }
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size()));
    if (!out) throw std::runtime_error("write_ppm: write failed for " + path);
}

}  // namespace fevl
