#pragma once

#include <string>
#include <vector>

namespace ocsr {

// Row-major image, values in [0,1]. channels is 1 (gray/mask) or 3 (rgb).
struct Image {
    int w = 0, h = 0, channels = 1;
    std::vector<double> data;

    Image() = default;
    Image(int w_, int h_, int c_, double fill = 0.0)
        : w(w_), h(h_), channels(c_), data(size_t(w_) * h_ * c_, fill) {}

    double& at(int x, int y, int c = 0) { return data[(size_t(y) * w + x) * channels + c]; }
    double at(int x, int y, int c = 0) const { return data[(size_t(y) * w + x) * channels + c]; }
    bool inside(int x, int y) const { return x >= 0 && x < w && y >= 0 && y < h; }
};

// Binary PPM: P5 for 1 channel, P6 for 3. 8-bit depth.
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

} // namespace ocsr
