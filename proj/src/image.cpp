#include "ocsr/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ocsr {

void write_ppm(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("write_ppm: channels must be 1 or 3");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_ppm: cannot open " + path);
    os << (img.channels == 1 ? "P5" : "P6") << "\n" << img.w << " " << img.h << "\n255\n";
    std::vector<unsigned char> row(size_t(img.w) * img.channels);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
                row[size_t(x) * img.channels + c] = (unsigned char)std::lround(v * 255.0);
            }
        os.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
    }
    if (!os) throw std::runtime_error("write_ppm: write failed for " + path);
}

namespace {
int next_int(std::istream& is) {
    // skips whitespace and # comments between header tokens
    while (true) {
        int ch = is.peek();
        if (ch == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(ch)) {
            is.get();
        } else {
            break;
        }
    }
    int v = 0;
    is >> v;
    return v;
}
} // namespace

Image read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_ppm: cannot open " + path);
    std::string magic;
    is >> magic;
    int channels;
    if (magic == "P5")
        channels = 1;
    else if (magic == "P6")
        channels = 3;
    else
        throw std::runtime_error("read_ppm: unsupported magic '" + magic + "' in " + path);
    int w = next_int(is), h = next_int(is), maxv = next_int(is);
    if (w <= 0 || h <= 0 || maxv != 255) throw std::runtime_error("read_ppm: bad header in " + path);
    is.get(); // single whitespace after maxval
    Image img(w, h, channels);
    std::vector<unsigned char> buf(size_t(w) * h * channels);
    is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    if (!is) throw std::runtime_error("read_ppm: truncated data in " + path);
    for (size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i] / 255.0;
    return img;
}

} // namespace ocsr
